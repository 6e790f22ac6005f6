export type Choice = "left" | "right" | "unsure";

/** Assignment payload exactly as served by /api/assignment; the client never
 * reorders pairs or re-randomizes sides. */
export interface Assignment {
  pair_id: string;
  task: string;
  question: string;
  left_image_ref: string;
  right_image_ref: string;
  prompt_text: string;
}

export interface ResponsePayload {
  pair_id: string;
  task: string;
  rater_id: string;
  choice: Choice;
  response_ms: number;
}

export interface Progress {
  total: number;
  completed: number;
  by_task: Record<string, number>;
  raters: string[];
}

export type SubmitOutcome = "stored" | "already-stored";
