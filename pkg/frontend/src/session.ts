import type { ApiClient } from "./api.js";
import { ResponseTimer } from "./timing.js";
import type { Assignment, Choice } from "./types.js";

/** Rendering surface the session drives; the DOM implementation lives in
 * dom.ts, tests supply scripted ones. */
export interface SessionView {
  /** Render the assignment; resolve once render is complete, meaning both
   * images reported loaded or were replaced by placeholders. */
  showAssignment(assignment: Assignment, index: number): Promise<void>;
  /** Resolve with the rater's choice (buttons or keyboard). */
  awaitChoice(): Promise<Choice>;
  showProgress(completed: number, total: number | null): void;
  showDone(summary: SessionSummary): void;
  showError(message: string): void;
}

export interface SessionSummary {
  completed: number;
  unsure: number;
}

export interface SessionOptions {
  timer?: ResponseTimer;
  /** Upper bound on assignments, as a safety net for scripted runs. */
  maxAssignments?: number;
}

/**
 * Run one annotation session: fetch assignments one at a time, render,
 * measure the response time from render-complete to choice, submit with
 * idempotent retries, and advance until the server reports no work left.
 */
export async function runSession(
  raterId: string,
  client: ApiClient,
  view: SessionView,
  options: SessionOptions = {},
): Promise<SessionSummary> {
  const timer = options.timer ?? new ResponseTimer();
  const limit = options.maxAssignments ?? Number.POSITIVE_INFINITY;
  const summary: SessionSummary = { completed: 0, unsure: 0 };

  try {
    while (summary.completed < limit) {
      const assignment = await client.nextAssignment(raterId);
      if (assignment === null) {
        break;
      }
      await view.showAssignment(assignment, summary.completed);
      timer.start();
      const choice = await view.awaitChoice();
      const responseMs = timer.elapsedMs();
      await client.submitResponse({
        pair_id: assignment.pair_id,
        task: assignment.task,
        rater_id: raterId,
        choice,
        response_ms: responseMs,
      });
      summary.completed += 1;
      if (choice === "unsure") {
        summary.unsure += 1;
      }
      let total: number | null = null;
      try {
        total = (await client.progress()).total;
      } catch {
        // progress display is cosmetic; never fail the session over it
      }
      view.showProgress(summary.completed, total);
    }
  } catch (error) {
    view.showError(error instanceof Error ? error.message : String(error));
    throw error;
  }
  view.showDone(summary);
  return summary;
}
