import type { Assignment, Progress, ResponsePayload, SubmitOutcome } from "./types.js";

export interface ApiClientOptions {
  baseUrl?: string;
  /** Injectable for tests and for simulating network failures. */
  fetchFn?: typeof fetch;
  sleepFn?: (ms: number) => Promise<void>;
  maxAttempts?: number;
  backoffMs?: number;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

/**
 * Thin client for the annotation service.
 *
 * Network failures retry with exponential backoff.  Submissions lean on the
 * server's idempotence: a 409 means the judgment is already stored (an
 * earlier attempt landed but its response was lost), so it resolves
 * successfully instead of re-submitting - the client can never double-store
 * a record.
 */
export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchFn: typeof fetch;
  private readonly sleepFn: (ms: number) => Promise<void>;
  private readonly maxAttempts: number;
  private readonly backoffMs: number;

  constructor(options: ApiClientOptions = {}) {
    this.baseUrl = options.baseUrl ?? "";
    this.fetchFn = options.fetchFn ?? fetch.bind(globalThis);
    this.sleepFn = options.sleepFn ?? defaultSleep;
    this.maxAttempts = options.maxAttempts ?? 5;
    this.backoffMs = options.backoffMs ?? 250;
  }

  private async withRetries(request: () => Promise<Response>): Promise<Response> {
    let lastError: unknown = null;
    for (let attempt = 0; attempt < this.maxAttempts; attempt++) {
      if (attempt > 0) {
        await this.sleepFn(this.backoffMs * 2 ** (attempt - 1));
      }
      try {
        const response = await request();
        if (response.status >= 500) {
          lastError = new ApiError(`server error ${response.status}`, response.status);
          continue;
        }
        return response;
      } catch (error) {
        lastError = error; // network drop; retry
      }
    }
    throw lastError instanceof Error ? lastError : new Error(String(lastError));
  }

  async nextAssignment(raterId: string): Promise<Assignment | null> {
    const response = await this.withRetries(() =>
      this.fetchFn(`${this.baseUrl}/api/assignment?rater=${encodeURIComponent(raterId)}`),
    );
    if (response.status === 204) {
      return null;
    }
    if (!response.ok) {
      throw new ApiError(`assignment request failed (${response.status})`, response.status);
    }
    return (await response.json()) as Assignment;
  }

  async submitResponse(payload: ResponsePayload): Promise<SubmitOutcome> {
    const response = await this.withRetries(() =>
      this.fetchFn(`${this.baseUrl}/api/response`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(payload),
      }),
    );
    if (response.status === 409) {
      return "already-stored";
    }
    if (!response.ok) {
      throw new ApiError(`response rejected (${response.status})`, response.status);
    }
    return "stored";
  }

  async progress(): Promise<Progress> {
    const response = await this.withRetries(() => this.fetchFn(`${this.baseUrl}/api/progress`));
    if (!response.ok) {
      throw new ApiError(`progress request failed (${response.status})`, response.status);
    }
    return (await response.json()) as Progress;
  }
}
