export type Clock = () => number;

/** Measures response time; the session starts it only once both images have
 * reported loaded (or were flagged failed), never at fetch time. */
export class ResponseTimer {
  private startedAt: number | null = null;

  constructor(private readonly clock: Clock = () => performance.now()) {}

  start(): void {
    this.startedAt = this.clock();
  }

  elapsedMs(): number {
    if (this.startedAt === null) {
      throw new Error("timer was never started");
    }
    return Math.max(0, Math.round(this.clock() - this.startedAt));
  }
}

export interface ImageSettle {
  /** Images that failed to load (or timed out) and need a placeholder. */
  failed: HTMLImageElement[];
}

/**
 * Resolves when every image has loaded or errored; `timeoutMs` bounds the
 * wait so a hung request degrades to the placeholder path instead of
 * stalling the session.
 */
export function waitForImages(images: HTMLImageElement[], timeoutMs = 15000): Promise<ImageSettle> {
  return new Promise((resolve) => {
    const failed = new Set<HTMLImageElement>();
    let pending = 0;
    let timer: ReturnType<typeof setTimeout> | null = null;

    const finish = () => {
      if (timer !== null) {
        clearTimeout(timer);
      }
      resolve({ failed: [...failed] });
    };

    const settle = (image: HTMLImageElement, ok: boolean) => {
      if (!ok) {
        failed.add(image);
      }
      pending -= 1;
      if (pending === 0) {
        finish();
      }
    };

    const waiting: HTMLImageElement[] = [];
    for (const image of images) {
      if (image.complete && image.naturalWidth > 0) {
        continue; // already loaded
      }
      waiting.push(image);
    }
    pending = waiting.length;
    if (pending === 0) {
      resolve({ failed: [] });
      return;
    }
    for (const image of waiting) {
      image.addEventListener("load", () => settle(image, true), { once: true });
      image.addEventListener("error", () => settle(image, false), { once: true });
    }
    timer = setTimeout(() => {
      for (const image of waiting) {
        if (!(image.complete && image.naturalWidth > 0)) {
          failed.add(image);
        }
      }
      resolve({ failed: [...failed] });
    }, timeoutMs);
  });
}
