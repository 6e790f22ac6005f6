import type { SessionSummary, SessionView } from "./session.js";
import { waitForImages } from "./timing.js";
import type { Assignment, Choice } from "./types.js";

const PLACEHOLDER_SVG =
  "data:image/svg+xml," +
  encodeURIComponent(
    '<svg xmlns="http://www.w3.org/2000/svg" width="320" height="240">' +
      '<rect width="100%" height="100%" fill="#ddd"/>' +
      '<text x="50%" y="50%" text-anchor="middle" fill="#666">image unavailable</text></svg>',
  );

const KEY_BINDINGS: Record<string, Choice> = {
  ArrowLeft: "left",
  ArrowRight: "right",
  ArrowDown: "unsure",
  u: "unsure",
};

export interface DomViewOptions {
  /** How long to wait for images before degrading to placeholders. */
  imageTimeoutMs?: number;
}

/** Real-browser rendering of the side-by-side task. */
export class DomView implements SessionView {
  private readonly root: HTMLElement;
  private readonly question: HTMLElement;
  private readonly prompt: HTMLElement;
  private readonly leftImage: HTMLImageElement;
  private readonly rightImage: HTMLImageElement;
  private readonly buttons: Map<Choice, HTMLButtonElement> = new Map();
  private readonly progress: HTMLElement;
  private readonly status: HTMLElement;
  private readonly imageTimeoutMs: number;
  private choiceResolver: ((choice: Choice) => void) | null = null;
  private acceptingInput = false;

  constructor(root: HTMLElement, options: DomViewOptions = {}) {
    this.root = root;
    this.imageTimeoutMs = options.imageTimeoutMs ?? 15000;
    root.innerHTML = `
      <div class="annotator">
        <p class="prompt" data-role="prompt"></p>
        <h2 class="question" data-role="question"></h2>
        <div class="pair">
          <figure><img data-side="left" alt="left image"></figure>
          <figure><img data-side="right" alt="right image"></figure>
        </div>
        <div class="choices">
          <button data-choice="left">&#8592; Left</button>
          <button data-choice="unsure">Unsure</button>
          <button data-choice="right">Right &#8594;</button>
        </div>
        <p class="progress" data-role="progress"></p>
        <p class="status" data-role="status" role="status"></p>
      </div>`;
    this.prompt = root.querySelector('[data-role="prompt"]')!;
    this.question = root.querySelector('[data-role="question"]')!;
    this.leftImage = root.querySelector('img[data-side="left"]')!;
    this.rightImage = root.querySelector('img[data-side="right"]')!;
    this.progress = root.querySelector('[data-role="progress"]')!;
    this.status = root.querySelector('[data-role="status"]')!;
    for (const button of root.querySelectorAll<HTMLButtonElement>("button[data-choice]")) {
      const choice = button.dataset.choice as Choice;
      this.buttons.set(choice, button);
      button.addEventListener("click", () => this.resolveChoice(choice));
    }
    root.ownerDocument.addEventListener("keydown", (event) => {
      const choice = KEY_BINDINGS[event.key];
      if (choice) {
        this.resolveChoice(choice);
      }
    });
    this.setButtonsEnabled(false);
  }

  private setButtonsEnabled(enabled: boolean): void {
    this.acceptingInput = enabled;
    for (const button of this.buttons.values()) {
      button.disabled = !enabled;
    }
  }

  private resolveChoice(choice: Choice): void {
    if (!this.acceptingInput || this.choiceResolver === null) {
      return;
    }
    const resolve = this.choiceResolver;
    this.choiceResolver = null;
    this.setButtonsEnabled(false);
    resolve(choice);
  }

  async showAssignment(assignment: Assignment, _index: number): Promise<void> {
    this.status.textContent = "";
    this.prompt.textContent = assignment.prompt_text;
    this.question.textContent = assignment.question;
    this.leftImage.classList.remove("placeholder");
    this.rightImage.classList.remove("placeholder");
    this.leftImage.src = assignment.left_image_ref;
    this.rightImage.src = assignment.right_image_ref;
    const settle = await waitForImages([this.leftImage, this.rightImage], this.imageTimeoutMs);
    for (const image of settle.failed) {
      image.src = PLACEHOLDER_SVG;
      image.classList.add("placeholder");
    }
    if (settle.failed.length > 0) {
      this.status.textContent =
        "An image failed to load; judge what you can see or answer Unsure.";
    }
    this.setButtonsEnabled(true);
  }

  awaitChoice(): Promise<Choice> {
    return new Promise((resolve) => {
      this.choiceResolver = resolve;
    });
  }

  showProgress(completed: number, total: number | null): void {
    this.progress.textContent =
      total === null ? `${completed} answered` : `${completed} of ${total} assignments answered`;
  }

  showDone(summary: SessionSummary): void {
    this.setButtonsEnabled(false);
    this.root.querySelector(".pair")?.classList.add("done");
    this.status.textContent =
      `Session complete: ${summary.completed} judgments submitted` +
      (summary.unsure > 0 ? ` (${summary.unsure} unsure)` : "") +
      ". Thank you!";
  }

  showError(message: string): void {
    this.setButtonsEnabled(false);
    this.status.textContent = `Something went wrong: ${message}`;
  }
}
