// @vitest-environment jsdom
import { describe, expect, it } from "vitest";

import { DomView } from "../src/dom.js";
import { makeAssignment } from "./fakes.js";

function mount() {
  document.body.innerHTML = "";
  const root = document.createElement("div");
  document.body.appendChild(root);
  return new DomView(root, { imageTimeoutMs: 20 });
}

function images(view: DomView): HTMLImageElement[] {
  return [...document.querySelectorAll("img")] as HTMLImageElement[];
}

describe("DomView", () => {
  it("renders the question and prompt, and enables buttons after settle", async () => {
    const view = mount();
    const shown = view.showAssignment(makeAssignment(0), 0);
    const buttons = [...document.querySelectorAll<HTMLButtonElement>("button[data-choice]")];
    expect(buttons.every((b) => b.disabled)).toBe(true);
    for (const img of images(view)) {
      img.dispatchEvent(new Event("load"));
    }
    await shown;
    expect(document.querySelector('[data-role="question"]')!.textContent).toContain("prefer");
    expect(document.querySelector('[data-role="prompt"]')!.textContent).toBe("prompt 0");
    expect(buttons.every((b) => !b.disabled)).toBe(true);
  });

  it("keeps the served sides: left ref goes to the left slot", async () => {
    const view = mount();
    const assignment = makeAssignment(7);
    const shown = view.showAssignment(assignment, 0);
    const [left, right] = images(view);
    expect(left!.getAttribute("src")).toBe(assignment.left_image_ref);
    expect(right!.getAttribute("src")).toBe(assignment.right_image_ref);
    left!.dispatchEvent(new Event("load"));
    right!.dispatchEvent(new Event("load"));
    await shown;
  });

  it("resolves choices from buttons and keyboard", async () => {
    const view = mount();
    const shown = view.showAssignment(makeAssignment(0), 0);
    images(view).forEach((img) => img.dispatchEvent(new Event("load")));
    await shown;
    const byButton = view.awaitChoice();
    document.querySelector<HTMLButtonElement>('button[data-choice="unsure"]')!.click();
    expect(await byButton).toBe("unsure");

    const again = view.showAssignment(makeAssignment(1), 1);
    images(view).forEach((img) => img.dispatchEvent(new Event("load")));
    await again;
    const byKey = view.awaitChoice();
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "ArrowLeft" }));
    expect(await byKey).toBe("left");
  });

  it("ignores input before render-complete", async () => {
    const view = mount();
    const choicePromise = new Promise<string>((resolve) => {
      void view.awaitChoice().then(resolve);
    });
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "ArrowRight" }));
    const shown = view.showAssignment(makeAssignment(0), 0);
    images(view).forEach((img) => img.dispatchEvent(new Event("load")));
    await shown;
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "ArrowRight" }));
    expect(await choicePromise).toBe("right");
  });

  it("swaps failed images for placeholders and says so", async () => {
    const view = mount();
    const shown = view.showAssignment(makeAssignment(0), 0);
    const [left, right] = images(view);
    left!.dispatchEvent(new Event("load"));
    right!.dispatchEvent(new Event("error"));
    await shown;
    expect(right!.classList.contains("placeholder")).toBe(true);
    expect(right!.getAttribute("src")).toContain("data:image/svg+xml");
    expect(document.querySelector('[data-role="status"]')!.textContent).toContain("failed to load");
  });

  it("shows progress and the completion summary", async () => {
    const view = mount();
    view.showProgress(3, 12);
    expect(document.querySelector('[data-role="progress"]')!.textContent).toBe(
      "3 of 12 assignments answered",
    );
    view.showDone({ completed: 12, unsure: 4 });
    expect(document.querySelector('[data-role="status"]')!.textContent).toContain(
      "12 judgments submitted (4 unsure)",
    );
  });
});
