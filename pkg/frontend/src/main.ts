import { ApiClient } from "./api.js";
import { DomView } from "./dom.js";
import { runSession } from "./session.js";

function start(): void {
  const app = document.getElementById("app");
  const form = document.getElementById("rater-form") as HTMLFormElement | null;
  const input = document.getElementById("rater-id") as HTMLInputElement | null;
  if (!app || !form || !input) {
    throw new Error("annotator markup missing");
  }
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const raterId = input.value.trim();
    if (!raterId) {
      input.focus();
      return;
    }
    form.remove();
    const view = new DomView(app);
    const client = new ApiClient();
    void runSession(raterId, client, view).catch(() => {
      // the view already rendered the error; nothing else to do client-side
    });
  });
}

document.addEventListener("DOMContentLoaded", start);
