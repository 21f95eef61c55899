import { ApiClient } from "./api.js";
import { ChatController } from "./controller.js";

function start(): void {
  const app = document.getElementById("app") as HTMLElement;
  const form = document.getElementById("composer") as HTMLFormElement;
  const input = document.getElementById("question") as HTMLInputElement;
  const sendBtn = document.getElementById("send") as HTMLButtonElement;

  const controller = new ChatController(
    new ApiClient(window.location.origin),
    window.localStorage,
    () => {
      app.innerHTML = controller.renderApp();
      const down = controller.connection === "down";
      input.disabled = down;
      sendBtn.disabled = down || input.value.trim() === "";
      const lost = controller.takeLostInput();
      if (lost !== null && input.value === "") {
        input.value = lost;
        sendBtn.disabled = down;
      }
      const transcript = app.querySelector(".transcript");
      if (transcript) transcript.scrollTop = transcript.scrollHeight;
    },
  );

  input.addEventListener("input", () => {
    sendBtn.disabled = controller.connection === "down" || input.value.trim() === "";
  });

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const text = input.value;
    input.value = "";
    sendBtn.disabled = true;
    void controller.send(text);
  });

  // rendered HTML is swapped wholesale, so clicks are delegated
  app.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const action = target.getAttribute("data-action");
    if (action === "retry") {
      void controller.retry(Number(target.getAttribute("data-idx")));
    } else if (action === "retry-connect") {
      void controller.boot();
    } else if (action === "apply-settings") {
      const read = (name: string) =>
        (app.querySelector(`input[name="${name}"]`) as HTMLInputElement).value;
      controller.applySettings({
        k: read("k"),
        temperature: read("temperature"),
        maxTokens: read("maxTokens"),
      });
    }
  });

  void controller.boot();
}

document.addEventListener("DOMContentLoaded", start);
