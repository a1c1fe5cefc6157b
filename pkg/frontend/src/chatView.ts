/**
 * Left pane: transcript bubbles, the client-turn input, and the pending
 * candidate cards with use / edit-then-use actions.
 */

import { clear, el } from "./dom.js";
import { SessionView } from "./state.js";

export interface ChatHandlers {
  onSend: (text: string) => void;
  onSelectCandidate: (index: number) => void;
  onChoose: (index: number, editedText?: string) => void;
}

export class ChatView {
  private transcript: HTMLElement;
  private candidates: HTMLElement;
  private status: HTMLElement;
  private input: HTMLTextAreaElement;
  private sendButton: HTMLButtonElement;

  constructor(
    container: HTMLElement,
    private handlers: ChatHandlers,
  ) {
    this.transcript = el("div", { class: "transcript" });
    this.status = el("div", { class: "status", role: "status" });
    this.candidates = el("div", { class: "candidates" });
    this.input = el("textarea", {
      class: "client-input",
      placeholder: "Client says...",
      rows: "2",
    });
    this.sendButton = el("button", { class: "send" }, ["Send"]);
    this.sendButton.addEventListener("click", () => {
      const text = this.input.value;
      if (text.trim()) {
        this.input.value = "";
        this.handlers.onSend(text);
      }
    });
    const composer = el("div", { class: "composer" }, [
      this.input,
      this.sendButton,
    ]);
    container.append(this.transcript, this.candidates, this.status, composer);
  }

  render(view: SessionView): void {
    clear(this.transcript);
    for (const bubble of view.transcript) {
      this.transcript.append(el("div", {
        class: `bubble bubble-${bubble.speaker.toLowerCase()}`,
        "data-speaker": bubble.speaker,
      }, [bubble.text]));
    }

    clear(this.status);
    if (view.error) {
      this.status.append(el("div", { class: "error" }, [
        `error in ${view.error.stage || "service"} ` +
          `[${view.error.code}]: ${view.error.message}`,
      ]));
    } else if (view.notice) {
      this.status.append(el("div", { class: "notice" }, [view.notice]));
    }

    // one turn in flight per session: mirror the service's 409 contract
    this.sendButton.disabled = view.busy || !view.sessionId;

    clear(this.candidates);
    view.pendingCandidates.forEach((candidate, index) => {
      const card = el("div", {
        class: "candidate" +
          (view.selectedCandidate === index ? " selected" : ""),
        "data-candidate-index": String(index),
      });
      card.append(el("p", { class: "candidate-text" }, [candidate.text]));
      card.addEventListener("click", () =>
        this.handlers.onSelectCandidate(index));

      const useButton = el("button", { class: "use" }, ["Use"]);
      useButton.addEventListener("click", (event) => {
        event.stopPropagation();
        this.handlers.onChoose(index);
      });
      const editButton = el("button", { class: "edit-use" }, ["Edit & use"]);
      editButton.addEventListener("click", (event) => {
        event.stopPropagation();
        const edited = window.prompt("Edit the reply:", candidate.text);
        if (edited !== null && edited.trim()) {
          this.handlers.onChoose(index, edited);
        }
      });
      card.append(el("div", { class: "candidate-actions" }, [
        useButton,
        editButton,
      ]));
      this.candidates.append(card);
    });
  }
}
