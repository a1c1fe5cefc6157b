/**
 * Side panels under the graph: similar sessions (click-through to a
 * read-only transcript), retrieved strategies, and the prompt instructions
 * derived from them. Every row carries the graph node ids it came from.
 */

import { ApiError, CopilotApi } from "./api.js";
import { clear, el } from "./dom.js";
import { SessionView } from "./state.js";

export class SidePanels {
  private sessionsList: HTMLElement;
  private strategiesList: HTMLElement;
  private instructionsList: HTMLElement;
  private modal: HTMLElement;

  constructor(
    container: HTMLElement,
    private api: CopilotApi,
  ) {
    this.sessionsList = el("ul", { class: "similar-sessions" });
    this.strategiesList = el("ul", { class: "strategies" });
    this.instructionsList = el("ul", { class: "instructions" });
    this.modal = el("div", { class: "session-modal hidden" });
    container.append(
      el("h3", {}, ["Similar sessions"]),
      this.sessionsList,
      el("h3", {}, ["Strategies"]),
      this.strategiesList,
      el("h3", {}, ["Instructions"]),
      this.instructionsList,
      this.modal,
    );
  }

  render(view: SessionView): void {
    clear(this.sessionsList);
    // session titles ride along in the trace subgraph's session metadata
    const titles = new Map(
      (view.result?.trace.subgraph.sessions ?? []).map(
        (s) => [s.session_id, s.title],
      ),
    );
    for (const session of view.similarSessions) {
      const title = titles.get(session.session_id) ?? session.session_id;
      const row = el("li", {
        class: "session-row",
        "data-session-id": session.session_id,
      }, [`${title}  (${session.score.toFixed(3)})`]);
      row.addEventListener("click", () => {
        void this.openSession(session.session_id);
      });
      this.sessionsList.append(row);
    }

    clear(this.strategiesList);
    for (const strategy of view.strategies) {
      this.strategiesList.append(el("li", {
        class: "strategy-row",
        "data-node-ids": strategy.nodeId,
      }, [
        el("strong", {}, [strategy.label]),
        ` ${strategy.text} `,
        el("span", { class: "score" }, [`(${strategy.score.toFixed(3)})`]),
      ]));
    }

    clear(this.instructionsList);
    for (const instruction of view.instructions) {
      this.instructionsList.append(el("li", {
        class: "instruction-row",
        "data-node-ids": instruction.sourceNodeIds.join(","),
      }, [instruction.text]));
    }
  }

  /** Node ids referenced by the strategy and instruction rows. */
  provenanceIds(): string[] {
    const ids = new Set<string>();
    const rows = document.querySelectorAll<HTMLElement>(
      ".strategy-row[data-node-ids], .instruction-row[data-node-ids]",
    );
    for (const row of rows) {
      for (const id of (row.dataset.nodeIds ?? "").split(",")) {
        if (id) {
          ids.add(id);
        }
      }
    }
    return Array.from(ids).sort();
  }

  private async openSession(sessionId: string): Promise<void> {
    clear(this.modal);
    this.modal.classList.remove("hidden");
    try {
      const detail = await this.api.sessionDetail(sessionId);
      this.modal.append(el("h3", {}, [`${detail.title} (${detail.session_id})`]));
      const list = el("div", { class: "modal-transcript" });
      for (const turn of detail.turns) {
        list.append(el("div", {
          class: `bubble bubble-${turn.speaker.toLowerCase()}`,
        }, [turn.text]));
      }
      this.modal.append(list);
    } catch (err) {
      const stale = err instanceof ApiError && err.status === 404;
      this.modal.append(el("p", { class: "error" }, [
        stale
          ? "This session is no longer available; refresh the page."
          : `failed to load session: ${String(err)}`,
      ]));
    }
    const close = el("button", { class: "close" }, ["Close"]);
    close.addEventListener("click", () => this.modal.classList.add("hidden"));
    this.modal.append(close);
  }
}
