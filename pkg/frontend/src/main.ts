/**
 * Application shell: chat pane on the left, trace graph and provenance
 * panels on the right. All state flows service -> store -> render.
 */

import { ApiClient } from "./api.js";
import { ChatView } from "./chatView.js";
import { el } from "./dom.js";
import { GraphView } from "./graphView.js";
import { SidePanels } from "./panels.js";
import { SessionStore } from "./state.js";

declare global {
  interface Window {
    __COUNSELGRAPH_BASE__?: string;
  }
}

export interface App {
  store: SessionStore;
  graph: GraphView;
  panels: SidePanels;
  chat: ChatView;
}

/** Build the whole UI inside `root` and open a session. */
export function createApp(root: HTMLElement, baseUrl: string): App {
  const api = new ApiClient(baseUrl);
  const store = new SessionStore(api);

  const chatPane = el("section", { class: "chat-pane" });
  const graphPane = el("section", { class: "graph-pane" });
  const panelsPane = el("aside", { class: "panels-pane" });
  root.append(chatPane, graphPane, panelsPane);

  const chat = new ChatView(chatPane, {
    onSend: (text) => void store.sendClientTurn(text),
    onSelectCandidate: (index) => store.selectCandidate(index),
    onChoose: (index, edited) => void store.choose(index, edited),
  });
  const graph = new GraphView(graphPane);
  const panels = new SidePanels(panelsPane, api);

  // start from a sentinel so the first callback draws the empty state
  const notRendered = Symbol("not-rendered");
  let renderedResult: unknown = notRendered;
  store.subscribe((view) => {
    chat.render(view);
    panels.render(view);
    // re-layout only when the trace itself changed; highlights are cheap
    if (view.result !== renderedResult) {
      renderedResult = view.result;
      graph.render(view.result?.trace.subgraph ?? null,
                   view.result?.trace.merged ?? []);
    }
    graph.highlight(view.highlightedNodeIds);
  });

  void store.start();
  return { store, graph, panels, chat };
}

function defaultBaseUrl(): string {
  return window.__COUNSELGRAPH_BASE__ ?? "http://127.0.0.1:8077";
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  createApp(document.getElementById("app") as HTMLElement, defaultBaseUrl());
}
