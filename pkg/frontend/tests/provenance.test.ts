/**
 * Provenance integrity over the pinned single-turn fixture: every node id
 * the UI shows as evidence (candidate support, strategy rows, instruction
 * rows, ranked rows) must resolve to a node actually rendered in the trace
 * graph, and the graph must render the trace subgraph exactly.
 */

import { beforeEach, describe, expect, it } from "vitest";

import { CopilotResult } from "../src/api";
import { GraphView } from "../src/graphView";
import { SidePanels } from "../src/panels";
import { SessionStore } from "../src/state";
import { fakeApi, loadGoldenResult } from "./fakes";

interface Harness {
  result: CopilotResult;
  store: SessionStore;
  graph: GraphView;
  panels: SidePanels;
}

async function renderGolden(): Promise<Harness> {
  const result = loadGoldenResult();
  const api = fakeApi({ postTurn: () => Promise.resolve(result) });
  const store = new SessionStore(api);

  const graphHost = document.createElement("div");
  const panelHost = document.createElement("div");
  document.body.append(graphHost, panelHost);
  const graph = new GraphView(graphHost);
  const panels = new SidePanels(panelHost, api);

  store.subscribe((view) => {
    panels.render(view);
    graph.render(
      view.result?.trace.subgraph ?? null,
      view.result?.trace.merged ?? [],
    );
    graph.highlight(view.highlightedNodeIds);
  });
  await store.start();
  await store.sendClientTurn("I keep replaying my mistakes at night.");
  return { result, store, graph, panels };
}

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("provenance rendered from the golden turn", () => {
  it("renders the trace subgraph exactly, nothing more or less", async () => {
    const { result, graph } = await renderGolden();
    const expected = result.trace.subgraph.nodes.map((n) => n.id).sort();
    expect(graph.renderedIds()).toEqual(expected);
  });

  it("resolves every panel provenance id to a rendered node", async () => {
    const { graph, panels } = await renderGolden();
    const rendered = new Set(graph.renderedIds());
    const referenced = panels.provenanceIds();
    expect(referenced.length).toBeGreaterThan(0);
    expect(referenced.filter((id) => rendered.has(id))).toEqual(referenced);
  });

  it("shows one strategy row and one instruction row per trace entry", async () => {
    const { result } = await renderGolden();
    const strategyRows = Array.from(
      document.querySelectorAll<HTMLElement>(".strategy-row"),
    );
    expect(strategyRows.map((row) => row.dataset.nodeIds)).toEqual(
      result.strategies.map((s) => s.node_id),
    );
    const instructionRows = Array.from(
      document.querySelectorAll<HTMLElement>(".instruction-row"),
    );
    expect(instructionRows.map((row) => row.dataset.nodeIds)).toEqual(
      result.trace.prompt.instructions.map((i) =>
        i.source_node_ids.join(",")),
    );
  });

  it("resolves every candidate's supporting ids to rendered nodes", async () => {
    const { result, graph } = await renderGolden();
    const rendered = new Set(graph.renderedIds());
    expect(result.candidates.length).toBeGreaterThan(0);
    for (const candidate of result.candidates) {
      expect(candidate.supporting_node_ids.length).toBeGreaterThan(0);
      const missing = candidate.supporting_node_ids.filter(
        (id) => !rendered.has(id),
      );
      expect(missing).toEqual([]);
    }
  });

  it("resolves every ranked row to a rendered node", async () => {
    const { result, graph } = await renderGolden();
    const rendered = new Set(graph.renderedIds());
    const missing = result.trace.merged
      .map((row) => row.node_id)
      .filter((id) => !rendered.has(id));
    expect(missing).toEqual([]);
  });

  it("highlights exactly the selected candidate's supporting set", async () => {
    const { result, store, graph } = await renderGolden();
    for (let index = 0; index < result.candidates.length; index += 1) {
      store.selectCandidate(index);
      const expected = [
        ...result.candidates[index].supporting_node_ids,
      ].sort();
      expect(graph.highlightedIds()).toEqual(expected);
    }
  });

  it("draws every trace edge with its kind attached", async () => {
    const { result } = await renderGolden();
    const lines = Array.from(
      document.querySelectorAll<SVGLineElement>("line[data-edge-kind]"),
    );
    const drawn = lines.map((line) => line.dataset.edgeKind).sort();
    const expected = result.trace.subgraph.edges.map((e) => e.kind).sort();
    expect(drawn).toEqual(expected);
  });

  it("styles causal edges as arrows and alignment edges dashed", async () => {
    await renderGolden();
    const byKind = (kind: string) => Array.from(
      document.querySelectorAll<SVGLineElement>(
        `line[data-edge-kind="${kind}"]`,
      ),
    );
    expect(byKind("Causal").length).toBeGreaterThan(0);
    for (const line of byKind("Causal")) {
      expect(line.getAttribute("marker-end")).toBe("url(#arrowhead)");
      expect(line.getAttribute("stroke-dasharray")).toBeNull();
    }
    expect(byKind("Alignment").length).toBeGreaterThan(0);
    for (const line of byKind("Alignment")) {
      expect(line.getAttribute("marker-end")).toBeNull();
      expect(line.getAttribute("stroke-dasharray")).toBe("6 4");
    }
    for (const line of byKind("Temporal")) {
      expect(line.getAttribute("marker-end")).toBe("url(#arrowhead)");
      expect(line.getAttribute("stroke-dasharray")).toBe("2 3");
    }
  });

  it("marks exactly the overlap-ranked nodes", async () => {
    const { result } = await renderGolden();
    const expected = result.trace.merged
      .filter((row) => row.overlap)
      .map((row) => row.node_id)
      .sort();
    expect(expected.length).toBeGreaterThan(0);
    const marked = Array.from(
      document.querySelectorAll<SVGGElement>(".node.overlap"),
      (g) => g.dataset.nodeId ?? "",
    ).sort();
    expect(marked).toEqual(expected);
  });

  it("reveals full node text and scores on click", async () => {
    const { result } = await renderGolden();
    const ranked = result.trace.merged[0];
    const node = result.trace.subgraph.nodes.find(
      (n) => n.id === ranked.node_id,
    );
    expect(node).toBeDefined();
    const group = document.querySelector<SVGGElement>(
      `.node[data-node-id="${ranked.node_id}"]`,
    );
    group?.dispatchEvent(new MouseEvent("click", { bubbles: true }));
    const detail = document.querySelector<HTMLElement>(".node-detail");
    expect(detail?.textContent).toContain(node?.text);
    expect(detail?.textContent).toContain(`rank ${ranked.final_rank}`);
  });

  it("shows strategy text verbatim and titled session rows", async () => {
    const { result } = await renderGolden();
    const byId = new Map(result.trace.subgraph.nodes.map((n) => [n.id, n]));
    for (const row of document.querySelectorAll<HTMLElement>(
      ".strategy-row",
    )) {
      const node = byId.get(row.dataset.nodeIds ?? "");
      expect(node).toBeDefined();
      expect(row.textContent).toContain(node?.text ?? "<missing>");
    }
    const titles = new Map(
      result.trace.subgraph.sessions.map((s) => [s.session_id, s.title]),
    );
    const rows = document.querySelectorAll<HTMLElement>(".session-row");
    expect(rows.length).toBe(result.similar_sessions.length);
    for (const row of rows) {
      const title = titles.get(row.dataset.sessionId ?? "");
      expect(row.textContent).toContain(title ?? "<missing>");
    }
  });
});
