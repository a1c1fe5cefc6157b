/**
 * SVG rendering of one retrieval trace subgraph.
 *
 * Dialogue turns draw as rounded rectangles tinted by speaker, reasoning
 * fragments as circles tinted by kind. Causal edges are solid arrows,
 * alignment edges dashed, temporal edges dotted arrows, turn order a thin
 * plain line. Nodes in the highlight set get a halo; clicking a node shows
 * its full text and any scores in the detail strip below the graph.
 */

import { RankedNode, Subgraph, SubgraphNode } from "./api.js";
import { clear, el, svgEl } from "./dom.js";
import { layoutGraph } from "./layout.js";

const WIDTH = 640;
const HEIGHT = 480;
const LAYOUT_SEED = 42;

const EDGE_STYLE: Record<string, { dash: string; arrow: boolean }> = {
  Causal: { dash: "", arrow: true },
  Temporal: { dash: "2 3", arrow: true },
  Alignment: { dash: "6 4", arrow: false },
  NextTurn: { dash: "", arrow: false },
};

function nodeFill(node: SubgraphNode): string {
  if (node.node_type === "dialogue") {
    return node.speaker === "Client" ? "#7fb8a4" : "#8f9fd4";
  }
  return node.kind === "Strategy" ? "#e0b25c" : "#c98ca7";
}

export interface GraphViewHandlers {
  onNodeClick?: (node: SubgraphNode) => void;
}

export class GraphView {
  private svg: SVGSVGElement;
  private detail: HTMLElement;
  private scores = new Map<string, RankedNode>();
  private highlighted = new Set<string>();

  constructor(
    container: HTMLElement,
    private handlers: GraphViewHandlers = {},
  ) {
    this.svg = svgEl("svg", {
      viewBox: `0 0 ${WIDTH} ${HEIGHT}`,
      class: "trace-graph",
      role: "img",
    });
    this.detail = el("div", { class: "node-detail" });
    container.append(this.svg, this.detail);
  }

  /** Replace the rendered subgraph; pass null before the first turn. */
  render(subgraph: Subgraph | null, merged: RankedNode[] = []): void {
    this.scores = new Map(merged.map((r) => [r.node_id, r]));
    clear(this.svg);
    clear(this.detail);

    if (!subgraph || subgraph.nodes.length === 0) {
      this.svg.append(
        svgEl("text", {
          x: String(WIDTH / 2),
          y: String(HEIGHT / 2),
          "text-anchor": "middle",
          class: "placeholder",
        }, ["No trace yet: send a client turn to retrieve one."]),
      );
      return;
    }

    const positions = layoutGraph(subgraph, {
      width: WIDTH,
      height: HEIGHT,
      seed: LAYOUT_SEED,
    });

    const defs = svgEl("defs", {}, [
      svgEl("marker", {
        id: "arrowhead",
        viewBox: "0 0 10 10",
        refX: "9",
        refY: "5",
        markerWidth: "7",
        markerHeight: "7",
        orient: "auto-start-reverse",
      }, [svgEl("path", { d: "M 0 0 L 10 5 L 0 10 z", fill: "#555" })]),
    ]);
    this.svg.append(defs);

    const edgeLayer = svgEl("g", { class: "edges" });
    for (const edge of subgraph.edges) {
      const a = positions.get(edge.src);
      const b = positions.get(edge.dst);
      if (!a || !b) {
        continue;
      }
      const style = EDGE_STYLE[edge.kind] ?? EDGE_STYLE.NextTurn;
      const attrs: Record<string, string> = {
        x1: a.x.toFixed(1),
        y1: a.y.toFixed(1),
        x2: b.x.toFixed(1),
        y2: b.y.toFixed(1),
        class: `edge edge-${edge.kind.toLowerCase()}`,
        "data-edge-kind": edge.kind,
      };
      if (style.dash) {
        attrs["stroke-dasharray"] = style.dash;
      }
      if (style.arrow) {
        attrs["marker-end"] = "url(#arrowhead)";
      }
      edgeLayer.append(svgEl("line", attrs));
    }
    this.svg.append(edgeLayer);

    const nodeLayer = svgEl("g", { class: "nodes" });
    for (const node of subgraph.nodes) {
      const pos = positions.get(node.id);
      if (!pos) {
        continue;
      }
      const overlap = this.scores.get(node.id)?.overlap ?? false;
      const group = svgEl("g", {
        class: "node" + (overlap ? " overlap" : ""),
        "data-node-id": node.id,
        "data-node-type": node.node_type,
        transform: `translate(${pos.x.toFixed(1)}, ${pos.y.toFixed(1)})`,
      });
      if (node.node_type === "dialogue") {
        group.append(svgEl("rect", {
          x: "-16", y: "-11", width: "32", height: "22", rx: "6",
          fill: nodeFill(node),
        }));
      } else {
        group.append(svgEl("circle", { r: "13", fill: nodeFill(node) }));
      }
      const caption = node.node_type === "dialogue"
        ? `t${node.turn_index}`
        : (node.label ?? "").slice(0, 10);
      group.append(svgEl("text", {
        y: "26",
        "text-anchor": "middle",
        class: "node-caption",
      }, [caption]));
      group.addEventListener("click", () => this.showDetail(node));
      nodeLayer.append(group);
    }
    this.svg.append(nodeLayer);
    this.applyHighlight();
  }

  /** Mark exactly these node ids; everything else loses the halo. */
  highlight(nodeIds: Iterable<string>): void {
    this.highlighted = new Set(nodeIds);
    this.applyHighlight();
  }

  highlightedIds(): string[] {
    return Array.from(
      this.svg.querySelectorAll<SVGGElement>(".node.highlighted"),
      (g) => g.dataset.nodeId ?? "",
    ).sort();
  }

  renderedIds(): string[] {
    return Array.from(
      this.svg.querySelectorAll<SVGGElement>(".node[data-node-id]"),
      (g) => g.dataset.nodeId ?? "",
    ).sort();
  }

  private applyHighlight(): void {
    for (const group of this.svg.querySelectorAll<SVGGElement>(".node")) {
      group.classList.toggle(
        "highlighted",
        this.highlighted.has(group.dataset.nodeId ?? ""),
      );
    }
  }

  private showDetail(node: SubgraphNode): void {
    clear(this.detail);
    const ranked = this.scores.get(node.id);
    const title = node.node_type === "dialogue"
      ? `${node.speaker} turn ${node.turn_index}`
      : `${node.kind}: ${node.label}`;
    this.detail.append(
      el("h4", {}, [`${title} (${node.id})`]),
      el("p", { class: "node-text" }, [node.text]),
    );
    if (ranked) {
      this.detail.append(el("p", { class: "node-scores" }, [
        `rank ${ranked.final_rank}, score ${ranked.base_score.toFixed(4)}` +
          (ranked.overlap ? ", overlap" : ""),
      ]));
    }
    this.handlers.onNodeClick?.(node);
  }
}
