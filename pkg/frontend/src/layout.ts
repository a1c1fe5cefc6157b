/**
 * Deterministic force layout for trace subgraphs.
 *
 * Initial positions come from a seeded generator and the simulation is
 * ticked synchronously with d3's default (fixed-seed) jiggle source, so a
 * given subgraph and seed always produce the same coordinates. That keeps
 * visual regression tests stable.
 */

import {
  forceCenter,
  forceCollide,
  forceLink,
  forceManyBody,
  forceSimulation,
} from "d3-force";

import { Subgraph } from "./api.js";

export interface NodePosition {
  x: number;
  y: number;
}

export interface LayoutOptions {
  width: number;
  height: number;
  seed?: number;
  iterations?: number;
}

/** Small fast PRNG; good enough for scattering initial positions. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

interface SimNode {
  id: string;
  x: number;
  y: number;
  index?: number;
  vx?: number;
  vy?: number;
}

export function layoutGraph(
  subgraph: Subgraph,
  opts: LayoutOptions,
): Map<string, NodePosition> {
  const { width, height, seed = 42, iterations = 180 } = opts;
  const positions = new Map<string, NodePosition>();
  if (subgraph.nodes.length === 0) {
    return positions;
  }

  const rand = mulberry32(seed);
  const radius = Math.min(width, height) * 0.35;
  const nodes: SimNode[] = subgraph.nodes.map((node, i) => {
    const angle = (i / subgraph.nodes.length) * 2 * Math.PI + rand() * 0.5;
    return {
      id: node.id,
      x: width / 2 + radius * Math.cos(angle) + (rand() - 0.5) * 10,
      y: height / 2 + radius * Math.sin(angle) + (rand() - 0.5) * 10,
    };
  });
  const links = subgraph.edges.map((edge) => ({
    source: edge.src,
    target: edge.dst,
  }));

  const simulation = forceSimulation(nodes)
    .force("charge", forceManyBody().strength(-120))
    .force(
      "link",
      forceLink(links)
        .id((d) => (d as SimNode).id)
        .distance(70),
    )
    .force("center", forceCenter(width / 2, height / 2))
    .force("collide", forceCollide(24))
    .stop();
  simulation.tick(iterations);

  const margin = 30;
  for (const node of nodes) {
    positions.set(node.id, {
      x: Math.max(margin, Math.min(width - margin, node.x)),
      y: Math.max(margin, Math.min(height - margin, node.y)),
    });
  }
  return positions;
}
