/**
 * The force layout must be a pure function of (subgraph, options): same
 * seed means identical coordinates, and every node stays inside the
 * drawable area.
 */

import { describe, expect, it } from "vitest";

import { Subgraph } from "../src/api";
import { layoutGraph, mulberry32 } from "../src/layout";
import { loadGoldenResult } from "./fakes";

const OPTS = { width: 640, height: 480, seed: 42 };

function goldenSubgraph(): Subgraph {
  return loadGoldenResult().trace.subgraph;
}

function asEntries(
  positions: Map<string, { x: number; y: number }>,
): [string, number, number][] {
  return Array.from(positions, ([id, p]) => [id, p.x, p.y] as [
    string,
    number,
    number,
  ]).sort((a, b) => a[0].localeCompare(b[0]));
}

describe("seeded PRNG", () => {
  it("replays the same sequence for the same seed", () => {
    const a = mulberry32(7);
    const b = mulberry32(7);
    for (let i = 0; i < 100; i += 1) {
      const value = a();
      expect(b()).toBe(value);
      expect(value).toBeGreaterThanOrEqual(0);
      expect(value).toBeLessThan(1);
    }
  });

  it("diverges for different seeds", () => {
    const a = mulberry32(7);
    const b = mulberry32(8);
    const left = Array.from({ length: 10 }, a);
    const right = Array.from({ length: 10 }, b);
    expect(left).not.toEqual(right);
  });
});

describe("layoutGraph", () => {
  it("is deterministic for a fixed seed", () => {
    const first = layoutGraph(goldenSubgraph(), OPTS);
    const second = layoutGraph(goldenSubgraph(), OPTS);
    expect(asEntries(second)).toEqual(asEntries(first));
  });

  it("changes when the seed changes", () => {
    const first = layoutGraph(goldenSubgraph(), OPTS);
    const second = layoutGraph(goldenSubgraph(), { ...OPTS, seed: 43 });
    expect(asEntries(second)).not.toEqual(asEntries(first));
  });

  it("positions exactly the subgraph's nodes, inside the margins", () => {
    const subgraph = goldenSubgraph();
    const positions = layoutGraph(subgraph, OPTS);
    const expectedIds = subgraph.nodes.map((n) => n.id).sort();
    expect(Array.from(positions.keys()).sort()).toEqual(expectedIds);
    for (const { x, y } of positions.values()) {
      expect(x).toBeGreaterThanOrEqual(30);
      expect(x).toBeLessThanOrEqual(OPTS.width - 30);
      expect(y).toBeGreaterThanOrEqual(30);
      expect(y).toBeLessThanOrEqual(OPTS.height - 30);
    }
  });

  it("returns an empty map for an empty subgraph", () => {
    const empty: Subgraph = {
      schema_version: goldenSubgraph().schema_version,
      nodes: [],
      edges: [],
      sessions: [],
    };
    expect(layoutGraph(empty, OPTS).size).toBe(0);
  });
});
