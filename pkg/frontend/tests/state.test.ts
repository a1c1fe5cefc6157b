/**
 * Store semantics: the transcript mirrors the service's commit rules, the
 * view is a deterministic projection of the responses, and malformed or
 * conflicting responses surface as notices/errors instead of state.
 */

import { describe, expect, it } from "vitest";

import { ApiError, CopilotResult } from "../src/api";
import { SessionStore } from "../src/state";
import { fakeApi, loadGoldenResult } from "./fakes";

const CLIENT_TEXT = "I keep second-guessing everything I said today.";

function storeWithResult(result: CopilotResult): SessionStore {
  return new SessionStore(fakeApi({ postTurn: () => Promise.resolve(result) }));
}

describe("session store", () => {
  it("projects identical responses to identical views", async () => {
    const stores = [
      storeWithResult(loadGoldenResult()),
      storeWithResult(loadGoldenResult()),
    ];
    for (const store of stores) {
      await store.start();
      await store.sendClientTurn(CLIENT_TEXT);
      store.selectCandidate(1);
    }
    expect(stores[0].current()).toEqual(stores[1].current());
  });

  it("fills every panel from one successful turn", async () => {
    const result = loadGoldenResult();
    const store = storeWithResult(result);
    await store.start();
    await store.sendClientTurn(CLIENT_TEXT);

    const view = store.current();
    expect(view.busy).toBe(false);
    expect(view.error).toBeNull();
    expect(view.transcript).toEqual([
      { speaker: "Client", text: CLIENT_TEXT },
    ]);
    expect(view.pendingCandidates).toEqual(result.candidates);
    expect(view.similarSessions).toEqual(result.similar_sessions);
    expect(view.strategies.map((s) => s.nodeId)).toEqual(
      result.strategies.map((s) => s.node_id),
    );
    // strategy rows are joined with their subgraph node for label and text
    for (const row of view.strategies) {
      expect(row.label.length).toBeGreaterThan(0);
      expect(row.text.length).toBeGreaterThan(0);
    }
    expect(view.instructions.map((i) => i.sourceNodeIds)).toEqual(
      result.trace.prompt.instructions.map((i) => i.source_node_ids),
    );
  });

  it("commits no client bubble when the turn fails", async () => {
    const store = new SessionStore(fakeApi({
      postTurn: () => Promise.reject(
        new ApiError(502, {
          stage: "copilot-reason",
          code: "llm-failure",
          message: "boom",
        }),
      ),
    }));
    await store.start();
    await store.sendClientTurn(CLIENT_TEXT);

    const view = store.current();
    expect(view.transcript).toEqual([]);
    expect(view.result).toBeNull();
    expect(view.busy).toBe(false);
    expect(view.error?.code).toBe("llm-failure");
    expect(view.error?.stage).toBe("copilot-reason");
  });

  it("treats a turn-in-flight conflict as a notice, not an error", async () => {
    const store = new SessionStore(fakeApi({
      postTurn: () => Promise.reject(
        new ApiError(409, {
          stage: "request",
          code: "turn-in-flight",
          message: "previous turn still running",
        }),
      ),
    }));
    await store.start();
    await store.sendClientTurn(CLIENT_TEXT);

    const view = store.current();
    expect(view.error).toBeNull();
    expect(view.notice).toBe("turn in progress, please wait");
    expect(view.busy).toBe(false);
    expect(view.transcript).toEqual([]);
  });

  it("rejects a result whose provenance is not self-contained", async () => {
    const tampered = loadGoldenResult();
    tampered.candidates[0].supporting_node_ids.push("s-anxiety:dlg:999");
    const store = storeWithResult(tampered);
    await store.start();
    await store.sendClientTurn(CLIENT_TEXT);

    const view = store.current();
    expect(view.result).toBeNull();
    expect(view.pendingCandidates).toEqual([]);
    expect(view.transcript).toEqual([]);
    expect(view.error?.stage).toBe("ui");
    expect(view.error?.message).toContain("s-anxiety:dlg:999");
  });

  it("sends nothing while a turn is already in flight", async () => {
    let calls = 0;
    let release: (result: CopilotResult) => void = () => {};
    const store = new SessionStore(fakeApi({
      postTurn: () => {
        calls += 1;
        return new Promise((resolve) => {
          release = resolve;
        });
      },
    }));
    await store.start();
    const inflight = store.sendClientTurn(CLIENT_TEXT);
    expect(store.current().busy).toBe(true);
    await store.sendClientTurn("second message while busy");
    expect(calls).toBe(1);
    release(loadGoldenResult());
    await inflight;
    expect(store.current().busy).toBe(false);
    expect(store.current().transcript).toHaveLength(1);
  });

  it("highlights the selected candidate's supporting nodes", async () => {
    const result = loadGoldenResult();
    const store = storeWithResult(result);
    await store.start();
    await store.sendClientTurn(CLIENT_TEXT);

    store.selectCandidate(2);
    expect(store.current().selectedCandidate).toBe(2);
    expect(store.current().highlightedNodeIds).toEqual(
      result.candidates[2].supporting_node_ids,
    );

    // out-of-range selection is a no-op
    store.selectCandidate(99);
    expect(store.current().selectedCandidate).toBe(2);
  });

  it("commits the therapist bubble only after choose succeeds", async () => {
    const store = new SessionStore(fakeApi({
      postTurn: () => Promise.resolve(loadGoldenResult()),
      choose: () => Promise.reject(
        new ApiError(422, {
          stage: "request",
          code: "bad-candidate-index",
          message: "candidate_index 0 out of range",
        }),
      ),
    }));
    await store.start();
    await store.sendClientTurn(CLIENT_TEXT);
    await store.choose(0);

    const view = store.current();
    expect(view.transcript.map((b) => b.speaker)).toEqual(["Client"]);
    expect(view.error?.code).toBe("bad-candidate-index");
    // candidates stay on screen so the therapist can retry
    expect(view.pendingCandidates).toHaveLength(3);
  });

  it("commits the edited text when choose succeeds with an edit", async () => {
    const result = loadGoldenResult();
    const store = new SessionStore(fakeApi({
      postTurn: () => Promise.resolve(result),
      choose: () => Promise.resolve(),
    }));
    await store.start();
    await store.sendClientTurn(CLIENT_TEXT);
    await store.choose(1, "Let us slow down and look at one moment.");

    const view = store.current();
    expect(view.transcript).toEqual([
      { speaker: "Client", text: CLIENT_TEXT },
      {
        speaker: "Therapist",
        text: "Let us slow down and look at one moment.",
      },
    ]);
    expect(view.pendingCandidates).toEqual([]);
    expect(view.highlightedNodeIds).toEqual(
      result.candidates[1].supporting_node_ids,
    );
  });

  it("surfaces a startup failure instead of opening a session", async () => {
    const store = new SessionStore(fakeApi({
      createSession: () => Promise.reject(
        new ApiError(503, {
          stage: "startup",
          code: "not-loaded",
          message: "graph or indexes failed to load",
        }),
      ),
    }));
    await store.start();
    expect(store.current().sessionId).toBeNull();
    expect(store.current().error?.code).toBe("not-loaded");
  });
});
