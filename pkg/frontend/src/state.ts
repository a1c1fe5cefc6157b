/**
 * Session view-model: holds the latest service responses and the local
 * transcript, and notifies renderers after every change.
 *
 * The store mirrors the service's own commit rules: a client bubble is
 * appended only after POST /turns succeeds, a therapist bubble only after
 * POST /choose succeeds, so the local transcript always equals the
 * service-side history.
 */

import {
  ApiError,
  Candidate,
  CopilotApi,
  CopilotResult,
  ServiceError,
  SimilarSession,
} from "./api.js";

export interface Bubble {
  speaker: "Client" | "Therapist";
  text: string;
}

/** One strategy panel row, joined with its subgraph node for label/text. */
export interface StrategyRow {
  nodeId: string;
  score: number;
  label: string;
  text: string;
}

export interface InstructionRow {
  text: string;
  sourceNodeIds: string[];
}

export interface SessionView {
  sessionId: string | null;
  transcript: Bubble[];
  pendingCandidates: Candidate[];
  similarSessions: SimilarSession[];
  strategies: StrategyRow[];
  instructions: InstructionRow[];
  result: CopilotResult | null;
  selectedCandidate: number | null;
  highlightedNodeIds: string[];
  busy: boolean;
  notice: string | null;
  error: ServiceError | null;
}

export type Listener = (view: SessionView) => void;

function emptyView(): SessionView {
  return {
    sessionId: null,
    transcript: [],
    pendingCandidates: [],
    similarSessions: [],
    strategies: [],
    instructions: [],
    result: null,
    selectedCandidate: null,
    highlightedNodeIds: [],
    busy: false,
    notice: null,
    error: null,
  };
}

/**
 * Every candidate must be explainable by the rendered trace; a result
 * whose supporting ids are missing from its own subgraph is a service
 * contract violation and must never reach the screen.
 */
function assertSelfContained(result: CopilotResult): void {
  const nodeIds = new Set(result.trace.subgraph.nodes.map((n) => n.id));
  for (const candidate of result.candidates) {
    for (const id of candidate.supporting_node_ids) {
      if (!nodeIds.has(id)) {
        throw new Error(
          `candidate references node ${id} absent from the trace subgraph`,
        );
      }
    }
  }
}

function strategyRows(result: CopilotResult): StrategyRow[] {
  const byId = new Map(result.trace.subgraph.nodes.map((n) => [n.id, n]));
  return result.strategies.map((hit) => {
    const node = byId.get(hit.node_id);
    return {
      nodeId: hit.node_id,
      score: hit.score,
      label: node?.label ?? "",
      text: node?.text ?? "",
    };
  });
}

export class SessionStore {
  private view: SessionView = emptyView();
  private listeners: Listener[] = [];

  constructor(private api: CopilotApi) {}

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
    listener(this.view);
  }

  current(): SessionView {
    return this.view;
  }

  private update(patch: Partial<SessionView>): void {
    this.view = { ...this.view, ...patch };
    for (const listener of this.listeners) {
      listener(this.view);
    }
  }

  private fail(err: unknown): void {
    if (err instanceof ApiError && err.status === 409) {
      // another turn is still running; keep state, show a passing notice
      this.update({ busy: false, notice: "turn in progress, please wait" });
      return;
    }
    const error: ServiceError =
      err instanceof ApiError
        ? err
        : { stage: "ui", code: "unexpected", message: String(err), status: 0 };
    this.update({ busy: false, error });
  }

  async start(): Promise<void> {
    try {
      const sessionId = await this.api.createSession();
      this.update({ ...emptyView(), sessionId });
    } catch (err) {
      this.fail(err);
    }
  }

  async sendClientTurn(text: string): Promise<void> {
    if (!this.view.sessionId || this.view.busy || !text.trim()) {
      return;
    }
    this.update({ busy: true, notice: null, error: null });
    try {
      const result = await this.api.postTurn(this.view.sessionId, text);
      assertSelfContained(result);
      this.update({
        busy: false,
        transcript: [...this.view.transcript, { speaker: "Client", text }],
        result,
        pendingCandidates: result.candidates,
        similarSessions: result.similar_sessions,
        strategies: strategyRows(result),
        instructions: result.trace.prompt.instructions.map((section) => ({
          text: section.text,
          sourceNodeIds: section.source_node_ids,
        })),
        selectedCandidate: null,
        highlightedNodeIds: [],
      });
    } catch (err) {
      this.fail(err);
    }
  }

  /** Highlight a candidate's supporting nodes without committing it. */
  selectCandidate(index: number): void {
    const candidate = this.view.pendingCandidates[index];
    if (!candidate) {
      return;
    }
    this.update({
      selectedCandidate: index,
      highlightedNodeIds: [...candidate.supporting_node_ids],
    });
  }

  async choose(index: number, editedText?: string): Promise<void> {
    const candidate = this.view.pendingCandidates[index];
    if (!this.view.sessionId || !candidate) {
      return;
    }
    this.update({ busy: true, notice: null, error: null });
    try {
      await this.api.choose(this.view.sessionId, index, editedText);
      const text = editedText ?? candidate.text;
      this.update({
        busy: false,
        transcript: [...this.view.transcript, { speaker: "Therapist", text }],
        pendingCandidates: [],
        selectedCandidate: index,
        highlightedNodeIds: [...candidate.supporting_node_ids],
      });
    } catch (err) {
      this.fail(err);
    }
  }
}
