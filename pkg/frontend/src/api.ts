/**
 * Typed client for the counselgraph service REST API.
 *
 * Field names mirror the wire JSON exactly (snake_case); the UI is a pure
 * projection of these payloads and does no retrieval logic of its own.
 */

export interface ServiceError {
  stage: string;
  code: string;
  message: string;
  status: number;
}

export interface HealthInfo {
  status: "ok" | "degraded";
  graph_loaded: boolean;
  index_sizes: Record<string, number>;
  stub_mode: boolean;
}

export interface SearchHit {
  node_id: string;
  score: number;
}

export interface SimilarSession {
  session_id: string;
  score: number;
}

export interface Candidate {
  text: string;
  supporting_node_ids: string[];
}

export interface RankedNode {
  node_id: string;
  base_score: number;
  final_rank: number;
  origin: string[];
  overlap: boolean;
}

export interface PromptSection {
  text: string;
  source_node_ids: string[];
}

export interface PromptBundle {
  system_preamble: string;
  history_rendering: string;
  few_shot_examples: PromptSection[];
  instructions: PromptSection[];
}

export interface Reasoning {
  raw_text: string;
  steps: string[];
}

export interface SubgraphNode {
  id: string;
  node_type: "dialogue" | "cot";
  session_id: string;
  text: string;
  // dialogue nodes
  turn_index?: number;
  speaker?: string;
  // cot nodes
  kind?: string;
  label?: string;
}

export interface SubgraphEdge {
  src: string;
  dst: string;
  kind: "Causal" | "Temporal" | "Alignment" | "NextTurn";
  weight: number;
}

export interface SessionMeta {
  session_id: string;
  title: string;
  source: string;
  dialogue_node_count: number;
  cot_node_count: number;
}

export interface Subgraph {
  schema_version: string;
  nodes: SubgraphNode[];
  edges: SubgraphEdge[];
  sessions: SessionMeta[];
}

export interface RetrievalTrace {
  dialogue_hits: SearchHit[];
  cot_hits: SearchHit[];
  merged: RankedNode[];
  reasoning: Reasoning | null;
  prompt: PromptBundle;
  subgraph: Subgraph;
}

export interface CopilotResult {
  candidates: Candidate[];
  similar_sessions: SimilarSession[];
  strategies: SearchHit[];
  trace: RetrievalTrace;
}

export interface SessionTurn {
  id: string;
  turn_index: number;
  speaker: string;
  text: string;
}

export interface SessionDetail {
  session_id: string;
  title: string;
  source: string;
  turns: SessionTurn[];
}

/** Thrown for any non-2xx response; carries the service's error body. */
export class ApiError extends Error implements ServiceError {
  stage: string;
  code: string;
  status: number;

  constructor(status: number, body: Partial<ServiceError>) {
    super(body.message ?? `request failed with status ${status}`);
    this.status = status;
    this.stage = body.stage ?? "";
    this.code = body.code ?? "http-error";
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let body: Partial<ServiceError> = {};
  try {
    body = (await response.json()) as Partial<ServiceError>;
  } catch {
    // non-JSON error body; keep the fallback fields
  }
  return new ApiError(response.status, body);
}

/** What the views and the store need from the service. */
export interface CopilotApi {
  health(): Promise<HealthInfo>;
  createSession(): Promise<string>;
  postTurn(sessionId: string, clientText: string): Promise<CopilotResult>;
  choose(
    sessionId: string,
    candidateIndex: number,
    editedText?: string,
  ): Promise<void>;
  trace(sessionId: string, turn?: number): Promise<RetrievalTrace>;
  subgraph(seeds: string[], depth?: number): Promise<Subgraph>;
  listSessions(): Promise<SessionMeta[]>;
  sessionDetail(sessionId: string): Promise<SessionDetail>;
}

export class ApiClient implements CopilotApi {
  constructor(readonly baseUrl: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>("/health");
  }

  async createSession(): Promise<string> {
    const body = await this.request<{ session_id: string }>("/sessions", {
      method: "POST",
    });
    return body.session_id;
  }

  postTurn(sessionId: string, clientText: string): Promise<CopilotResult> {
    return this.request<CopilotResult>(`/sessions/${sessionId}/turns`, {
      method: "POST",
      body: JSON.stringify({ client_text: clientText }),
    });
  }

  choose(
    sessionId: string,
    candidateIndex: number,
    editedText?: string,
  ): Promise<void> {
    return this.request(`/sessions/${sessionId}/choose`, {
      method: "POST",
      body: JSON.stringify({
        candidate_index: candidateIndex,
        edited_text: editedText ?? null,
      }),
    });
  }

  trace(sessionId: string, turn = -1): Promise<RetrievalTrace> {
    return this.request<RetrievalTrace>(
      `/sessions/${sessionId}/trace?turn=${turn}`,
    );
  }

  subgraph(seeds: string[], depth = 1): Promise<Subgraph> {
    const param = encodeURIComponent(seeds.join(","));
    return this.request<Subgraph>(`/graph/subgraph?seeds=${param}&depth=${depth}`);
  }

  listSessions(): Promise<SessionMeta[]> {
    return this.request<{ sessions: SessionMeta[] }>("/graph/sessions").then(
      (body) => body.sessions,
    );
  }

  sessionDetail(sessionId: string): Promise<SessionDetail> {
    return this.request<SessionDetail>(`/graph/sessions/${sessionId}`);
  }
}
