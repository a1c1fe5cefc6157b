"""Two-stage retrieval and candidate generation.

Stage 1 embeds the recent conversation and finds similar dialogues. Stage 2
reasons about the case, then finds matching strategy/event nodes. The two
hit sets merge with their graph neighborhoods, nodes surfaced by both sides
outrank everything else, and the winners become few-shot examples and
instructions for drafting the therapist's next reply. Every artifact along
the way lands in a trace whose node ids all resolve into one subgraph.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum

from .chat import (
    PURPOSE_GENERATE,
    PURPOSE_REASONING,
    ChatContract,
    Message,
)
from .embedding import EmbedderContract
from .errors import (
    AllCandidatesEmpty,
    CounselGraphError,
    EmptyInput,
    EmptyText,
    KindMismatch,
    UnknownNode,
    tag_stage,
)
from .graph import (
    CotGraph,
    CotNode,
    DialogueNode,
    EdgeKind,
    NodeId,
    Speaker,
    is_session_entry_id,
    render_turns,
    split_node_id,
)
from .index import IndexKind, SearchHit, VectorIndex
from .util import load_prompt


@dataclass(frozen=True)
class ConversationHistory:
    """The live conversation: (speaker, text) turns, oldest first."""

    turns: tuple[tuple[Speaker, str], ...]

    def __post_init__(self) -> None:
        for i, (_, text) in enumerate(self.turns):
            if not text.strip():
                raise EmptyText(f"history turn {i} has empty text")

    def __len__(self) -> int:
        return len(self.turns)

    def append(self, speaker: Speaker, text: str) -> "ConversationHistory":
        return replace(self, turns=(*self.turns, (speaker, text)))

    def render(self, window: int | None = None) -> str:
        """Speaker-prefixed lines, most recent ``window`` turns. Matches the
        graph's transcript rendering so identical text embeds identically."""
        turns = self.turns if window is None else self.turns[-window:]
        return "\n".join(f"{speaker.value}: {text}" for speaker, text in turns)

    def to_json_list(self) -> list[dict]:
        return [{"speaker": s.value, "text": t} for s, t in self.turns]

    @classmethod
    def from_json_list(cls, data: list[dict]) -> "ConversationHistory":
        turns = []
        for i, item in enumerate(data):
            if not isinstance(item, dict):
                raise ValueError(f"history entry {i} is not an object")
            try:
                speaker = Speaker(item["speaker"])
            except (KeyError, ValueError):
                raise ValueError(
                    f"history entry {i}: 'speaker' must be 'Therapist' or 'Client'"
                ) from None
            text = item.get("text")
            if not isinstance(text, str):
                raise ValueError(f"history entry {i}: 'text' must be a string")
            turns.append((speaker, text))
        return cls(turns=tuple(turns))


@dataclass(frozen=True)
class ReasoningTrace:
    steps: tuple[str, ...]
    raw_text: str

    def to_json_dict(self) -> dict:
        return {"steps": list(self.steps), "raw_text": self.raw_text}


class Origin(str, Enum):
    """How a candidate entered the merge: as a hit on one side, or as a
    graph neighbor of a hit on that side."""

    DIALOGUE_HIT = "DialogueHit"
    COT_HIT = "CotHit"
    DIALOGUE_NEIGHBOR = "DialogueNeighbor"
    COT_NEIGHBOR = "CotNeighbor"


_DIALOGUE_SIDE = frozenset({Origin.DIALOGUE_HIT, Origin.DIALOGUE_NEIGHBOR})
_COT_SIDE = frozenset({Origin.COT_HIT, Origin.COT_NEIGHBOR})


@dataclass(frozen=True)
class RankedNode:
    node_id: NodeId
    base_score: float
    origin: frozenset[Origin]
    overlap: bool
    final_rank: int

    def to_json_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "base_score": self.base_score,
            "origin": sorted(o.value for o in self.origin),
            "overlap": self.overlap,
            "final_rank": self.final_rank,
        }


@dataclass(frozen=True)
class PromptPiece:
    """One example or instruction, with the node ids it was built from."""

    source_node_ids: tuple[NodeId, ...]
    text: str

    def to_json_dict(self) -> dict:
        return {"source_node_ids": list(self.source_node_ids), "text": self.text}


@dataclass(frozen=True)
class PromptBundle:
    few_shot_examples: tuple[PromptPiece, ...]
    instructions: tuple[PromptPiece, ...]
    system_preamble: str
    history_rendering: str

    def source_node_ids(self) -> set[NodeId]:
        ids: set[NodeId] = set()
        for piece in (*self.few_shot_examples, *self.instructions):
            ids.update(piece.source_node_ids)
        return ids

    def to_json_dict(self) -> dict:
        return {
            "few_shot_examples": [p.to_json_dict() for p in self.few_shot_examples],
            "instructions": [p.to_json_dict() for p in self.instructions],
            "system_preamble": self.system_preamble,
            "history_rendering": self.history_rendering,
        }


@dataclass(frozen=True)
class RetrievalTrace:
    dialogue_hits: tuple[SearchHit, ...]
    cot_hits: tuple[SearchHit, ...]
    reasoning: ReasoningTrace | None
    merged: tuple[RankedNode, ...]
    subgraph: CotGraph
    prompt: PromptBundle

    def to_json_dict(self) -> dict:
        return {
            "dialogue_hits": [
                {"node_id": h.node_id, "score": h.score} for h in self.dialogue_hits],
            "cot_hits": [
                {"node_id": h.node_id, "score": h.score} for h in self.cot_hits],
            "reasoning": None if self.reasoning is None else self.reasoning.to_json_dict(),
            "merged": [r.to_json_dict() for r in self.merged],
            "subgraph": self.subgraph.to_json_dict(),
            "prompt": self.prompt.to_json_dict(),
        }


@dataclass(frozen=True)
class ResponseCandidate:
    text: str
    supporting_node_ids: tuple[NodeId, ...]

    def to_json_dict(self) -> dict:
        return {"text": self.text,
                "supporting_node_ids": list(self.supporting_node_ids)}


@dataclass(frozen=True)
class CopilotResult:
    candidates: tuple[ResponseCandidate, ...]
    similar_sessions: tuple[tuple[str, float], ...]
    strategies: tuple[tuple[NodeId, float], ...]
    trace: RetrievalTrace

    def to_json_dict(self) -> dict:
        return {
            "candidates": [c.to_json_dict() for c in self.candidates],
            "similar_sessions": [
                {"session_id": sid, "score": score}
                for sid, score in self.similar_sessions],
            "strategies": [
                {"node_id": nid, "score": score}
                for nid, score in self.strategies],
            "trace": self.trace.to_json_dict(),
        }


@dataclass(frozen=True)
class RetrievalConfig:
    """Pipeline knobs. The defaults are working choices, all overridable
    through service config; the disable flags realize the two ablations
    (dialogue-only and strategy-only retrieval)."""

    k_dialogue: int = 3
    k_cot: int = 5
    neighbor_depth: int = 1
    neighbor_decay: float = 0.9
    history_window: int = 8
    n_candidates: int = 3
    max_examples: int = 3
    max_instructions: int = 5
    disable_cot_stage: bool = False
    disable_dialogue_stage: bool = False

    def __post_init__(self) -> None:
        for name in ("k_dialogue", "k_cot", "neighbor_depth", "history_window",
                     "n_candidates"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("max_examples", "max_instructions"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.neighbor_decay <= 1.0:
            raise ValueError(
                f"neighbor_decay must be in [0, 1], got {self.neighbor_decay}")


def retrieve_similar_dialogues(history: ConversationHistory,
                               index: VectorIndex, k: int,
                               embedder: EmbedderContract, *,
                               window: int = 8) -> list[SearchHit]:
    """Top-k dialogue entries (whole sessions and single turns both count)
    most similar to the rendered recent history."""
    if index.index_kind is not IndexKind.DIALOGUE:
        raise KindMismatch(f"expected a dialogue index, got {index.index_kind.value}")
    if not history.turns:
        raise EmptyInput("history is empty")
    return index.search(embedder.embed(history.render(window)), k)


_STEP_LINE = re.compile(r"^\s*\d+[.)]\s*(.+?)\s*$", re.MULTILINE)

_REASONING_TEMPLATE = load_prompt("reasoning")
_SYSTEM_PREAMBLE = load_prompt("generation_system").strip()


def generate_reasoning(history: ConversationHistory,
                       llm: ChatContract, *, window: int = 8) -> ReasoningTrace:
    """Case analysis + strategy determination as numbered steps. Unnumbered
    model output degrades to a single-step trace instead of failing."""
    if not history.turns:
        raise EmptyInput("history is empty")
    prompt = _REASONING_TEMPLATE.format(history=history.render(window))
    raw = llm.complete([{"role": "user", "content": prompt}],
                       purpose=PURPOSE_REASONING)
    if not raw.strip():
        raw = "No analysis available."
    steps = tuple(_STEP_LINE.findall(raw)) or (raw.strip(),)
    return ReasoningTrace(steps=steps, raw_text=raw)


def retrieve_strategies(reasoning: ReasoningTrace, index: VectorIndex, k: int,
                        embedder: EmbedderContract) -> list[SearchHit]:
    """Top-k cot nodes most similar to the full reasoning text."""
    if index.index_kind is not IndexKind.COT:
        raise KindMismatch(f"expected a cot index, got {index.index_kind.value}")
    return index.search(embedder.embed(reasoning.raw_text), k)


def _hit_seed_ids(hit: SearchHit, graph: CotGraph) -> list[NodeId]:
    """Session-level entries stand for all of that session's dialogue turns;
    everything else must be a literal graph node."""
    if is_session_entry_id(hit.node_id):
        session_id = split_node_id(hit.node_id)[0]
        if session_id not in graph.sessions:
            raise UnknownNode(f"hit references unknown session {session_id!r}")
        return [n.id for n in graph.dialogue_nodes(session_id)]
    if hit.node_id not in graph.nodes:
        raise UnknownNode(f"hit references unknown node {hit.node_id!r}")
    return [hit.node_id]


def merge_and_rank(dialogue_hits: list[SearchHit], cot_hits: list[SearchHit],
                   graph: CotGraph, depth: int = 1, *,
                   decay: float = 0.9) -> tuple[list[RankedNode], CotGraph]:
    """Merge both hit sets with their graph neighborhoods and rank them.

    Each candidate's base_score is the best score among everything that
    introduced it; a neighbor inherits the introducing hit's score times
    decay per hop. Nodes with both dialogue-side and cot-side origins form
    a hard overlap tier ranked above all others; within a tier, score then
    node id decide. The returned subgraph is the closure over exactly the
    candidate set.
    """
    scores: dict[NodeId, float] = {}
    origins: dict[NodeId, set[Origin]] = {}

    def introduce(node_id: NodeId, score: float, origin: Origin) -> None:
        origins.setdefault(node_id, set()).add(origin)
        if node_id not in scores or score > scores[node_id]:
            scores[node_id] = score

    for hits, hit_origin, neighbor_origin in (
            (dialogue_hits, Origin.DIALOGUE_HIT, Origin.DIALOGUE_NEIGHBOR),
            (cot_hits, Origin.COT_HIT, Origin.COT_NEIGHBOR)):
        for hit in hits:
            for seed in _hit_seed_ids(hit, graph):
                introduce(seed, hit.score, hit_origin)
                inner: set[NodeId] = set()
                for hop in range(1, depth + 1):
                    within = graph.neighbors(seed, depth=hop)
                    for node_id in within - inner:
                        introduce(node_id, hit.score * decay ** hop,
                                  neighbor_origin)
                    inner = within

    ranked = sorted(scores,
                    key=lambda nid: (not _is_overlap(origins[nid]),
                                     -scores[nid], nid))
    merged = [
        RankedNode(node_id=nid, base_score=scores[nid],
                   origin=frozenset(origins[nid]),
                   overlap=_is_overlap(origins[nid]), final_rank=rank)
        for rank, nid in enumerate(ranked, start=1)
    ]
    subgraph = graph.extract_subgraph(ranked, depth=0) if ranked else CotGraph()
    return merged, subgraph


def _is_overlap(origin: set[Origin]) -> bool:
    return bool(origin & _DIALOGUE_SIDE) and bool(origin & _COT_SIDE)


def assemble_prompt(ranked: list[RankedNode], graph: CotGraph,
                    history: ConversationHistory, *, max_examples: int = 3,
                    max_instructions: int = 5,
                    history_window: int = 8) -> PromptBundle:
    """Turn the ranked candidates into generation inputs, best first.

    A dialogue node becomes a few-shot example of its local exchange (the
    node plus its previous and next turns, kept only if those turns are
    themselves candidates, so provenance stays inside the trace subgraph).
    A cot node becomes one instruction line. Dialogue nodes already shown
    inside an earlier example are skipped rather than repeated.
    """
    candidate_ids = {r.node_id for r in ranked}
    prev_turn: dict[NodeId, NodeId] = {}
    next_turn: dict[NodeId, NodeId] = {}
    for edge in graph.edges:
        if edge.kind is EdgeKind.NEXT_TURN:
            if edge.src in candidate_ids and edge.dst in candidate_ids:
                next_turn[edge.src] = edge.dst
                prev_turn[edge.dst] = edge.src

    examples: list[PromptPiece] = []
    instructions: list[PromptPiece] = []
    used_in_examples: set[NodeId] = set()
    for ranked_node in ranked:
        node = graph.node(ranked_node.node_id)
        if isinstance(node, DialogueNode):
            if len(examples) >= max_examples or node.id in used_in_examples:
                continue
            exchange_ids = [node.id]
            if node.id in prev_turn:
                exchange_ids.insert(0, prev_turn[node.id])
            if node.id in next_turn:
                exchange_ids.append(next_turn[node.id])
            turns = sorted((graph.node(nid) for nid in exchange_ids),
                           key=lambda n: n.turn_index)
            examples.append(PromptPiece(
                source_node_ids=tuple(n.id for n in turns),
                text=render_turns(turns)))
            used_in_examples.update(n.id for n in turns)
        elif isinstance(node, CotNode):
            if len(instructions) >= max_instructions:
                continue
            instructions.append(PromptPiece(
                source_node_ids=(node.id,),
                text=f"- {node.label}: {node.text}"))

    return PromptBundle(
        few_shot_examples=tuple(examples),
        instructions=tuple(instructions),
        system_preamble=_SYSTEM_PREAMBLE,
        history_rendering=history.render(history_window))


def render_generation_messages(bundle: PromptBundle,
                               history: ConversationHistory) -> list[Message]:
    del history  # the bundle already carries the windowed rendering
    parts: list[str] = []
    if bundle.instructions:
        parts.append("Guidance drawn from similar cases:\n"
                     + "\n".join(piece.text for piece in bundle.instructions))
    if bundle.few_shot_examples:
        rendered = [f"Example {i}:\n{piece.text}"
                    for i, piece in enumerate(bundle.few_shot_examples, start=1)]
        parts.append("Example exchanges from similar sessions:\n\n"
                     + "\n\n".join(rendered))
    parts.append("Current conversation:\n" + bundle.history_rendering)
    parts.append("Write the therapist's next reply.")
    return [
        {"role": "system", "content": bundle.system_preamble},
        {"role": "user", "content": "\n\n".join(parts)},
    ]


def generate_candidates(bundle: PromptBundle, history: ConversationHistory,
                        llm: ChatContract, n: int = 3) -> list[ResponseCandidate]:
    """Draft n reply candidates. Each carries the union of the bundle's
    source node ids; with an empty bundle this is plain zero-shot drafting."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    supporting = tuple(sorted(bundle.source_node_ids()))
    messages = render_generation_messages(bundle, history)
    candidates = []
    for _ in range(n):
        text = llm.complete(messages, purpose=PURPOSE_GENERATE).strip()
        if text:
            candidates.append(ResponseCandidate(
                text=text, supporting_node_ids=supporting))
    if not candidates:
        raise AllCandidatesEmpty(f"all {n} generations came back blank")
    return candidates


def run_turn(history: ConversationHistory, graph: CotGraph,
             dialogue_index: VectorIndex, cot_index: VectorIndex,
             llm: ChatContract, embedder: EmbedderContract,
             cfg: RetrievalConfig = RetrievalConfig()) -> CopilotResult:
    """The full copilot turn; every error is tagged with the stage it hit."""
    if not history.turns:
        raise EmptyInput("history is empty")
    if history.turns[-1][0] is not Speaker.CLIENT:
        raise ValueError("a copilot turn requires the client to have spoken last")

    dialogue_hits: list[SearchHit] = []
    if not cfg.disable_dialogue_stage:
        try:
            dialogue_hits = retrieve_similar_dialogues(
                history, dialogue_index, cfg.k_dialogue, embedder,
                window=cfg.history_window)
        except CounselGraphError as exc:
            raise tag_stage(exc, "retrieve-dialogues")

    reasoning: ReasoningTrace | None = None
    cot_hits: list[SearchHit] = []
    if not cfg.disable_cot_stage:
        try:
            reasoning = generate_reasoning(history, llm,
                                           window=cfg.history_window)
        except CounselGraphError as exc:
            raise tag_stage(exc, "reason")
        try:
            cot_hits = retrieve_strategies(reasoning, cot_index, cfg.k_cot,
                                           embedder)
        except CounselGraphError as exc:
            raise tag_stage(exc, "retrieve-strategies")

    try:
        merged, subgraph = merge_and_rank(
            dialogue_hits, cot_hits, graph, cfg.neighbor_depth,
            decay=cfg.neighbor_decay)
    except CounselGraphError as exc:
        raise tag_stage(exc, "merge")

    # A disabled stage contributes nothing to the prompt either, even though
    # its node kind can still enter `merged` as a neighbor of the other side.
    bundle = assemble_prompt(
        merged, graph, history,
        max_examples=0 if cfg.disable_dialogue_stage else cfg.max_examples,
        max_instructions=0 if cfg.disable_cot_stage else cfg.max_instructions,
        history_window=cfg.history_window)

    try:
        candidates = generate_candidates(bundle, history, llm,
                                         cfg.n_candidates)
    except CounselGraphError as exc:
        raise tag_stage(exc, "generate")

    session_scores: dict[str, float] = {}
    for hit in dialogue_hits:
        session_id = split_node_id(hit.node_id)[0]
        if session_id not in session_scores or hit.score > session_scores[session_id]:
            session_scores[session_id] = hit.score
    similar_sessions = tuple(sorted(
        session_scores.items(), key=lambda item: (-item[1], item[0])))
    strategies = tuple((hit.node_id, hit.score) for hit in cot_hits)

    trace = RetrievalTrace(
        dialogue_hits=tuple(dialogue_hits), cot_hits=tuple(cot_hits),
        reasoning=reasoning, merged=tuple(merged), subgraph=subgraph,
        prompt=bundle)
    return CopilotResult(candidates=tuple(candidates),
                         similar_sessions=similar_sessions,
                         strategies=strategies, trace=trace)
