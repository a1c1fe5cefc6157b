"""Building session graphs from raw annotated transcripts.

Pipeline per session: segment the dialogue into speaker turns, extract
strategy/event fragments from the commentary with a chat model, link the
causal chain, align each fragment to a dialogue window by embedding
similarity, then derive temporal edges from the alignment. A corpus file
runs the same pipeline per line and merges the survivors into one graph.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .chat import PURPOSE_EXTRACT, ChatContract, Message
from .embedding import EmbedderContract
from .errors import (
    CounselGraphError,
    EmptyText,
    ExtractionParseError,
    MalformedCorpusFile,
    TooFewTurns,
    UnparseableLine,
    tag_stage,
)
from .graph import (
    CotGraph,
    CotKind,
    CotNode,
    DialogueNode,
    Edge,
    EdgeKind,
    NodeId,
    Speaker,
    cot_node_id,
    dialogue_node_id,
    render_turn,
    render_turns,
)
from .index import cosine_similarity
from .util import load_packaged_json, load_prompt


@dataclass(frozen=True)
class RawSession:
    """One annotated counseling session before any processing."""

    session_id: str
    title: str
    dialogue_text: str
    explanation_text: str
    source: str = ""


@dataclass(frozen=True)
class StrategyTaxonomy:
    """Closed label set for Strategy fragments, with short definitions."""

    categories: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        if not self.categories:
            raise ValueError("taxonomy needs at least one category")
        labels = [label for label, _ in self.categories]
        if any(not label.strip() for label in labels):
            raise ValueError("taxonomy labels must be non-empty")
        if len(set(labels)) != len(labels):
            raise ValueError("taxonomy labels must be unique")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.categories)

    def __contains__(self, label: object) -> bool:
        return label in self.labels

    @classmethod
    def from_json_list(cls, data: object) -> "StrategyTaxonomy":
        if not isinstance(data, list):
            raise ValueError("taxonomy file must be a JSON array of {label, definition}")
        categories = []
        for item in data:
            if not isinstance(item, dict) or not isinstance(item.get("label"), str):
                raise ValueError("taxonomy entries must be objects with a 'label' string")
            categories.append((item["label"], str(item.get("definition", ""))))
        return cls(categories=tuple(categories))

    def to_json_list(self) -> list[dict]:
        return [{"label": label, "definition": definition}
                for label, definition in self.categories]

    @classmethod
    def load(cls, path: str) -> "StrategyTaxonomy":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_list(json.load(fh))


DEFAULT_TAXONOMY = StrategyTaxonomy.from_json_list(load_packaged_json("data/taxonomy.json"))


@dataclass(frozen=True)
class ExtractedFragment:
    kind: CotKind
    label: str
    text: str
    causal_parent: int | None = None


@dataclass(frozen=True)
class AlignmentConfig:
    """Sliding-window parameters. Defaults are deliberate choices, not tuned
    values; all three are exposed through service config."""

    window_size: int = 4
    stride: int = 2
    min_confidence: float = 0.35

    def __post_init__(self) -> None:
        if self.window_size < 1:
            raise ValueError(f"window_size must be positive, got {self.window_size}")
        if not 1 <= self.stride <= self.window_size:
            raise ValueError(
                f"stride must be in [1, window_size], got {self.stride}")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ValueError(
                f"min_confidence must be in [0, 1], got {self.min_confidence}")


SPEAKER_ALIASES: dict[str, Speaker] = {
    "therapist": Speaker.THERAPIST,
    "counselor": Speaker.THERAPIST,
    "counsellor": Speaker.THERAPIST,
    "client": Speaker.CLIENT,
    "patient": Speaker.CLIENT,
    "visitor": Speaker.CLIENT,
}

_SPEAKER_LINE = re.compile(r"^\s*([A-Za-z]+)\s*:\s*(.*)$")


def segment_dialogue(raw: RawSession,
                     aliases: dict[str, Speaker] | None = None) -> list[DialogueNode]:
    """Split speaker-tagged dialogue text into turn nodes.

    Every non-blank line must start with a recognized speaker prefix
    (case-insensitive). Consecutive lines by the same speaker merge into a
    single turn, so turn indices alternate speakers whenever the source does.
    """
    table = SPEAKER_ALIASES if aliases is None else {
        k.lower(): v for k, v in aliases.items()}
    turns: list[tuple[Speaker, list[str]]] = []
    for line_number, line in enumerate(raw.dialogue_text.splitlines(), start=1):
        if not line.strip():
            continue
        match = _SPEAKER_LINE.match(line)
        speaker = table.get(match.group(1).lower()) if match else None
        if speaker is None:
            raise UnparseableLine(
                f"line {line_number} has no recognized speaker prefix: "
                f"{line.strip()[:80]!r}",
                line_number=line_number)
        text = match.group(2).strip()
        if turns and turns[-1][0] is speaker:
            if text:
                turns[-1][1].append(text)
        else:
            turns.append((speaker, [text] if text else []))
    if len(turns) < 2:
        raise TooFewTurns(f"dialogue has {len(turns)} turn(s); need at least 2")
    nodes = []
    for i, (speaker, pieces) in enumerate(turns):
        if not pieces:
            raise EmptyText(f"turn {i} ({speaker.value}) has no text")
        nodes.append(DialogueNode(
            id=dialogue_node_id(raw.session_id, i),
            session_id=raw.session_id,
            turn_index=i,
            speaker=speaker,
            text=" ".join(pieces)))
    return nodes


_EXTRACTION_TEMPLATE = load_prompt("extraction")
_CODE_FENCE = re.compile(r"^```[A-Za-z]*\n(.*)\n```$", re.DOTALL)


def _strip_code_fence(reply: str) -> str:
    stripped = reply.strip()
    match = _CODE_FENCE.match(stripped)
    return match.group(1) if match else stripped


def _parse_fragments(reply: str, taxonomy: StrategyTaxonomy) -> list[ExtractedFragment]:
    """Parse and validate one model reply. Raises ValueError with a message
    suitable for feeding back as a reprompt."""
    try:
        data = json.loads(_strip_code_fence(reply))
    except json.JSONDecodeError as exc:
        raise ValueError(f"reply is not valid JSON: {exc}") from exc
    if not isinstance(data, list) or not data:
        raise ValueError("reply must be a non-empty JSON array")
    fragments = []
    for i, item in enumerate(data):
        if not isinstance(item, dict):
            raise ValueError(f"element {i} is not a JSON object")
        try:
            kind = CotKind(item["kind"])
        except (KeyError, ValueError):
            raise ValueError(f"element {i}: 'kind' must be 'Strategy' or 'Event'") from None
        label = item.get("label")
        text = item.get("text")
        parent = item.get("causal_parent")
        if not isinstance(label, str) or not label.strip():
            raise ValueError(f"element {i}: 'label' must be a non-empty string")
        if not isinstance(text, str) or not text.strip():
            raise ValueError(f"element {i}: 'text' must be a non-empty string")
        if kind is CotKind.STRATEGY and label.strip() not in taxonomy:
            raise ValueError(
                f"element {i}: {label.strip()!r} is not an allowed strategy label")
        if parent is not None:
            if isinstance(parent, bool) or not isinstance(parent, int) or not 0 <= parent < i:
                raise ValueError(
                    f"element {i}: 'causal_parent' must be null or the index "
                    f"of an earlier element")
        fragments.append(ExtractedFragment(
            kind=kind, label=label.strip(), text=text.strip(), causal_parent=parent))
    return fragments


def extract_fragments(explanation: str, taxonomy: StrategyTaxonomy,
                      llm: ChatContract) -> list[ExtractedFragment]:
    """Pull strategy/event fragments out of session commentary via the chat
    contract. Invalid model output gets one validation-driven reprompt;
    a second invalid reply is a hard ExtractionParseError."""
    if not explanation.strip():
        raise EmptyText("explanation text is empty")
    prompt = _EXTRACTION_TEMPLATE.format(
        labels="; ".join(taxonomy.labels), explanation=explanation.strip())
    messages: list[Message] = [{"role": "user", "content": prompt}]
    reply = llm.complete(messages, purpose=PURPOSE_EXTRACT)
    try:
        return _parse_fragments(reply, taxonomy)
    except ValueError as first_error:
        retry: list[Message] = [
            *messages,
            {"role": "assistant", "content": reply},
            {"role": "user", "content":
                f"That output failed validation: {first_error}. "
                f"Reply again with ONLY the corrected JSON array."},
        ]
        second = llm.complete(retry, purpose=PURPOSE_EXTRACT)
        try:
            return _parse_fragments(second, taxonomy)
        except ValueError as exc:
            raise ExtractionParseError(
                f"extraction output failed validation twice: {exc}") from exc


def link_causal(fragments: list[ExtractedFragment],
                session_id: str) -> tuple[list[CotNode], list[Edge]]:
    """One CotNode per fragment (document order), one Causal edge per
    causal_parent link. Parents precede children, so the result is a DAG."""
    nodes = [
        CotNode(id=cot_node_id(session_id, i), session_id=session_id,
                kind=frag.kind, label=frag.label, text=frag.text)
        for i, frag in enumerate(fragments)
    ]
    edges = []
    for i, frag in enumerate(fragments):
        if frag.causal_parent is None:
            continue
        if not 0 <= frag.causal_parent < i:
            raise ValueError(
                f"fragment {i}: causal_parent {frag.causal_parent} does not "
                f"refer to an earlier fragment")
        edges.append(Edge(src=nodes[frag.causal_parent].id, dst=nodes[i].id,
                          kind=EdgeKind.CAUSAL))
    return nodes, edges


def window_spans(n_turns: int, window_size: int, stride: int) -> list[tuple[int, int]]:
    """Half-open [start, end) turn spans the slider visits.

    A dialogue shorter than the window is one whole-dialogue span. When the
    stride overshoots the end, a flush-right tail span is added so the last
    turns are always covered.
    """
    if n_turns <= 0:
        raise ValueError("n_turns must be positive")
    if n_turns <= window_size:
        return [(0, n_turns)]
    spans = []
    start = 0
    while start + window_size <= n_turns:
        spans.append((start, start + window_size))
        start += stride
    if spans[-1][1] < n_turns:
        spans.append((n_turns - window_size, n_turns))
    return spans


def _clamp01(x: float) -> float:
    return max(0.0, min(1.0, x))


def align_sliding_window(cot_nodes: list[CotNode],
                         dialogue_nodes: list[DialogueNode],
                         cfg: AlignmentConfig,
                         embedder: EmbedderContract) -> list[Edge]:
    """Map each cot node to the dialogue window whose rendered text is most
    similar to the fragment text, emitting one Alignment edge per turn in the
    winning window (weight = window similarity, clamped to [0, 1]).

    Ties break to the earliest window. If even the best window scores below
    cfg.min_confidence the node falls back to its single most similar turn,
    so every cot node always ends up aligned to something.
    """
    if not cot_nodes or not dialogue_nodes:
        raise ValueError("alignment needs at least one cot node and one dialogue turn")
    sessions = {n.session_id for n in cot_nodes} | {n.session_id for n in dialogue_nodes}
    if len(sessions) != 1:
        raise ValueError(f"alignment nodes span sessions {sorted(sessions)}")
    ordered = sorted(dialogue_nodes, key=lambda n: n.turn_index)
    spans = window_spans(len(ordered), cfg.window_size, cfg.stride)
    cot_vecs = embedder.embed_many([node.text for node in cot_nodes])
    window_vecs = embedder.embed_many(
        [render_turns(ordered[a:b]) for a, b in spans])
    turn_vecs = None  # only needed on fallback
    edges = []
    for ci, cot in enumerate(cot_nodes):
        best_window, best_score = 0, -2.0
        for wi in range(len(spans)):
            score = cosine_similarity(cot_vecs[ci], window_vecs[wi])
            if score > best_score:  # strict: equal scores keep the earlier window
                best_score, best_window = score, wi
        if best_score >= cfg.min_confidence:
            a, b = spans[best_window]
            weight = _clamp01(best_score)
            for turn in ordered[a:b]:
                edges.append(Edge(src=cot.id, dst=turn.id,
                                  kind=EdgeKind.ALIGNMENT, weight=weight))
        else:
            if turn_vecs is None:
                turn_vecs = embedder.embed_many([render_turn(n) for n in ordered])
            best_turn, best = 0, -2.0
            for ti in range(len(ordered)):
                score = cosine_similarity(cot_vecs[ci], turn_vecs[ti])
                if score > best:
                    best, best_turn = score, ti
            edges.append(Edge(src=cot.id, dst=ordered[best_turn].id,
                              kind=EdgeKind.ALIGNMENT, weight=_clamp01(best)))
    return edges


def derive_temporal_edges(graph: CotGraph) -> list[Edge]:
    """Temporal edges induced from alignment: for each causally adjacent pair
    in one session, A precedes B temporally iff A's earliest aligned turn is
    strictly before B's."""
    min_turn: dict[NodeId, int] = {}
    causal_pairs: set[tuple[NodeId, NodeId]] = set()
    for edge in graph.edges:
        if edge.kind is EdgeKind.ALIGNMENT:
            turn = graph.nodes[edge.dst].turn_index
            known = min_turn.get(edge.src)
            if known is None or turn < known:
                min_turn[edge.src] = turn
        elif edge.kind is EdgeKind.CAUSAL:
            causal_pairs.add((edge.src, edge.dst))
    derived: list[Edge] = []
    seen: set[tuple[NodeId, NodeId]] = set()
    for a, b in sorted(causal_pairs):
        for src, dst in ((a, b), (b, a)):
            if (src, dst) in seen:
                continue
            earlier, later = min_turn.get(src), min_turn.get(dst)
            if earlier is None or later is None or not earlier < later:
                continue
            if graph.nodes[src].session_id != graph.nodes[dst].session_id:
                continue
            seen.add((src, dst))
            derived.append(Edge(src=src, dst=dst, kind=EdgeKind.TEMPORAL))
    return derived


def build_session_graph(raw: RawSession, taxonomy: StrategyTaxonomy,
                        cfg: AlignmentConfig, llm: ChatContract,
                        embedder: EmbedderContract) -> CotGraph:
    """Run the full per-session pipeline; errors carry the stage they hit."""
    try:
        dlg_nodes = segment_dialogue(raw)
    except CounselGraphError as exc:
        raise tag_stage(exc, "segment")
    try:
        fragments = extract_fragments(raw.explanation_text, taxonomy, llm)
    except CounselGraphError as exc:
        raise tag_stage(exc, "extract")
    cot_nodes, causal_edges = link_causal(fragments, raw.session_id)
    try:
        alignment_edges = align_sliding_window(cot_nodes, dlg_nodes, cfg, embedder)
    except CounselGraphError as exc:
        raise tag_stage(exc, "align")

    graph = CotGraph()
    graph.ensure_session(raw.session_id, title=raw.title, source=raw.source)
    for node in dlg_nodes:
        graph.add_node(node)
    for prev, nxt in zip(dlg_nodes, dlg_nodes[1:]):
        graph.add_edge(Edge(src=prev.id, dst=nxt.id, kind=EdgeKind.NEXT_TURN))
    for node in cot_nodes:
        graph.add_node(node)
    for edge in causal_edges:
        graph.add_edge(edge)
    for edge in alignment_edges:
        graph.add_edge(edge)
    for edge in derive_temporal_edges(graph):
        graph.add_edge(edge)

    report = graph.validate()
    if not report.ok:
        raise tag_stage(CounselGraphError(
            f"constructed graph failed validation: {sorted(report.rules())}"),
            "validate")
    return graph


@dataclass
class BuildFailure:
    session_id: str
    stage: str
    code: str
    message: str

    def to_json_dict(self) -> dict:
        return {"session_id": self.session_id, "stage": self.stage,
                "code": self.code, "message": self.message}


@dataclass
class BuildReport:
    sessions_seen: int = 0
    sessions_built: int = 0
    built: list[str] = field(default_factory=list)
    failures: list[BuildFailure] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "sessions_seen": self.sessions_seen,
            "sessions_built": self.sessions_built,
            "built": list(self.built),
            "failures": [f.to_json_dict() for f in self.failures],
        }


_CORPUS_FIELDS = ("session_id", "title", "source", "dialogue_text", "explanation_text")


def read_corpus(path: str) -> list[RawSession]:
    """Parse a corpus file (one JSON object per line). File-shape problems
    are MalformedCorpusFile; semantic problems surface later, per session."""
    sessions: list[RawSession] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedCorpusFile(
                    f"{path}: line {line_number} is not valid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise MalformedCorpusFile(
                    f"{path}: line {line_number} is not a JSON object")
            missing = [k for k in _CORPUS_FIELDS if k not in record]
            if missing:
                raise MalformedCorpusFile(
                    f"{path}: line {line_number} missing fields {missing}")
            session_id = record["session_id"]
            if not isinstance(session_id, str) or not session_id.strip():
                raise MalformedCorpusFile(
                    f"{path}: line {line_number} has a blank session_id")
            if session_id in seen_ids:
                raise MalformedCorpusFile(
                    f"{path}: duplicate session_id {session_id!r} at line {line_number}")
            seen_ids.add(session_id)
            sessions.append(RawSession(
                session_id=session_id,
                title=str(record["title"]),
                source=str(record["source"]),
                dialogue_text=str(record["dialogue_text"]),
                explanation_text=str(record["explanation_text"])))
    return sessions


def write_corpus(path: str, sessions: list[RawSession]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for raw in sessions:
            fh.write(json.dumps({
                "session_id": raw.session_id,
                "title": raw.title,
                "source": raw.source,
                "dialogue_text": raw.dialogue_text,
                "explanation_text": raw.explanation_text,
            }, ensure_ascii=False) + "\n")


def ingest_corpus(path: str, taxonomy: StrategyTaxonomy, cfg: AlignmentConfig,
                  llm: ChatContract, embedder: EmbedderContract, *,
                  max_workers: int = 1) -> tuple[CotGraph, BuildReport]:
    """Build every session in a corpus file and merge the successes.

    Sessions are independent, so they may build on a bounded thread pool;
    the merge happens single-threaded afterwards, in corpus order, which
    keeps the output graph identical regardless of worker count.
    """
    raws = read_corpus(path)
    report = BuildReport(sessions_seen=len(raws))

    def build_one(raw: RawSession) -> CotGraph | BuildFailure:
        try:
            return build_session_graph(raw, taxonomy, cfg, llm, embedder)
        except CounselGraphError as exc:
            return BuildFailure(session_id=raw.session_id,
                                stage=exc.stage or "", code=exc.code,
                                message=str(exc))

    if max_workers > 1 and len(raws) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(build_one, raws))
    else:
        outcomes = [build_one(raw) for raw in raws]

    merged = CotGraph()
    for raw, outcome in zip(raws, outcomes):
        if isinstance(outcome, BuildFailure):
            report.failures.append(outcome)
            continue
        _merge_session(merged, outcome)
        report.built.append(raw.session_id)
        report.sessions_built += 1
    return merged, report


def _merge_session(dst: CotGraph, src: CotGraph) -> None:
    # Session ids are unique across the corpus, so node/edge sets are disjoint.
    for session_id, meta in src.sessions.items():
        dst.ensure_session(session_id, title=meta.title, source=meta.source)
    for node in sorted(src.nodes.values(), key=lambda n: n.id):
        dst.add_node(node)
    for edge in sorted(src.edges, key=Edge.sort_key):
        dst.add_edge(edge)
