"""Reasoning-trace graph over annotated counseling sessions.

The graph holds two node populations per session: dialogue nodes (one per
speaker turn) and chain-of-thought (COT) nodes (strategy/event fragments
extracted from session commentary). Four typed edge kinds connect them:

- ``Causal``    COT -> COT   reasoning chain between fragments
- ``Temporal``  COT -> COT   induced ordering (derived from alignment)
- ``Alignment`` COT -> DLG   which dialogue turns a fragment explains
- ``NextTurn``  DLG -> DLG   the turn sequence of a session

Graphs are built once (single writer) and treated as immutable afterwards;
all read operations are safe under concurrent readers.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Union

from .errors import (
    CausalCycle,
    DuplicateEdge,
    DuplicateId,
    EmptyText,
    KindMismatch,
    MalformedFile,
    SchemaVersionMismatch,
    UnknownEndpoint,
    UnknownNode,
)
from .util import canonical_json_bytes

SCHEMA_VERSION = "1"

# Node ids are opaque strings of the form "{session_id}:{kind}:{ordinal}"
# with kind in {dlg, cot} and a zero-padded ordinal. The special ordinal "*"
# marks a session-level dialogue index entry that has no graph node.
NodeId = str

DLG = "dlg"
COT = "cot"


class Speaker(str, Enum):
    THERAPIST = "Therapist"
    CLIENT = "Client"


class CotKind(str, Enum):
    STRATEGY = "Strategy"
    EVENT = "Event"


class EdgeKind(str, Enum):
    CAUSAL = "Causal"
    TEMPORAL = "Temporal"
    ALIGNMENT = "Alignment"
    NEXT_TURN = "NextTurn"


# Allowed (src kind, dst kind) per edge kind, in node-id kind terms.
_EDGE_ENDPOINT_KINDS: dict[EdgeKind, tuple[str, str]] = {
    EdgeKind.CAUSAL: (COT, COT),
    EdgeKind.TEMPORAL: (COT, COT),
    EdgeKind.ALIGNMENT: (COT, DLG),
    EdgeKind.NEXT_TURN: (DLG, DLG),
}


def dialogue_node_id(session_id: str, ordinal: int) -> NodeId:
    return f"{session_id}:{DLG}:{ordinal:03d}"


def cot_node_id(session_id: str, ordinal: int) -> NodeId:
    return f"{session_id}:{COT}:{ordinal:03d}"


def session_entry_id(session_id: str) -> NodeId:
    """Id form of the session-level dialogue index entry (not a graph node)."""
    return f"{session_id}:{DLG}:*"


def split_node_id(node_id: NodeId) -> tuple[str, str, str]:
    """Split into (session_id, kind, ordinal). Raises ValueError on bad form."""
    parts = node_id.rsplit(":", 2)
    if len(parts) != 3 or not all(parts):
        raise ValueError(f"malformed node id: {node_id!r}")
    session_id, kind, ordinal = parts
    if kind not in (DLG, COT):
        raise ValueError(f"malformed node id kind: {node_id!r}")
    return session_id, kind, ordinal


def node_id_kind(node_id: NodeId) -> str:
    return split_node_id(node_id)[1]


def is_session_entry_id(node_id: NodeId) -> bool:
    try:
        _, kind, ordinal = split_node_id(node_id)
    except ValueError:
        return False
    return kind == DLG and ordinal == "*"


@dataclass(frozen=True)
class DialogueNode:
    id: NodeId
    session_id: str
    turn_index: int
    speaker: Speaker
    text: str


@dataclass(frozen=True)
class CotNode:
    id: NodeId
    session_id: str
    kind: CotKind
    label: str
    text: str


Node = Union[DialogueNode, CotNode]


@dataclass(frozen=True)
class Edge:
    src: NodeId
    dst: NodeId
    kind: EdgeKind
    weight: float = 1.0

    def sort_key(self) -> tuple[str, str, str]:
        return (self.src, self.dst, self.kind.value)


@dataclass
class SessionMeta:
    session_id: str
    title: str = ""
    source: str = ""
    dialogue_node_count: int = 0
    cot_node_count: int = 0


@dataclass(frozen=True)
class Violation:
    rule: str
    subject: str
    detail: str = ""


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}


def render_turn(node: DialogueNode) -> str:
    return f"{node.speaker.value}: {node.text}"


def render_turns(nodes: Iterable[DialogueNode]) -> str:
    return "\n".join(render_turn(n) for n in nodes)


class CotGraph:
    """Typed multigraph of dialogue and COT nodes.

    ``sessions``, ``nodes`` and ``edges`` are plain containers; the builder
    methods enforce invariants on the way in, and :meth:`validate` re-checks
    them from scratch (the source of truth for deserialized or hand-built
    graphs).
    """

    def __init__(self) -> None:
        self.sessions: dict[str, SessionMeta] = {}
        self.nodes: dict[NodeId, Node] = {}
        self.edges: list[Edge] = []

    # --- construction -------------------------------------------------------

    def ensure_session(self, session_id: str, title: str = "", source: str = "") -> SessionMeta:
        meta = self.sessions.get(session_id)
        if meta is None:
            meta = SessionMeta(session_id=session_id, title=title, source=source)
            self.sessions[session_id] = meta
        else:
            if title:
                meta.title = title
            if source:
                meta.source = source
        return meta

    def add_node(self, node: Node) -> "CotGraph":
        if node.id in self.nodes:
            raise DuplicateId(f"node id already present: {node.id}")
        if not node.text.strip():
            raise EmptyText(f"node {node.id} has empty text")
        expected = DLG if isinstance(node, DialogueNode) else COT
        try:
            _, kind, ordinal = split_node_id(node.id)
        except ValueError as exc:
            raise KindMismatch(str(exc)) from exc
        if kind != expected or ordinal == "*":
            raise KindMismatch(f"node id {node.id} does not match node type {expected}")
        meta = self.ensure_session(node.session_id)
        self.nodes[node.id] = node
        if isinstance(node, DialogueNode):
            meta.dialogue_node_count += 1
        else:
            meta.cot_node_count += 1
        return self

    def add_edge(self, edge: Edge) -> "CotGraph":
        for endpoint in (edge.src, edge.dst):
            if endpoint not in self.nodes:
                raise UnknownEndpoint(f"edge endpoint not in graph: {endpoint}")
        src_kind, dst_kind = _EDGE_ENDPOINT_KINDS[edge.kind]
        if node_id_kind(edge.src) != src_kind or node_id_kind(edge.dst) != dst_kind:
            raise KindMismatch(
                f"{edge.kind.value} edge requires {src_kind}->{dst_kind}, "
                f"got {edge.src}->{edge.dst}"
            )
        if not 0.0 <= edge.weight <= 1.0:
            raise ValueError(f"edge weight out of [0,1]: {edge.weight}")
        if any(e.src == edge.src and e.dst == edge.dst and e.kind == edge.kind
               for e in self.edges):
            raise DuplicateEdge(f"duplicate edge {edge.src}->{edge.dst} [{edge.kind.value}]")
        if edge.kind is EdgeKind.CAUSAL and self._causal_reaches(edge.dst, edge.src):
            raise CausalCycle(f"causal edge {edge.src}->{edge.dst} would close a cycle")
        self.edges.append(edge)
        return self

    def _causal_reaches(self, start: NodeId, target: NodeId) -> bool:
        # DFS over causal edges only; sessions never share causal edges so no
        # session filter is needed beyond endpoint identity.
        adjacency = defaultdict(list)
        for e in self.edges:
            if e.kind is EdgeKind.CAUSAL:
                adjacency[e.src].append(e.dst)
        stack, seen = [start], set()
        while stack:
            current = stack.pop()
            if current == target:
                return True
            if current in seen:
                continue
            seen.add(current)
            stack.extend(adjacency[current])
        return False

    # --- lookup -------------------------------------------------------------

    def node(self, node_id: NodeId) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(f"unknown node: {node_id}") from None

    def dialogue_nodes(self, session_id: str | None = None) -> list[DialogueNode]:
        out = [n for n in self.nodes.values()
               if isinstance(n, DialogueNode)
               and (session_id is None or n.session_id == session_id)]
        out.sort(key=lambda n: (n.session_id, n.turn_index))
        return out

    def cot_nodes(self, session_id: str | None = None) -> list[CotNode]:
        out = [n for n in self.nodes.values()
               if isinstance(n, CotNode)
               and (session_id is None or n.session_id == session_id)]
        out.sort(key=lambda n: n.id)
        return out

    def render_transcript(self, session_id: str) -> str:
        return render_turns(self.dialogue_nodes(session_id))

    # --- traversal ----------------------------------------------------------

    def neighbors(self, seed: NodeId, kinds: Iterable[EdgeKind] | None = None,
                  depth: int = 1) -> set[NodeId]:
        """Nodes reachable from ``seed`` within ``depth`` hops (either edge
        direction, restricted to ``kinds``), excluding the seed itself."""
        if seed not in self.nodes:
            raise UnknownNode(f"unknown node: {seed}")
        if depth < 1:
            raise ValueError("depth must be >= 1")
        kind_set = set(kinds) if kinds is not None else set(EdgeKind)
        adjacency = self._undirected_adjacency(kind_set)
        visited = {seed}
        frontier = {seed}
        for _ in range(depth):
            frontier = {m for n in frontier for m in adjacency[n]} - visited
            if not frontier:
                break
            visited |= frontier
        return visited - {seed}

    def _undirected_adjacency(self, kinds: set[EdgeKind]) -> Mapping[NodeId, set[NodeId]]:
        adjacency: dict[NodeId, set[NodeId]] = defaultdict(set)
        for e in self.edges:
            if e.kind in kinds:
                adjacency[e.src].add(e.dst)
                adjacency[e.dst].add(e.src)
        return adjacency

    def extract_subgraph(self, seeds: Iterable[NodeId], depth: int = 1) -> "CotGraph":
        """Induced subgraph on the seeds plus their <= depth-hop neighborhoods.

        ``depth`` 0 keeps exactly the seeds (closure of edges among them);
        retrieval uses that for its hit-set subgraphs. Session counts are
        recomputed for the members that survive.
        """
        seed_list = list(seeds)
        for s in seed_list:
            if s not in self.nodes:
                raise UnknownNode(f"unknown node: {s}")
        if depth < 0:
            raise ValueError("depth must be >= 0")
        keep: set[NodeId] = set(seed_list)
        if depth >= 1:
            for s in seed_list:
                keep |= self.neighbors(s, None, depth)
        sub = CotGraph()
        for node_id in sorted(keep):
            node = self.nodes[node_id]
            meta = self.sessions.get(node.session_id)
            sub.ensure_session(node.session_id,
                               title=meta.title if meta else "",
                               source=meta.source if meta else "")
            sub.add_node(node)
        for e in self.edges:
            if e.src in keep and e.dst in keep:
                sub.edges.append(e)
        return sub

    # --- validation ---------------------------------------------------------

    def validate(self, *, subgraph: bool = False) -> ValidationReport:
        """Check every structural invariant; violations are data, not errors.

        ``subgraph=True`` relaxes the two rules an induced subgraph cannot
        honor once neighboring context is cut away: COT alignment coverage,
        and completeness of the per-session turn path (present NextTurn edges
        must still respect turn order).
        """
        report = ValidationReport()
        add = report.violations.append

        for node_id, node in self.nodes.items():
            if not node.text.strip():
                add(Violation("empty-text", node_id))
            if isinstance(node, DialogueNode) and node.turn_index < 0:
                add(Violation("negative-turn-index", node_id))
            expected = DLG if isinstance(node, DialogueNode) else COT
            try:
                id_session, id_kind, _ = split_node_id(node_id)
            except ValueError:
                add(Violation("bad-node-id", node_id))
                continue
            if id_kind != expected:
                add(Violation("id-kind-mismatch", node_id))
            if id_session != node.session_id:
                add(Violation("id-session-mismatch", node_id))

        seen_triples: set[tuple[str, str, EdgeKind]] = set()
        for e in self.edges:
            missing = [p for p in (e.src, e.dst) if p not in self.nodes]
            if missing:
                add(Violation("unknown-endpoint", f"{e.src}->{e.dst}",
                              detail=",".join(missing)))
                continue
            src_kind, dst_kind = _EDGE_ENDPOINT_KINDS[e.kind]
            if node_id_kind(e.src) != src_kind or node_id_kind(e.dst) != dst_kind:
                add(Violation("edge-kind-mismatch", f"{e.src}->{e.dst}",
                              detail=e.kind.value))
            if not 0.0 <= e.weight <= 1.0:
                add(Violation("weight-out-of-range", f"{e.src}->{e.dst}",
                              detail=str(e.weight)))
            triple = (e.src, e.dst, e.kind)
            if triple in seen_triples:
                add(Violation("duplicate-edge", f"{e.src}->{e.dst}",
                              detail=e.kind.value))
            seen_triples.add(triple)

        self._check_causal_acyclicity(report)
        self._check_turn_paths(report, relaxed=subgraph)
        if not subgraph:
            self._check_alignment_coverage(report)
        self._check_session_counts(report)
        return report

    def _check_causal_acyclicity(self, report: ValidationReport) -> None:
        # Kahn's algorithm per session over the causal subgraph.
        by_session: dict[str, list[Edge]] = defaultdict(list)
        for e in self.edges:
            if e.kind is EdgeKind.CAUSAL and e.src in self.nodes and e.dst in self.nodes:
                by_session[self.nodes[e.src].session_id].append(e)
        for session_id, edges in by_session.items():
            nodes = {e.src for e in edges} | {e.dst for e in edges}
            indegree = {n: 0 for n in nodes}
            outgoing = defaultdict(list)
            for e in edges:
                outgoing[e.src].append(e.dst)
                indegree[e.dst] += 1
            queue = [n for n in nodes if indegree[n] == 0]
            visited = 0
            while queue:
                n = queue.pop()
                visited += 1
                for m in outgoing[n]:
                    indegree[m] -= 1
                    if indegree[m] == 0:
                        queue.append(m)
            if visited != len(nodes):
                report.violations.append(
                    Violation("causal-cycle", session_id,
                              detail="causal subgraph is not a DAG"))

    def _check_turn_paths(self, report: ValidationReport, *, relaxed: bool) -> None:
        next_turn: dict[str, list[Edge]] = defaultdict(list)
        for e in self.edges:
            if e.kind is EdgeKind.NEXT_TURN and e.src in self.nodes and e.dst in self.nodes:
                next_turn[self.nodes[e.src].session_id].append(e)
        for session_id in self.sessions:
            members = self.dialogue_nodes(session_id)
            edges = next_turn.get(session_id, [])
            indices = [n.turn_index for n in members]
            if len(set(indices)) != len(indices):
                report.violations.append(
                    Violation("broken-turn-path", session_id,
                              detail="duplicate turn_index"))
                continue
            if relaxed:
                for e in edges:
                    src, dst = self.nodes[e.src], self.nodes[e.dst]
                    if src.turn_index >= dst.turn_index:  # type: ignore[union-attr]
                        report.violations.append(
                            Violation("broken-turn-path", session_id,
                                      detail=f"{e.src}->{e.dst} against turn order"))
                continue
            expected = {(a.id, b.id) for a, b in zip(members, members[1:])}
            actual = {(e.src, e.dst) for e in edges}
            if expected != actual:
                missing = sorted(expected - actual)
                extra = sorted(actual - expected)
                report.violations.append(
                    Violation("broken-turn-path", session_id,
                              detail=f"missing={missing} extra={extra}"))

    def _check_alignment_coverage(self, report: ValidationReport) -> None:
        aligned = {e.src for e in self.edges if e.kind is EdgeKind.ALIGNMENT}
        for node_id, node in self.nodes.items():
            if isinstance(node, CotNode) and node_id not in aligned:
                report.violations.append(Violation("unaligned-cot-node", node_id))

    def _check_session_counts(self, report: ValidationReport) -> None:
        actual_dlg: dict[str, int] = defaultdict(int)
        actual_cot: dict[str, int] = defaultdict(int)
        for node in self.nodes.values():
            if isinstance(node, DialogueNode):
                actual_dlg[node.session_id] += 1
            else:
                actual_cot[node.session_id] += 1
        for session_id, meta in self.sessions.items():
            if (meta.dialogue_node_count != actual_dlg.get(session_id, 0)
                    or meta.cot_node_count != actual_cot.get(session_id, 0)):
                report.violations.append(
                    Violation("session-count-mismatch", session_id))
        for session_id in set(actual_dlg) | set(actual_cot):
            if session_id not in self.sessions:
                report.violations.append(
                    Violation("session-count-mismatch", session_id,
                              detail="no session meta"))

    # --- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        sessions = [
            {
                "session_id": m.session_id,
                "title": m.title,
                "source": m.source,
                "dialogue_node_count": m.dialogue_node_count,
                "cot_node_count": m.cot_node_count,
            }
            for m in sorted(self.sessions.values(), key=lambda m: m.session_id)
        ]
        nodes = []
        for node in sorted(self.nodes.values(), key=lambda n: n.id):
            if isinstance(node, DialogueNode):
                nodes.append({
                    "id": node.id,
                    "node_type": "dialogue",
                    "session_id": node.session_id,
                    "turn_index": node.turn_index,
                    "speaker": node.speaker.value,
                    "text": node.text,
                })
            else:
                nodes.append({
                    "id": node.id,
                    "node_type": "cot",
                    "session_id": node.session_id,
                    "kind": node.kind.value,
                    "label": node.label,
                    "text": node.text,
                })
        edges = [
            {"src": e.src, "dst": e.dst, "kind": e.kind.value, "weight": e.weight}
            for e in sorted(self.edges, key=Edge.sort_key)
        ]
        return {
            "schema_version": SCHEMA_VERSION,
            "sessions": sessions,
            "nodes": nodes,
            "edges": edges,
        }

    def serialize(self) -> bytes:
        return canonical_json_bytes(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, payload: dict) -> "CotGraph":
        if not isinstance(payload, dict):
            raise MalformedFile("graph payload is not an object")
        version = payload.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionMismatch(f"expected schema_version {SCHEMA_VERSION!r}, got {version!r}")
        for key in ("sessions", "nodes", "edges"):
            if not isinstance(payload.get(key), list):
                raise MalformedFile(f"missing or non-array {key!r}")
        graph = cls()
        try:
            for raw in payload["sessions"]:
                graph.sessions[raw["session_id"]] = SessionMeta(
                    session_id=raw["session_id"],
                    title=raw.get("title", ""),
                    source=raw.get("source", ""),
                    dialogue_node_count=int(raw["dialogue_node_count"]),
                    cot_node_count=int(raw["cot_node_count"]),
                )
            for raw in payload["nodes"]:
                node: Node
                if raw["node_type"] == "dialogue":
                    node = DialogueNode(
                        id=raw["id"],
                        session_id=raw["session_id"],
                        turn_index=int(raw["turn_index"]),
                        speaker=Speaker(raw["speaker"]),
                        text=raw["text"],
                    )
                elif raw["node_type"] == "cot":
                    node = CotNode(
                        id=raw["id"],
                        session_id=raw["session_id"],
                        kind=CotKind(raw["kind"]),
                        label=raw.get("label", ""),
                        text=raw["text"],
                    )
                else:
                    raise MalformedFile(f"unknown node_type {raw.get('node_type')!r}")
                if node.id in graph.nodes:
                    raise MalformedFile(f"duplicate node id {node.id}")
                graph.nodes[node.id] = node
            for raw in payload["edges"]:
                edge = Edge(src=raw["src"], dst=raw["dst"],
                            kind=EdgeKind(raw["kind"]),
                            weight=float(raw.get("weight", 1.0)))
                for endpoint in (edge.src, edge.dst):
                    if endpoint not in graph.nodes:
                        raise MalformedFile(f"edge references unknown node {endpoint}")
                graph.edges.append(edge)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"bad graph payload: {exc}") from exc
        return graph

    @classmethod
    def deserialize(cls, data: bytes) -> "CotGraph":
        try:
            payload = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedFile(f"not valid UTF-8 JSON: {exc}") from exc
        return cls.from_json_dict(payload)

    # --- comparison ---------------------------------------------------------

    def structurally_equal(self, other: "CotGraph") -> bool:
        if self.nodes != other.nodes:
            return False
        if sorted(self.edges, key=Edge.sort_key) != sorted(other.edges, key=Edge.sort_key):
            return False
        mine = {s: (m.title, m.source, m.dialogue_node_count, m.cot_node_count)
                for s, m in self.sessions.items()}
        theirs = {s: (m.title, m.source, m.dialogue_node_count, m.cot_node_count)
                  for s, m in other.sessions.items()}
        return mine == theirs

    def copy(self) -> "CotGraph":
        dup = CotGraph()
        dup.sessions = {s: replace(m) for s, m in self.sessions.items()}
        dup.nodes = dict(self.nodes)
        dup.edges = list(self.edges)
        return dup
