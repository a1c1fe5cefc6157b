"""Flat exact cosine top-k index over node texts.

Two instances exist in a running engine: one over dialogue content (per-turn
entries plus one session-level transcript entry per session) and one over
chain-of-thought content. Corpus scale makes a linear scan exact and fast;
there is deliberately no approximate path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .embedding import EmbedderContract, l2_normalize
from .errors import (
    DimensionMismatch,
    DuplicateId,
    EmbedderFailure,
    EmptyText,
    MalformedFile,
    MixedKinds,
    ProviderUnavailable,
    SchemaVersionMismatch,
    ZeroVector,
)
from .graph import COT, DLG, CotGraph, NodeId, session_entry_id, split_node_id
from .util import canonical_json_bytes, sha256_hex

SCHEMA_VERSION = "1"


class IndexKind(str, Enum):
    DIALOGUE = "dialogue"
    COT = "cot"

    @property
    def node_kind(self) -> str:
        return DLG if self is IndexKind.DIALOGUE else COT


@dataclass(frozen=True)
class SearchHit:
    node_id: NodeId
    score: float


@dataclass(frozen=True)
class IndexEntry:
    node_id: NodeId
    vector: np.ndarray  # L2-normalized, float64
    text_hash: str


def _as_vector(values: Sequence[float] | np.ndarray, name: str = "vector") -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-dimensional, got shape {arr.shape}")
    return arr


def cosine_similarity(a: Sequence[float] | np.ndarray,
                      b: Sequence[float] | np.ndarray) -> float:
    """a.b / (|a||b|), in [-1, 1]. Symmetric and scale-invariant."""
    va, vb = _as_vector(a, "a"), _as_vector(b, "b")
    if va.shape[0] != vb.shape[0]:
        raise DimensionMismatch(f"dims differ: {va.shape[0]} vs {vb.shape[0]}")
    norm_a = float(np.linalg.norm(va))
    norm_b = float(np.linalg.norm(vb))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine similarity undefined for a zero vector")
    return float(np.dot(va, vb) / (norm_a * norm_b))


class VectorIndex:
    """Immutable after construction; any number of concurrent searchers."""

    def __init__(self, index_kind: IndexKind, dim: int,
                 entries: Iterable[IndexEntry] = (), model_id: str = ""):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.index_kind = index_kind
        self.dim = dim
        self.model_id = model_id
        self.entries: list[IndexEntry] = []
        seen: set[str] = set()
        for entry in entries:
            vec = _as_vector(entry.vector)
            if vec.shape[0] != dim:
                raise DimensionMismatch(
                    f"entry {entry.node_id} has dim {vec.shape[0]}, index dim {dim}")
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                raise ZeroVector(f"entry {entry.node_id} has a zero vector")
            if abs(norm - 1.0) > 1e-6:
                raise ValueError(
                    f"entry {entry.node_id} is not L2-normalized (|v|={norm})")
            kind = split_node_id(entry.node_id)[1]
            if kind != index_kind.node_kind:
                raise MixedKinds(
                    f"{index_kind.value} index cannot hold node {entry.node_id}")
            if entry.node_id in seen:
                raise DuplicateId(f"duplicate index entry {entry.node_id}")
            seen.add(entry.node_id)
            self.entries.append(IndexEntry(entry.node_id, vec, entry.text_hash))
        if self.entries:
            self._matrix = np.stack([e.vector for e in self.entries])
            self._norms = np.linalg.norm(self._matrix, axis=1)
        else:
            self._matrix = np.empty((0, dim), dtype=np.float64)
            self._norms = np.empty(0, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.entries)

    def search(self, query: Sequence[float] | np.ndarray, k: int) -> list[SearchHit]:
        """Exact top-k by cosine, sorted (score desc, node_id asc)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        q = _as_vector(query, "query")
        if q.shape[0] != self.dim:
            raise DimensionMismatch(f"query dim {q.shape[0]} != index dim {self.dim}")
        q_norm = float(np.linalg.norm(q))
        if q_norm == 0.0:
            raise ZeroVector("cannot search with a zero query vector")
        if not self.entries:
            return []
        # Stored vectors are normalized to ~1 but we divide by the true row
        # norms anyway so scores are exact cosines, matching any independent
        # oracle to float64 rounding.
        scores = (self._matrix @ (q / q_norm)) / self._norms
        order = sorted(range(len(self.entries)),
                       key=lambda i: (-scores[i], self.entries[i].node_id))
        return [SearchHit(self.entries[i].node_id, float(scores[i]))
                for i in order[:k]]

    # --- persistence --------------------------------------------------------

    def to_json_dict(self) -> dict:
        entries = [
            {
                "node_id": e.node_id,
                # float32 precision on the wire; plenty for retrieval and
                # keeps files small.
                "vector": [float(np.float32(x)) for x in e.vector],
                "text_hash": e.text_hash,
            }
            for e in sorted(self.entries, key=lambda e: e.node_id)
        ]
        return {
            "schema_version": SCHEMA_VERSION,
            "index_kind": self.index_kind.value,
            "dim": self.dim,
            "model_id": self.model_id,
            "entries": entries,
        }

    def serialize(self) -> bytes:
        return canonical_json_bytes(self.to_json_dict())

    @classmethod
    def deserialize(cls, data: bytes) -> "VectorIndex":
        try:
            payload = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedFile(f"not valid UTF-8 JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise MalformedFile("index payload is not an object")
        version = payload.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionMismatch(
                f"expected schema_version {SCHEMA_VERSION!r}, got {version!r}")
        try:
            kind = IndexKind(payload["index_kind"])
            dim = int(payload["dim"])
            entries = [
                IndexEntry(node_id=raw["node_id"],
                           vector=np.asarray(raw["vector"], dtype=np.float64),
                           text_hash=raw.get("text_hash", ""))
                for raw in payload["entries"]
            ]
            return cls(kind, dim, entries, model_id=payload.get("model_id", ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"bad index payload: {exc}") from exc


def build_index(nodes: Sequence[tuple[NodeId, str]], kind: IndexKind,
                embedder: EmbedderContract) -> VectorIndex:
    """Embed (node_id, text) pairs into a fresh index.

    Ids must be unique and of the index's node kind; texts non-empty.
    Provider failures (after the client's own retries) surface as
    EmbedderFailure.
    """
    seen: set[str] = set()
    for node_id, text in nodes:
        if node_id in seen:
            raise DuplicateId(f"duplicate node id {node_id}")
        seen.add(node_id)
        if not text.strip():
            raise EmptyText(f"node {node_id} has empty text")
        kind_tag = split_node_id(node_id)[1]
        if kind_tag != kind.node_kind:
            raise MixedKinds(f"node {node_id} cannot enter a {kind.value} index")
    try:
        vectors = embedder.embed_many([text for _, text in nodes])
    except ProviderUnavailable as exc:
        raise EmbedderFailure(f"embedding provider failed: {exc}") from exc
    entries = []
    for (node_id, text), vec in zip(nodes, vectors):
        arr = _as_vector(vec, node_id)
        if arr.shape[0] != embedder.dim:
            raise DimensionMismatch(
                f"embedder returned dim {arr.shape[0]}, expected {embedder.dim}")
        entries.append(IndexEntry(node_id=node_id, vector=l2_normalize(arr),
                                  text_hash=sha256_hex(text)))
    return VectorIndex(kind, embedder.dim, entries, model_id=embedder.model_id)


def dialogue_index_inputs(graph: CotGraph) -> list[tuple[NodeId, str]]:
    """(id, text) pairs for the dialogue index: every turn's own text plus
    one whole-transcript entry per session under the `{sid}:dlg:*` id."""
    pairs = [(node.id, node.text) for node in graph.dialogue_nodes()]
    for session_id in sorted(graph.sessions):
        transcript = graph.render_transcript(session_id)
        if transcript.strip():
            pairs.append((session_entry_id(session_id), transcript))
    return pairs


def cot_index_inputs(graph: CotGraph) -> list[tuple[NodeId, str]]:
    return [(node.id, node.text) for node in graph.cot_nodes()]


def build_dialogue_index(graph: CotGraph,
                         embedder: EmbedderContract) -> VectorIndex:
    return build_index(dialogue_index_inputs(graph), IndexKind.DIALOGUE, embedder)


def build_cot_index(graph: CotGraph, embedder: EmbedderContract) -> VectorIndex:
    return build_index(cot_index_inputs(graph), IndexKind.COT, embedder)
