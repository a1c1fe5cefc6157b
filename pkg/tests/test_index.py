"""Cosine math, exact top-k search, index persistence, and graph builders."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from counselgraph.embedding import HashEmbedder, l2_normalize
from counselgraph.errors import (
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
from counselgraph.index import (
    IndexEntry,
    IndexKind,
    VectorIndex,
    build_cot_index,
    build_dialogue_index,
    build_index,
    cosine_similarity,
    cot_index_inputs,
    dialogue_index_inputs,
)
from counselgraph.util import sha256_hex


def unit(values) -> np.ndarray:
    return l2_normalize(np.asarray(values, dtype=np.float64))


def make_index(vectors: dict[str, np.ndarray],
               kind: IndexKind = IndexKind.COT) -> VectorIndex:
    dim = len(next(iter(vectors.values())))
    entries = [IndexEntry(node_id=nid, vector=unit(vec), text_hash="")
               for nid, vec in vectors.items()]
    return VectorIndex(kind, dim, entries)


def oracle_search(index: VectorIndex, query: np.ndarray, k: int):
    """Independent linear scan: raw cosine per entry, then full sort."""
    q = np.asarray(query, dtype=np.float64)
    scored = []
    for entry in index.entries:
        num = float(np.dot(entry.vector, q))
        den = float(np.linalg.norm(entry.vector)) * float(np.linalg.norm(q))
        scored.append((num / den, entry.node_id))
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return scored[:k]


# --- cosine similarity ------------------------------------------------------

def test_cosine_reference_values():
    assert cosine_similarity([1, 0], [0, 1]) == pytest.approx(0.0)
    assert cosine_similarity([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [-1, 0]) == pytest.approx(-1.0)
    assert cosine_similarity([3, 0], [1, 1]) == pytest.approx(
        1 / np.sqrt(2), abs=1e-12)


def test_cosine_rejects_bad_inputs():
    with pytest.raises(DimensionMismatch):
        cosine_similarity([1, 0], [1, 0, 0])
    with pytest.raises(ZeroVector):
        cosine_similarity([0, 0], [1, 0])
    with pytest.raises(ZeroVector):
        cosine_similarity([1, 0], [0, 0])
    with pytest.raises(DimensionMismatch):
        cosine_similarity([[1, 0], [0, 1]], [1, 0])


_FINITE = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def nonzero_vectors(draw, dim: int = 8):
    vec = draw(arrays(np.float64, dim, elements=_FINITE))
    if float(np.linalg.norm(vec)) < 1e-6:
        vec = vec + 1.0
    return vec


@settings(max_examples=80, deadline=None)
@given(a=nonzero_vectors(), b=nonzero_vectors())
def test_cosine_symmetry(a, b):
    assert cosine_similarity(a, b) == pytest.approx(
        cosine_similarity(b, a), abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(a=nonzero_vectors(), b=nonzero_vectors(),
       scale=st.floats(1e-3, 1e3, allow_nan=False))
def test_cosine_positive_scale_invariance(a, b, scale):
    assert cosine_similarity(a * scale, b) == pytest.approx(
        cosine_similarity(a, b), abs=1e-9)


@settings(max_examples=80, deadline=None)
@given(a=nonzero_vectors())
def test_cosine_self_similarity(a):
    assert cosine_similarity(a, a) == pytest.approx(1.0, abs=1e-9)


# --- index construction -----------------------------------------------------

def test_index_rejects_bad_dim():
    with pytest.raises(ValueError):
        VectorIndex(IndexKind.COT, 0)


def test_index_rejects_entry_dim_mismatch():
    entry = IndexEntry("s:cot:000", unit([1, 0, 0]), "")
    with pytest.raises(DimensionMismatch):
        VectorIndex(IndexKind.COT, 4, [entry])


def test_index_rejects_zero_and_unnormalized_vectors():
    with pytest.raises(ZeroVector):
        VectorIndex(IndexKind.COT, 3,
                    [IndexEntry("s:cot:000", np.zeros(3), "")])
    with pytest.raises(ValueError):
        VectorIndex(IndexKind.COT, 3,
                    [IndexEntry("s:cot:000", np.array([2.0, 0, 0]), "")])


def test_index_rejects_wrong_node_kind():
    entry = IndexEntry("s:dlg:000", unit([1, 0, 0]), "")
    with pytest.raises(MixedKinds):
        VectorIndex(IndexKind.COT, 3, [entry])


def test_dialogue_index_accepts_session_entries():
    entry = IndexEntry("s:dlg:*", unit([1, 0, 0]), "")
    idx = VectorIndex(IndexKind.DIALOGUE, 3, [entry])
    assert len(idx) == 1


def test_index_rejects_duplicate_entries():
    entry = IndexEntry("s:cot:000", unit([1, 0, 0]), "")
    with pytest.raises(DuplicateId):
        VectorIndex(IndexKind.COT, 3, [entry, entry])


# --- search -----------------------------------------------------------------

def test_search_orders_by_score_then_id():
    idx = make_index({
        "s:cot:002": unit([1.0, 0.1]),
        "s:cot:000": unit([0.0, 1.0]),
        "s:cot:001": unit([1.0, 0.1]),  # exact tie with 002
    })
    hits = idx.search(unit([1.0, 0.1]), k=3)
    assert [h.node_id for h in hits] == ["s:cot:001", "s:cot:002", "s:cot:000"]
    assert hits[0].score == pytest.approx(1.0, abs=1e-12)
    assert hits[0].score == hits[1].score


def test_search_k_larger_than_index():
    idx = make_index({"s:cot:000": unit([1.0, 0.0])})
    assert len(idx.search([0.5, 0.5], k=10)) == 1


def test_search_empty_index():
    idx = VectorIndex(IndexKind.COT, 3)
    assert idx.search([1, 0, 0], k=5) == []


def test_search_argument_errors():
    idx = make_index({"s:cot:000": unit([1.0, 0.0])})
    with pytest.raises(ValueError):
        idx.search([1, 0], k=0)
    with pytest.raises(DimensionMismatch):
        idx.search([1, 0, 0], k=1)
    with pytest.raises(ZeroVector):
        idx.search([0, 0], k=1)


def test_search_scores_are_exact_cosines():
    rng = np.random.default_rng(7)
    idx = make_index({f"s:cot:{i:03d}": rng.normal(size=16)
                      for i in range(20)})
    query = rng.normal(size=16)
    hits = idx.search(query, k=5)
    for hit in hits:
        entry = next(e for e in idx.entries if e.node_id == hit.node_id)
        assert hit.score == pytest.approx(
            cosine_similarity(entry.vector, query), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), k=st.sampled_from([1, 3, 7]))
def test_search_matches_linear_scan_oracle(seed, k):
    rng = np.random.default_rng(seed)
    idx = make_index({f"s:cot:{i:03d}": rng.normal(size=12)
                      for i in range(15)})
    query = rng.normal(size=12)
    hits = idx.search(query, k=k)
    expected = oracle_search(idx, query, k)
    assert [h.node_id for h in hits] == [nid for _, nid in expected]
    for hit, (score, _) in zip(hits, expected):
        assert hit.score == pytest.approx(score, abs=1e-9)


# --- persistence ------------------------------------------------------------

def test_index_round_trip_preserves_search():
    rng = np.random.default_rng(3)
    idx = make_index({f"s:cot:{i:03d}": rng.normal(size=8) for i in range(6)})
    back = VectorIndex.deserialize(idx.serialize())
    assert back.index_kind == idx.index_kind
    assert back.dim == idx.dim
    assert len(back) == len(idx)
    query = rng.normal(size=8)
    # wire format is float32, so ids must agree and scores be f32-close
    before = idx.search(query, k=6)
    after = back.search(query, k=6)
    assert [h.node_id for h in before] == [h.node_id for h in after]
    for a, b in zip(before, after):
        assert a.score == pytest.approx(b.score, abs=1e-5)


def test_index_serialization_is_byte_stable():
    rng = np.random.default_rng(4)
    idx = make_index({f"s:cot:{i:03d}": rng.normal(size=8) for i in range(4)})
    data = idx.serialize()
    assert data == VectorIndex.deserialize(data).serialize()
    assert data.endswith(b"\n")


def test_index_deserialize_rejects_bad_payloads():
    with pytest.raises(MalformedFile):
        VectorIndex.deserialize(b"[]")
    with pytest.raises(MalformedFile):
        VectorIndex.deserialize(b"{ nope")
    idx = make_index({"s:cot:000": unit([1.0, 0.0])})
    payload = idx.to_json_dict()
    payload["schema_version"] = "0"
    import json
    with pytest.raises(SchemaVersionMismatch):
        VectorIndex.deserialize(json.dumps(payload).encode())
    payload = idx.to_json_dict()
    del payload["entries"]
    with pytest.raises(MalformedFile):
        VectorIndex.deserialize(json.dumps(payload).encode())
    payload = idx.to_json_dict()
    payload["index_kind"] = "images"
    with pytest.raises(MalformedFile):
        VectorIndex.deserialize(json.dumps(payload).encode())


# --- build_index ------------------------------------------------------------

class FailingEmbedder:
    dim = 4
    model_id = "failing"

    def embed(self, text):
        raise ProviderUnavailable("down")

    def embed_many(self, texts):
        raise ProviderUnavailable("down")


class WrongDimEmbedder:
    dim = 4
    model_id = "wrong-dim"

    def embed(self, text):
        return np.ones(3)

    def embed_many(self, texts):
        return [np.ones(3) for _ in texts]


def test_build_index_embeds_and_hashes(embedder):
    pairs = [("s:cot:000", "first fragment"), ("s:cot:001", "second fragment")]
    idx = build_index(pairs, IndexKind.COT, embedder)
    assert len(idx) == 2
    assert idx.model_id == embedder.model_id
    entry = next(e for e in idx.entries if e.node_id == "s:cot:000")
    assert entry.text_hash == sha256_hex("first fragment")
    assert np.allclose(entry.vector, embedder.embed("first fragment"))


def test_build_index_input_validation(embedder):
    with pytest.raises(DuplicateId):
        build_index([("s:cot:000", "a"), ("s:cot:000", "b")],
                    IndexKind.COT, embedder)
    with pytest.raises(EmptyText):
        build_index([("s:cot:000", "  ")], IndexKind.COT, embedder)
    with pytest.raises(MixedKinds):
        build_index([("s:dlg:000", "a turn")], IndexKind.COT, embedder)


def test_build_index_wraps_provider_failure():
    with pytest.raises(EmbedderFailure):
        build_index([("s:cot:000", "text")], IndexKind.COT, FailingEmbedder())


def test_build_index_checks_embedder_dim():
    with pytest.raises(DimensionMismatch):
        build_index([("s:cot:000", "text")], IndexKind.COT, WrongDimEmbedder())


# --- graph-backed builders --------------------------------------------------

def test_dialogue_inputs_cover_turns_and_sessions(fixture_graph):
    pairs = dict(dialogue_index_inputs(fixture_graph))
    for node in fixture_graph.dialogue_nodes():
        assert pairs[node.id] == node.text
    for session_id in fixture_graph.sessions:
        entry = pairs[f"{session_id}:dlg:*"]
        assert entry == fixture_graph.render_transcript(session_id)


def test_cot_inputs_cover_fragments(fixture_graph):
    pairs = dict(cot_index_inputs(fixture_graph))
    cots = fixture_graph.cot_nodes()
    assert len(pairs) == len(cots)
    for node in cots:
        assert pairs[node.id] == node.text


def test_graph_backed_indexes_have_expected_sizes(fixture_graph, embedder,
                                                  dialogue_index, cot_index):
    n_turns = len(fixture_graph.dialogue_nodes())
    n_sessions = len(fixture_graph.sessions)
    assert len(dialogue_index) == n_turns + n_sessions
    assert len(cot_index) == len(fixture_graph.cot_nodes())
    assert dialogue_index.index_kind is IndexKind.DIALOGUE
    assert cot_index.index_kind is IndexKind.COT
    assert dialogue_index.dim == embedder.dim


def test_session_entry_embeds_whole_transcript(fixture_graph, embedder,
                                               dialogue_index):
    sid = next(iter(sorted(fixture_graph.sessions)))
    transcript = fixture_graph.render_transcript(sid)
    hits = dialogue_index.search(embedder.embed(transcript), k=1)
    assert hits[0].node_id == f"{sid}:dlg:*"
    assert hits[0].score == pytest.approx(1.0, abs=1e-5)
