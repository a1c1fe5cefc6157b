#!/usr/bin/env python3
"""Regenerate the golden files under tests/data/golden from the checked-in
fixture corpus. Run after any deliberate change to the pipeline's output
format, then review the diff before committing."""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from counselgraph.chat import StubChat
from counselgraph.construction import AlignmentConfig, DEFAULT_TAXONOMY, ingest_corpus
from counselgraph.embedding import HashEmbedder
from counselgraph.graph import CotGraph, Speaker
from counselgraph.index import VectorIndex, build_cot_index, build_dialogue_index
from counselgraph.retrieval import ConversationHistory, RetrievalConfig, run_turn
from counselgraph.util import canonical_json_bytes

DATA = pathlib.Path(__file__).resolve().parents[1] / "tests" / "data"
GOLDEN = DATA / "golden"

# The query every golden CopilotResult is pinned to.
GOLDEN_CLIENT_TEXT = "I keep replaying my mistakes at night and cannot sleep."


def main() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    embedder = HashEmbedder()
    graph, report = ingest_corpus(
        str(DATA / "corpus.jsonl"), DEFAULT_TAXONOMY, AlignmentConfig(),
        StubChat(), embedder)
    assert not report.failures, report.failures
    (GOLDEN / "graph.json").write_bytes(graph.serialize())

    dialogue_index = build_dialogue_index(graph, embedder)
    cot_index = build_cot_index(graph, embedder)
    (GOLDEN / "index.dialogue.json").write_bytes(dialogue_index.serialize())
    (GOLDEN / "index.cot.json").write_bytes(cot_index.serialize())

    # Reload everything from disk so the golden result reflects the wire
    # precision (float32 vectors) that CLI and service runs actually see.
    graph = CotGraph.deserialize((GOLDEN / "graph.json").read_bytes())
    dialogue_index = VectorIndex.deserialize(
        (GOLDEN / "index.dialogue.json").read_bytes())
    cot_index = VectorIndex.deserialize((GOLDEN / "index.cot.json").read_bytes())

    history = ConversationHistory(turns=((Speaker.CLIENT, GOLDEN_CLIENT_TEXT),))
    result = run_turn(history, graph, dialogue_index, cot_index, StubChat(),
                      embedder, RetrievalConfig())
    (GOLDEN / "copilot_result.json").write_bytes(
        canonical_json_bytes(result.to_json_dict()))
    for path in sorted(GOLDEN.iterdir()):
        print(f"{path.name}: {path.stat().st_size} bytes")


if __name__ == "__main__":
    main()
