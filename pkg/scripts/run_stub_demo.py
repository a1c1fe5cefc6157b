#!/usr/bin/env python3
"""End-to-end offline demo: build a demo corpus, ingest it, build both
indexes, run one copilot turn, and print what the therapist would see.
Everything runs with the stub providers; no network, no keys."""

import pathlib
import sys
import tempfile

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from counselgraph.chat import StubChat
from counselgraph.construction import AlignmentConfig, DEFAULT_TAXONOMY, ingest_corpus
from counselgraph.embedding import HashEmbedder
from counselgraph.graph import Speaker
from counselgraph.index import build_cot_index, build_dialogue_index
from counselgraph.retrieval import ConversationHistory, RetrievalConfig, run_turn

from make_demo_corpus import SESSIONS  # noqa: E402
import json


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        corpus = pathlib.Path(tmp) / "corpus.jsonl"
        with corpus.open("w", encoding="utf-8") as fh:
            for session in SESSIONS:
                fh.write(json.dumps(session, ensure_ascii=False) + "\n")

        embedder = HashEmbedder()
        graph, report = ingest_corpus(str(corpus), DEFAULT_TAXONOMY,
                                      AlignmentConfig(), StubChat(), embedder)
        print(f"ingested {report.sessions_built}/{report.sessions_seen} sessions, "
              f"{len(graph.nodes)} nodes, {len(graph.edges)} edges")

        dialogue_index = build_dialogue_index(graph, embedder)
        cot_index = build_cot_index(graph, embedder)
        print(f"indexes: {len(dialogue_index.entries)} dialogue entries, "
              f"{len(cot_index.entries)} cot entries")

        history = ConversationHistory(turns=(
            (Speaker.CLIENT,
             "Ever since the doors close on the train my chest goes tight "
             "and I am sure everyone is watching me."),
        ))
        result = run_turn(history, graph, dialogue_index, cot_index,
                          StubChat(), embedder, RetrievalConfig())

        print("\ncandidates:")
        for i, cand in enumerate(result.candidates):
            print(f"  [{i}] {cand.text}")
        print("\nsimilar sessions:")
        for session_id, score in result.similar_sessions:
            title = graph.sessions[session_id].title
            print(f"  {session_id} ({title}): {score:.3f}")
        print("\nstrategies:")
        for node_id, score in result.strategies:
            node = graph.node(node_id)
            print(f"  {node_id} [{node.label}]: {score:.3f}")
        print(f"\ntrace subgraph: {len(result.trace.subgraph.nodes)} nodes, "
              f"{len(result.trace.subgraph.edges)} edges")
        print(f"prompt: {len(result.trace.prompt.few_shot_examples)} examples, "
              f"{len(result.trace.prompt.instructions)} instructions")


if __name__ == "__main__":
    main()
