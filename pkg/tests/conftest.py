"""Shared fixtures. The suite runs fully offline: an autouse guard turns
any attempted socket connection into an immediate failure, so hermeticity
is enforced on every test, not just asserted in one."""

from __future__ import annotations

import pathlib
import socket
import time

import pytest

from counselgraph.chat import StubChat
from counselgraph.construction import (
    DEFAULT_TAXONOMY,
    AlignmentConfig,
    RawSession,
    ingest_corpus,
    read_corpus,
)
from counselgraph.embedding import HashEmbedder
from counselgraph.index import build_cot_index, build_dialogue_index

DATA_DIR = pathlib.Path(__file__).parent / "data"
GOLDEN_DIR = DATA_DIR / "golden"
CORPUS_PATH = DATA_DIR / "corpus.jsonl"

# The client query the golden CopilotResult is pinned to (see
# scripts/make_goldens.py).
GOLDEN_CLIENT_TEXT = "I keep replaying my mistakes at night and cannot sleep."

SESSION_START = time.perf_counter()


def pytest_collection_modifyitems(config, items):
    # the wall-clock budget check must observe the rest of the run; the
    # sort is stable so everything else keeps collection order
    items.sort(key=lambda item: item.name == "test_suite_runtime_budget")


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    def deny(self, *args, **kwargs):
        raise AssertionError(
            f"test attempted a network connection: {args!r}")

    monkeypatch.setattr(socket.socket, "connect", deny)
    monkeypatch.setattr(socket.socket, "connect_ex", deny)
    monkeypatch.setattr(socket, "create_connection", deny)


@pytest.fixture(scope="session")
def embedder():
    return HashEmbedder()


@pytest.fixture(scope="session")
def corpus_sessions() -> list[RawSession]:
    return read_corpus(str(CORPUS_PATH))


@pytest.fixture(scope="session")
def fixture_graph(embedder):
    graph, report = ingest_corpus(str(CORPUS_PATH), DEFAULT_TAXONOMY,
                                  AlignmentConfig(), StubChat(), embedder)
    assert not report.failures
    return graph


@pytest.fixture(scope="session")
def dialogue_index(fixture_graph, embedder):
    return build_dialogue_index(fixture_graph, embedder)


@pytest.fixture(scope="session")
def cot_index(fixture_graph, embedder):
    return build_cot_index(fixture_graph, embedder)
