"""Service configuration: file paths, providers, pipeline knobs.

Configs load from TOML or JSON (picked by extension). stub_mode swaps both
providers for their deterministic offline doubles, which is also the only
mode the test suite runs in; API keys are only ever named by the
environment variable that holds them.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, fields, replace

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 path
    import tomli as tomllib

from .chat import ChatContract, HttpChatClient, StubChat
from .construction import AlignmentConfig
from .embedding import EmbedderContract, HashEmbedder, HttpEmbedder
from .retrieval import RetrievalConfig


@dataclass(frozen=True)
class ChatProviderConfig:
    endpoint: str = ""
    model: str = ""
    api_key_env: str = ""
    temperature: float | None = None


@dataclass(frozen=True)
class EmbedderProviderConfig:
    endpoint: str = ""
    model: str = ""
    api_key_env: str = ""
    dim: int = 384


@dataclass(frozen=True)
class ServiceConfig:
    graph_path: str = "graph.json"
    dialogue_index_path: str = "index.dialogue.json"
    cot_index_path: str = "index.cot.json"
    llm: ChatProviderConfig = ChatProviderConfig()
    embedder: EmbedderProviderConfig = EmbedderProviderConfig()
    retrieval: RetrievalConfig = RetrievalConfig()
    alignment: AlignmentConfig = AlignmentConfig()
    host: str = "127.0.0.1"
    port: int = 8077
    stub_mode: bool = True
    cors_origins: tuple[str, ...] = ("http://localhost:5173",)
    snapshot_path: str = ""
    taxonomy_path: str = ""
    max_concurrency: int = 4

    def __post_init__(self) -> None:
        if not self.stub_mode:
            if not self.llm.endpoint or not self.embedder.endpoint:
                raise ValueError(
                    "non-stub config needs llm.endpoint and embedder.endpoint")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")


def _build_section(cls, section: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ValueError(f"unknown {where} config keys: {unknown}")
    return cls(**section)


def config_from_dict(data: dict) -> ServiceConfig:
    data = dict(data)
    parts = {}
    for key, cls in (("llm", ChatProviderConfig),
                     ("embedder", EmbedderProviderConfig),
                     ("retrieval", RetrievalConfig),
                     ("alignment", AlignmentConfig)):
        section = data.pop(key, None)
        if section is not None:
            if not isinstance(section, dict):
                raise ValueError(f"config section {key!r} must be a table/object")
            parts[key] = _build_section(cls, section, key)
    if "cors_origins" in data:
        data["cors_origins"] = tuple(data["cors_origins"])
    known = {f.name for f in fields(ServiceConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {unknown}")
    return ServiceConfig(**data, **parts)


def load_config(path: str) -> ServiceConfig:
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            return config_from_dict(json.load(fh))
    with open(path, "rb") as fh:
        return config_from_dict(tomllib.load(fh))


def make_chat(config: ServiceConfig, *,
              semaphore: threading.Semaphore | None = None) -> ChatContract:
    if config.stub_mode:
        return StubChat()
    return HttpChatClient(
        config.llm.endpoint, config.llm.model, config.llm.api_key_env,
        temperature=config.llm.temperature, semaphore=semaphore)


def make_embedder(config: ServiceConfig, *,
                  semaphore: threading.Semaphore | None = None) -> EmbedderContract:
    if config.stub_mode:
        return HashEmbedder(dim=config.embedder.dim)
    return HttpEmbedder(
        config.embedder.endpoint, config.embedder.model, config.embedder.dim,
        config.embedder.api_key_env, semaphore=semaphore)


def with_stub_mode(config: ServiceConfig) -> ServiceConfig:
    return replace(config, stub_mode=True)
