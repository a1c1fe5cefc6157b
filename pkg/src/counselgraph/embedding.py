"""Embedding providers: the contract, an offline deterministic stub, and an
HTTP client for OpenAI-compatible embedding endpoints."""

from __future__ import annotations

import hashlib
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Protocol, Sequence

import httpx
import numpy as np

from .errors import EmptyText, ProviderUnavailable
from .http_retry import post_with_retry
from .util import tokenize


class EmbedderContract(Protocol):
    """Deterministic per (provider, model, text) text-to-vector mapping."""

    dim: int
    model_id: str

    def embed(self, text: str) -> np.ndarray: ...

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]: ...


def l2_normalize(vector: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return vector / norm


def _hash_floats(material: bytes, count: int) -> np.ndarray:
    """`count` floats in [-1, 1) derived from sha256 in counter mode.

    Pure hashlib so the stream is identical on every platform and numpy
    version; golden files depend on that.
    """
    out = np.empty(count, dtype=np.float64)
    written = 0
    block = 0
    while written < count:
        digest = hashlib.sha256(material + block.to_bytes(4, "big")).digest()
        for offset in range(0, 32, 4):
            if written >= count:
                break
            word = int.from_bytes(digest[offset:offset + 4], "big")
            out[written] = word / 2147483648.0 - 1.0
            written += 1
        block += 1
    return out


class HashEmbedder:
    """Offline stub: seeded token hashing, summed and L2-normalized.

    Identical texts map to identical vectors; texts sharing tokens land
    nearer each other than unrelated ones. Fully reproducible, no I/O.
    """

    def __init__(self, dim: int = 384, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self.model_id = f"hash-stub-v1-d{dim}-s{seed}"
        self._token_cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _token_vector(self, token: str) -> np.ndarray:
        with self._lock:
            cached = self._token_cache.get(token)
        if cached is not None:
            return cached
        vec = _hash_floats(f"{self.seed}\x1f{token}".encode("utf-8"), self.dim)
        with self._lock:
            self._token_cache[token] = vec
        return vec

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        tokens = tokenize(text)
        if not tokens:
            # No alphanumeric content: hash the raw text instead.
            raw = _hash_floats(f"{self.seed}\x1fraw\x1f{text}".encode("utf-8"), self.dim)
            return l2_normalize(raw)
        total = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            total += self._token_vector(token)
        if float(np.linalg.norm(total)) == 0.0:  # astronomically unlikely
            total = _hash_floats(f"{self.seed}\x1fraw\x1f{text}".encode("utf-8"), self.dim)
        return l2_normalize(total)

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


class HttpEmbedder:
    """OpenAI-compatible embeddings endpoint client.

    POST {model, input: [texts]} -> {data: [{embedding: [...]}, ...]}.
    Retries transient failures with bounded exponential backoff; batches are
    embedded concurrently under ``max_concurrency`` and reassembled in input
    order.
    """

    def __init__(self, endpoint: str, model: str, dim: int,
                 api_key_env: str = "", *, batch_size: int = 64,
                 max_retries: int = 3, backoff: float = 0.5,
                 max_concurrency: int = 4, timeout: float = 30.0,
                 semaphore: threading.Semaphore | None = None,
                 transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        self.model_id = model
        self.dim = dim
        self.batch_size = batch_size
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_concurrency = max_concurrency
        self._semaphore = semaphore
        headers = {}
        api_key = os.environ.get(api_key_env, "") if api_key_env else ""
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(headers=headers, timeout=timeout,
                                    transport=transport)

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        for t in texts:
            if not t.strip():
                raise EmptyText("cannot embed empty text")
        batches = [list(texts[i:i + self.batch_size])
                   for i in range(0, len(texts), self.batch_size)]
        if not batches:
            return []
        if len(batches) == 1:
            results = [self._embed_batch(batches[0])]
        else:
            with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
                results = list(pool.map(self._embed_batch, batches))
        out: list[np.ndarray] = []
        for chunk in results:
            out.extend(chunk)
        return out

    def _embed_batch(self, batch: list[str]) -> list[np.ndarray]:
        payload = {"model": self.model_id, "input": batch}
        if self._semaphore is not None:
            with self._semaphore:
                data = post_with_retry(self._client, self.endpoint, payload,
                                       max_retries=self.max_retries, backoff=self.backoff)
        else:
            data = post_with_retry(self._client, self.endpoint, payload,
                                   max_retries=self.max_retries, backoff=self.backoff)
        try:
            rows = data["data"]
            vectors = [np.asarray(row["embedding"], dtype=np.float64) for row in rows]
        except (KeyError, TypeError) as exc:
            raise ProviderUnavailable(f"malformed embedding response: {exc}") from exc
        if len(vectors) != len(batch):
            raise ProviderUnavailable(
                f"embedding count mismatch: sent {len(batch)}, got {len(vectors)}")
        return [l2_normalize(v) for v in vectors]
