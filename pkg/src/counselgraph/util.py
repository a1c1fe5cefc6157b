"""Small shared helpers: canonical JSON, hashing, tokenization, resources."""

from __future__ import annotations

import hashlib
import json
import re
from importlib.resources import files
from typing import Any

_TOKEN = re.compile(r"[a-z0-9]+")


def canonical_json_bytes(obj: Any) -> bytes:
    """Serialize to deterministic, human-readable UTF-8 JSON.

    Keys sorted, 2-space indent, trailing newline. Producing identical bytes
    for identical values is what golden-file tests and the CLI/API parity
    contract rely on.
    """
    return (json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n").encode("utf-8")


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokens; the unit the stub embedder hashes."""
    return _TOKEN.findall(text.lower())


def load_prompt(name: str) -> str:
    """Load a prompt template shipped with the package (no extension)."""
    return (files("counselgraph") / "prompts" / f"{name}.txt").read_text(encoding="utf-8")


def load_packaged_json(relpath: str) -> Any:
    return json.loads((files("counselgraph") / relpath).read_text(encoding="utf-8"))
