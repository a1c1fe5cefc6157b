"""Chat-completion providers: contract, test doubles, HTTP client.

Messages are plain ``{"role": ..., "content": ...}`` dicts, matching the
wire format. Callers pass a ``purpose`` hint ("extract-fragments",
"reasoning", "generate-reply", "judge") that real providers ignore and the
offline stub uses to synthesize a plausible deterministic reply.
"""

from __future__ import annotations

import json
import os
import re
import threading
from typing import Protocol, Sequence

import httpx

from .errors import ProviderUnavailable
from .http_retry import post_with_retry

Message = dict[str, str]

PURPOSE_EXTRACT = "extract-fragments"
PURPOSE_REASONING = "reasoning"
PURPOSE_GENERATE = "generate-reply"
PURPOSE_JUDGE = "judge"


class ChatContract(Protocol):
    model_id: str

    def complete(self, messages: Sequence[Message], *, purpose: str = "chat") -> str: ...


class ScriptedChat:
    """Replays canned replies in order; raises when the script runs out
    (unless ``cycle``). The workhorse test double."""

    def __init__(self, replies: Sequence[str], *, cycle: bool = False,
                 model_id: str = "scripted"):
        self.replies = list(replies)
        self.cycle = cycle
        self.model_id = model_id
        self.calls: list[tuple[str, list[Message]]] = []
        self._cursor = 0

    def complete(self, messages: Sequence[Message], *, purpose: str = "chat") -> str:
        self.calls.append((purpose, list(messages)))
        if self._cursor >= len(self.replies):
            if not self.cycle or not self.replies:
                raise ProviderUnavailable(
                    f"scripted chat exhausted after {len(self.replies)} replies "
                    f"(purpose={purpose})")
            self._cursor = 0
        reply = self.replies[self._cursor]
        self._cursor += 1
        return reply


_LABELS_LINE = re.compile(r"^Allowed strategy labels:\s*(.+)$", re.MULTILINE)
_FENCED = re.compile(r"<<<\n(.*?)\n>>>", re.DOTALL)
_SENTENCES = re.compile(r"(?<=[.!?])\s+")
_CLIENT_LINE = re.compile(r"^Client:\s*(.+)$", re.MULTILINE)

DEFAULT_JUDGE_SCORES = {"Flu": 8.0, "Hel": 7.0, "Nat": 7.0, "Com": 7.5}


class StubChat:
    """Offline rule-based stand-in for a chat model.

    Produces valid structured output for every pipeline purpose as a pure
    function of the prompt, so ingestion, retrieval and evaluation all run
    end to end with zero network. It leans on the markers the shipped prompt
    templates emit (the labels line and the <<< >>> fence); editing those
    templates means revisiting this stub.
    """

    def __init__(self, *, judge_scores: dict[str, float] | None = None,
                 model_id: str = "offline-stub-v1"):
        self.model_id = model_id
        self.judge_scores = dict(judge_scores or DEFAULT_JUDGE_SCORES)

    def complete(self, messages: Sequence[Message], *, purpose: str = "chat") -> str:
        text = "\n".join(m.get("content", "") for m in messages)
        if purpose == PURPOSE_EXTRACT:
            return self._extract(text)
        if purpose == PURPOSE_REASONING:
            return self._reasoning(text)
        if purpose == PURPOSE_GENERATE:
            return self._generate(text)
        if purpose == PURPOSE_JUDGE:
            return json.dumps(self.judge_scores)
        return "Okay."

    def _extract(self, prompt: str) -> str:
        labels_match = _LABELS_LINE.search(prompt)
        labels = [l.strip() for l in labels_match.group(1).split(";")] if labels_match else []
        body_match = _FENCED.search(prompt)
        body = body_match.group(1).strip() if body_match else ""
        sentences = [s.strip() for s in _SENTENCES.split(body) if s.strip()]
        fragments = []
        strategy_count = 0
        for i, sentence in enumerate(sentences):
            if i % 2 == 0 and labels:
                kind = "Strategy"
                label = labels[strategy_count % len(labels)]
                strategy_count += 1
            else:
                kind = "Event"
                words = re.findall(r"[A-Za-z0-9']+", sentence)[:3]
                label = " ".join(words) if words else "event"
            fragments.append({
                "kind": kind,
                "label": label,
                "text": sentence,
                "causal_parent": None if i == 0 else i - 1,
            })
        return json.dumps(fragments)

    def _last_client_text(self, prompt: str) -> str:
        lines = _CLIENT_LINE.findall(prompt)
        return lines[-1] if lines else ""

    def _reasoning(self, prompt: str) -> str:
        said = self._last_client_text(prompt) or "very little so far"
        return (f"1. The client's situation: {said}\n"
                f"2. A reflective, open-ended reply fits best; acknowledge "
                f"the feeling before exploring it.")

    def _generate(self, prompt: str) -> str:
        said = self._last_client_text(prompt)
        if not said:
            return "I'm here with you. What feels most important to talk about right now?"
        snippet = said if len(said) <= 60 else said[:57] + "..."
        return (f"It sounds like a lot is sitting with you. When you say "
                f"\"{snippet}\", what feels heaviest about that right now?")


class HttpChatClient:
    """Chat-completions-compatible endpoint client.

    POST {model, messages} -> {choices: [{message: {content}}]} with the
    same bounded-backoff retry policy as the embedder client.
    """

    def __init__(self, endpoint: str, model: str, api_key_env: str = "", *,
                 max_retries: int = 3, backoff: float = 0.5,
                 timeout: float = 60.0, temperature: float | None = None,
                 semaphore: threading.Semaphore | None = None,
                 transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        self.model_id = model
        self.max_retries = max_retries
        self.backoff = backoff
        self.temperature = temperature
        self._semaphore = semaphore
        headers = {}
        api_key = os.environ.get(api_key_env, "") if api_key_env else ""
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(headers=headers, timeout=timeout,
                                    transport=transport)

    def complete(self, messages: Sequence[Message], *, purpose: str = "chat") -> str:
        payload: dict = {"model": self.model_id, "messages": list(messages)}
        if self.temperature is not None:
            payload["temperature"] = self.temperature
        if self._semaphore is not None:
            with self._semaphore:
                data = self._post(payload)
        else:
            data = self._post(payload)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderUnavailable(f"malformed chat response: {exc}") from exc
        if not isinstance(content, str):
            raise ProviderUnavailable("chat response content is not a string")
        return content

    def _post(self, payload: dict) -> dict:
        return post_with_retry(self._client, self.endpoint, payload,
                               max_retries=self.max_retries, backoff=self.backoff)
