"""Chat test doubles and the HTTP chat-completions client."""

from __future__ import annotations

import json

import httpx
import pytest

import counselgraph.http_retry as http_retry
from counselgraph.chat import (
    DEFAULT_JUDGE_SCORES,
    PURPOSE_EXTRACT,
    PURPOSE_GENERATE,
    PURPOSE_JUDGE,
    PURPOSE_REASONING,
    HttpChatClient,
    ScriptedChat,
    StubChat,
)
from counselgraph.errors import ProviderUnavailable, RateLimited
from counselgraph.util import load_prompt


def user(content: str):
    return [{"role": "user", "content": content}]


# --- scripted chat ----------------------------------------------------------

def test_scripted_chat_plays_in_order():
    chat = ScriptedChat(["one", "two"])
    assert chat.complete(user("a")) == "one"
    assert chat.complete(user("b"), purpose="judge") == "two"
    assert [purpose for purpose, _ in chat.calls] == ["chat", "judge"]
    assert chat.calls[0][1] == [{"role": "user", "content": "a"}]


def test_scripted_chat_exhaustion():
    chat = ScriptedChat(["only"])
    chat.complete(user("a"))
    with pytest.raises(ProviderUnavailable):
        chat.complete(user("b"))


def test_scripted_chat_cycles_when_asked():
    chat = ScriptedChat(["x", "y"], cycle=True)
    replies = [chat.complete(user(str(i))) for i in range(5)]
    assert replies == ["x", "y", "x", "y", "x"]


def test_scripted_chat_empty_script_always_raises():
    chat = ScriptedChat([], cycle=True)
    with pytest.raises(ProviderUnavailable):
        chat.complete(user("a"))


# --- stub chat: extraction --------------------------------------------------

def extraction_prompt(explanation: str, labels: str = "Question; Reflection of Feelings") -> str:
    return load_prompt("extraction").format(labels=labels,
                                            explanation=explanation)


def test_stub_extraction_yields_valid_fragments():
    explanation = ("The counselor opens with a question. "
                   "The client describes sleepless nights. "
                   "The counselor reflects the exhaustion back.")
    reply = StubChat().complete(user(extraction_prompt(explanation)),
                                purpose=PURPOSE_EXTRACT)
    fragments = json.loads(reply)
    assert [f["kind"] for f in fragments] == ["Strategy", "Event", "Strategy"]
    assert [f["causal_parent"] for f in fragments] == [None, 0, 1]
    # strategies walk the allowed labels round-robin
    assert fragments[0]["label"] == "Question"
    assert fragments[2]["label"] == "Reflection of Feelings"
    # events take their first words as the label
    assert fragments[1]["label"] == "The client describes"
    assert fragments[1]["text"] == "The client describes sleepless nights."


def test_stub_extraction_covers_every_sentence():
    explanation = "First step here. Second one follows! Third closes?"
    reply = StubChat().complete(user(extraction_prompt(explanation)),
                                purpose=PURPOSE_EXTRACT)
    fragments = json.loads(reply)
    assert [f["text"] for f in fragments] == [
        "First step here.", "Second one follows!", "Third closes?"]


def test_stub_extraction_without_markers_is_empty():
    reply = StubChat().complete(user("no markers at all"),
                                purpose=PURPOSE_EXTRACT)
    assert json.loads(reply) == []


# --- stub chat: other purposes ----------------------------------------------

def test_stub_reasoning_reads_last_client_line():
    prompt = ("Client: I lost my job.\n"
              "Therapist: That sounds hard.\n"
              "Client: And now I cannot sleep.")
    reply = StubChat().complete(user(prompt), purpose=PURPOSE_REASONING)
    steps = reply.splitlines()
    assert steps[0].startswith("1.")
    assert "And now I cannot sleep." in steps[0]
    assert steps[1].startswith("2.")


def test_stub_generation_quotes_the_client():
    prompt = "Client: Everything feels heavy lately."
    reply = StubChat().complete(user(prompt), purpose=PURPOSE_GENERATE)
    assert '"Everything feels heavy lately."' in reply


def test_stub_generation_truncates_long_quotes():
    text = "x" * 100
    reply = StubChat().complete(user(f"Client: {text}"),
                                purpose=PURPOSE_GENERATE)
    assert '"' + "x" * 57 + '..."' in reply
    assert "x" * 61 not in reply


def test_stub_generation_without_history():
    reply = StubChat().complete(user("System preamble only."),
                                purpose=PURPOSE_GENERATE)
    assert reply.strip()


def test_stub_judge_returns_configured_scores():
    assert json.loads(StubChat().complete(user("x"), purpose=PURPOSE_JUDGE)) \
        == DEFAULT_JUDGE_SCORES
    custom = {"Flu": 9.5, "Hel": 1.0, "Nat": 2.0, "Com": 3.0}
    chat = StubChat(judge_scores=custom)
    assert json.loads(chat.complete(user("x"), purpose=PURPOSE_JUDGE)) == custom


def test_stub_fallback_purpose():
    assert StubChat().complete(user("hi")) == "Okay."


def test_stub_is_deterministic():
    prompt = user(extraction_prompt("A single sentence."))
    assert (StubChat().complete(prompt, purpose=PURPOSE_EXTRACT)
            == StubChat().complete(prompt, purpose=PURPOSE_EXTRACT))


# --- HTTP chat client -------------------------------------------------------

def chat_response(content: str) -> httpx.Response:
    return httpx.Response(200, json={
        "choices": [{"message": {"role": "assistant", "content": content}}]})


def test_http_chat_round_trip():
    seen = {}

    def handler(request):
        seen["payload"] = json.loads(request.content)
        return chat_response("hello back")

    chat = HttpChatClient("http://provider/v1/chat/completions", "test-model",
                          transport=httpx.MockTransport(handler))
    reply = chat.complete([{"role": "system", "content": "be brief"},
                           {"role": "user", "content": "hello"}])
    assert reply == "hello back"
    assert seen["payload"]["model"] == "test-model"
    assert seen["payload"]["messages"][1]["content"] == "hello"
    assert "temperature" not in seen["payload"]


def test_http_chat_sends_temperature_when_set():
    seen = {}

    def handler(request):
        seen["payload"] = json.loads(request.content)
        return chat_response("ok")

    chat = HttpChatClient("http://provider/v1/chat/completions", "m",
                          temperature=0.2,
                          transport=httpx.MockTransport(handler))
    chat.complete(user("hi"))
    assert seen["payload"]["temperature"] == 0.2


def test_http_chat_sends_bearer_token(monkeypatch):
    monkeypatch.setenv("CHAT_KEY", "sk-open")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        return chat_response("ok")

    chat = HttpChatClient("http://provider/v1/chat/completions", "m",
                          api_key_env="CHAT_KEY",
                          transport=httpx.MockTransport(handler))
    chat.complete(user("hi"))
    assert seen["auth"] == "Bearer sk-open"


@pytest.mark.parametrize("body", [
    {"choices": []},
    {"choices": [{"message": {}}]},
    {"nope": True},
    {"choices": [{"message": {"content": 42}}]},
])
def test_http_chat_malformed_responses(body):
    chat = HttpChatClient("http://provider/v1/chat/completions", "m",
                          max_retries=0,
                          transport=httpx.MockTransport(
                              lambda request: httpx.Response(200, json=body)))
    with pytest.raises(ProviderUnavailable):
        chat.complete(user("hi"))


def test_http_chat_retries_then_succeeds(monkeypatch):
    sleeps = []
    monkeypatch.setattr(http_retry.time, "sleep", sleeps.append)
    attempts = []

    def handler(request):
        attempts.append(1)
        if len(attempts) == 1:
            return httpx.Response(500)
        return chat_response("recovered")

    chat = HttpChatClient("http://provider/v1/chat/completions", "m",
                          max_retries=2, backoff=0.25,
                          transport=httpx.MockTransport(handler))
    assert chat.complete(user("hi")) == "recovered"
    assert sleeps == [0.25]


def test_http_chat_rate_limited_after_retries(monkeypatch):
    monkeypatch.setattr(http_retry.time, "sleep", lambda s: None)
    chat = HttpChatClient("http://provider/v1/chat/completions", "m",
                          max_retries=1,
                          transport=httpx.MockTransport(
                              lambda request: httpx.Response(429)))
    with pytest.raises(RateLimited):
        chat.complete(user("hi"))


def test_http_chat_connection_errors_retry_then_fail(monkeypatch):
    sleeps = []
    monkeypatch.setattr(http_retry.time, "sleep", sleeps.append)

    def handler(request):
        raise httpx.ConnectError("refused")

    chat = HttpChatClient("http://provider/v1/chat/completions", "m",
                          max_retries=2, backoff=1.0,
                          transport=httpx.MockTransport(handler))
    with pytest.raises(ProviderUnavailable):
        chat.complete(user("hi"))
    assert sleeps == [1.0, 2.0]


def test_http_chat_non_json_success_body():
    chat = HttpChatClient("http://provider/v1/chat/completions", "m",
                          max_retries=0,
                          transport=httpx.MockTransport(
                              lambda request: httpx.Response(200, text="<html>")))
    with pytest.raises(ProviderUnavailable):
        chat.complete(user("hi"))
