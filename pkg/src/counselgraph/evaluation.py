"""Judge-model evaluation of multi-turn dialogues.

Each candidate engine configuration is rolled out against seed dialogues
(the seed's client turns are replayed verbatim; the engine supplies the
therapist turns), the resulting transcript is scored by a judge model on
four 0-10 metrics, and per-model means land in a comparison table.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .chat import PURPOSE_JUDGE, ChatContract, Message
from .embedding import EmbedderContract
from .errors import (
    CounselGraphError,
    EmptyInput,
    JudgeParseError,
    TooFewTurns,
)
from .graph import CotGraph, Speaker
from .index import VectorIndex
from .retrieval import ConversationHistory, RetrievalConfig, run_turn
from .util import load_prompt

METRIC_KEYS = ("Flu", "Hel", "Nat", "Com")


@dataclass(frozen=True)
class JudgeMetric:
    key: str
    name: str
    definition: str


@dataclass(frozen=True)
class JudgeRubric:
    """The four scoring dimensions plus the prompt that requests them.

    The template gets the transcript via a ``{dialogue}`` slot; metric
    definitions are editable text, not code.
    """

    metrics: tuple[JudgeMetric, ...]
    judge_prompt_template: str

    def __post_init__(self) -> None:
        keys = tuple(m.key for m in self.metrics)
        if sorted(keys) != sorted(METRIC_KEYS):
            raise ValueError(
                f"rubric must define exactly the metrics {METRIC_KEYS}, got {keys}")
        if "{dialogue}" not in self.judge_prompt_template:
            raise ValueError("judge prompt template needs a {dialogue} slot")


def default_rubric() -> JudgeRubric:
    return JudgeRubric(
        metrics=(
            JudgeMetric("Flu", "Fluency",
                        "the counselor's language is well-formed and readable"),
            JudgeMetric("Hel", "Helpfulness",
                        "the responses move the client toward understanding or relief"),
            JudgeMetric("Nat", "Naturalness",
                        "the exchange reads like a real conversation"),
            JudgeMetric("Com", "Comforting",
                        "the counselor conveys warmth and emotional support"),
        ),
        judge_prompt_template=load_prompt("judge"),
    )


def load_rubric(path: str) -> JudgeRubric:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    metrics = tuple(
        JudgeMetric(m["key"], m.get("name", m["key"]), m.get("definition", ""))
        for m in data["metrics"])
    return JudgeRubric(metrics=metrics,
                       judge_prompt_template=data["judge_prompt_template"])


@dataclass(frozen=True)
class DialogueScore:
    dialogue_id: str
    model_id: str
    scores: dict[str, float]
    judge_raw: str

    def __post_init__(self) -> None:
        if sorted(self.scores) != sorted(METRIC_KEYS):
            raise ValueError(
                f"scores must carry exactly {METRIC_KEYS}, got {sorted(self.scores)}")
        for key, value in self.scores.items():
            if not 0.0 <= value <= 10.0:
                raise ValueError(f"score {key}={value} outside [0, 10]")

    def to_json_dict(self) -> dict:
        return {"dialogue_id": self.dialogue_id, "model_id": self.model_id,
                "scores": {k: self.scores[k] for k in METRIC_KEYS},
                "judge_raw": self.judge_raw}


_JSON_FENCE = re.compile(r"^```[A-Za-z]*\n(.*)\n```$", re.DOTALL)


def _parse_judge_scores(reply: str) -> dict[str, float]:
    stripped = reply.strip()
    match = _JSON_FENCE.match(stripped)
    if match:
        stripped = match.group(1)
    try:
        data = json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise ValueError(f"reply is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError("reply must be a JSON object")
    scores = {}
    for key in METRIC_KEYS:
        if key not in data:
            raise ValueError(f"missing metric {key!r}")
        value = data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"metric {key!r} is not a number")
        scores[key] = float(value)
    return scores


def judge_dialogue(dialogue: ConversationHistory, rubric: JudgeRubric,
                   judge: ChatContract, *, dialogue_id: str = "",
                   model_id: str = "") -> DialogueScore:
    """Score one transcript. Malformed judge output gets a single
    validation-driven reprompt; out-of-range values clamp to [0, 10] with a
    warning appended to the stored raw reply."""
    if len(dialogue) < 2:
        raise TooFewTurns(
            f"judging needs at least 2 turns, got {len(dialogue)}")
    prompt = rubric.judge_prompt_template.format(dialogue=dialogue.render())
    messages: list[Message] = [{"role": "user", "content": prompt}]
    raw = judge.complete(messages, purpose=PURPOSE_JUDGE)
    try:
        scores = _parse_judge_scores(raw)
    except ValueError as first_error:
        retry: list[Message] = [
            *messages,
            {"role": "assistant", "content": raw},
            {"role": "user", "content":
                f"That output failed validation: {first_error}. Reply again "
                f"with ONLY the JSON object of the four scores."},
        ]
        raw = judge.complete(retry, purpose=PURPOSE_JUDGE)
        try:
            scores = _parse_judge_scores(raw)
        except ValueError as exc:
            raise JudgeParseError(
                f"judge output failed validation twice: {exc}") from exc
    warnings = []
    for key, value in scores.items():
        clamped = max(0.0, min(10.0, value))
        if clamped != value:
            warnings.append(f"[warning: {key}={value} clamped to {clamped}]")
            scores[key] = clamped
    if warnings:
        raw = raw + "\n" + "\n".join(warnings)
    return DialogueScore(dialogue_id=dialogue_id, model_id=model_id,
                         scores=scores, judge_raw=raw)


@dataclass(frozen=True)
class EvalRow:
    model_id: str
    n: int
    means: dict[str, float]

    def to_json_dict(self) -> dict:
        return {"model_id": self.model_id, "n": self.n,
                "means": {k: self.means[k] for k in METRIC_KEYS}}


@dataclass(frozen=True)
class EvalFailure:
    dialogue_id: str
    model_id: str
    stage: str
    code: str
    message: str

    def to_json_dict(self) -> dict:
        return {"dialogue_id": self.dialogue_id, "model_id": self.model_id,
                "stage": self.stage, "code": self.code, "message": self.message}


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]
    per_dialogue: tuple[DialogueScore, ...]
    failures: tuple[EvalFailure, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "rows": [r.to_json_dict() for r in self.rows],
            "per_dialogue": [s.to_json_dict() for s in self.per_dialogue],
            "failures": [f.to_json_dict() for f in self.failures],
        }

    def render_text(self) -> str:
        """Fixed-width comparison table, one decimal per cell."""
        label_width = max([len("Model")] + [len(r.model_id) for r in self.rows])
        header = ("Model".ljust(label_width)
                  + "".join(f"  {k + '.':>5}" for k in METRIC_KEYS)
                  + f"  {'n':>4}")
        lines = [header, "-" * len(header)]
        for row in self.rows:
            cells = "".join(f"  {row.means[k]:>5.1f}" for k in METRIC_KEYS)
            lines.append(row.model_id.ljust(label_width) + cells
                         + f"  {row.n:>4}")
        return "\n".join(lines)


def aggregate(scores: list[DialogueScore]) -> EvalReport:
    """Arithmetic means per model, rows sorted by model id."""
    if not scores:
        raise EmptyInput("no dialogue scores to aggregate")
    by_model: dict[str, list[DialogueScore]] = {}
    for score in scores:
        by_model.setdefault(score.model_id, []).append(score)
    rows = []
    for model_id in sorted(by_model):
        group = by_model[model_id]
        means = {key: sum(s.scores[key] for s in group) / len(group)
                 for key in METRIC_KEYS}
        rows.append(EvalRow(model_id=model_id, n=len(group), means=means))
    return EvalReport(rows=tuple(rows), per_dialogue=tuple(scores))


@dataclass(frozen=True)
class EvalSeed:
    """One ground-truth dialogue whose client turns drive a rollout."""

    dialogue_id: str
    history: ConversationHistory

    def client_texts(self) -> list[str]:
        return [text for speaker, text in self.history.turns
                if speaker is Speaker.CLIENT]


def seeds_from_graph(graph: CotGraph) -> list[EvalSeed]:
    seeds = []
    for session_id in sorted(graph.sessions):
        turns = tuple((node.speaker, node.text)
                      for node in graph.dialogue_nodes(session_id))
        if turns:
            seeds.append(EvalSeed(dialogue_id=session_id,
                                  history=ConversationHistory(turns=turns)))
    return seeds


@dataclass(frozen=True)
class EvalModelSpec:
    """Everything one comparison row needs: an engine configuration plus
    the resources run_turn consumes."""

    model_id: str
    llm: ChatContract
    embedder: EmbedderContract
    graph: CotGraph
    dialogue_index: VectorIndex
    cot_index: VectorIndex
    cfg: RetrievalConfig = RetrievalConfig()
    label: str = ""

    @property
    def row_label(self) -> str:
        """Row naming: the variant with only dialogue retrieval gets a
        `-dialog` suffix, only strategy retrieval `-cot`, and a config with
        both stages off is the bare (retrieval-free) base model."""
        if self.label:
            return self.label
        if self.cfg.disable_cot_stage and self.cfg.disable_dialogue_stage:
            return self.model_id
        if self.cfg.disable_cot_stage:
            return f"{self.model_id}-dialog"
        if self.cfg.disable_dialogue_stage:
            return f"{self.model_id}-cot"
        return self.model_id


def rollout_dialogue(seed: EvalSeed, spec: EvalModelSpec, *,
                     rollout_turns: int = 3) -> ConversationHistory:
    """Replay the seed's client turns; the engine answers each one with its
    top candidate. Deterministic with stub providers."""
    client_texts = seed.client_texts()[:rollout_turns]
    if not client_texts:
        raise EmptyInput(f"seed {seed.dialogue_id!r} has no client turns")
    history = ConversationHistory(turns=())
    for text in client_texts:
        history = history.append(Speaker.CLIENT, text)
        result = run_turn(history, spec.graph, spec.dialogue_index,
                          spec.cot_index, spec.llm, spec.embedder, spec.cfg)
        history = history.append(Speaker.THERAPIST, result.candidates[0].text)
    return history


def run_eval(seeds: list[EvalSeed], models: list[EvalModelSpec],
             rubric: JudgeRubric, judge: ChatContract, *,
             rollout_turns: int = 3) -> EvalReport:
    """Roll out and judge every (seed, model) pair; individual failures are
    recorded in the report instead of aborting the sweep."""
    if not seeds:
        raise EmptyInput("no seed dialogues")
    if not models:
        raise EmptyInput("no model specs")
    scores: list[DialogueScore] = []
    failures: list[EvalFailure] = []
    for spec in models:
        for seed in seeds:
            try:
                transcript = rollout_dialogue(seed, spec,
                                              rollout_turns=rollout_turns)
                scores.append(judge_dialogue(
                    transcript, rubric, judge,
                    dialogue_id=seed.dialogue_id, model_id=spec.row_label))
            except CounselGraphError as exc:
                failures.append(EvalFailure(
                    dialogue_id=seed.dialogue_id, model_id=spec.row_label,
                    stage=exc.stage or "", code=exc.code, message=str(exc)))
    if not scores:
        return EvalReport(rows=(), per_dialogue=(), failures=tuple(failures))
    report = aggregate(scores)
    return EvalReport(rows=report.rows, per_dialogue=report.per_dialogue,
                      failures=tuple(failures))
