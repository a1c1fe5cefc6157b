"""Command line front end: ingest, build-index, serve, retrieve, eval.

Every subcommand that touches providers honors stub_mode from the config
(the default when no config file is given), so the whole pipeline runs
offline out of the box. Failures exit non-zero with the pipeline stage in
the stderr message.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .config import ServiceConfig, load_config, make_chat, make_embedder
from .construction import (
    DEFAULT_TAXONOMY,
    StrategyTaxonomy,
    ingest_corpus,
    read_corpus,
    segment_dialogue,
)
from .errors import CounselGraphError
from .evaluation import (
    EvalModelSpec,
    EvalSeed,
    default_rubric,
    load_rubric,
    run_eval,
)
from .graph import CotGraph
from .index import IndexKind, VectorIndex, build_cot_index, build_dialogue_index
from .retrieval import ConversationHistory, run_turn
from .util import canonical_json_bytes


def _load_service_config(path: str | None) -> ServiceConfig:
    return load_config(path) if path else ServiceConfig()


def _load_taxonomy(path: str | None, config: ServiceConfig) -> StrategyTaxonomy:
    if path:
        return StrategyTaxonomy.load(path)
    if config.taxonomy_path:
        return StrategyTaxonomy.load(config.taxonomy_path)
    return DEFAULT_TAXONOMY


def _read_graph(path: str) -> CotGraph:
    with open(path, "rb") as fh:
        return CotGraph.deserialize(fh.read())


def _read_index(path: str) -> VectorIndex:
    with open(path, "rb") as fh:
        return VectorIndex.deserialize(fh.read())


def _cmd_ingest(args: argparse.Namespace) -> int:
    config = _load_service_config(args.config)
    taxonomy = _load_taxonomy(args.taxonomy, config)
    graph, report = ingest_corpus(
        args.corpus, taxonomy, config.alignment, make_chat(config),
        make_embedder(config), max_workers=args.workers)
    with open(args.out, "wb") as fh:
        fh.write(graph.serialize())
    if args.report:
        with open(args.report, "wb") as fh:
            fh.write(canonical_json_bytes(report.to_json_dict()))
    print(f"built {report.sessions_built}/{report.sessions_seen} sessions "
          f"-> {args.out}")
    for failure in report.failures:
        print(f"  failed {failure.session_id} at {failure.stage}: "
              f"{failure.message}", file=sys.stderr)
    return 0 if report.sessions_built else 1


def _cmd_build_index(args: argparse.Namespace) -> int:
    config = _load_service_config(args.config)
    graph = _read_graph(args.graph)
    embedder = make_embedder(config)
    if args.kind == IndexKind.DIALOGUE.value:
        index = build_dialogue_index(graph, embedder)
    else:
        index = build_cot_index(graph, embedder)
    with open(args.out, "wb") as fh:
        fh.write(index.serialize())
    print(f"indexed {len(index.entries)} {args.kind} entries -> {args.out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    serve(load_config(args.config))
    return 0


def _read_history(path: str) -> ConversationHistory:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ValueError("history file must be a JSON array of "
                         '{"speaker", "text"} objects')
    return ConversationHistory.from_json_list(data)


def _cmd_retrieve(args: argparse.Namespace) -> int:
    config = _load_service_config(args.config)
    graph = _read_graph(args.graph)
    dialogue_index = _read_index(args.dialogue_index)
    cot_index = _read_index(args.cot_index)
    history = _read_history(args.history)
    result = run_turn(history, graph, dialogue_index, cot_index,
                      make_chat(config), make_embedder(config),
                      config.retrieval)
    sys.stdout.buffer.write(canonical_json_bytes(result.to_json_dict()))
    return 0


def _eval_specs(models_path: str, config: ServiceConfig, graph: CotGraph,
                dialogue_index: VectorIndex,
                cot_index: VectorIndex) -> list[EvalModelSpec]:
    with open(models_path, encoding="utf-8") as fh:
        entries = json.load(fh)
    if not isinstance(entries, list) or not entries:
        raise ValueError("models file must be a non-empty JSON array")
    specs = []
    for entry in entries:
        overrides = {k: entry[k] for k in
                     ("disable_cot_stage", "disable_dialogue_stage")
                     if k in entry}
        cfg = replace(config.retrieval, **overrides)
        specs.append(EvalModelSpec(
            model_id=entry["model_id"], llm=make_chat(config),
            embedder=make_embedder(config), graph=graph,
            dialogue_index=dialogue_index, cot_index=cot_index, cfg=cfg,
            label=entry.get("label", "")))
    return specs


def _cmd_eval(args: argparse.Namespace) -> int:
    config = _load_service_config(args.config)
    graph = _read_graph(args.graph)
    dialogue_index = _read_index(args.dialogue_index)
    cot_index = _read_index(args.cot_index)
    seeds = []
    for raw in read_corpus(args.corpus):
        nodes = segment_dialogue(raw)
        seeds.append(EvalSeed(
            dialogue_id=raw.session_id,
            history=ConversationHistory(
                turns=tuple((n.speaker, n.text) for n in nodes))))
    specs = _eval_specs(args.models, config, graph, dialogue_index, cot_index)
    rubric = load_rubric(args.rubric) if args.rubric else default_rubric()
    judge = make_chat(config)
    report = run_eval(seeds, specs, rubric, judge,
                      rollout_turns=args.rollout_turns)
    with open(args.out, "wb") as fh:
        fh.write(canonical_json_bytes(report.to_json_dict()))
    print(report.render_text())
    if report.failures:
        for failure in report.failures:
            print(f"  failed {failure.model_id}/{failure.dialogue_id}: "
                  f"{failure.message}", file=sys.stderr)
    return 0 if report.rows else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="counselgraph",
        description="Traceable graph-RAG engine for counseling copilots.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a graph from a corpus file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default="")
    p.add_argument("--taxonomy", default="")
    p.add_argument("--config", default="")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("build-index", help="embed graph nodes into an index file")
    p.add_argument("--graph", required=True)
    p.add_argument("--kind", required=True,
                   choices=[k.value for k in IndexKind])
    p.add_argument("--out", required=True)
    p.add_argument("--config", default="")
    p.set_defaults(func=_cmd_build_index)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("retrieve", help="run one copilot turn offline")
    p.add_argument("--graph", required=True)
    p.add_argument("--dialogue-index", required=True)
    p.add_argument("--cot-index", required=True)
    p.add_argument("--history", required=True,
                   help="JSON array of {speaker, text} turns")
    p.add_argument("--config", default="")
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("eval", help="roll out and judge engine variants")
    p.add_argument("--corpus", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--dialogue-index", required=True)
    p.add_argument("--cot-index", required=True)
    p.add_argument("--models", required=True,
                   help="JSON array of {model_id, disable_* flags, label}")
    p.add_argument("--rubric", default="")
    p.add_argument("--config", default="")
    p.add_argument("--out", required=True)
    p.add_argument("--rollout-turns", type=int, default=3)
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CounselGraphError as exc:
        stage = exc.stage or "pipeline"
        print(f"error [{stage}/{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
