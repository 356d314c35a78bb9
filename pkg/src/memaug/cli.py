"""Command-line operator surface.

Subcommands: ``augment`` (mine attributes for a corpus), ``index`` (build
and save a vector index), ``retrieve`` (query a store), ``eval`` (run the
qa/rec/events pipelines and write reports), ``stats`` (corpus statistics).

Defaults come from an optional INI config file (section ``[memaug]``, keys
named like the long flags), which explicit flags override. Secrets are only
ever read from environment variables.

Exit codes: 0 success, 1 usage or query error, 2 IO/schema error, 3 backend
failure, 4 augmentation failure rate above threshold.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import dataclass, asdict
from datetime import datetime, timezone
from pathlib import Path

from .annotations import Granularity, Perspective, Prioritization, render_annotation
from .backends import BackendKind, BackendProfile, make_chat_backend, make_embedder
from .datasets import (
    load_conversation_dataset,
    load_recommendation_dataset,
    store_from_items,
    store_from_sessions,
)
from .errors import (
    AugmentFailure,
    BackendRefusal,
    EmptyQueryError,
    MemaugError,
    SchemaError,
    TransportError,
)
from .mining import AttributeMiner
from .retrieval import (
    EmbeddingStrategy,
    QueryContext,
    QueryPart,
    RetrievalMode,
    VectorIndex,
    build_index,
    retrieve,
)
from .store import MatchPolicy, MemoryStore
from .tasks import RetrievalSetup, run_event_summarization, run_qa_task, run_rec_task

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_BACKEND = 3
EXIT_THRESHOLD = 4

_MODES = {
    "comprehensive": RetrievalMode.COMPREHENSIVE,
    "attribute": RetrievalMode.ATTRIBUTE_BASED,
    "embedding": RetrievalMode.EMBEDDING_BASED,
}
_STRATEGIES = {
    "averaged": EmbeddingStrategy.AVERAGED_PAIRS,
    "whole": EmbeddingStrategy.WHOLE_ANNOTATION,
    "raw": EmbeddingStrategy.RAW_CONTENT,
}
_PERSPECTIVES = {
    "entity": Perspective.ENTITY_CENTRIC,
    "conversation": Perspective.CONVERSATION_CENTRIC,
}
_GRANULARITIES = {
    "turn": Granularity.TURN_LEVEL,
    "session": Granularity.SESSION_LEVEL,
    "na": Granularity.NOT_APPLICABLE,
}
_PRIORITIZATIONS = {
    "basic": Prioritization.BASIC,
    "priority": Prioritization.PRIORITY,
}
_POLICIES = {
    "name": MatchPolicy.NAME_ONLY,
    "name-value": MatchPolicy.NAME_AND_VALUE,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


_INT_KEYS = {"k", "n", "seed", "dim", "parallelism", "max_retries"}
_FLOAT_KEYS = {"max_failure_rate", "timeout"}


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    source = Path(path)
    if not source.exists():
        raise FileNotFoundError(f"config file not found: {source}")
    parser = configparser.ConfigParser()
    parser.read(source)
    if "memaug" not in parser:
        return {}
    values: dict = {}
    for key, raw in parser["memaug"].items():
        key = key.replace("-", "_")
        if key in _INT_KEYS:
            values[key] = int(raw)
        elif key in _FLOAT_KEYS:
            values[key] = float(raw)
        else:
            values[key] = raw
    return values


@dataclass
class RunConfig:
    """Resolved settings for a run; snapshotted next to eval reports."""

    command: str
    backend: str = "mock"
    model: str = "mock"
    endpoint: str | None = None
    api_key_env: str = "MEMAUG_API_KEY"
    mode: str = "embedding"
    strategy: str = "averaged"
    perspective: str = "conversation"
    granularity: str = "turn"
    prioritization: str = "basic"
    policy: str = "name"
    query_parts: str = "text,attributes"
    k: int = 5
    n: int = 10
    seed: int = 0
    dim: int = 8
    parallelism: int = 1
    max_retries: int = 2
    timeout: float = 30.0

    def profile(self) -> BackendProfile:
        kind = BackendKind.MOCK if self.backend == "mock" else BackendKind.REMOTE_CHAT
        return BackendProfile(
            kind=kind,
            model_id=self.model,
            endpoint=self.endpoint if kind is BackendKind.REMOTE_CHAT else None,
            max_retries=self.max_retries,
            timeout=self.timeout,
            api_key_env=self.api_key_env,
        )

    def parts(self) -> tuple[QueryPart, ...]:
        mapping = {"text": QueryPart.TEXT, "attributes": QueryPart.ATTRIBUTES}
        names = [p.strip() for p in self.query_parts.split(",") if p.strip()]
        try:
            return tuple(mapping[name] for name in names)
        except KeyError as exc:
            raise ValueError(f"unknown query part {exc.args[0]!r}") from exc


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    config = RunConfig(command=args.command)
    for key in vars(config):
        if hasattr(args, key) and getattr(args, key) is not None:
            setattr(config, key, getattr(args, key))
    return config


def _load_mock_rules(path: str | None) -> tuple[dict | None, bool]:
    """Optional JSON rule table for the mock backend.

    Schema: {"rules": {"token": ["attribute", "value"], ...},
             "capture_persons": true}
    """
    if not path:
        return None, True
    source = Path(path)
    if not source.exists():
        raise FileNotFoundError(f"mock rules file not found: {source}")
    data = json.loads(source.read_text(encoding="utf-8"))
    rules = {
        token: (pair[0], pair[1]) for token, pair in data.get("rules", {}).items()
    }
    return rules, bool(data.get("capture_persons", True))


def _chat_backend(config: RunConfig, args: argparse.Namespace):
    rules, capture = _load_mock_rules(getattr(args, "mock_rules", None))
    return make_chat_backend(config.profile(), rules=rules, capture_persons=capture)


def _miner(config: RunConfig, args: argparse.Namespace) -> AttributeMiner:
    return AttributeMiner(
        _chat_backend(config, args),
        perspective=_PERSPECTIVES[config.perspective],
        granularity=_GRANULARITIES[config.granularity],
        prioritization=_PRIORITIZATIONS[config.prioritization],
        max_retries=config.max_retries,
        parallelism=config.parallelism,
    )


def _augment_store(store: MemoryStore, miner: AttributeMiner):
    items = list(store)
    results, report = miner.mine_corpus(items)
    for item_id, annotation in results:
        store.attach_annotation(item_id, annotation)
    store.augmentation_report = report
    return report


def cmd_augment(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    warnings: list[str] = []
    store = MemoryStore.load(args.input, strict=args.strict, warnings=warnings)
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    miner = _miner(config, args)
    report = _augment_store(store, miner)
    store.save(args.store)
    print(
        f"augmented {report.succeeded}/{report.total} items "
        f"(failure rate {report.failure_rate:.4f}) -> {args.store}"
    )
    for item_id, reason in report.failures:
        print(f"  failed {item_id}: {reason}", file=sys.stderr)
    if args.max_failure_rate is not None and report.failure_rate > args.max_failure_rate:
        print(
            f"error: failure rate {report.failure_rate:.4f} exceeds threshold "
            f"{args.max_failure_rate}",
            file=sys.stderr,
        )
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_index(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    store = MemoryStore.load(args.store)
    embedder = make_embedder(config.profile(), dimension=config.dim)
    index, skipped = build_index(store, _STRATEGIES[config.strategy], embedder)
    index.save(args.out)
    print(f"indexed {len(index)} items ({len(skipped)} skipped) -> {args.out}")
    for item_id, reason in skipped:
        print(f"  skipped {item_id}: {reason}", file=sys.stderr)
    return EXIT_OK


def cmd_retrieve(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    store = MemoryStore.load(args.store)
    mode = _MODES[config.mode]
    index = None
    embedder = None
    if mode is RetrievalMode.EMBEDDING_BASED:
        if not args.index:
            raise ValueError("embedding retrieval requires --index")
        index = VectorIndex.load(args.index)
        embedder = make_embedder(config.profile(), dimension=index.dimension)
    query = QueryContext(text=args.query)
    if mode is not RetrievalMode.COMPREHENSIVE:
        miner = _miner(config, args)
        mined = miner.mine_question(args.query)
        query = QueryContext(
            text=args.query, attribute_names=mined.attributes, persons=mined.persons
        )
    result = retrieve(
        store,
        query,
        mode,
        k=config.k,
        policy=_POLICIES[config.policy],
        index=index,
        embedder=embedder,
        query_parts=config.parts(),
    )
    if args.json:
        payload = [
            {
                "rank": hit.rank,
                "id": hit.item_id,
                "score": hit.score,
                "annotation": (
                    render_annotation(store.annotation_for(hit.item_id))
                    if store.annotation_for(hit.item_id)
                    else None
                ),
            }
            for hit in result.hits
        ]
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for hit in result.hits:
            annotation = store.annotation_for(hit.item_id)
            rendered = f"  {render_annotation(annotation)}" if annotation else ""
            print(f"{hit.rank:>3}. {hit.item_id}  score={hit.score:.4f}{rendered}")
    return EXIT_OK


def _write_reports(out_dir: Path, name: str, payload: dict, text: str, config: RunConfig, *, timestamp: bool) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshot = asdict(config)
    if timestamp:
        payload = dict(payload, timestamp=datetime.now(timezone.utc).isoformat())
    payload = dict(payload, config=snapshot)
    (out_dir / f"{name}.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / f"{name}_report.txt").write_text(text + "\n", encoding="utf-8")
    (out_dir / "config.json").write_text(
        json.dumps(snapshot, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _eval_qa(args, config: RunConfig) -> tuple[dict, str]:
    dataset = load_conversation_dataset(args.dataset)
    if args.store:
        store = MemoryStore.load(args.store)
    else:
        store = store_from_sessions(dataset)
        _augment_store(store, _miner(config, args))
    mode = _MODES[config.mode]
    index = None
    embedder = None
    if mode is RetrievalMode.EMBEDDING_BASED:
        embedder = make_embedder(config.profile(), dimension=config.dim)
        index, _ = build_index(store, _STRATEGIES[config.strategy], embedder)
    setup = RetrievalSetup(
        mode=mode,
        k=config.k,
        policy=_POLICIES[config.policy],
        index=index,
        embedder=embedder,
        query_parts=config.parts(),
    )
    answer_backend = _chat_backend(config, args)
    result = run_qa_task(
        dataset, store, miner=_miner(config, args), answer_backend=answer_backend, setup=setup
    )
    payload = {
        "task": "qa",
        "recall": result.recall_report.to_dict(),
        "token_f1": result.f1_report.to_dict(),
        "avg_items_retrieved": result.avg_items_retrieved,
        "examples": len(result.rows),
        "errors": sum(1 for row in result.rows if row.error),
        "retrieval_misses": result.retrieval_misses,
    }
    text = result.recall_report.as_table() + "\n\n" + result.f1_report.as_table()
    return payload, text


def _eval_rec(args, config: RunConfig) -> tuple[dict, str]:
    dataset = load_recommendation_dataset(args.dataset)
    if args.store:
        store = MemoryStore.load(args.store)
    else:
        store = store_from_items(dataset.items)
        entity_config = RunConfig(**{**asdict(config), "perspective": "entity", "granularity": "na"})
        _augment_store(store, _miner(entity_config, args))
    if config.n > len(dataset.dialogues):
        raise ValueError(
            f"--n {config.n} exceeds the {len(dataset.dialogues)} dialogues in the dataset"
        )
    mode = _MODES[config.mode]
    index = None
    embedder = None
    if mode is RetrievalMode.EMBEDDING_BASED:
        embedder = make_embedder(config.profile(), dimension=config.dim)
        index, _ = build_index(store, _STRATEGIES[config.strategy], embedder)
    setup = RetrievalSetup(
        mode=mode,
        k=config.k,
        policy=_POLICIES[config.policy],
        index=index,
        embedder=embedder,
        query_parts=config.parts(),
    )
    dialogue_config = RunConfig(
        **{**asdict(config), "perspective": "conversation", "granularity": "session"}
    )
    result = run_rec_task(
        dataset,
        store,
        miner=_miner(dialogue_config, args),
        rec_backend=_chat_backend(config, args),
        setup=setup,
        n=config.n,
        k=config.k,
        seed=config.seed,
    )
    payload = {
        "task": "rec",
        "metrics": {name: report.to_dict() for name, report in sorted(result.reports.items())},
        "avg_items_retrieved": result.avg_items_retrieved,
        "dialogues": len(result.rows),
        "skipped_masking": result.skipped_masking,
    }
    text = "\n\n".join(
        result.reports[name].as_table() for name in sorted(result.reports)
    )
    return payload, text


def _eval_events(args, config: RunConfig) -> tuple[dict, str]:
    dataset = load_conversation_dataset(args.dataset)
    level = Granularity.TURN_LEVEL if config.granularity == "turn" else Granularity.SESSION_LEVEL
    if args.store:
        store = MemoryStore.load(args.store)
    else:
        level_name = "turn" if level is Granularity.TURN_LEVEL else "session"
        store = store_from_sessions(dataset, level=level_name)
        _augment_store(store, _miner(config, args))
    judge = _chat_backend(config, args) if args.judge else None
    result = run_event_summarization(
        dataset,
        store,
        level=level,
        input_mode=args.input_mode,
        summarizer=_chat_backend(config, args),
        judge=judge,
    )
    payload = {
        "task": "events",
        "sessions": [
            {
                "session_id": row.session_id,
                "level": row.level,
                "input_mode": row.input_mode,
                "event_pairs": row.event_pairs,
                "summary": row.summary,
                "judge_scores": row.judge_scores,
                "skipped_reason": row.skipped_reason,
            }
            for row in result.rows
        ],
        "skipped": result.skipped,
    }
    lines = []
    for row in result.rows:
        if row.skipped_reason:
            lines.append(f"{row.session_id}: SKIPPED ({row.skipped_reason})")
        else:
            lines.append(f"{row.session_id}: {row.summary}")
    return payload, "\n".join(lines)


def cmd_eval(args: argparse.Namespace) -> int:
    # Task-specific defaults: question answering matches attribute values
    # when it has them and retrieves 5 turns; recommendation filters by
    # attribute name and retrieves 10 items.
    if args.policy is None:
        args.policy = "name-value" if args.task == "qa" else "name"
    if args.k is None and args.task == "rec":
        args.k = 10
    config = _config_from_args(args)
    if args.task == "qa":
        payload, text = _eval_qa(args, config)
    elif args.task == "rec":
        payload, text = _eval_rec(args, config)
    else:
        payload, text = _eval_events(args, config)
    out_dir = Path(args.out_dir)
    _write_reports(
        out_dir, args.task, payload, text, config, timestamp=not args.no_timestamp
    )
    print(text)
    if payload.get("skipped") or payload.get("skipped_masking"):
        print("warning: some inputs were skipped; see the JSON report", file=sys.stderr)
    print(f"reports written to {out_dir}")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    store = MemoryStore.load(args.store)
    stats = store.compute_stats()
    if args.json:
        print(json.dumps(stats.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    print(f"total items:      {stats.total_items}")
    print(f"annotated items:  {stats.annotated_items}")
    print(f"avg attributes:   {stats.avg_attributes:.2f}")
    print(f"failure rate:     {stats.failure_rate:.4f}")
    print("top attributes:")
    for name, frequency in stats.top_attributes[:5]:
        print(f"  {name:<20} {frequency}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="memaug", description=__doc__)
    parser.add_argument("--config", help="INI config file with a [memaug] section")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: _Parser) -> None:
        p.add_argument("--backend", choices=["mock", "remote"], default=None)
        p.add_argument("--model", default=None)
        p.add_argument("--endpoint", default=None)
        p.add_argument("--api-key-env", dest="api_key_env", default=None)
        p.add_argument("--max-retries", dest="max_retries", type=int, default=None)
        p.add_argument("--timeout", type=float, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--mock-rules", dest="mock_rules", default=None,
                       help="JSON rule table for the mock backend")

    p_augment = sub.add_parser("augment", help="mine attribute annotations for a corpus")
    common(p_augment)
    p_augment.add_argument("--input", required=True, help="input items JSONL")
    p_augment.add_argument("--store", required=True, help="output store JSONL")
    p_augment.add_argument("--perspective", choices=list(_PERSPECTIVES), default=None)
    p_augment.add_argument("--granularity", choices=list(_GRANULARITIES), default=None)
    p_augment.add_argument("--prioritization", choices=list(_PRIORITIZATIONS), default=None)
    p_augment.add_argument("--parallelism", type=int, default=None)
    p_augment.add_argument("--max-failure-rate", dest="max_failure_rate", type=float, default=None)
    p_augment.add_argument("--strict", action="store_true", help="abort on malformed input lines")
    p_augment.set_defaults(func=cmd_augment)

    p_index = sub.add_parser("index", help="build and save a vector index")
    common(p_index)
    p_index.add_argument("--store", required=True)
    p_index.add_argument("--out", required=True)
    p_index.add_argument("--strategy", choices=list(_STRATEGIES), default=None)
    p_index.add_argument("--dim", type=int, default=None)
    p_index.set_defaults(func=cmd_index)

    p_retrieve = sub.add_parser("retrieve", help="query a store")
    common(p_retrieve)
    p_retrieve.add_argument("query", help="query text")
    p_retrieve.add_argument("--store", required=True)
    p_retrieve.add_argument("--mode", choices=list(_MODES), default=None)
    p_retrieve.add_argument("--index", default=None)
    p_retrieve.add_argument("--k", type=int, default=None)
    p_retrieve.add_argument("--policy", choices=list(_POLICIES), default=None)
    p_retrieve.add_argument("--query-parts", dest="query_parts", default=None)
    p_retrieve.add_argument("--json", action="store_true")
    p_retrieve.set_defaults(func=cmd_retrieve)

    p_eval = sub.add_parser("eval", help="run an evaluation task and write reports")
    common(p_eval)
    p_eval.add_argument("--task", choices=["qa", "rec", "events"], required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--store", default=None, help="pre-augmented store (else built from the dataset)")
    p_eval.add_argument("--mode", choices=list(_MODES), default=None)
    p_eval.add_argument("--strategy", choices=list(_STRATEGIES), default=None)
    p_eval.add_argument("--policy", choices=list(_POLICIES), default=None)
    p_eval.add_argument("--query-parts", dest="query_parts", default=None)
    p_eval.add_argument("--perspective", choices=list(_PERSPECTIVES), default=None)
    p_eval.add_argument("--granularity", choices=list(_GRANULARITIES), default=None)
    p_eval.add_argument("--prioritization", choices=list(_PRIORITIZATIONS), default=None)
    p_eval.add_argument("--k", type=int, default=None)
    p_eval.add_argument("--n", type=int, default=None)
    p_eval.add_argument("--dim", type=int, default=None)
    p_eval.add_argument("--parallelism", type=int, default=None)
    p_eval.add_argument("--input-mode", dest="input_mode",
                        choices=["annotations_only", "annotations_plus_dialogues"],
                        default="annotations_only")
    p_eval.add_argument("--judge", action="store_true", help="score summaries with a judge backend")
    p_eval.add_argument("--out-dir", dest="out_dir", required=True)
    p_eval.add_argument("--no-timestamp", dest="no_timestamp", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_stats = sub.add_parser("stats", help="print corpus statistics")
    p_stats.add_argument("--store", required=True)
    p_stats.add_argument("--json", action="store_true")
    p_stats.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config_defaults = _load_config(args.config)
        for key, value in config_defaults.items():
            if hasattr(args, key) and getattr(args, key) is None:
                setattr(args, key, value)
        return args.func(args)
    except (FileNotFoundError, SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TransportError, AugmentFailure, BackendRefusal) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (EmptyQueryError, ValueError, MemaugError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
