"""Command-line interface: index, verify, eval, trace.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 backend failure,
4 errored-claim threshold exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
from typing import List, Optional

from .backend import BackendError, CostLedger
from .config import ConfigError, RunConfig, build_backends, load_config
from .evaluate import (
    AbortThresholdError,
    DataError,
    load_dataset,
    run_eval,
)
from .infill import PathBudget
from .retrieval import CorpusError, build_index, load_index, read_corpus, save_index
from .verdict import DocStrategy, format_trace, format_trace_dict, run_pipeline, trace_to_dict

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_BACKEND = 3
EXIT_ABORT = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--corpus", help="corpus JSONL path")
    parser.add_argument("--index", dest="index_path", help="index file path")
    parser.add_argument("--dataset", help="dataset JSONL path")
    parser.add_argument("--format", dest="dataset_format",
                        choices=["hover", "exfever", "generic"], help="dataset format")
    parser.add_argument("--k", type=int, help="retrieval depth")
    parser.add_argument("--path-limit", dest="path_limit", type=int,
                        help="max identification paths per claim")
    parser.add_argument("--seed", type=int, help="path sampling seed")
    parser.add_argument("--pipeline", choices=["dp_graphcheck", "graphcheck", "direct"],
                        help="pipeline mode")
    parser.add_argument("--evidence-mode", dest="evidence_mode",
                        choices=["open_book", "open_book_gold"], help="evidence assembly mode")
    parser.add_argument("--direct-strategy", dest="direct_strategy",
                        choices=["concat", "each", "concat_each"])
    parser.add_argument("--graphcheck-strategy", dest="graphcheck_strategy",
                        choices=["concat", "each", "concat_each"])
    parser.add_argument("--blank-token", dest="blank_token", help="infilling sentinel token")
    parser.add_argument("--truncation-chars", dest="truncation_chars", type=int,
                        help="max chars per evidence input")
    parser.add_argument("--workers", type=int, help="claim worker count")
    parser.add_argument("--report", dest="report_path", help="report JSON output path")
    parser.add_argument("--traces", dest="traces_path", help="traces JSONL output path")


_OVERRIDE_NAMES = (
    "corpus", "index_path", "dataset", "dataset_format", "k", "path_limit", "seed",
    "pipeline", "evidence_mode", "direct_strategy", "graphcheck_strategy",
    "blank_token", "truncation_chars", "workers", "report_path", "traces_path",
)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {name: getattr(args, name, None) for name in _OVERRIDE_NAMES}
    return load_config(args.config, overrides)


def _pipeline_kwargs(config: RunConfig) -> dict:
    return {
        "mode": config.pipeline,
        "budget": PathBudget(config.path_limit, config.seed),
        "k": config.k,
        "direct_strategy": DocStrategy(config.direct_strategy),
        "graphcheck_strategy": DocStrategy(config.graphcheck_strategy),
        "blank_token": config.blank_token,
        "include_definitions": config.include_definitions,
        "truncation_chars": config.truncation_chars,
    }


def cmd_index(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    corpus_path = config.require_path("corpus")
    if not config.index_path:
        raise ConfigError("config is missing 'index_path'")
    index = build_index(read_corpus(corpus_path))
    save_index(index, config.index_path)
    print(f"{index.doc_count} documents indexed (avg_doc_length={index.avg_doc_length:.2f})")
    print(f"index written to {config.index_path}")
    return EXIT_OK


def _resolve_claim(args: argparse.Namespace, config: RunConfig):
    if args.claim:
        return args.claim_id or "", args.claim, None, None
    dataset_path = config.require_path("dataset")
    records = load_dataset(dataset_path, config.dataset_format)
    for record in records:
        if record.id == args.claim_id:
            return record.id, record.text, record.pregenerated_graph, record.gold_doc_ids
    raise DataError(f"claim id {args.claim_id!r} not found in {dataset_path}")


def cmd_verify(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    claim_id, claim_text, pregenerated, gold_ids = _resolve_claim(args, config)
    index = load_index(config.require_path("index_path"))
    ledger = CostLedger(config.prices)
    backends, _ = build_backends(config, ledger)
    gold_docs = None
    if config.evidence_mode == "open_book_gold" and gold_ids:
        gold_docs = [d for d in (index.get_document(i) for i in gold_ids) if d is not None]
    trace = run_pipeline(
        claim_text,
        index,
        backends,
        claim_id=claim_id,
        pregenerated_graph=pregenerated,
        gold_docs=gold_docs or None,
        **_pipeline_kwargs(config),
    )
    print(format_trace(trace))
    trace_out = args.trace_out
    if not trace_out:
        stem = f"trace-{claim_id}.json" if claim_id else "trace.json"
        trace_out = os.path.join(os.path.dirname(config.traces_path) or ".", stem)
    with open(trace_out, "w", encoding="utf-8") as handle:
        json.dump(trace_to_dict(trace), handle, ensure_ascii=False, sort_keys=True, indent=2)
    print(f"trace written to {trace_out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    records = load_dataset(config.require_path("dataset"), config.dataset_format)
    if not records:
        raise DataError("dataset is empty")
    index = load_index(config.require_path("index_path"))
    ledger = CostLedger(config.prices)
    backends, caches = build_backends(config, ledger)
    report, traces = run_eval(
        records,
        index,
        backends,
        gold_mode=config.evidence_mode == "open_book_gold",
        workers=config.workers,
        ledger=ledger,
        **_pipeline_kwargs(config),
    )
    with open(config.report_path, "w", encoding="utf-8") as handle:
        json.dump(report.to_dict(), handle, ensure_ascii=False, sort_keys=True, indent=2)
        handle.write("\n")
    with open(config.traces_path, "w", encoding="utf-8") as handle:
        for trace in traces:
            handle.write(json.dumps(trace_to_dict(trace), ensure_ascii=False, sort_keys=True))
            handle.write("\n")
    print(report.to_table())
    totals = ledger.totals()
    hits = sum(cache.hits for cache in caches.values())
    misses = sum(cache.misses for cache in caches.values())
    print(
        f"backend requests: {totals.requests}  cache: hits={hits} misses={misses}  "
        f"cost: ${totals.cost:.4f}"
    )
    print(f"report written to {config.report_path}; traces to {config.traces_path}")
    return EXIT_OK


def cmd_trace(args: argparse.Namespace) -> int:
    try:
        with open(args.file, "r", encoding="utf-8") as handle:
            content = handle.read()
    except OSError as exc:
        raise DataError(f"cannot read trace file: {exc}") from exc
    stripped = content.strip()
    if not stripped:
        raise DataError(f"trace file {args.file} is empty")
    try:
        loaded = json.loads(stripped)
        rows = loaded if isinstance(loaded, list) else [loaded]
    except json.JSONDecodeError:
        rows = []
        for line in stripped.splitlines():
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise DataError(f"invalid trace line: {exc}") from exc
    shown = 0
    for row in rows:
        if args.claim_id and row.get("claim_id") != args.claim_id:
            continue
        print(format_trace_dict(row))
        print()
        shown += 1
    if args.claim_id and not shown:
        raise DataError(f"claim id {args.claim_id!r} not found in {args.file}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="graphfc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build and serialize the BM25 index")
    _add_override_flags(p_index)
    p_index.set_defaults(handler=cmd_index)

    p_verify = sub.add_parser("verify", help="verify a single claim")
    _add_override_flags(p_verify)
    p_verify.add_argument("--claim", help="claim text to verify")
    p_verify.add_argument("--claim-id", dest="claim_id", default="",
                          help="claim id (looked up in the dataset unless --claim is given)")
    p_verify.add_argument("--trace-out", dest="trace_out", help="write the JSON trace here")
    p_verify.set_defaults(handler=cmd_verify)

    p_eval = sub.add_parser("eval", help="run batch evaluation")
    _add_override_flags(p_eval)
    p_eval.set_defaults(handler=cmd_eval)

    p_trace = sub.add_parser("trace", help="pretty-print a saved trace file")
    p_trace.add_argument("--file", required=True, help="trace JSON or JSONL file")
    p_trace.add_argument("--claim-id", dest="claim_id", help="only show this claim")
    p_trace.set_defaults(handler=cmd_trace)
    return parser


def _raise_interrupt(_signum, _frame):
    raise KeyboardInterrupt


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "verify" and not args.claim and not args.claim_id:
        parser.error("verify requires --claim or --claim-id")
    try:
        signal.signal(signal.SIGTERM, _raise_interrupt)
    except ValueError:
        pass  # not in the main thread (e.g. under a test harness)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CorpusError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AbortThresholdError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
