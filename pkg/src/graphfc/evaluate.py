"""Dataset loading, Macro-F1 metrics, and the batch evaluation harness."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .backend import BackendSuite, CostLedger
from .graph import DEFAULT_BLANK_TOKEN
from .infill import PathBudget
from .retrieval import EvidenceBundle, Index
from .verdict import (
    DIRECT,
    GRAPHCHECK,
    DocStrategy,
    Label,
    StrategyChoice,
    VerdictTrace,
    run_pipeline,
)

logger = logging.getLogger(__name__)

DATASET_FORMATS = ("hover", "exfever", "generic")


class DataError(ValueError):
    """Raised for malformed dataset rows (unknown labels, missing fields)."""


class AbortThresholdError(RuntimeError):
    """Raised when the errored-claim fraction exceeds the abort threshold."""


@dataclass(frozen=True)
class ClaimRecord:
    id: str
    text: str
    label: Label
    hops: Optional[int] = None
    gold_doc_ids: Optional[Tuple] = None
    pregenerated_graph: Optional[str] = None


_HOVER_LABELS = {"SUPPORTED": Label.SUPPORTED, "NOT_SUPPORTED": Label.NOT_SUPPORTED}
_EXFEVER_LABELS = {"SUPPORTS": Label.SUPPORTED, "REFUTES": Label.NOT_SUPPORTED}
_GENERIC_LABELS = {"Supported": Label.SUPPORTED, "NotSupported": Label.NOT_SUPPORTED}
_NEI_LABELS = {"NOT ENOUGH INFO", "NOT_ENOUGH_INFO", "NEI"}


def _gold_ids(row: dict) -> Optional[Tuple]:
    if "gold_doc_ids" in row and row["gold_doc_ids"] is not None:
        return tuple(str(x) for x in row["gold_doc_ids"])
    facts = row.get("supporting_facts")
    if facts:
        seen = []
        for fact in facts:
            title = fact[0] if isinstance(fact, (list, tuple)) else fact
            if title not in seen:
                seen.append(title)
        return tuple(seen)
    return None


def _row_id(row: dict, lineno: int) -> str:
    for key in ("id", "uid"):
        if key in row and row[key] is not None:
            return str(row[key])
    return str(lineno)


def _row_hops(row: dict) -> Optional[int]:
    for key in ("num_hops", "hops"):
        if key in row and row[key] is not None:
            return int(row[key])
    return None


def load_dataset(path: str, fmt: str) -> List[ClaimRecord]:
    """Read a JSONL benchmark file into binary-labeled claim records.

    The "exfever" format drops NEI-labeled rows (the count is logged); an
    unknown label string raises DataError naming the offending row.
    """
    if fmt not in DATASET_FORMATS:
        raise DataError(f"unknown dataset format {fmt!r}")
    records: List[ClaimRecord] = []
    dropped = 0
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            rid = _row_id(row, lineno)
            raw_label = str(row.get("label", ""))
            if fmt == "hover":
                text = row.get("claim", row.get("text", ""))
                label = _HOVER_LABELS.get(raw_label)
            elif fmt == "exfever":
                text = row.get("claim", row.get("text", ""))
                if raw_label.upper() in _NEI_LABELS:
                    dropped += 1
                    continue
                label = _EXFEVER_LABELS.get(raw_label)
            else:
                text = row.get("text", row.get("claim", ""))
                label = _GENERIC_LABELS.get(raw_label)
            if label is None:
                raise DataError(f"{path}:{lineno} (id={rid}): unknown label {raw_label!r}")
            if not text:
                raise DataError(f"{path}:{lineno} (id={rid}): empty claim text")
            records.append(
                ClaimRecord(
                    id=rid,
                    text=text,
                    label=label,
                    hops=_row_hops(row),
                    gold_doc_ids=_gold_ids(row),
                    pregenerated_graph=row.get("pregenerated_graph"),
                )
            )
    if dropped:
        logger.info("dropped %d NEI-labeled rows from %s", dropped, path)
    return records


def _class_counts(preds: List[Label], golds: List[Label], cls: Label) -> dict:
    tp = sum(1 for p, g in zip(preds, golds) if p is cls and g is cls)
    fp = sum(1 for p, g in zip(preds, golds) if p is cls and g is not cls)
    fn = sum(1 for p, g in zip(preds, golds) if p is not cls and g is cls)
    tn = len(preds) - tp - fp - fn
    return {"tp": tp, "fp": fp, "fn": fn, "tn": tn}


def _f1(counts: dict) -> float:
    tp, fp, fn = counts["tp"], counts["fp"], counts["fn"]
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def macro_f1(preds: List[Label], golds: List[Label]) -> float:
    """Unweighted mean of the per-class F1 over both verdict classes.

    A class absent from preds and golds contributes an F1 of 0.
    """
    if not preds or len(preds) != len(golds):
        raise ValueError("preds and golds must be non-empty and of equal length")
    return sum(
        _f1(_class_counts(preds, golds, cls))
        for cls in (Label.SUPPORTED, Label.NOT_SUPPORTED)
    ) / 2.0


def recall_at_k(evidence: EvidenceBundle, gold_doc_ids) -> float:
    """Fraction of the gold document ids present in the retrieved set."""
    gold = set(gold_doc_ids)
    if not gold:
        raise ValueError("gold_doc_ids must be non-empty")
    return len(set(evidence.doc_ids) & gold) / len(gold)


@dataclass
class _Row:
    record: ClaimRecord
    trace: VerdictTrace

    @property
    def pred(self) -> Label:
        return self.trace.final


def _strategy_group(rows: List[_Row], value: str, total: int) -> dict:
    members = [r for r in rows if r.trace.strategy.value == value]
    n = len(members)
    correct = sum(1 for r in members if r.pred is r.record.label)
    recalls = [
        recall_at_k(r.trace.direct_evidence, r.record.gold_doc_ids)
        for r in members
        if r.record.gold_doc_ids and r.trace.direct_evidence is not None
    ]
    return {
        "n": n,
        "fraction": n / total if total else 0.0,
        "accuracy": correct / n if n else None,
        "recall_at_k": sum(recalls) / len(recalls) if recalls else None,
    }


def _group_metrics(rows: List[_Row]) -> dict:
    preds = [r.pred for r in rows]
    golds = [r.record.label for r in rows]
    counts = {
        cls.value: _class_counts(preds, golds, cls)
        for cls in (Label.SUPPORTED, Label.NOT_SUPPORTED)
    }
    n = len(rows)
    return {
        "n": n,
        "accuracy": sum(1 for p, g in zip(preds, golds) if p is g) / n,
        "macro_f1": macro_f1(preds, golds),
        "counts": counts,
        "strategy": {
            DIRECT: _strategy_group(rows, DIRECT, n),
            GRAPHCHECK: _strategy_group(rows, GRAPHCHECK, n),
        },
    }


@dataclass
class EvalReport:
    config: dict
    overall: dict
    per_hop: Dict[str, dict]
    errors: List[str]
    cost: dict
    timing: dict
    partial: bool = False

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "overall": self.overall,
            "per_hop": self.per_hop,
            "errors": self.errors,
            "cost": self.cost,
            "partial": self.partial,
            "timing": self.timing,
        }

    def to_table(self) -> str:
        cfg = self.config
        header = (
            f"pipeline: {cfg.get('mode')}  k={cfg.get('k')}  "
            f"path_limit={cfg.get('path_limit')}  seed={cfg.get('seed')}  "
            f"evidence={cfg.get('evidence_mode')}"
        )
        lines = [header, ""]
        lines.append(
            f"{'group':>8}  {'n':>5}  {'macro_f1':>8}  {'accuracy':>8}  "
            f"{'direct%':>8}  {'graphcheck%':>11}"
        )
        rows = [(f"{hop}-hop" if hop != "unknown" else hop, m)
                for hop, m in sorted(self.per_hop.items())]
        rows.append(("overall", self.overall))
        for name, m in rows:
            direct_pct = m["strategy"][DIRECT]["fraction"] * 100
            graph_pct = m["strategy"][GRAPHCHECK]["fraction"] * 100
            lines.append(
                f"{name:>8}  {m['n']:>5}  {m['macro_f1']:>8.4f}  {m['accuracy']:>8.4f}  "
                f"{direct_pct:>7.1f}%  {graph_pct:>10.1f}%"
            )
        lines.append("")
        lines.append(
            f"runtime: {self.timing['runtime_minutes_per_1k']:.2f} min/1k    "
            f"api cost: ${self.cost['total_usd_per_1k']:.4f}/1k"
        )
        if self.partial:
            lines.append("NOTE: partial report (run was interrupted)")
        return "\n".join(lines)


def run_eval(
    records: List[ClaimRecord],
    index: Index,
    backends: BackendSuite,
    *,
    mode: str = "dp_graphcheck",
    budget: PathBudget = PathBudget(),
    k: int = 10,
    direct_strategy: DocStrategy = DocStrategy.CONCAT,
    graphcheck_strategy: DocStrategy = DocStrategy.CONCAT_EACH,
    blank_token: str = DEFAULT_BLANK_TOKEN,
    include_definitions: bool = True,
    truncation_chars: int = 6000,
    gold_mode: bool = False,
    workers: int = 1,
    ledger: Optional[CostLedger] = None,
    abort_error_fraction: float = 0.10,
) -> Tuple[EvalReport, List[VerdictTrace]]:
    """Run the configured pipeline over every record and aggregate metrics.

    Per-claim failures are recorded (the claim scores NotSupported, flagged in
    its trace); once errored claims exceed ``abort_error_fraction`` of the
    dataset the whole run aborts with AbortThresholdError.  A KeyboardInterrupt
    drains the pool and returns a report marked partial.
    """
    if not records:
        raise DataError("dataset is empty")

    def resolve_gold(record: ClaimRecord):
        if not gold_mode or not record.gold_doc_ids:
            return None
        docs = []
        for doc_id in record.gold_doc_ids:
            doc = index.get_document(doc_id)
            if doc is not None:
                docs.append(doc)
        return docs or None

    def evaluate_one(record: ClaimRecord) -> VerdictTrace:
        try:
            return run_pipeline(
                record.text,
                index,
                backends,
                mode=mode,
                claim_id=record.id,
                pregenerated_graph=record.pregenerated_graph,
                gold_docs=resolve_gold(record),
                budget=budget,
                k=k,
                direct_strategy=direct_strategy,
                graphcheck_strategy=graphcheck_strategy,
                blank_token=blank_token,
                include_definitions=include_definitions,
                truncation_chars=truncation_chars,
            )
        except Exception as exc:  # noqa: BLE001 - errored claims are scored, not fatal
            logger.warning("claim %s failed: %s", record.id, exc)
            fallback = DIRECT if mode == "direct" else GRAPHCHECK
            return VerdictTrace(
                claim_id=record.id,
                claim_text=record.text,
                strategy=StrategyChoice(fallback, None),
                final=Label.NOT_SUPPORTED,
                error=str(exc),
            )

    started = time.monotonic()
    abort_limit = abort_error_fraction * len(records)
    rows: List[_Row] = []
    errored: List[str] = []
    partial = False

    executor = ThreadPoolExecutor(max_workers=max(1, workers))
    try:
        futures = [executor.submit(evaluate_one, record) for record in records]
        try:
            for record, future in zip(records, futures):
                trace = future.result()
                rows.append(_Row(record, trace))
                if trace.error:
                    errored.append(record.id)
                    if len(errored) > abort_limit:
                        raise AbortThresholdError(
                            f"{len(errored)} of {len(records)} claims errored "
                            f"(> {abort_error_fraction:.0%} threshold)"
                        )
        except KeyboardInterrupt:
            partial = True
            logger.warning("interrupted; draining workers and emitting partial report")
    finally:
        executor.shutdown(wait=False, cancel_futures=True)

    wall = time.monotonic() - started
    done = len(rows)
    per_hop: Dict[str, List[_Row]] = {}
    for row in rows:
        key = str(row.record.hops) if row.record.hops is not None else "unknown"
        per_hop.setdefault(key, []).append(row)

    totals = ledger.totals() if ledger is not None else None
    per_purpose = (
        {p: t.cost / done * 1000.0 for p, t in ledger.per_purpose().items()}
        if ledger is not None and done
        else {}
    )
    report = EvalReport(
        config={
            "mode": mode,
            "k": k,
            "path_limit": budget.limit,
            "seed": budget.seed,
            "evidence_mode": "open_book_gold" if gold_mode else "open_book",
            "direct_strategy": direct_strategy.value,
            "graphcheck_strategy": graphcheck_strategy.value,
            "n_claims": done,
        },
        overall=_group_metrics(rows),
        per_hop={hop: _group_metrics(group) for hop, group in per_hop.items()},
        errors=errored,
        cost={
            "total_usd_per_1k": (totals.cost / done * 1000.0) if totals and done else 0.0,
            "per_purpose_usd_per_1k": per_purpose,
        },
        timing={
            "wall_seconds": wall,
            "runtime_minutes_per_1k": (wall / 60.0) / done * 1000.0 if done else 0.0,
        },
        partial=partial,
    )
    return report, [row.trace for row in rows]
