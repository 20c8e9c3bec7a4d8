"""Triplet, path, and claim verification, plus the adaptive orchestrator.

Verification is a conjunction over triplets within a path and a disjunction
over paths: a claim is Supported when at least one identification path yields
a fully supported graph.  Simple claims can skip all of that: a lightweight
selector routes them to direct verification against evidence retrieved with
the raw claim.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from .backend import (
    PURPOSE_GRAPH,
    PURPOSE_INFILL,
    PURPOSE_SELECT,
    PURPOSE_VERIFY,
    BackendSuite,
)
from .graph import (
    DEFAULT_BLANK_TOKEN,
    ClaimGraph,
    Triplet,
    parse_graph,
    render_sentence,
)
from .infill import InfillOutcome, Path, PathBudget, enumerate_paths, infill_path
from .prompts import build_graph_prompt, build_select_prompt, build_verify_prompt
from .retrieval import CONCAT_SEPARATOR, EvidenceBundle, Index, retrieve


class Label(str, Enum):
    SUPPORTED = "Supported"
    NOT_SUPPORTED = "NotSupported"


class DocStrategy(str, Enum):
    """How retrieved documents are presented to the verifier."""

    CONCAT = "concat"
    EACH = "each"
    CONCAT_EACH = "concat_each"


DIRECT = "Direct"
GRAPHCHECK = "GraphCheck"

AFFIRMATIVE_ANSWERS = frozenset({"true", "yes", "supported"})
NEGATIVE_ANSWERS = frozenset({"false", "no", "not"})

DEFAULT_K = 10
DEFAULT_PATH_LIMIT = 5
DEFAULT_TRUNCATION_CHARS = 6000

_FIRST_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


def normalize_answer(text: str) -> str:
    """Case-folded first word of a model answer, punctuation stripped."""
    match = _FIRST_WORD_RE.search(text.strip().casefold())
    return match.group(0) if match else ""


def is_affirmative(text: str) -> bool:
    return normalize_answer(text) in AFFIRMATIVE_ANSWERS


@dataclass(frozen=True)
class StrategyChoice:
    value: str  # "Direct" | "GraphCheck"
    selector_answer: Optional[str] = None


@dataclass(frozen=True)
class TripletJudgment:
    sentence: str
    label: Label
    evidence_index: int = -1  # index of the deciding evidence input, -1 if none
    note: str = ""


@dataclass(frozen=True)
class PathRecord:
    outcome: InfillOutcome
    judgments: Tuple  # of TripletJudgment
    label: Label


@dataclass
class VerdictTrace:
    """Full decision record for one claim."""

    claim_id: str
    claim_text: str
    strategy: StrategyChoice
    final: Label
    direct_evidence: Optional[EvidenceBundle] = None
    direct_judgment: Optional[TripletJudgment] = None
    paths: List[PathRecord] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    input_tokens: int = 0
    output_tokens: int = 0
    calls: Dict[str, int] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)
    error: str = ""


def _as_suite(backend) -> BackendSuite:
    if isinstance(backend, BackendSuite):
        return backend
    return BackendSuite.single(backend)


def truncated_concat(bundle: EvidenceBundle, budget: int) -> str:
    """Concatenation capped at ``budget`` chars by dropping whole documents
    from the tail (the first document is hard-truncated if it alone overflows)."""
    texts = bundle.texts
    if not texts:
        return ""
    kept = [texts[0][:budget]]
    total = len(kept[0])
    for text in texts[1:]:
        extra = len(CONCAT_SEPARATOR) + len(text)
        if total + extra > budget:
            break
        kept.append(text)
        total += extra
    return CONCAT_SEPARATOR.join(kept)


def evidence_texts(
    bundle: EvidenceBundle, strategy: DocStrategy, budget: int = DEFAULT_TRUNCATION_CHARS
) -> List[str]:
    """Evidence inputs for the verifier under a document-level strategy."""
    each = [text[:budget] for text in bundle.texts]
    if strategy is DocStrategy.CONCAT:
        return [truncated_concat(bundle, budget)]
    if strategy is DocStrategy.EACH:
        return each
    return [truncated_concat(bundle, budget)] + each


def _judge_sentence(sentence: str, texts: List[str], backends: BackendSuite) -> Tuple[Label, int]:
    for i, evidence in enumerate(texts):
        response = backends.complete(PURPOSE_VERIFY, build_verify_prompt(evidence, sentence))
        if is_affirmative(response.text):
            return Label.SUPPORTED, i
    return Label.NOT_SUPPORTED, -1


def verify_sentence(sentence: str, evidence_texts: List[str], backend) -> Label:
    """Check one sentence against evidence inputs in order, short-circuiting
    on the first affirmative answer."""
    label, _ = _judge_sentence(sentence, list(evidence_texts), _as_suite(backend))
    return label


def verify_triplet(
    t: Triplet,
    bindings: Dict,
    index: Index,
    backend,
    k: int = DEFAULT_K,
    strategy: DocStrategy = DocStrategy.CONCAT_EACH,
    truncation_chars: int = DEFAULT_TRUNCATION_CHARS,
    gold_docs=None,
) -> TripletJudgment:
    """Render the triplet, retrieve evidence with the rendered sentence as the
    query, and verify it under the given document-level strategy."""
    backends = _as_suite(backend)
    sentence = render_sentence(t, bindings)
    bundle = retrieve(index, sentence, k, gold_docs)
    if not bundle.docs:
        return TripletJudgment(sentence, Label.NOT_SUPPORTED, -1, "no evidence retrieved")
    texts = evidence_texts(bundle, strategy, truncation_chars)
    label, deciding = _judge_sentence(sentence, texts, backends)
    return TripletJudgment(sentence, label, deciding)


def path_triplets(graph: ClaimGraph, include_definitions: bool = True) -> List[Triplet]:
    """Verification order: fact triplets first, then definitional triplets."""
    triplets = list(graph.triples)
    if include_definitions:
        triplets.extend(graph.latent_defs.values())
    return triplets


def verify_path(
    graph: ClaimGraph,
    outcome: InfillOutcome,
    index: Index,
    backend,
    k: int = DEFAULT_K,
    strategy: DocStrategy = DocStrategy.CONCAT_EACH,
    include_definitions: bool = True,
    truncation_chars: int = DEFAULT_TRUNCATION_CHARS,
    gold_docs=None,
) -> Tuple[Label, List[TripletJudgment]]:
    """Verify every triplet under the path's bindings, stopping at the first
    failure."""
    backends = _as_suite(backend)
    judgments: List[TripletJudgment] = []
    for t in path_triplets(graph, include_definitions):
        judgment = verify_triplet(
            t, outcome.bindings, index, backends, k, strategy, truncation_chars, gold_docs
        )
        judgments.append(judgment)
        if judgment.label is Label.NOT_SUPPORTED:
            return Label.NOT_SUPPORTED, judgments
    return Label.SUPPORTED, judgments


def verify_claim_graphcheck(
    graph: ClaimGraph,
    index: Index,
    backend,
    budget: PathBudget = PathBudget(),
    k: int = DEFAULT_K,
    strategy: DocStrategy = DocStrategy.CONCAT_EACH,
    blank_token: str = DEFAULT_BLANK_TOKEN,
    include_definitions: bool = True,
    truncation_chars: int = DEFAULT_TRUNCATION_CHARS,
    gold_docs=None,
) -> Tuple[Label, List[PathRecord]]:
    """Infill and verify each identification path, returning Supported as soon
    as one path passes."""
    backends = _as_suite(backend)
    records: List[PathRecord] = []
    for path in enumerate_paths(graph, budget):
        outcome = infill_path(graph, path, index, backends, k, blank_token, gold_docs)
        label, judgments = verify_path(
            graph, outcome, index, backends, k, strategy,
            include_definitions, truncation_chars, gold_docs,
        )
        records.append(PathRecord(outcome, tuple(judgments), label))
        if label is Label.SUPPORTED:
            return Label.SUPPORTED, records
    return Label.NOT_SUPPORTED, records


def _direct_judged(
    claim_text: str,
    bundle: EvidenceBundle,
    backends: BackendSuite,
    strategy: DocStrategy,
    truncation_chars: int,
) -> TripletJudgment:
    if not bundle.docs:
        return TripletJudgment(claim_text, Label.NOT_SUPPORTED, -1, "no evidence retrieved")
    texts = evidence_texts(bundle, strategy, truncation_chars)
    label, deciding = _judge_sentence(claim_text, texts, backends)
    return TripletJudgment(claim_text, label, deciding)


def direct_verify(
    claim_text: str,
    index: Index,
    backend,
    k: int = DEFAULT_K,
    strategy: DocStrategy = DocStrategy.CONCAT,
    truncation_chars: int = DEFAULT_TRUNCATION_CHARS,
    gold_docs=None,
) -> Tuple[Label, EvidenceBundle]:
    """One-shot verification of the claim against its own retrieval results."""
    backends = _as_suite(backend)
    bundle = retrieve(index, claim_text, k, gold_docs)
    judgment = _direct_judged(claim_text, bundle, backends, strategy, truncation_chars)
    return judgment.label, bundle


def select_strategy(
    claim_text: str,
    index: Index,
    backend,
    k: int = DEFAULT_K,
    truncation_chars: int = DEFAULT_TRUNCATION_CHARS,
    gold_docs=None,
    evidence: Optional[EvidenceBundle] = None,
) -> StrategyChoice:
    """Ask whether the claim-level evidence suffices; affirmative routes to
    Direct, anything else to the full graph pipeline."""
    backends = _as_suite(backend)
    if evidence is None:
        evidence = retrieve(index, claim_text, k, gold_docs)
    concat = truncated_concat(evidence, truncation_chars)
    response = backends.complete(PURPOSE_SELECT, build_select_prompt(concat, claim_text))
    value = DIRECT if is_affirmative(response.text) else GRAPHCHECK
    return StrategyChoice(value, response.text)


def _obtain_graph(claim_text, pregenerated_graph, backends, notes):
    """Parse a pregenerated graph or construct one with the graph backend.

    Returns None (degraded mode) when the text does not parse.
    """
    if pregenerated_graph is not None:
        source = pregenerated_graph
    else:
        response = backends.complete(PURPOSE_GRAPH, build_graph_prompt(claim_text))
        source = response.text
    graph, diagnostics = parse_graph(source)
    for diag in diagnostics:
        notes.append(f"graph {diag}")
    return graph


def dp_graphcheck(
    claim_text: str,
    index: Index,
    backend,
    *,
    claim_id: str = "",
    pregenerated_graph: Optional[str] = None,
    gold_docs=None,
    budget: PathBudget = PathBudget(),
    k: int = DEFAULT_K,
    direct_strategy: DocStrategy = DocStrategy.CONCAT,
    graphcheck_strategy: DocStrategy = DocStrategy.CONCAT_EACH,
    blank_token: str = DEFAULT_BLANK_TOKEN,
    include_definitions: bool = True,
    truncation_chars: int = DEFAULT_TRUNCATION_CHARS,
) -> VerdictTrace:
    """Adaptive verification: retrieve once with the claim, let the selector
    pick Direct or the graph pipeline, and run the chosen branch.

    A graph that fails to parse degrades to Direct with a trace warning.
    """
    started = time.monotonic()
    counted = _as_suite(backend).counted()
    notes: List[str] = []

    bundle = retrieve(index, claim_text, k, gold_docs)
    choice = select_strategy(
        claim_text, index, counted, k, truncation_chars, evidence=bundle
    )
    if choice.value == GRAPHCHECK and choice.selector_answer is not None:
        normalized = normalize_answer(choice.selector_answer)
        if normalized not in AFFIRMATIVE_ANSWERS and normalized not in NEGATIVE_ANSWERS:
            notes.append(
                f"selector answer {choice.selector_answer!r} unparseable; using GraphCheck"
            )

    executed = choice.value
    direct_judgment = None
    paths: List[PathRecord] = []
    if choice.value == DIRECT:
        direct_judgment = _direct_judged(
            claim_text, bundle, counted, direct_strategy, truncation_chars
        )
        final = direct_judgment.label
    else:
        graph = _obtain_graph(claim_text, pregenerated_graph, counted, notes)
        if graph is None:
            notes.append("graph unusable; falling back to Direct verification")
            executed = DIRECT
            direct_judgment = _direct_judged(
                claim_text, bundle, counted, direct_strategy, truncation_chars
            )
            final = direct_judgment.label
        else:
            final, paths = verify_claim_graphcheck(
                graph, index, counted, budget, k, graphcheck_strategy,
                blank_token, include_definitions, truncation_chars, gold_docs,
            )

    return _finish_trace(
        claim_id, claim_text, StrategyChoice(executed, choice.selector_answer),
        final, bundle, direct_judgment, paths, notes, counted, started,
    )


def run_pipeline(
    claim_text: str,
    index: Index,
    backend,
    *,
    mode: str = "dp_graphcheck",
    claim_id: str = "",
    pregenerated_graph: Optional[str] = None,
    gold_docs=None,
    budget: PathBudget = PathBudget(),
    k: int = DEFAULT_K,
    direct_strategy: DocStrategy = DocStrategy.CONCAT,
    graphcheck_strategy: DocStrategy = DocStrategy.CONCAT_EACH,
    blank_token: str = DEFAULT_BLANK_TOKEN,
    include_definitions: bool = True,
    truncation_chars: int = DEFAULT_TRUNCATION_CHARS,
) -> VerdictTrace:
    """Run the configured pipeline variant on one claim.

    ``mode`` is one of "dp_graphcheck" (adaptive), "graphcheck" (always the
    graph pipeline), or "direct" (always one-shot verification).
    """
    if mode == "dp_graphcheck":
        return dp_graphcheck(
            claim_text, index, backend,
            claim_id=claim_id, pregenerated_graph=pregenerated_graph,
            gold_docs=gold_docs, budget=budget, k=k,
            direct_strategy=direct_strategy, graphcheck_strategy=graphcheck_strategy,
            blank_token=blank_token, include_definitions=include_definitions,
            truncation_chars=truncation_chars,
        )
    if mode not in ("direct", "graphcheck"):
        raise ValueError(f"unknown pipeline mode {mode!r}")

    started = time.monotonic()
    counted = _as_suite(backend).counted()
    notes: List[str] = []
    bundle = retrieve(index, claim_text, k, gold_docs)
    direct_judgment = None
    paths: List[PathRecord] = []
    executed = DIRECT if mode == "direct" else GRAPHCHECK

    if mode == "direct":
        direct_judgment = _direct_judged(
            claim_text, bundle, counted, direct_strategy, truncation_chars
        )
        final = direct_judgment.label
    else:
        graph = _obtain_graph(claim_text, pregenerated_graph, counted, notes)
        if graph is None:
            notes.append("graph unusable; falling back to Direct verification")
            executed = DIRECT
            direct_judgment = _direct_judged(
                claim_text, bundle, counted, direct_strategy, truncation_chars
            )
            final = direct_judgment.label
        else:
            final, paths = verify_claim_graphcheck(
                graph, index, counted, budget, k, graphcheck_strategy,
                blank_token, include_definitions, truncation_chars, gold_docs,
            )

    return _finish_trace(
        claim_id, claim_text, StrategyChoice(executed, None), final,
        bundle, direct_judgment, paths, notes, counted, started,
    )


def _finish_trace(
    claim_id, claim_text, strategy, final, bundle, direct_judgment, paths,
    notes, counted, started,
) -> VerdictTrace:
    calls = {}
    input_tokens = 0
    output_tokens = 0
    for purpose, wrapper in (
        (PURPOSE_GRAPH, counted.graph_construction),
        (PURPOSE_INFILL, counted.infilling),
        (PURPOSE_VERIFY, counted.verification),
        (PURPOSE_SELECT, counted.selection),
    ):
        calls[purpose] = wrapper.calls
        input_tokens += wrapper.input_tokens
        output_tokens += wrapper.output_tokens
    return VerdictTrace(
        claim_id=claim_id,
        claim_text=claim_text,
        strategy=strategy,
        final=final,
        direct_evidence=bundle,
        direct_judgment=direct_judgment,
        paths=paths,
        timings={"total_s": time.monotonic() - started},
        input_tokens=input_tokens,
        output_tokens=output_tokens,
        calls=calls,
        notes=notes,
    )


def _bundle_to_dict(bundle: Optional[EvidenceBundle]) -> Optional[List[dict]]:
    if bundle is None:
        return None
    return [
        {"id": doc.doc_id, "score": EvidenceBundle.display_score(score)}
        for doc, score in bundle.docs
    ]


def _judgment_to_dict(judgment: Optional[TripletJudgment]) -> Optional[dict]:
    if judgment is None:
        return None
    row = {
        "sentence": judgment.sentence,
        "label": judgment.label.value,
        "evidence_index": judgment.evidence_index,
    }
    if judgment.note:
        row["note"] = judgment.note
    return row


def trace_to_dict(trace: VerdictTrace) -> dict:
    """JSON-serializable form of a trace (one object per claim)."""
    return {
        "claim_id": trace.claim_id,
        "claim": trace.claim_text,
        "strategy": {
            "value": trace.strategy.value,
            "selector_answer": trace.strategy.selector_answer,
        },
        "final": trace.final.value,
        "direct_evidence": _bundle_to_dict(trace.direct_evidence),
        "direct_judgment": _judgment_to_dict(trace.direct_judgment),
        "paths": [
            {
                "order": [p.surface for p in record.outcome.path.order],
                "bindings": {
                    p.surface: value for p, value in record.outcome.bindings.items()
                },
                "degraded": [p.surface for p in record.outcome.degraded],
                "per_entity": [
                    {
                        "target": step.target.surface,
                        "retrieval_query": step.retrieval_query,
                        "infill_query": step.infill_query,
                        "evidence": _bundle_to_dict(step.evidence),
                        "answer": step.answer,
                    }
                    for step in record.outcome.per_entity
                ],
                "judgments": [_judgment_to_dict(j) for j in record.judgments],
                "label": record.label.value,
            }
            for record in trace.paths
        ],
        "tokens": {"input": trace.input_tokens, "output": trace.output_tokens},
        "calls": dict(trace.calls),
        "notes": list(trace.notes),
        "error": trace.error,
        "timings": dict(trace.timings),
    }


def format_trace_dict(row: dict) -> str:
    """Human-readable tree for a serialized trace object."""

    def mark(label: str) -> str:
        return "+" if label == Label.SUPPORTED.value else "x"

    lines = [f"claim {row.get('claim_id') or '-'}: {row['final']}"]
    strategy = row.get("strategy", {})
    answer = strategy.get("selector_answer")
    suffix = f' (selector answered "{answer}")' if answer is not None else ""
    lines.append(f"  strategy: {strategy.get('value', '?')}{suffix}")
    evidence = row.get("direct_evidence")
    if evidence is not None:
        shown = ", ".join(f"{e['id']}={e['score']}" for e in evidence[:5])
        lines.append(
            f"  claim evidence: {len(evidence)} docs" + (f" ({shown})" if shown else "")
        )
    judgment = row.get("direct_judgment")
    if judgment is not None:
        lines.append(f"  {mark(judgment['label'])} {judgment['sentence']}")
    for i, record in enumerate(row.get("paths", []), start=1):
        order = " -> ".join(record["order"]) if record["order"] else "(empty)"
        lines.append(f"  path {i}: {order}  [{record['label']}]")
        for step in record.get("per_entity", []):
            lines.append(f"    {step['target']} := {step['answer']!r}")
        for j in record.get("judgments", []):
            where = f"  (evidence {j['evidence_index']})" if j["evidence_index"] >= 0 else ""
            lines.append(f"    {mark(j['label'])} {j['sentence']}{where}")
    for note in row.get("notes", []):
        lines.append(f"  note: {note}")
    if row.get("error"):
        lines.append(f"  error: {row['error']}")
    lines.append(f"  final: {row['final']}")
    return "\n".join(lines)


def format_trace(trace: VerdictTrace) -> str:
    """Human-readable tree for terminal output."""
    return format_trace_dict(trace_to_dict(trace))
