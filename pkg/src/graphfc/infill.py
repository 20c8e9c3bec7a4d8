"""Latent-entity identification: path enumeration and retrieval-backed infilling.

Latent entities are grounded one at a time along an identification path.  For
each target, a retrieval query is built from the fact triplets that mention it
(and no other still-unidentified placeholder), the top-k documents are fetched,
and the infilling model fills a sentinel-marked blank given that context.
"""

from __future__ import annotations

import itertools
import math
import random
import re
from dataclasses import dataclass
from typing import Dict, List, Tuple

from .backend import PURPOSE_INFILL, BackendSuite
from .graph import (
    DEFAULT_BLANK_TOKEN,
    ClaimGraph,
    PlaceholderId,
    Triplet,
    placeholders_of,
    render_segments,
    render_sentence,
)
from .prompts import build_infill_prompt
from .retrieval import EvidenceBundle, Index, retrieve

# Above this many latent entities the permutation space is not materialized;
# sampling switches to rejection.
_FULL_ENUMERATION_MAX = 6


@dataclass(frozen=True)
class Path:
    """One latent-entity identification order."""

    order: Tuple  # of PlaceholderId

    def __len__(self) -> int:
        return len(self.order)

    def __str__(self) -> str:
        return " -> ".join(p.surface for p in self.order) if self.order else "(empty)"


@dataclass(frozen=True)
class PathBudget:
    limit: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.limit < 1:
            raise ValueError("path limit must be >= 1")


@dataclass(frozen=True)
class EntityStep:
    """Record of one infilling step."""

    target: PlaceholderId
    retrieval_query: str
    infill_query: str
    evidence: EvidenceBundle
    answer: str


@dataclass(frozen=True)
class InfillOutcome:
    path: Path
    bindings: dict  # PlaceholderId -> str
    per_entity: Tuple  # of EntityStep
    degraded: Tuple = ()  # placeholders bound via the empty-answer fallback


def enumerate_paths(graph: ClaimGraph, budget: PathBudget) -> List[Path]:
    """All identification orders, capped at the budget.

    With n placeholders: every permutation in lexicographic index order when
    n! fits the limit, otherwise ``limit`` distinct permutations sampled
    uniformly without replacement by a generator seeded with ``budget.seed``.
    A graph without latent entities yields one empty path.
    """
    keys = sorted(graph.latent_defs.keys())
    n = len(keys)
    if n == 0:
        return [Path(())]
    total = math.factorial(n)
    if total <= budget.limit:
        return [Path(p) for p in itertools.permutations(keys)]
    rng = random.Random(budget.seed)
    if n <= _FULL_ENUMERATION_MAX:
        population = list(itertools.permutations(keys))
        return [Path(p) for p in rng.sample(population, budget.limit)]
    chosen: List[tuple] = []
    seen = set()
    while len(chosen) < budget.limit:
        candidate = keys[:]
        rng.shuffle(candidate)
        candidate = tuple(candidate)
        if candidate not in seen:
            seen.add(candidate)
            chosen.append(candidate)
    return [Path(p) for p in chosen]


def _qualifying(triples, target: PlaceholderId, bound) -> List[Triplet]:
    """Triplets mentioning the target and no other unbound placeholder."""
    selected = []
    for t in triples:
        mentioned = placeholders_of(t)
        if target not in mentioned:
            continue
        if any(p != target and p not in bound for p in mentioned):
            continue
        selected.append(t)
    return selected


def reference_text(
    graph: ClaimGraph, target: PlaceholderId, bindings: Dict[PlaceholderId, str]
) -> str:
    """The target's definitional reference (e.g. "a musician"), with any bound
    placeholder inside it resolved."""
    return render_segments(graph.latent_defs[target].object, bindings, lenient=True)


def build_retrieval_query(
    graph: ClaimGraph, target: PlaceholderId, bindings: Dict[PlaceholderId, str]
) -> str:
    """Concatenate the qualifying fact triplets with the target replaced by
    its definitional reference text (e.g. "a musician").

    May return an empty string when the target co-occurs only with other
    unidentified placeholders.
    """
    reference = reference_text(graph, target, bindings)
    sentences = [
        render_sentence(t, bindings, substitutions={target: reference})
        for t in _qualifying(graph.triples, target, bindings)
    ]
    return " ".join(sentences)


def build_infill_query(
    graph: ClaimGraph,
    target: PlaceholderId,
    bindings: Dict[PlaceholderId, str],
    blank_token: str = DEFAULT_BLANK_TOKEN,
) -> str:
    """Concatenate the qualifying fact triplets, then the target's own
    definitional triplet last, with the target rendered as ``blank_token``."""
    sentences = [
        render_sentence(t, bindings, blank=target, blank_token=blank_token)
        for t in _qualifying(graph.triples, target, bindings)
    ]
    definition = graph.latent_defs[target]
    # The definitional sentence is appended unconditionally; any other
    # still-unbound placeholder inside it renders in surface form.
    leftover = {
        p: p.surface
        for p in placeholders_of(definition)
        if p != target and p not in bindings
    }
    sentences.append(
        render_sentence(
            definition, bindings, blank=target, blank_token=blank_token,
            substitutions=leftover,
        )
    )
    return " ".join(sentences)


def extract_answer(text: str, blank_token: str) -> str:
    """First line of the model output, with a leading sentinel echo removed."""
    answer = text.strip().split("\n", 1)[0]
    if answer.startswith(blank_token):
        answer = answer[len(blank_token):]
    return answer.strip()


_PLACEHOLDER_SURFACE_RE = re.compile(r"\(ENT[1-9][0-9]*\)")


def _sanitize_binding(answer: str) -> str:
    """Bound strings must not contain placeholder surface forms."""
    cleaned = _PLACEHOLDER_SURFACE_RE.sub("", answer)
    return " ".join(cleaned.split())


def infill_path(
    graph: ClaimGraph,
    path: Path,
    index: Index,
    backends: BackendSuite,
    k: int,
    blank_token: str = DEFAULT_BLANK_TOKEN,
    gold_docs=None,
) -> InfillOutcome:
    """Identify every placeholder along the path, threading bindings forward.

    An empty model answer degrades to the definitional reference text instead
    of failing; backend errors propagate.
    """
    expected = set(graph.latent_defs.keys())
    if set(path.order) != expected or len(path.order) != len(expected):
        raise ValueError(f"path {path} is not a permutation of the graph placeholders")
    bindings: Dict[PlaceholderId, str] = {}
    steps: List[EntityStep] = []
    degraded: List[PlaceholderId] = []
    for target in path.order:
        reference = reference_text(graph, target, bindings)
        retrieval_query = build_retrieval_query(graph, target, bindings)
        if not retrieval_query:
            # Isolated target: fall back to its definitional sentence.
            definition = graph.latent_defs[target]
            leftover = {
                p: p.surface
                for p in placeholders_of(definition)
                if p != target and p not in bindings
            }
            substitutions = dict(leftover)
            substitutions[target] = reference
            retrieval_query = render_sentence(definition, bindings, substitutions=substitutions)
        evidence = retrieve(index, retrieval_query, k, gold_docs)
        infill_query = build_infill_query(graph, target, bindings, blank_token)
        prompt = build_infill_prompt(evidence.concat, infill_query)
        response = backends.complete(PURPOSE_INFILL, prompt)
        answer = _sanitize_binding(extract_answer(response.text, blank_token))
        if not answer:
            answer = _sanitize_binding(reference) or "unknown"
            degraded.append(target)
        bindings[target] = answer
        steps.append(EntityStep(target, retrieval_query, infill_query, evidence, answer))
    return InfillOutcome(path, bindings, tuple(steps), tuple(degraded))
