"""Claim graph data model and text-format parser.

A claim graph is the two-section plain-text structure produced by the
graph-construction prompt:

    # Latent Entities:
    (ENT1) [SEP] is [SEP] a musician
    # Triples:
    (ENT1) [SEP] is part of [SEP] Tall Birds

The "# Latent Entities" section defines each placeholder via a triplet whose
subject is the placeholder itself; the "# Triples" section holds the fact
triplets to verify.  Fields are separated by the literal token ``[SEP]``
(exactly three fields per line), and the object field may carry a trailing
prepositional phrase after a single ``[PREP]`` token.

Placeholders have the exact surface form ``(ENT<n>)`` with n >= 1 and no
leading zeros; anything else ("(ent1)", "(ENT 1)", "(ENT01)") is literal text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Optional, Union

LATENT_HEADER = "# Latent Entities:"
TRIPLES_HEADER = "# Triples:"
SEP_TOKEN = "[SEP]"
PREP_TOKEN = "[PREP]"
DEFAULT_BLANK_TOKEN = "<extra_id_0>"

_PLACEHOLDER_RE = re.compile(r"\(ENT([1-9][0-9]*)\)")
_SENTENCE_END = (".", "!", "?")


class UnboundPlaceholderError(ValueError):
    """Raised when rendering hits a placeholder with no binding or blank."""


@dataclass(frozen=True, order=True)
class PlaceholderId:
    """A latent-entity placeholder, identified by its 1-based index."""

    index: int

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError(f"placeholder index must be >= 1, got {self.index}")

    @property
    def surface(self) -> str:
        return f"(ENT{self.index})"

    def __str__(self) -> str:
        return self.surface


# A field of a triplet: literal text interleaved with placeholders.  The
# concatenation of all segments (placeholders in surface form) reproduces the
# source span exactly; adjacent literals are always merged.
Segment = Union[str, PlaceholderId]
Segments = tuple


def split_segments(text: str) -> Segments:
    """Split a field into literal/placeholder segments."""
    parts = _PLACEHOLDER_RE.split(text)
    segments: list = []
    for i, part in enumerate(parts):
        if i % 2 == 1:
            segments.append(PlaceholderId(int(part)))
        elif part:
            segments.append(part)
    return tuple(segments)


def segments_surface(segments: Segments) -> str:
    """Re-render segments with placeholders in their surface form."""
    return "".join(s.surface if isinstance(s, PlaceholderId) else s for s in segments)


def segments_placeholders(segments: Segments) -> set:
    return {s for s in segments if isinstance(s, PlaceholderId)}


def render_segments(
    segments: Segments,
    bindings: Optional[Mapping[PlaceholderId, str]] = None,
    blank: Optional[PlaceholderId] = None,
    blank_token: str = DEFAULT_BLANK_TOKEN,
    substitutions: Optional[Mapping[PlaceholderId, str]] = None,
    lenient: bool = False,
) -> str:
    """Render segments to text.

    Placeholders resolve, in order of precedence, against ``bindings``, the
    ``blank`` placeholder (rendered as ``blank_token``), then
    ``substitutions``.  An unresolved placeholder raises
    UnboundPlaceholderError unless ``lenient``, in which case it renders in
    surface form.
    """
    parts = []
    for seg in segments:
        if not isinstance(seg, PlaceholderId):
            parts.append(seg)
        elif bindings is not None and seg in bindings:
            parts.append(bindings[seg])
        elif blank is not None and seg == blank:
            parts.append(blank_token)
        elif substitutions is not None and seg in substitutions:
            parts.append(substitutions[seg])
        elif lenient:
            parts.append(seg.surface)
        else:
            raise UnboundPlaceholderError(f"unbound placeholder {seg.surface}")
    return "".join(parts)


@dataclass(frozen=True)
class Triplet:
    """One subject / relation / object fact, with an optional [PREP] tail."""

    subject: Segments
    relation: Segments
    object: Segments
    prep: Optional[Segments] = None

    @property
    def fields(self) -> tuple:
        if self.prep is None:
            return (self.subject, self.relation, self.object)
        return (self.subject, self.relation, self.object, self.prep)


def parse_triplet_line(line: str) -> Triplet:
    """Parse one ``a [SEP] b [SEP] c [PREP] d`` line.

    Raises ValueError with a human-readable reason on any format violation.
    """
    if line.count(PREP_TOKEN) > 1:
        raise ValueError(f"more than one {PREP_TOKEN} token")
    fields = line.split(SEP_TOKEN)
    if len(fields) != 3:
        raise ValueError(f"expected 3 {SEP_TOKEN}-delimited fields, got {len(fields)}")
    if PREP_TOKEN in fields[0] or PREP_TOKEN in fields[1]:
        raise ValueError(f"{PREP_TOKEN} must follow the object field")
    object_text = fields[2]
    prep_text = None
    if PREP_TOKEN in object_text:
        object_text, prep_text = object_text.split(PREP_TOKEN)
    parsed = []
    for name, text in (("subject", fields[0]), ("relation", fields[1]), ("object", object_text)):
        segments = split_segments(text.strip())
        if not segments:
            raise ValueError(f"empty {name} field")
        parsed.append(segments)
    prep = None
    if prep_text is not None:
        prep = split_segments(prep_text.strip())
        if not prep:
            raise ValueError("empty prepositional phrase after [PREP]")
    return Triplet(parsed[0], parsed[1], parsed[2], prep)


def triplet_to_line(t: Triplet) -> str:
    line = f" {SEP_TOKEN} ".join(
        segments_surface(s) for s in (t.subject, t.relation, t.object)
    )
    if t.prep is not None:
        line += f" {PREP_TOKEN} " + segments_surface(t.prep)
    return line


def placeholders_of(t: Triplet) -> set:
    """All placeholders occurring in subject, relation, object, and prep."""
    found: set = set()
    for segments in t.fields:
        found |= segments_placeholders(segments)
    return found


def render_sentence(
    t: Triplet,
    bindings: Optional[Mapping[PlaceholderId, str]] = None,
    blank: Optional[PlaceholderId] = None,
    blank_token: str = DEFAULT_BLANK_TOKEN,
    substitutions: Optional[Mapping[PlaceholderId, str]] = None,
) -> str:
    """Render a triplet as a natural-language sentence.

    Fields are joined by single spaces (prep appended last) and a terminal
    period is added unless the text already ends in '.', '!' or '?'.  Every
    placeholder must resolve via ``bindings``, ``blank`` (rendered as
    ``blank_token``) or ``substitutions``; otherwise UnboundPlaceholderError.
    """
    rendered = [
        render_segments(segments, bindings, blank, blank_token, substitutions)
        for segments in t.fields
    ]
    sentence = " ".join(rendered)
    if not sentence.endswith(_SENTENCE_END):
        sentence += "."
    return sentence


@dataclass(frozen=True)
class GraphDiagnostic:
    """One parser finding; "error" severity means no graph is produced."""

    severity: str  # "error" | "warning"
    kind: str  # malformed_line | undefined_placeholder | empty_section
    #            | duplicate_placeholder | orphan_latent_def | skipped_text
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: [{self.severity}] {self.kind}: {self.message}"


@dataclass(frozen=True)
class ClaimGraph:
    """Parsed claim graph: placeholder definitions plus fact triplets."""

    latent_defs: dict  # PlaceholderId -> Triplet, insertion-ordered
    triples: tuple  # of Triplet
    source_text: str = ""

    @property
    def placeholders(self) -> tuple:
        return tuple(self.latent_defs.keys())

    def definition_object_text(self, p: PlaceholderId) -> str:
        """Surface text of the definitional triplet's object (e.g. "a musician")."""
        return segments_surface(self.latent_defs[p].object)


def _error(kind: str, line: int, message: str) -> GraphDiagnostic:
    return GraphDiagnostic("error", kind, line, message)


def _warning(kind: str, line: int, message: str) -> GraphDiagnostic:
    return GraphDiagnostic("warning", kind, line, message)


def parse_graph(text: str):
    """Parse the two-section graph format.

    Returns ``(graph, diagnostics)``.  ``graph`` is None whenever at least one
    error-severity diagnostic was produced; warnings may accompany a valid
    graph.  Never raises on any input.
    """
    diagnostics: list = []
    latent_defs: dict = {}
    def_lines: dict = {}
    triples: list = []
    triple_lines: list = []
    triple_lines_seen = 0

    lines = text.split("\n")
    section = "preamble"
    skipped_preamble_at = None
    skipped_trailing_at = None

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if skipped_trailing_at is not None:
            continue
        if not line:
            continue
        if section == "preamble":
            if line == LATENT_HEADER:
                section = "latent"
            elif skipped_preamble_at is None:
                skipped_preamble_at = lineno
            continue
        if section == "latent" and line == LATENT_HEADER:
            diagnostics.append(
                _error("malformed_line", lineno, f"repeated {LATENT_HEADER!r} header")
            )
            continue
        if section == "latent" and line == TRIPLES_HEADER:
            section = "triples"
            continue
        if line.startswith("#"):
            # Unknown or out-of-place header: the graph region ends here.
            skipped_trailing_at = lineno
            continue
        if section == "latent":
            try:
                t = parse_triplet_line(line)
            except ValueError as exc:
                diagnostics.append(_error("malformed_line", lineno, str(exc)))
                continue
            if len(t.subject) != 1 or not isinstance(t.subject[0], PlaceholderId):
                diagnostics.append(
                    _error(
                        "malformed_line",
                        lineno,
                        "latent entity definition subject must be a single placeholder",
                    )
                )
                continue
            p = t.subject[0]
            if p in latent_defs:
                diagnostics.append(
                    _error(
                        "duplicate_placeholder",
                        lineno,
                        f"{p.surface} defined more than once",
                    )
                )
                continue
            latent_defs[p] = t
            def_lines[p] = lineno
        else:
            triple_lines_seen += 1
            try:
                t = parse_triplet_line(line)
            except ValueError as exc:
                diagnostics.append(_error("malformed_line", lineno, str(exc)))
                continue
            triples.append(t)
            triple_lines.append(lineno)

    if skipped_preamble_at is not None:
        diagnostics.append(
            _warning(
                "skipped_text",
                skipped_preamble_at,
                f"text before {LATENT_HEADER!r} was skipped",
            )
        )
    if skipped_trailing_at is not None:
        diagnostics.append(
            _warning(
                "skipped_text",
                skipped_trailing_at,
                "text after the graph sections was skipped",
            )
        )

    if section == "preamble":
        diagnostics.append(
            _error("empty_section", len(lines), f"missing {LATENT_HEADER!r} header")
        )
        return None, diagnostics
    if section == "latent":
        diagnostics.append(
            _error("empty_section", len(lines), f"missing {TRIPLES_HEADER!r} header")
        )
        return None, diagnostics
    if triple_lines_seen == 0:
        diagnostics.append(
            _error("empty_section", len(lines), f"{TRIPLES_HEADER!r} section is empty")
        )

    referenced: set = set()
    for t, lineno in zip(triples, triple_lines):
        for p in sorted(placeholders_of(t)):
            referenced.add(p)
            if p not in latent_defs:
                diagnostics.append(
                    _error(
                        "undefined_placeholder",
                        lineno,
                        f"{p.surface} used in {TRIPLES_HEADER!r} but never defined",
                    )
                )
    for p, t in latent_defs.items():
        # Placeholders referenced inside a definition body must be defined too.
        for q in sorted(placeholders_of(t) - {p}):
            if q not in latent_defs:
                diagnostics.append(
                    _error(
                        "undefined_placeholder",
                        def_lines[p],
                        f"{q.surface} used in the definition of {p.surface} but never defined",
                    )
                )
        if p not in referenced:
            diagnostics.append(
                _warning(
                    "orphan_latent_def",
                    def_lines[p],
                    f"{p.surface} is defined but never used in {TRIPLES_HEADER!r}",
                )
            )

    if any(d.severity == "error" for d in diagnostics):
        return None, diagnostics
    return ClaimGraph(latent_defs, tuple(triples), text), diagnostics


def serialize_graph(graph: ClaimGraph) -> str:
    """Render a graph back to its two-section text form."""
    lines = [LATENT_HEADER]
    lines.extend(triplet_to_line(t) for t in graph.latent_defs.values())
    lines.append(TRIPLES_HEADER)
    lines.extend(triplet_to_line(t) for t in graph.triples)
    return "\n".join(lines)
