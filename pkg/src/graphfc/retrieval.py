"""BM25 inverted index over a JSONL document corpus, plus evidence assembly.

The index is built in one pass, held in memory, and immutable afterwards, so
concurrent searches are safe.  Scoring is classic Okapi BM25 with the
+1-smoothed natural-log IDF.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75
CONCAT_SEPARATOR = "\n"
GOLD_SCORE = float("inf")

INDEX_MAGIC = "graphfc-index"
INDEX_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class CorpusError(ValueError):
    """Raised for malformed corpora (duplicate ids, empty corpus, bad rows)."""


def tokenize(text: str) -> List[str]:
    """Lowercase and split on non-alphanumeric runs; no stemming or stopwords."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str

    @property
    def display_text(self) -> str:
        """How the document is shown inside prompts."""
        return f"{self.title}: {self.text}"


@dataclass(frozen=True)
class EvidenceBundle:
    """Top-k retrieved documents and their concatenation.

    ``docs`` is ordered by score descending (ties by ascending doc_id); gold
    documents injected by merge_gold carry an infinite score sentinel and are
    displayed as "gold".
    """

    docs: Tuple  # of (Document, float)
    concat: str

    def __len__(self) -> int:
        return len(self.docs)

    @property
    def doc_ids(self) -> Tuple:
        return tuple(doc.doc_id for doc, _ in self.docs)

    @property
    def texts(self) -> Tuple:
        return tuple(doc.display_text for doc, _ in self.docs)

    @staticmethod
    def display_score(score: float) -> str:
        return "gold" if score == GOLD_SCORE else f"{score:.6f}"


def _bundle(scored_docs: Iterable[Tuple[Document, float]]) -> EvidenceBundle:
    docs = tuple(scored_docs)
    concat = CONCAT_SEPARATOR.join(doc.display_text for doc, _ in docs)
    return EvidenceBundle(docs, concat)


EMPTY_BUNDLE = _bundle(())


def bm25_idf(doc_count: int, doc_freq: int) -> float:
    return math.log(1.0 + (doc_count - doc_freq + 0.5) / (doc_freq + 0.5))


def bm25_term_score(
    tf: int, doc_freq: int, doc_count: int, doc_len: int, avg_doc_len: float,
    k1: float = DEFAULT_K1, b: float = DEFAULT_B,
) -> float:
    """Okapi BM25 contribution of one term occurrence in the query."""
    idf = bm25_idf(doc_count, doc_freq)
    norm = k1 * (1.0 - b + b * doc_len / avg_doc_len)
    return idf * tf * (k1 + 1.0) / (tf + norm)


class Index:
    """Immutable inverted index with BM25 search."""

    def __init__(self, documents, postings, doc_lengths, k1, b):
        self.documents: Tuple = tuple(documents)
        self.postings: dict = postings  # term -> list of (ordinal, tf)
        self.doc_lengths: Tuple = tuple(doc_lengths)
        self.k1 = k1
        self.b = b
        self.doc_count = len(self.documents)
        self.avg_doc_length = sum(self.doc_lengths) / self.doc_count
        self._by_id = {doc.doc_id: doc for doc in self.documents}

    def get_document(self, doc_id: str) -> Optional[Document]:
        return self._by_id.get(doc_id)


def build_index(corpus: Iterable[Document], k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> Index:
    """Index ``title + " " + text`` of every document.

    Raises CorpusError on an empty corpus or a duplicate doc_id, and
    ValueError for out-of-range BM25 parameters.
    """
    if k1 <= 0:
        raise ValueError(f"k1 must be > 0, got {k1}")
    if not 0 <= b <= 1:
        raise ValueError(f"b must be in [0, 1], got {b}")
    documents: List[Document] = []
    postings: dict = {}
    doc_lengths: List[int] = []
    seen = set()
    for ordinal, doc in enumerate(corpus):
        if doc.doc_id in seen:
            raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        tokens = tokenize(doc.title + " " + doc.text)
        counts: dict = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((ordinal, tf))
        documents.append(doc)
        doc_lengths.append(len(tokens))
    if not documents:
        raise CorpusError("corpus is empty")
    return Index(documents, postings, doc_lengths, k1, b)


def search(index: Index, query: str, k: int) -> EvidenceBundle:
    """Top-k Okapi BM25 search.

    Only documents containing at least one query term are scored; duplicate
    query terms contribute once per occurrence.  Results are ordered by score
    descending with ties broken by ascending doc_id.  An empty query yields an
    empty bundle.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    terms = tokenize(query)
    if not terms:
        return EMPTY_BUNDLE
    scores: dict = {}
    for term in terms:
        for ordinal, tf in index.postings.get(term, ()):
            contribution = bm25_term_score(
                tf,
                len(index.postings[term]),
                index.doc_count,
                index.doc_lengths[ordinal],
                index.avg_doc_length,
                index.k1,
                index.b,
            )
            scores[ordinal] = scores.get(ordinal, 0.0) + contribution
    ranked = sorted(
        scores.items(), key=lambda item: (-item[1], index.documents[item[0]].doc_id)
    )
    return _bundle((index.documents[o], s) for o, s in ranked[:k])


def merge_gold(retrieved: EvidenceBundle, gold: List[Document], k: int) -> EvidenceBundle:
    """Merge a gold document set into a retrieved bundle.

    Gold documents come first (deduplicated by doc_id, ordered by doc_id, with
    an infinite score sentinel), followed by the top retrieved non-gold
    documents; the result is truncated to at most k entries.
    """
    if len(gold) > k:
        raise ValueError(f"gold set size {len(gold)} exceeds k={k}")
    gold_by_id = {}
    for doc in gold:
        gold_by_id.setdefault(doc.doc_id, doc)
    merged = [(doc, GOLD_SCORE) for _, doc in sorted(gold_by_id.items())]
    for doc, score in retrieved.docs:
        if doc.doc_id not in gold_by_id:
            merged.append((doc, score))
    return _bundle(merged[:k])


def retrieve(index: Index, query: str, k: int, gold_docs: Optional[List[Document]] = None) -> EvidenceBundle:
    """Top-k search, with the gold document set merged in when supplied."""
    bundle = search(index, query, k)
    if gold_docs:
        bundle = merge_gold(bundle, list(gold_docs), k)
    return bundle


def read_corpus(path: str) -> Iterable[Document]:
    """Stream a JSONL corpus with keys "id", "title", "text"."""
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            try:
                doc = Document(str(row["id"]), str(row["title"]), str(row["text"]))
            except KeyError as exc:
                raise CorpusError(f"{path}:{lineno}: missing key {exc}") from exc
            if not doc.text:
                raise CorpusError(f"{path}:{lineno}: document text is empty")
            yield doc


def save_index(index: Index, path: str) -> None:
    payload = {
        "magic": INDEX_MAGIC,
        "version": INDEX_VERSION,
        "k1": index.k1,
        "b": index.b,
        "documents": [[d.doc_id, d.title, d.text] for d in index.documents],
        "doc_lengths": list(index.doc_lengths),
        "postings": {term: plist for term, plist in index.postings.items()},
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, ensure_ascii=False)


def load_index(path: str) -> Index:
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    if payload.get("magic") != INDEX_MAGIC:
        raise CorpusError(f"{path}: not a graphfc index file")
    if payload.get("version") != INDEX_VERSION:
        raise CorpusError(f"{path}: unsupported index version {payload.get('version')}")
    documents = [Document(*row) for row in payload["documents"]]
    postings = {
        term: [(int(o), int(tf)) for o, tf in plist]
        for term, plist in payload["postings"].items()
    }
    return Index(documents, postings, payload["doc_lengths"], payload["k1"], payload["b"])
