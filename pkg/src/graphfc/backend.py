"""Text-generation backends: networked HTTP, scripted (for tests/replay),
and a caching wrapper, plus request/cost accounting.

All backends expose ``model`` and ``complete(GenRequest) -> GenResponse`` and
are safe to share across threads.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Union

import requests

logger = logging.getLogger(__name__)

GREEDY = "greedy"
SAMPLE = "sample"

PURPOSE_GRAPH = "graph_construction"
PURPOSE_INFILL = "infilling"
PURPOSE_VERIFY = "verification"
PURPOSE_SELECT = "selection"
PURPOSES = (PURPOSE_GRAPH, PURPOSE_INFILL, PURPOSE_VERIFY, PURPOSE_SELECT)


class BackendError(RuntimeError):
    """A generation call failed after exhausting retries."""

    def __init__(self, message: str, status: Optional[int] = None, body: str = ""):
        super().__init__(message)
        self.status = status
        self.body = body


@dataclass(frozen=True)
class GenRequest:
    prompt: str
    max_new_tokens: int = 32
    temperature: float = 0.0
    top_p: float = 1.0
    decode_mode: str = GREEDY  # "greedy" | "sample"
    purpose: str = PURPOSE_VERIFY

    def __post_init__(self) -> None:
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.decode_mode not in (GREEDY, SAMPLE):
            raise ValueError(f"unknown decode_mode {self.decode_mode!r}")


@dataclass(frozen=True)
class GenResponse:
    text: str
    input_tokens: int = 0
    output_tokens: int = 0
    latency: float = 0.0  # seconds
    from_cache: bool = False


@dataclass
class PurposeTotals:
    requests: int = 0
    cache_hits: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    wall_seconds: float = 0.0
    cost: float = 0.0


class CostLedger:
    """Thread-safe accumulator of request counts, token usage, and USD cost.

    ``prices`` maps a model identifier to ``(input_usd_per_1k_tokens,
    output_usd_per_1k_tokens)``.  Cache hits count as requests but contribute
    neither tokens nor cost.
    """

    def __init__(self, prices: Optional[Dict[str, tuple]] = None):
        self.prices = dict(prices or {})
        self._lock = threading.Lock()
        self._per_purpose: Dict[str, PurposeTotals] = {}

    def record(self, purpose: str, model: str, response: GenResponse) -> None:
        with self._lock:
            totals = self._per_purpose.setdefault(purpose, PurposeTotals())
            totals.requests += 1
            totals.wall_seconds += response.latency
            if response.from_cache:
                totals.cache_hits += 1
                return
            totals.input_tokens += response.input_tokens
            totals.output_tokens += response.output_tokens
            in_price, out_price = self.prices.get(model, (0.0, 0.0))
            totals.cost += (
                response.input_tokens / 1000.0 * in_price
                + response.output_tokens / 1000.0 * out_price
            )

    def per_purpose(self) -> Dict[str, PurposeTotals]:
        with self._lock:
            return {p: replace_totals(t) for p, t in self._per_purpose.items()}

    def totals(self) -> PurposeTotals:
        out = PurposeTotals()
        for totals in self.per_purpose().values():
            out.requests += totals.requests
            out.cache_hits += totals.cache_hits
            out.input_tokens += totals.input_tokens
            out.output_tokens += totals.output_tokens
            out.wall_seconds += totals.wall_seconds
            out.cost += totals.cost
        return out


def replace_totals(t: PurposeTotals) -> PurposeTotals:
    return PurposeTotals(
        t.requests, t.cache_hits, t.input_tokens, t.output_tokens, t.wall_seconds, t.cost
    )


def approx_token_count(text: str) -> int:
    """Whitespace token count; used where the provider reports no usage."""
    return len(text.split())


class HttpBackend:
    """Client for a chat/completions-style JSON endpoint.

    Sends ``{"model", "messages", "max_tokens", "temperature", "top_p"}`` and
    reads the first choice's message content plus the usage block.  Failures
    are retried with jittered exponential backoff up to ``max_attempts``.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str = "",
        timeout: float = 60.0,
        max_attempts: int = 3,
        retry_base_delay: float = 1.0,
        ledger: Optional[CostLedger] = None,
        session: Optional[requests.Session] = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.retry_base_delay = retry_base_delay
        self.ledger = ledger
        self._session = session or requests.Session()
        self._rng = random.Random()

    def _payload(self, req: GenRequest) -> dict:
        temperature = 0.0 if req.decode_mode == GREEDY else req.temperature
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "max_tokens": req.max_new_tokens,
            "temperature": temperature,
            "top_p": req.top_p,
        }

    def complete(self, req: GenRequest) -> GenResponse:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        started = time.monotonic()
        last_status: Optional[int] = None
        last_body = ""
        for attempt in range(self.max_attempts):
            if attempt:
                delay = self.retry_base_delay * (2 ** (attempt - 1))
                time.sleep(delay * self._rng.uniform(0.5, 1.5))
            try:
                response = self._session.post(
                    self.endpoint,
                    json=self._payload(req),
                    headers=headers,
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_status, last_body = None, str(exc)
                logger.warning("backend request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if response.status_code != 200:
                last_status = response.status_code
                last_body = response.text[:200]
                logger.warning(
                    "backend HTTP %d (attempt %d): %s", last_status, attempt + 1, last_body
                )
                continue
            payload = response.json()
            choice = payload["choices"][0]
            text = choice.get("message", {}).get("content")
            if text is None:
                text = choice.get("text", "")
            usage = payload.get("usage", {})
            result = GenResponse(
                text=text,
                input_tokens=int(usage.get("prompt_tokens", 0)),
                output_tokens=int(usage.get("completion_tokens", 0)),
                latency=time.monotonic() - started,
            )
            if self.ledger is not None:
                self.ledger.record(req.purpose, self.model, result)
            return result
        raise BackendError(
            f"request failed after {self.max_attempts} attempts"
            + (f" (HTTP {last_status})" if last_status else ""),
            status=last_status,
            body=last_body,
        )


Matcher = Union[str, Callable[[str], bool]]
Response = Union[str, Callable[[str], str]]


@dataclass
class _Registration:
    matcher: Matcher
    response: Response

    def matches(self, prompt: str) -> bool:
        if callable(self.matcher):
            return bool(self.matcher(prompt))
        return prompt == self.matcher

    def answer(self, prompt: str) -> str:
        if callable(self.response):
            return self.response(prompt)
        return self.response


class ScriptedBackend:
    """Deterministic backend answering from registered (matcher, response) pairs.

    A matcher is an exact prompt string or a predicate.  When several
    registrations match, repeated matching calls consume them in registration
    order, sticking at the last one.  An unmatched prompt raises BackendError
    naming the prompt's first 80 characters.
    """

    def __init__(self, model: str = "scripted", ledger: Optional[CostLedger] = None):
        self.model = model
        self.ledger = ledger
        self._registrations: List[_Registration] = []
        self._lock = threading.Lock()
        self._seen: Dict[tuple, int] = {}
        self.calls: List[GenRequest] = []

    def register(self, matcher: Matcher, response: Response) -> "ScriptedBackend":
        self._registrations.append(_Registration(matcher, response))
        return self

    def register_contains(self, *needles: str, response: Response) -> "ScriptedBackend":
        return self.register(lambda p, n=needles: all(x in p for x in n), response)

    def register_suffix(self, suffix: str, response: Response) -> "ScriptedBackend":
        return self.register(lambda p, s=suffix: p.endswith(s), response)

    @property
    def call_count(self) -> int:
        with self._lock:
            return len(self.calls)

    def reset_calls(self) -> None:
        with self._lock:
            self.calls.clear()
            self._seen.clear()

    def complete(self, req: GenRequest) -> GenResponse:
        started = time.monotonic()
        matched = [
            (i, r) for i, r in enumerate(self._registrations) if r.matches(req.prompt)
        ]
        with self._lock:
            self.calls.append(req)
            if not matched:
                raise BackendError(
                    f"no scripted response for prompt: {req.prompt[:80]!r}"
                )
            key = tuple(i for i, _ in matched)
            turn = self._seen.get(key, 0)
            self._seen[key] = turn + 1
        registration = matched[min(turn, len(matched) - 1)][1]
        text = registration.answer(req.prompt)
        result = GenResponse(
            text=text,
            input_tokens=approx_token_count(req.prompt),
            output_tokens=approx_token_count(text),
            latency=time.monotonic() - started,
        )
        if self.ledger is not None:
            self.ledger.record(req.purpose, self.model, result)
        return result


def load_script(path: str) -> List[_Registration]:
    """Load scripted registrations from a JSON file.

    The file holds a list of objects with a ``response`` string plus matcher
    keys: ``equals``, ``prefix``, ``suffix``, and/or ``contains`` (string or
    list of strings; every listed needle must appear).  All given matcher keys
    must hold for the registration to match.
    """
    with open(path, "r", encoding="utf-8") as handle:
        entries = json.load(handle)
    registrations = []
    for entry in entries:
        conditions = []
        if "equals" in entry:
            conditions.append(lambda p, v=entry["equals"]: p == v)
        if "prefix" in entry:
            conditions.append(lambda p, v=entry["prefix"]: p.startswith(v))
        if "suffix" in entry:
            conditions.append(lambda p, v=entry["suffix"]: p.endswith(v))
        if "contains" in entry:
            needles = entry["contains"]
            if isinstance(needles, str):
                needles = [needles]
            conditions.append(lambda p, v=tuple(needles): all(n in p for n in v))
        if not conditions:
            raise ValueError("script entry has no matcher key")
        matcher = lambda p, cs=tuple(conditions): all(c(p) for c in cs)
        registrations.append(_Registration(matcher, entry["response"]))
    return registrations


def scripted_from_file(path: str, model: str = "scripted",
                       ledger: Optional[CostLedger] = None) -> ScriptedBackend:
    backend = ScriptedBackend(model=model, ledger=ledger)
    backend._registrations.extend(load_script(path))
    return backend


class ResponseCache:
    """Append-safe on-disk key/value store for GenResponse values.

    Entries are single JSON lines, so concurrent readers can follow a single
    writer; a partial trailing line (in-flight write) is ignored on load.
    With ``path=None`` the cache is memory-only.
    """

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self._lock = threading.Lock()
        self._entries: Dict[str, GenResponse] = {}
        self.hits = 0
        self.misses = 0
        if path is not None:
            self._load(path)

    def _load(self, path: str) -> None:
        try:
            handle = open(path, "r", encoding="utf-8")
        except FileNotFoundError:
            return
        with handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError:
                    continue  # partial trailing write
                self._entries[row["key"]] = GenResponse(
                    text=row["text"],
                    input_tokens=row["input_tokens"],
                    output_tokens=row["output_tokens"],
                )

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> Optional[GenResponse]:
        with self._lock:
            found = self._entries.get(key)
            if found is None:
                self.misses += 1
            else:
                self.hits += 1
            return found

    def put(self, key: str, response: GenResponse) -> None:
        row = {
            "key": key,
            "text": response.text,
            "input_tokens": response.input_tokens,
            "output_tokens": response.output_tokens,
        }
        with self._lock:
            self._entries[key] = GenResponse(
                text=response.text,
                input_tokens=response.input_tokens,
                output_tokens=response.output_tokens,
            )
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as handle:
                    handle.write(json.dumps(row, ensure_ascii=False) + "\n")
                    handle.flush()


def cache_key(model: str, req: GenRequest) -> str:
    material = json.dumps(
        [model, req.prompt, req.max_new_tokens, req.decode_mode, req.temperature, req.top_p],
        ensure_ascii=False,
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class CachedBackend:
    """Caching wrapper around another backend.

    Greedy requests are answered from the store when possible; sampling-mode
    requests bypass the cache entirely.  Hits are recorded in the ledger as
    requests with zero priced tokens.
    """

    def __init__(self, inner, store: ResponseCache, ledger: Optional[CostLedger] = None):
        self.inner = inner
        self.store = store
        self.ledger = ledger

    @property
    def model(self) -> str:
        return self.inner.model

    def complete(self, req: GenRequest) -> GenResponse:
        if req.decode_mode == SAMPLE:
            return self.inner.complete(req)
        started = time.monotonic()
        key = cache_key(self.model, req)
        cached = self.store.get(key)
        if cached is not None:
            result = replace(cached, from_cache=True, latency=time.monotonic() - started)
            if self.ledger is not None:
                self.ledger.record(req.purpose, self.model, result)
            return result
        result = self.inner.complete(req)
        self.store.put(key, result)
        return result


class CountingBackend:
    """Per-claim proxy that counts calls and accumulates token usage."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0
        self.input_tokens = 0
        self.output_tokens = 0

    @property
    def model(self) -> str:
        return self.inner.model

    def complete(self, req: GenRequest) -> GenResponse:
        result = self.inner.complete(req)
        self.calls += 1
        self.input_tokens += result.input_tokens
        self.output_tokens += result.output_tokens
        return result


@dataclass(frozen=True)
class GenPolicy:
    """Per-role generation parameters."""

    max_new_tokens: int = 32
    temperature: float = 0.0
    top_p: float = 1.0
    decode_mode: str = GREEDY


GRAPH_POLICY = GenPolicy(max_new_tokens=1024, temperature=0.0, top_p=1.0)
SHORT_ANSWER_POLICY = GenPolicy(max_new_tokens=32)


@dataclass
class BackendSuite:
    """One backend (and generation policy) per pipeline role."""

    graph_construction: object
    infilling: object
    verification: object
    selection: object
    graph_policy: GenPolicy = field(default_factory=lambda: GRAPH_POLICY)
    infill_policy: GenPolicy = field(default_factory=lambda: SHORT_ANSWER_POLICY)
    verify_policy: GenPolicy = field(default_factory=lambda: SHORT_ANSWER_POLICY)
    select_policy: GenPolicy = field(default_factory=lambda: SHORT_ANSWER_POLICY)

    @classmethod
    def single(cls, backend, **kwargs) -> "BackendSuite":
        """Use one backend instance for every role (common in tests)."""
        return cls(backend, backend, backend, backend, **kwargs)

    def request(self, purpose: str, prompt: str) -> GenRequest:
        policy = {
            PURPOSE_GRAPH: self.graph_policy,
            PURPOSE_INFILL: self.infill_policy,
            PURPOSE_VERIFY: self.verify_policy,
            PURPOSE_SELECT: self.select_policy,
        }[purpose]
        return GenRequest(
            prompt=prompt,
            max_new_tokens=policy.max_new_tokens,
            temperature=policy.temperature,
            top_p=policy.top_p,
            decode_mode=policy.decode_mode,
            purpose=purpose,
        )

    def backend_for(self, purpose: str):
        return {
            PURPOSE_GRAPH: self.graph_construction,
            PURPOSE_INFILL: self.infilling,
            PURPOSE_VERIFY: self.verification,
            PURPOSE_SELECT: self.selection,
        }[purpose]

    def complete(self, purpose: str, prompt: str) -> GenResponse:
        return self.backend_for(purpose).complete(self.request(purpose, prompt))

    def counted(self) -> "BackendSuite":
        """A view of this suite with every role wrapped in a CountingBackend."""
        return BackendSuite(
            CountingBackend(self.graph_construction),
            CountingBackend(self.infilling),
            CountingBackend(self.verification),
            CountingBackend(self.selection),
            self.graph_policy,
            self.infill_policy,
            self.verify_policy,
            self.select_policy,
        )
