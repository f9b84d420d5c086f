"""Index clients: HTTP and fixture-backed, with rate limiting and a disk cache.

Two external services back the pipeline: a preprint index (harvesting
candidate papers) and a scholarly index (resolution, enrichment, title
search). Both sit behind small client interfaces so tests and offline runs
substitute a directory of canned JSON for the network.

Wire formats (JSON):

* preprint record::

    {"preprint_id": "2203.01234", "title": "...", "authors": ["..."],
     "journal_ref": "NeurIPS 2022", "posted_date": "2022-03-05",
     "categories": ["cs.LG"], "license": "CC-BY-4.0"}

* scholarly paper::

    {"index_id": "p001", "title": "...", "authors": ["..."],
     "venue": "...", "year": 2021, "citation_count": 10,
     "influential_citation_count": 2, "reference_count": 30,
     "references": ["p002", "p003"]}

Cache layout is ``cache/<service>/<id>.json``; each file is an envelope
keyed by (endpoint, id, schema version) so stale or foreign entries are
treated as misses. Writes are temp-then-rename, so readers never observe a
partial entry.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Protocol

import requests

from .errors import IndexParseError, TransportError
from .textnorm import title_key, tokens

logger = logging.getLogger(__name__)

CACHE_SCHEMA_VERSION = 1

_SAFE_RE = re.compile(r"[^A-Za-z0-9._-]")


def safe_filename(identifier: str) -> str:
    """Map an arbitrary id to a filesystem-safe name, stable across runs."""
    cleaned = _SAFE_RE.sub("_", identifier)
    if cleaned != identifier or len(cleaned) > 120:
        import hashlib

        digest = hashlib.sha256(identifier.encode("utf-8")).hexdigest()[:12]
        cleaned = f"{cleaned[:100]}_{digest}"
    return cleaned


def dump_json(obj: Any) -> str:
    """Deterministic JSON serialization used for all on-disk artifacts."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def atomic_write_text(path: Path, text: str) -> None:
    """Write via a sibling temp file and rename; readers see old or new, never partial."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp.{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class TokenBucket:
    """Token-bucket rate limiter shared by all calls to one service.

    ``rate`` is tokens per second, ``capacity`` the burst size. ``acquire``
    blocks until a token is available. Clock and sleep are injectable for
    tests.
    """

    def __init__(
        self,
        rate: float,
        capacity: float | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def _refill(self) -> None:
        now = self._clock()
        self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
        self._last = now

    def acquire(self) -> None:
        while True:
            with self._lock:
                self._refill()
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


@dataclass
class RetryPolicy:
    """Bounded retry with deterministic exponential backoff (no jitter)."""

    max_attempts: int = 4
    backoff_base: float = 0.5

    def delays(self):
        for attempt in range(self.max_attempts - 1):
            yield self.backoff_base * (2**attempt)


def parallel_map(fn: Callable, items: list, max_in_flight: int = 1) -> list:
    """Apply ``fn`` over items with a bounded worker pool, preserving order.

    With ``max_in_flight`` of one this is a plain loop; rate limiting
    stays with the shared per-service token bucket either way.
    """
    if max_in_flight <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(fn, items))


class JsonCache:
    """Disk cache for index responses, one JSON envelope per key.

    Entries are content-addressed by (endpoint, id, schema version); a file
    whose envelope disagrees on any of the three is a miss. Explicit
    not-found markers are first-class entries so corpus attrition is never
    a silent gap. ``refresh=True`` bypasses reads but still writes.
    """

    def __init__(self, root: Path | str, service: str, refresh: bool = False):
        self.dir = Path(root) / service
        self.refresh = refresh

    def _path(self, cache_id: str) -> Path:
        return self.dir / f"{safe_filename(cache_id)}.json"

    def load(self, endpoint: str, cache_id: str) -> dict | None:
        """Return the envelope for (endpoint, id), or None on miss.

        Corrupt or mismatched files are misses: the caller recomputes and
        overwrites that key only.
        """
        if self.refresh:
            return None
        path = self._path(cache_id)
        try:
            envelope = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError):
            return None
        if not isinstance(envelope, dict):
            return None
        if (
            envelope.get("schema_version") != CACHE_SCHEMA_VERSION
            or envelope.get("endpoint") != endpoint
            or envelope.get("id") != cache_id
        ):
            return None
        if envelope.get("status") not in ("ok", "not_found"):
            return None
        return envelope

    def store(self, endpoint: str, cache_id: str, payload: Any) -> dict:
        envelope = {
            "schema_version": CACHE_SCHEMA_VERSION,
            "endpoint": endpoint,
            "id": cache_id,
            "status": "ok",
            "payload": payload,
        }
        atomic_write_text(self._path(cache_id), dump_json(envelope))
        return envelope

    def store_not_found(self, endpoint: str, cache_id: str, reason: str) -> dict:
        envelope = {
            "schema_version": CACHE_SCHEMA_VERSION,
            "endpoint": endpoint,
            "id": cache_id,
            "status": "not_found",
            "reason": reason,
        }
        atomic_write_text(self._path(cache_id), dump_json(envelope))
        return envelope


class PreprintIndexClient(Protocol):
    def list_records(self, start: str, end: str, category: str) -> list[dict]:
        """All records posted in [start, end] (ISO dates) under a category."""
        ...


class ScholarIndexClient(Protocol):
    def search_title(self, query: str, limit: int = 10) -> list[dict]:
        """Paper records ranked by the index's own title relevance."""
        ...

    def get_paper(self, index_id: str) -> dict | None:
        """Full record for an id, or None when the index has no such paper."""
        ...


class FixtureIndexClient:
    """Directory of canned JSON standing in for both services.

    Layout::

        <root>/preprint/records.json      list of preprint records
        <root>/scholar/papers/<id>.json   one scholarly record per file

    Title search ranks by token overlap (Jaccard) with the query, ties
    broken by id, which is a deliberately different notion of relevance
    than the matcher's similarity scores.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self._papers: dict[str, dict] | None = None

    # -- preprint side -------------------------------------------------

    def list_records(self, start: str, end: str, category: str) -> list[dict]:
        path = self.root / "preprint" / "records.json"
        records = json.loads(path.read_text(encoding="utf-8"))
        out = []
        for rec in records:
            posted = rec.get("posted_date", "")
            if not (start <= posted <= end):
                continue
            if category and category not in rec.get("categories", []):
                continue
            out.append(rec)
        return out

    # -- scholar side --------------------------------------------------

    def _load_papers(self) -> dict[str, dict]:
        if self._papers is None:
            self._papers = {}
            papers_dir = self.root / "scholar" / "papers"
            if papers_dir.is_dir():
                for path in sorted(papers_dir.glob("*.json")):
                    rec = json.loads(path.read_text(encoding="utf-8"))
                    self._papers[rec["index_id"]] = rec
        return self._papers

    def search_title(self, query: str, limit: int = 10) -> list[dict]:
        query_tokens = set(tokens(query))
        if not query_tokens:
            return []
        scored = []
        for index_id, rec in self._load_papers().items():
            rec_tokens = set(tokens(rec.get("title", "")))
            if not rec_tokens & query_tokens:
                continue
            jaccard = len(rec_tokens & query_tokens) / len(rec_tokens | query_tokens)
            scored.append((-jaccard, index_id, rec))
        scored.sort(key=lambda item: (item[0], item[1]))
        return [rec for _, _, rec in scored[:limit]]

    def get_paper(self, index_id: str) -> dict | None:
        return self._load_papers().get(index_id)


def _request_json(
    session: requests.Session,
    url: str,
    params: dict,
    limiter: TokenBucket | None,
    retry: RetryPolicy,
) -> Any:
    """GET with rate limiting and bounded backoff; raises TransportError."""
    delays = list(retry.delays()) + [None]
    last: Exception | None = None
    for delay in delays:
        if limiter is not None:
            limiter.acquire()
        try:
            resp = session.get(url, params=params, timeout=30)
        except requests.RequestException as exc:
            last = exc
        else:
            if resp.status_code == 404:
                return None
            if resp.status_code == 429 or resp.status_code >= 500:
                last = TransportError(f"{url} -> HTTP {resp.status_code}")
            elif resp.status_code >= 400:
                raise TransportError(f"{url} -> HTTP {resp.status_code}", retryable=False)
            else:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise IndexParseError(f"non-JSON response from {url}") from exc
        if delay is not None:
            time.sleep(delay)
    raise TransportError(f"{url} failed after {retry.max_attempts} attempts: {last}")


class HttpPreprintClient:
    """Preprint index over HTTP, same wire format as the fixture client."""

    def __init__(
        self,
        base_url: str,
        session: requests.Session | None = None,
        limiter: TokenBucket | None = None,
        retry: RetryPolicy | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.session = session or requests.Session()
        self.limiter = limiter
        self.retry = retry or RetryPolicy()

    def list_records(self, start: str, end: str, category: str) -> list[dict]:
        payload = _request_json(
            self.session,
            f"{self.base_url}/records",
            {"start": start, "end": end, "category": category},
            self.limiter,
            self.retry,
        )
        if not isinstance(payload, list):
            raise IndexParseError("preprint index returned a non-list payload", payload)
        return payload


class HttpScholarClient:
    """Scholarly index over HTTP."""

    def __init__(
        self,
        base_url: str,
        session: requests.Session | None = None,
        limiter: TokenBucket | None = None,
        retry: RetryPolicy | None = None,
        api_key_env: str = "",
    ):
        self.base_url = base_url.rstrip("/")
        self.session = session or requests.Session()
        self.limiter = limiter
        self.retry = retry or RetryPolicy()
        if api_key_env:
            key = os.environ.get(api_key_env, "")
            if key:
                self.session.headers["x-api-key"] = key

    def search_title(self, query: str, limit: int = 10) -> list[dict]:
        payload = _request_json(
            self.session,
            f"{self.base_url}/papers/search",
            {"query": query, "limit": limit},
            self.limiter,
            self.retry,
        )
        if payload is None:
            return []
        if not isinstance(payload, list):
            raise IndexParseError("scholar search returned a non-list payload", payload)
        return payload

    def get_paper(self, index_id: str) -> dict | None:
        return _request_json(
            self.session,
            f"{self.base_url}/papers/{index_id}",
            {},
            self.limiter,
            self.retry,
        )


class CachedScholarClient:
    """Scholar client wrapper that serves reads from a JsonCache.

    Paper lookups cache under the bare index id (so the on-disk layout is
    ``cache/scholar/<id>.json``); title searches cache under a prefixed
    key derived from the normalized query.
    """

    def __init__(self, inner: ScholarIndexClient, cache: JsonCache):
        self.inner = inner
        self.cache = cache

    def search_title(self, query: str, limit: int = 10) -> list[dict]:
        cache_id = f"search__{safe_filename(title_key(query))}__{limit}"
        hit = self.cache.load("search", cache_id)
        if hit is not None:
            return hit["payload"] if hit["status"] == "ok" else []
        results = self.inner.search_title(query, limit)
        self.cache.store("search", cache_id, results)
        return results

    def get_paper(self, index_id: str) -> dict | None:
        hit = self.cache.load("paper", index_id)
        if hit is not None:
            return hit["payload"] if hit["status"] == "ok" else None
        record = self.inner.get_paper(index_id)
        if record is None:
            self.cache.store_not_found("paper", index_id, "id-not-in-index")
        else:
            self.cache.store("paper", index_id, record)
        return record
