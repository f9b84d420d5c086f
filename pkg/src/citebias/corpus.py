"""Corpus construction: harvest candidate papers, resolve them in the
scholarly index, and enrich references with metadata.

The corpus is the ground-truth side of the audit. Candidate papers come
from the preprint index filtered by venue keywords and a blacklist; each
survivor is resolved in the scholarly index by title, which yields its
full reference list; every reference id can then be enriched with venue,
year, authors, citation counts, and its own outgoing references. All
enrichment goes through the disk cache so repeated runs cost no network.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Sequence

from .clients import JsonCache, PreprintIndexClient, ScholarIndexClient
from .errors import (
    EXCL_AMBIGUOUS,
    EXCL_NOT_FOUND,
    AmbiguousMatchError,
    Exclusion,
    IndexParseError,
)
from .textnorm import title_key, tokens

logger = logging.getLogger(__name__)

CANONICAL_VENUES = ("AAAI", "NeurIPS", "ICML", "ICLR", "arXiv", "Nature", "Others")


@dataclass(frozen=True)
class Venue:
    """A publication venue: the raw string plus its canonical label."""

    canonical: str
    raw: str


class VenueTable:
    """Alias table mapping raw venue strings to the canonical labels.

    Canonicalization is total: any raw string maps to exactly one label,
    with unknown strings falling through to ``Others``.
    """

    def __init__(self, aliases: dict[str, dict]):
        self._exact: dict[str, str] = {}
        self._keywords: dict[str, str] = {}
        for canonical, spec in aliases.items():
            if canonical.startswith("_"):
                continue
            if canonical not in CANONICAL_VENUES:
                raise ValueError(f"unknown canonical venue {canonical!r}")
            for alias in spec.get("exact", []):
                self._exact[title_key(alias)] = canonical
            for kw in spec.get("keywords", []):
                self._keywords[kw.lower()] = canonical

    @classmethod
    def default(cls) -> "VenueTable":
        text = resources.files("citebias.data").joinpath("venue_aliases.json").read_text("utf-8")
        return cls(json.loads(text))

    @classmethod
    def from_file(cls, path) -> "VenueTable":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def canonicalize(self, raw: str | None) -> Venue:
        raw = raw or ""
        key = title_key(raw)
        if key in self._exact:
            return Venue(self._exact[key], raw)
        for tok in tokens(raw):
            if tok in self._keywords:
                return Venue(self._keywords[tok], raw)
        return Venue("Others", raw)


@dataclass
class CandidateStub:
    """A paper as listed by the preprint index, before resolution."""

    preprint_id: str
    title: str
    journal_ref: str
    posted_date: str
    authors: list[str] = field(default_factory=list)
    license: str = ""

    @classmethod
    def from_record(cls, record: dict) -> "CandidateStub":
        try:
            return cls(
                preprint_id=record["preprint_id"],
                title=record["title"],
                journal_ref=record.get("journal_ref", ""),
                posted_date=record["posted_date"],
                authors=list(record.get("authors", [])),
                license=record.get("license", ""),
            )
        except (KeyError, TypeError) as exc:
            raise IndexParseError(f"malformed preprint record: {exc}", record) from exc


@dataclass
class PaperRecord:
    """A focal paper with identifiers in both indices and its ground truth.

    ``reference_ids`` is the full, ordered reference list from the
    scholarly index. ``intro_reference_numbers`` is filled in by document
    preparation and is a subset of 1..len(bibliography).
    """

    preprint_id: str
    index_id: str
    title: str
    venue: Venue
    year: int
    posted_date: str
    authors: list[str]
    reference_ids: list[str] = field(default_factory=list)
    intro_reference_numbers: set[int] = field(default_factory=set)


@dataclass
class ReferenceEntry:
    """One bibliography entry, ground truth or resolved.

    ``author_count`` and ``year`` are None when "et al." or the source text
    obscures them. Citation/reference counts are populated only from the
    index (never invented), so they are None unless ``index_id`` is set.
    """

    citation_number: int
    raw_text: str
    title: str = ""
    authors: list[str] = field(default_factory=list)
    author_count: int | None = None
    year: int | None = None
    venue: Venue = Venue("Others", "")
    index_id: str | None = None
    citation_count: int | None = None
    influential_citation_count: int | None = None
    reference_count: int | None = None
    outgoing_reference_ids: list[str] = field(default_factory=list)


@dataclass
class EnrichedRecord:
    """Metadata for one index id, as returned by enrichment."""

    index_id: str
    title: str
    authors: list[str]
    venue_raw: str
    year: int | None
    citation_count: int | None
    influential_citation_count: int | None
    reference_count: int | None
    outgoing_reference_ids: list[str]

    @classmethod
    def from_payload(cls, payload: dict) -> "EnrichedRecord":
        return cls(
            index_id=payload["index_id"],
            title=payload.get("title", ""),
            authors=list(payload.get("authors", [])),
            venue_raw=payload.get("venue", ""),
            year=payload.get("year"),
            citation_count=payload.get("citation_count"),
            influential_citation_count=payload.get("influential_citation_count"),
            reference_count=payload.get("reference_count"),
            outgoing_reference_ids=list(payload.get("references", [])),
        )


def harvest_candidates(
    client: PreprintIndexClient,
    window: tuple[str, str],
    category: str,
    venue_keywords: Sequence[str],
) -> list[CandidateStub]:
    """Candidate stubs whose journal reference mentions a venue keyword.

    Args:
        client: preprint index client.
        window: (start, end) ISO dates, inclusive.
        category: index category to query, e.g. "cs.LG".
        venue_keywords: case-insensitive keywords matched against the
            journal-reference string.

    Returns:
        Matching stubs in stable order by posted date, then preprint id.
    """
    start, end = window
    if start > end:
        raise ValueError(f"malformed window: {start} > {end}")
    if not category:
        raise ValueError("category must be non-empty")
    records = client.list_records(start, end, category)
    keywords = [kw.lower() for kw in venue_keywords]
    stubs = []
    for record in records:
        stub = CandidateStub.from_record(record)
        ref = stub.journal_ref.lower()
        if any(kw in ref for kw in keywords):
            stubs.append(stub)
    stubs.sort(key=lambda s: (s.posted_date, s.preprint_id))
    return stubs


def filter_candidates(
    stubs: Iterable[CandidateStub], blacklist: Sequence[str]
) -> list[CandidateStub]:
    """Drop stubs whose journal reference contains any blacklist keyword
    (case-insensitive substring match)."""
    terms = [term.lower() for term in blacklist]
    kept = []
    for stub in stubs:
        ref = stub.journal_ref.lower()
        if any(term in ref for term in terms):
            continue
        kept.append(stub)
    return kept


def resolve_paper(
    stub: CandidateStub,
    scholar: ScholarIndexClient,
    venue_table: VenueTable,
    search_limit: int = 10,
    fuzzy_threshold: float | None = None,
) -> PaperRecord | Exclusion:
    """Resolve a candidate in the scholarly index by title.

    Matching is exact after whitespace/case/punctuation normalization;
    with ``fuzzy_threshold`` set, candidates scoring at least that much
    on best-substring title similarity are accepted when no exact hit
    exists. Exactly one hit yields a PaperRecord with its reference list;
    zero hits yield a not-found exclusion; multiple equally-plausible
    hits raise AmbiguousMatchError.
    """
    if not stub.title.strip():
        raise ValueError("stub has an empty title")
    key = title_key(stub.title)
    results = scholar.search_title(stub.title, limit=search_limit)
    hits = [rec for rec in results if title_key(rec.get("title", "")) == key]
    if not hits and fuzzy_threshold is not None:
        from .matcher import title_similarity

        scored = [
            (title_similarity(stub.title, rec.get("title", "")), rec) for rec in results
        ]
        qualifying = [(s, rec) for s, rec in scored if s >= fuzzy_threshold]
        if qualifying:
            best = max(s for s, _ in qualifying)
            hits = [rec for s, rec in qualifying if s == best]
    if not hits:
        return Exclusion(EXCL_NOT_FOUND, f"no index record titled {stub.title!r}")
    if len(hits) > 1:
        raise AmbiguousMatchError(stub.title, [rec["index_id"] for rec in hits])
    rec = hits[0]
    year = rec.get("year")
    if year is None:
        year = int(stub.posted_date[:4])
    return PaperRecord(
        preprint_id=stub.preprint_id,
        index_id=rec["index_id"],
        title=rec.get("title", stub.title),
        venue=venue_table.canonicalize(stub.journal_ref),
        year=year,
        posted_date=stub.posted_date,
        authors=list(rec.get("authors", stub.authors)),
        reference_ids=list(rec.get("references", [])),
    )


def enrich_reference(
    index_id: str,
    scholar: ScholarIndexClient,
    cache: JsonCache,
) -> EnrichedRecord | Exclusion:
    """Fetch (or load cached) metadata for one index id.

    The result is cached on disk keyed by the id; a repeat call performs
    no network I/O. Ids missing from the index leave an explicit
    not-found marker in the cache rather than a silent gap.
    """
    hit = cache.load("paper", index_id)
    if hit is not None:
        if hit["status"] == "not_found":
            return Exclusion(EXCL_NOT_FOUND, index_id)
        return EnrichedRecord.from_payload(hit["payload"])
    payload = scholar.get_paper(index_id)
    if payload is None:
        cache.store_not_found("paper", index_id, "id-not-in-index")
        return Exclusion(EXCL_NOT_FOUND, index_id)
    cache.store("paper", index_id, payload)
    return EnrichedRecord.from_payload(payload)


def enrich_all(
    index_ids: Iterable[str],
    scholar: ScholarIndexClient,
    cache: JsonCache,
) -> tuple[dict[str, EnrichedRecord], dict[str, Exclusion]]:
    """Enrich every id once; returns (found, not_found) keyed by id."""
    found: dict[str, EnrichedRecord] = {}
    missing: dict[str, Exclusion] = {}
    for index_id in dict.fromkeys(index_ids):
        result = enrich_reference(index_id, scholar, cache)
        if isinstance(result, Exclusion):
            missing[index_id] = result
        else:
            found[index_id] = result
    return found, missing


def apply_enrichment(
    entry: ReferenceEntry, record: EnrichedRecord, venue_table: VenueTable
) -> ReferenceEntry:
    """Populate a reference entry from its enrichment record."""
    return replace(
        entry,
        index_id=record.index_id,
        title=record.title or entry.title,
        authors=list(record.authors) or entry.authors,
        author_count=len(record.authors) if record.authors else entry.author_count,
        year=record.year if record.year is not None else entry.year,
        venue=venue_table.canonicalize(record.venue_raw) if record.venue_raw else entry.venue,
        citation_count=record.citation_count,
        influential_citation_count=record.influential_citation_count,
        reference_count=record.reference_count,
        outgoing_reference_ids=list(record.outgoing_reference_ids),
    )
