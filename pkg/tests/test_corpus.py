"""Corpus harvesting, resolution, enrichment, and the client layer."""

import json
import threading

import pytest

from citebias.clients import (
    CachedScholarClient,
    FixtureIndexClient,
    JsonCache,
    TokenBucket,
    atomic_write_text,
    dump_json,
)
from citebias.corpus import (
    CandidateStub,
    EnrichedRecord,
    Venue,
    VenueTable,
    enrich_reference,
    filter_candidates,
    harvest_candidates,
    resolve_paper,
)
from citebias.errors import AmbiguousMatchError, Exclusion, IndexParseError

# ---------------------------------------------------------------------------
# Fixture index
# ---------------------------------------------------------------------------

PREPRINT_RECORDS = [
    {
        "preprint_id": "2203.00001",
        "title": "Robust Widgets at Scale",
        "journal_ref": "NeurIPS 2022",
        "posted_date": "2022-03-05",
        "categories": ["cs.LG"],
        "authors": ["A. One"],
        "license": "CC-BY-4.0",
    },
    {
        "preprint_id": "2204.00002",
        "title": "Sparse Gadget Training",
        "journal_ref": "ICML 2022 poster",
        "posted_date": "2022-04-01",
        "categories": ["cs.LG"],
        "authors": ["B. Two"],
    },
    {
        "preprint_id": "2205.00003",
        "title": "A Journal Article",
        "journal_ref": "Journal of Obscure Results 12(3)",
        "posted_date": "2022-05-01",
        "categories": ["cs.LG"],
        "authors": ["C. Three"],
    },
    {
        "preprint_id": "2206.00004",
        "title": "Vision Stuff",
        "journal_ref": "CVPR 2022",
        "posted_date": "2022-06-01",
        "categories": ["cs.CV", "cs.LG"],
        "authors": ["D. Four"],
    },
    {
        "preprint_id": "2201.00005",
        "title": "Too Early",
        "journal_ref": "NeurIPS 2021",
        "posted_date": "2022-01-15",
        "categories": ["cs.LG"],
        "authors": ["E. Five"],
    },
]

SCHOLAR_PAPERS = [
    {
        "index_id": "s_widgets",
        "title": "Robust Widgets at Scale",
        "authors": ["A. One"],
        "venue": "NeurIPS",
        "year": 2022,
        "citation_count": 12,
        "influential_citation_count": 2,
        "reference_count": 30,
        "references": ["s_ref1", "s_ref2"],
    },
    {
        "index_id": "s_ref1",
        "title": "Foundations of Widgetry",
        "authors": ["W. Founder"],
        "venue": "ICML",
        "year": 2015,
        "citation_count": 900,
        "influential_citation_count": 90,
        "reference_count": 25,
        "references": ["s_ref2", "s_ref3", "s_widgets"],
    },
    {
        "index_id": "s_ref2",
        "title": "Zero Citations so Far",
        "authors": ["N. Ewcomer"],
        "venue": "arXiv preprint arXiv:2301.00001",
        "year": 2023,
        "citation_count": 0,
        "influential_citation_count": 0,
        "reference_count": 10,
        "references": [],
    },
    {
        "index_id": "s_dup_a",
        "title": "An Ambiguous Name",
        "authors": ["X"],
        "venue": "ICLR",
        "year": 2020,
        "citation_count": 1,
        "influential_citation_count": 0,
        "reference_count": 5,
        "references": [],
    },
    {
        "index_id": "s_dup_b",
        "title": "An Ambiguous Name",
        "authors": ["Y"],
        "venue": "AAAI",
        "year": 2021,
        "citation_count": 2,
        "influential_citation_count": 0,
        "reference_count": 6,
        "references": [],
    },
]


@pytest.fixture()
def index_dir(tmp_path):
    preprint = tmp_path / "index" / "preprint"
    preprint.mkdir(parents=True)
    (preprint / "records.json").write_text(json.dumps(PREPRINT_RECORDS))
    papers = tmp_path / "index" / "scholar" / "papers"
    papers.mkdir(parents=True)
    for rec in SCHOLAR_PAPERS:
        (papers / f"{rec['index_id']}.json").write_text(json.dumps(rec))
    return tmp_path / "index"


@pytest.fixture()
def fixture_client(index_dir):
    return FixtureIndexClient(index_dir)


@pytest.fixture()
def venue_table():
    return VenueTable.default()


# ---------------------------------------------------------------------------
# Harvest and filter
# ---------------------------------------------------------------------------

WINDOW = ("2022-03-01", "2023-10-31")
KEYWORDS = ["AAAI", "NeurIPS", "ICLR", "ICML"]


def test_harvest_matches_keywords_and_orders_by_date(fixture_client):
    stubs = harvest_candidates(fixture_client, WINDOW, "cs.LG", KEYWORDS)
    assert [s.preprint_id for s in stubs] == ["2203.00001", "2204.00002"]


def test_harvest_empty_window(fixture_client):
    stubs = harvest_candidates(fixture_client, ("2010-01-01", "2010-01-02"), "cs.LG", KEYWORDS)
    assert stubs == []


def test_harvest_fixture_scan_matches_brute_force(fixture_client):
    stubs = harvest_candidates(fixture_client, WINDOW, "cs.LG", KEYWORDS)
    expected = [
        rec["preprint_id"]
        for rec in sorted(PREPRINT_RECORDS, key=lambda r: (r["posted_date"], r["preprint_id"]))
        if WINDOW[0] <= rec["posted_date"] <= WINDOW[1]
        and "cs.LG" in rec["categories"]
        and any(kw.lower() in rec["journal_ref"].lower() for kw in KEYWORDS)
    ]
    assert [s.preprint_id for s in stubs] == expected == ["2203.00001", "2204.00002"]


def test_harvest_rejects_malformed_window(fixture_client):
    with pytest.raises(ValueError):
        harvest_candidates(fixture_client, ("2023-01-01", "2022-01-01"), "cs.LG", KEYWORDS)
    with pytest.raises(ValueError):
        harvest_candidates(fixture_client, WINDOW, "", KEYWORDS)


def test_harvest_malformed_record_names_it():
    class BrokenIndex:
        def list_records(self, start, end, category):
            return [{"title": "no id or date"}]

    with pytest.raises(IndexParseError) as err:
        harvest_candidates(BrokenIndex(), WINDOW, "cs.LG", KEYWORDS)
    assert err.value.record == {"title": "no id or date"}


def _stub(i, journal_ref):
    return CandidateStub(
        preprint_id=f"p{i}", title=f"t{i}", journal_ref=journal_ref, posted_date="2022-06-01"
    )


def test_filter_removes_workshop_entries():
    stubs = [_stub(0, "NeurIPS 2023 Workshop on X"), _stub(1, "NeurIPS 2023")]
    kept = filter_candidates(stubs, ["workshop", "2021"])
    assert [s.preprint_id for s in kept] == ["p1"]


def test_filter_empty_blacklist_keeps_everything():
    stubs = [_stub(i, "ICML 2022") for i in range(4)]
    assert filter_candidates(stubs, []) == stubs


def test_filter_counts_on_fixture_of_ten():
    stubs = [
        _stub(i, "ICLR 2021" if i in (2, 5, 8) else "ICLR 2022") for i in range(10)
    ]
    kept = filter_candidates(stubs, ["2021"])
    assert len(kept) == 7
    assert all("2021" not in s.journal_ref for s in kept)


# ---------------------------------------------------------------------------
# Resolution
# ---------------------------------------------------------------------------


def test_resolve_exact_title_hit(fixture_client, venue_table):
    stub = _stub(0, "NeurIPS 2022")
    stub.title = "Robust Widgets at Scale"
    record = resolve_paper(stub, fixture_client, venue_table)
    assert record.index_id == "s_widgets"
    assert record.reference_ids == ["s_ref1", "s_ref2"]
    assert record.venue.canonical == "NeurIPS"


def test_resolve_absent_title_not_found(fixture_client, venue_table):
    stub = _stub(0, "ICML 2022")
    stub.title = "This Paper Does Not Exist Anywhere"
    result = resolve_paper(stub, fixture_client, venue_table)
    assert isinstance(result, Exclusion) and result.code == "index-not-found"


def test_resolve_duplicate_titles_ambiguous(fixture_client, venue_table):
    stub = _stub(0, "ICLR 2020")
    stub.title = "An Ambiguous Name"
    with pytest.raises(AmbiguousMatchError) as err:
        resolve_paper(stub, fixture_client, venue_table)
    assert set(err.value.candidates) == {"s_dup_a", "s_dup_b"}


def test_resolve_fuzzy_threshold_catches_near_titles(fixture_client, venue_table):
    stub = _stub(0, "NeurIPS 2022")
    stub.title = "Robust Widgets at Scale."  # trailing punctuation normalizes away anyway
    record = resolve_paper(stub, fixture_client, venue_table)
    assert record.index_id == "s_widgets"
    stub.title = "Robust Widgets at Very Large Scale"
    assert isinstance(resolve_paper(stub, fixture_client, venue_table), Exclusion)
    record = resolve_paper(stub, fixture_client, venue_table, fuzzy_threshold=0.7)
    assert record.index_id == "s_widgets"


def test_harvest_resolve_twice_is_byte_identical(fixture_client, venue_table):
    from citebias.pipeline import paper_to_json

    def run():
        stubs = harvest_candidates(fixture_client, WINDOW, "cs.LG", KEYWORDS)
        stubs = filter_candidates(stubs, ["workshop"])
        out = []
        for stub in stubs:
            resolved = resolve_paper(stub, fixture_client, venue_table)
            if not isinstance(resolved, Exclusion):
                out.append(paper_to_json(resolved))
        return dump_json(out)

    assert run() == run()


# ---------------------------------------------------------------------------
# Enrichment and the cache contract
# ---------------------------------------------------------------------------


class CountingScholar:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def search_title(self, query, limit=10):
        self.calls += 1
        return self.inner.search_title(query, limit)

    def get_paper(self, index_id):
        self.calls += 1
        return self.inner.get_paper(index_id)


def test_enrich_populates_outgoing_ids(fixture_client, tmp_path):
    cache = JsonCache(tmp_path / "cache", "scholar")
    record = enrich_reference("s_ref1", fixture_client, cache)
    assert record.outgoing_reference_ids == ["s_ref2", "s_ref3", "s_widgets"]
    assert record.citation_count == 900


def test_enrich_zero_citations_is_zero_not_unknown(fixture_client, tmp_path):
    cache = JsonCache(tmp_path / "cache", "scholar")
    record = enrich_reference("s_ref2", fixture_client, cache)
    assert record.citation_count == 0
    assert record.influential_citation_count == 0


def test_enrich_second_call_hits_cache_only(fixture_client, tmp_path):
    cache = JsonCache(tmp_path / "cache", "scholar")
    counting = CountingScholar(fixture_client)
    enrich_reference("s_ref1", counting, cache)
    assert counting.calls == 1
    enrich_reference("s_ref1", counting, cache)
    assert counting.calls == 1  # served from disk


def test_enrich_not_found_leaves_marker(fixture_client, tmp_path):
    cache = JsonCache(tmp_path / "cache", "scholar")
    counting = CountingScholar(fixture_client)
    result = enrich_reference("s_ghost", counting, cache)
    assert isinstance(result, Exclusion)
    # the marker prevents a second network call
    result = enrich_reference("s_ghost", counting, cache)
    assert isinstance(result, Exclusion)
    assert counting.calls == 1
    assert (tmp_path / "cache" / "scholar" / "s_ghost.json").is_file()


def test_corrupt_cache_entry_recomputed_others_untouched(fixture_client, tmp_path):
    cache = JsonCache(tmp_path / "cache", "scholar")
    enrich_reference("s_ref1", fixture_client, cache)
    enrich_reference("s_ref2", fixture_client, cache)
    ref1 = tmp_path / "cache" / "scholar" / "s_ref1.json"
    ref2 = tmp_path / "cache" / "scholar" / "s_ref2.json"
    ref1.write_text("{corrupt json!!")
    before = (ref2.read_bytes(), ref2.stat().st_mtime_ns)
    counting = CountingScholar(fixture_client)
    record = enrich_reference("s_ref1", counting, cache)
    assert isinstance(record, EnrichedRecord) and counting.calls == 1
    assert json.loads(ref1.read_text())["status"] == "ok"
    enrich_reference("s_ref2", counting, cache)
    assert counting.calls == 1
    assert (ref2.read_bytes(), ref2.stat().st_mtime_ns) == before


def test_cache_refresh_bypasses_reads(fixture_client, tmp_path):
    cache = JsonCache(tmp_path / "cache", "scholar")
    enrich_reference("s_ref1", fixture_client, cache)
    refreshing = JsonCache(tmp_path / "cache", "scholar", refresh=True)
    counting = CountingScholar(fixture_client)
    enrich_reference("s_ref1", counting, refreshing)
    assert counting.calls == 1


def test_cached_search_avoids_second_call(fixture_client, tmp_path):
    counting = CountingScholar(fixture_client)
    client = CachedScholarClient(counting, JsonCache(tmp_path / "cache", "scholar"))
    first = client.search_title("Robust Widgets at Scale", limit=3)
    second = client.search_title("Robust Widgets at Scale", limit=3)
    assert counting.calls == 1
    assert first == second


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "deep" / "file.json"
    atomic_write_text(target, "contents")
    assert target.read_text() == "contents"
    assert [p.name for p in target.parent.iterdir()] == ["file.json"]


# ---------------------------------------------------------------------------
# Venue canonicalization
# ---------------------------------------------------------------------------


def test_venue_keyword_and_exact_aliases(venue_table):
    assert venue_table.canonicalize("Advances in Neural Information Processing Systems").canonical == "NeurIPS"
    assert venue_table.canonicalize("NeurIPS 2023").canonical == "NeurIPS"
    assert venue_table.canonicalize("Proc. AAAI").canonical == "AAAI"
    assert venue_table.canonicalize("arXiv preprint arXiv:2310.00001").canonical == "arXiv"
    assert venue_table.canonicalize("Nature Communications").canonical == "Nature"
    assert venue_table.canonicalize("Journal of Fancy Results").canonical == "Others"


def test_venue_canonicalization_is_total(venue_table):
    import random

    rng = random.Random(5)
    for _ in range(300):
        raw = "".join(rng.choice(" abcXYZ0123!@#é—") for _ in range(rng.randint(0, 25)))
        venue = venue_table.canonicalize(raw)
        assert venue.canonical in ("AAAI", "NeurIPS", "ICML", "ICLR", "arXiv", "Nature", "Others")
    assert venue_table.canonicalize(None).canonical == "Others"
    assert venue_table.canonicalize("").canonical == "Others"


def test_venue_table_from_custom_file(tmp_path):
    path = tmp_path / "aliases.json"
    path.write_text(json.dumps({"Nature": {"exact": ["my journal"], "keywords": []}}))
    table = VenueTable.from_file(path)
    assert table.canonicalize("My Journal").canonical == "Nature"
    assert table.canonicalize("NeurIPS").canonical == "Others"


# ---------------------------------------------------------------------------
# HTTP client retry policy
# ---------------------------------------------------------------------------


class FakeResponse:
    def __init__(self, status_code, payload=None):
        self.status_code = status_code
        self._payload = payload

    def json(self):
        if self._payload is None:
            raise ValueError("no body")
        return self._payload


class FakeSession:
    """Yields scripted responses; records how often it was called."""

    headers: dict = {}

    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = 0

    def get(self, url, params=None, timeout=None):
        self.calls += 1
        return self.responses.pop(0)


def test_http_client_retries_rate_limit_then_succeeds(monkeypatch):
    import citebias.clients as clients_mod
    from citebias.clients import HttpScholarClient, RetryPolicy

    monkeypatch.setattr(clients_mod.time, "sleep", lambda s: None)
    session = FakeSession([FakeResponse(429), FakeResponse(200, {"index_id": "x"})])
    client = HttpScholarClient(
        "http://index.test", session=session, retry=RetryPolicy(max_attempts=3, backoff_base=0)
    )
    assert client.get_paper("x") == {"index_id": "x"}
    assert session.calls == 2


def test_http_client_hard_fails_after_configured_attempts(monkeypatch):
    import citebias.clients as clients_mod
    from citebias.clients import HttpScholarClient, RetryPolicy
    from citebias.errors import TransportError

    monkeypatch.setattr(clients_mod.time, "sleep", lambda s: None)
    session = FakeSession([FakeResponse(500)] * 3)
    client = HttpScholarClient(
        "http://index.test", session=session, retry=RetryPolicy(max_attempts=3, backoff_base=0)
    )
    with pytest.raises(TransportError):
        client.get_paper("x")
    assert session.calls == 3


def test_http_client_404_is_not_found_not_error():
    from citebias.clients import HttpScholarClient

    session = FakeSession([FakeResponse(404)])
    client = HttpScholarClient("http://index.test", session=session)
    assert client.get_paper("ghost") is None


def test_http_client_4xx_is_not_retryable():
    from citebias.clients import HttpScholarClient
    from citebias.errors import TransportError

    session = FakeSession([FakeResponse(403)])
    client = HttpScholarClient("http://index.test", session=session)
    with pytest.raises(TransportError) as err:
        client.get_paper("x")
    assert not err.value.retryable
    assert session.calls == 1


# ---------------------------------------------------------------------------
# Rate limiting
# ---------------------------------------------------------------------------


def test_token_bucket_spaces_acquisitions():
    clock = {"t": 0.0}
    sleeps = []

    def fake_clock():
        return clock["t"]

    def fake_sleep(seconds):
        sleeps.append(seconds)
        clock["t"] += seconds

    bucket = TokenBucket(rate=2.0, capacity=1.0, clock=fake_clock, sleep=fake_sleep)
    for _ in range(4):
        bucket.acquire()
    # after the initial token, each acquisition waits 1/rate seconds
    assert sleeps == pytest.approx([0.5, 0.5, 0.5])


def test_token_bucket_burst_capacity():
    clock = {"t": 0.0}
    sleeps = []
    bucket = TokenBucket(
        rate=1.0, capacity=3.0, clock=lambda: clock["t"], sleep=lambda s: sleeps.append(s)
    )
    for _ in range(3):
        bucket.acquire()
    assert sleeps == []


def test_parallel_map_preserves_order():
    from citebias.clients import parallel_map

    items = list(range(50))
    assert parallel_map(lambda x: x * x, items, max_in_flight=1) == [x * x for x in items]
    assert parallel_map(lambda x: x * x, items, max_in_flight=4) == [x * x for x in items]


def test_parallel_map_runs_concurrently():
    from citebias.clients import parallel_map

    gate = threading.Barrier(4, timeout=5)

    def wait_at_gate(_):
        gate.wait()  # deadlocks unless four workers arrive together
        return True

    assert parallel_map(wait_at_gate, [0, 1, 2, 3], max_in_flight=4) == [True] * 4


def test_token_bucket_is_thread_safe():
    bucket = TokenBucket(rate=10000.0, capacity=1.0)
    acquired = []

    def worker():
        for _ in range(50):
            bucket.acquire()
            acquired.append(1)

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(acquired) == 200
