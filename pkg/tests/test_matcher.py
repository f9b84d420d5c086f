"""Similarity scoring, existence verdicts, and threshold calibration."""

import json
import random
from functools import lru_cache

import pytest

from citebias.clients import FixtureIndexClient
from citebias.errors import CalibrationError
from citebias.matcher import (
    LabelledPair,
    MatchCandidate,
    Thresholds,
    author_similarity,
    bundled_labelled_pairs,
    calibrate,
    decide_existence,
    default_thresholds,
    search_candidates,
    title_similarity,
)
from citebias.textnorm import normalize

# ---------------------------------------------------------------------------
# Independent oracles
# ---------------------------------------------------------------------------


def oracle_lcs(a: str, b: str) -> int:
    """Longest common subsequence via memoized recursion (independent of
    the implementation's rolling-array DP)."""

    @lru_cache(maxsize=None)
    def rec(i: int, j: int) -> int:
        if i == 0 or j == 0:
            return 0
        if a[i - 1] == b[j - 1]:
            return rec(i - 1, j - 1) + 1
        return max(rec(i - 1, j), rec(i, j - 1))

    return rec(len(a), len(b))


def oracle_title(a: str, b: str) -> float:
    """Best window score by exhaustive enumeration."""
    na, nb = normalize(a), normalize(b)
    if not na and not nb:
        return 1.0
    if not na or not nb:
        return 0.0
    short, long = (na, nb) if len(na) <= len(nb) else (nb, na)
    n = len(short)
    return max(oracle_lcs(short, long[i : i + n]) / n for i in range(len(long) - n + 1))


def oracle_longest_common_substring(a: str, b: str) -> int:
    best = 0
    for i in range(len(a)):
        for j in range(i + 1, len(a) + 1):
            if a[i:j] in b:
                best = max(best, j - i)
    return best


# ---------------------------------------------------------------------------
# Title similarity
# ---------------------------------------------------------------------------


def test_title_identity():
    assert title_similarity("Attention is all you need", "Attention is all you need") == 1.0


def test_title_terminal_punctuation_normalized():
    assert title_similarity("Attention is all you need", "Attention is all you need.") == 1.0


def test_title_containment_scores_one():
    assert title_similarity("deep learning", "A deep learning survey") == 1.0


def test_title_symmetry():
    a, b = "Robust graph learning", "Learning robust graphs at scale"
    assert title_similarity(a, b) == title_similarity(b, a)


def test_title_matches_window_oracle_on_random_strings():
    rng = random.Random(4242)
    alphabet = "abcdef "
    for _ in range(200):
        a = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 40))).strip() or "a"
        b = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 40))).strip() or "b"
        assert title_similarity(a, b) == pytest.approx(oracle_title(a, b), abs=1e-12)


def test_title_disjoint_alphabets_equal_substring_oracle():
    rng = random.Random(99)
    for _ in range(50):
        a = "".join(rng.choice("abcde") for _ in range(rng.randint(1, 30)))
        b = "".join(rng.choice("vwxyz") for _ in range(rng.randint(1, 30)))
        lcs_str = oracle_longest_common_substring(normalize(a), normalize(b))
        ratio = lcs_str / min(len(normalize(a)), len(normalize(b)))
        assert title_similarity(a, b) == ratio == 0.0


def test_title_empty_inputs():
    assert title_similarity("", "") == 1.0
    assert title_similarity("", "something") == 0.0


# ---------------------------------------------------------------------------
# Author similarity
# ---------------------------------------------------------------------------


def test_author_identity():
    authors = ["Grace Hopper", "Alan Turing"]
    assert author_similarity(authors, list(authors)) == 1.0


def test_author_initial_vs_full_golden_value():
    # tokens {j, smith} vs {john, smith}: j->john 2*1/(1+4)=0.4, smith->1.0
    score = author_similarity(["J. Smith"], ["John Smith"])
    assert score == pytest.approx(0.7)


def test_author_token_oracle_on_fixture():
    generated = [["J. Smith"], ["Ada Lovelace", "C. Babbage"], ["Yann LeCun"]]
    candidates = [["John Smith"], ["Ada Lovelace", "Charles Babbage"], ["Y. LeCun", "L. Bottou"]]

    def token_oracle(gen, cand):
        def toks(names):
            out = set()
            for name in names:
                out |= set(normalize(name).replace(".", " ").replace("-", " ").split())
            return sorted(out)

        def ratio(x, y):
            return 2 * oracle_lcs(x, y) / (len(x) + len(y))

        g, c = toks(gen), toks(cand)
        return sum(max(ratio(t, u) for u in c) for t in g) / len(g)

    for gen, cand in zip(generated, candidates):
        assert author_similarity(gen, cand) == pytest.approx(token_oracle(gen, cand))


def test_author_et_al_compares_first_author_only():
    full = author_similarity(["Jane Doe"], ["Jane Doe"])
    truncated = author_similarity(
        ["Jane Doe"], ["Jane Doe", "Someone Unrelated", "Another Person"], generated_et_al=True
    )
    assert truncated == full == 1.0


def test_author_requires_both_sides():
    with pytest.raises(ValueError):
        author_similarity([], ["A"])
    with pytest.raises(ValueError):
        author_similarity(["A"], [])


# ---------------------------------------------------------------------------
# Existence verdicts
# ---------------------------------------------------------------------------


def _cand(index_id, title, author):
    return MatchCandidate(index_id=index_id, title_score=title, author_score=author)


THRESHOLDS = Thresholds(0.9, 0.6)


def test_decide_perfect_candidate_exists():
    verdict = decide_existence([_cand("p1", 1.0, 1.0)], THRESHOLDS)
    assert verdict.exists and verdict.matched_index_id == "p1"
    assert verdict.thresholds_used == (0.9, 0.6)


def test_decide_empty_candidates():
    verdict = decide_existence([], THRESHOLDS)
    assert not verdict.exists and verdict.matched_index_id is None


def test_decide_straddling_candidates_picks_qualifier():
    candidates = [_cand("low", 0.95, 0.4), _cand("high", 0.92, 0.8)]
    verdict = decide_existence(candidates, THRESHOLDS)
    assert verdict.exists and verdict.matched_index_id == "high"
    # input order must not matter
    verdict_rev = decide_existence(list(reversed(candidates)), THRESHOLDS)
    assert verdict_rev.matched_index_id == "high"


def test_decide_tie_breaks_are_order_invariant():
    rng = random.Random(7)
    scores = [round(rng.random(), 2) for _ in range(6)]
    candidates = [
        _cand(f"p{i}", scores[i % len(scores)], scores[(i + 1) % len(scores)]) for i in range(6)
    ]
    baseline = decide_existence(candidates, THRESHOLDS)
    for _ in range(10):
        rng.shuffle(candidates)
        verdict = decide_existence(candidates, THRESHOLDS)
        assert (verdict.exists, verdict.matched_index_id) == (
            baseline.exists,
            baseline.matched_index_id,
        )


def test_decide_monotone_in_thresholds():
    rng = random.Random(13)
    for _ in range(200):
        candidates = [
            _cand(f"p{i}", round(rng.random(), 2), round(rng.random(), 2))
            for i in range(rng.randint(0, 4))
        ]
        t1 = Thresholds(round(rng.random(), 2), round(rng.random(), 2))
        t2 = Thresholds(
            min(1.0, t1.title_threshold + rng.random() * 0.5),
            min(1.0, t1.author_threshold + rng.random() * 0.5),
        )
        low = decide_existence(candidates, t1)
        high = decide_existence(candidates, t2)
        if high.exists:
            assert low.exists


# ---------------------------------------------------------------------------
# Candidate search against a fixture index
# ---------------------------------------------------------------------------


@pytest.fixture()
def scholar(tmp_path):
    papers = [
        {"index_id": "p1", "title": "Spectral Methods for Graph Clustering", "authors": ["A. One"]},
        {"index_id": "p2", "title": "Graph Clustering with Spectral Tools", "authors": ["B. Two"]},
        {"index_id": "p3", "title": "Spectral Graph Clustering Revisited", "authors": ["C. Three"]},
        {"index_id": "p4", "title": "Clustering Graphs by Spectra", "authors": ["D. Four"]},
        {"index_id": "p5", "title": "A Spectral View of Graph Clustering", "authors": ["E. Five"]},
        {"index_id": "p6", "title": "Unrelated Botany Field Guide", "authors": ["F. Six"]},
    ]
    papers_dir = tmp_path / "scholar" / "papers"
    papers_dir.mkdir(parents=True)
    for rec in papers:
        (papers_dir / f"{rec['index_id']}.json").write_text(json.dumps(rec))
    return FixtureIndexClient(tmp_path)


def test_search_exact_title_first_with_score_one(scholar):
    candidates = search_candidates(
        scholar, "Spectral Methods for Graph Clustering", ["A. One"], limit=3
    )
    assert candidates[0].index_id == "p1"
    assert candidates[0].title_score == 1.0


def test_search_gibberish_returns_empty(scholar):
    assert search_candidates(scholar, "zqx jkwv pmtr", ["Nobody"], limit=3) == []


def test_search_caps_at_three(scholar):
    candidates = search_candidates(scholar, "spectral graph clustering", ["X. Y"], limit=3)
    assert len(candidates) == 3


def test_search_requires_title():
    with pytest.raises(ValueError):
        search_candidates(None, "   ", ["A"], limit=3)


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


def _separable_pairs():
    pairs = []
    for i in range(6):
        pairs.append(
            LabelledPair(
                generated_title="Exact Same Title Here",
                generated_authors=["Alice Alpha"],
                candidate_id=f"t{i}",
                candidate_title="Exact Same Title Here",
                candidate_authors=["Alice Alpha"],
                label=True,
            )
        )
    for i in range(6):
        pairs.append(
            LabelledPair(
                generated_title="Exact Same Title Here",
                generated_authors=["Alice Alpha"],
                candidate_id=f"f{i}",
                candidate_title="Utterly Different Words",
                candidate_authors=["Bob Beta"],
                label=False,
            )
        )
    return pairs


def test_calibrate_separable_set_is_perfect():
    report = calibrate(_separable_pairs())
    assert report.accuracy == 1.0
    assert report.missed_true == 0 and report.accepted_false == 0


def test_calibrate_single_class_errors():
    pairs = [p for p in _separable_pairs() if p.label]
    with pytest.raises(CalibrationError):
        calibrate(pairs)


def test_calibrate_empty_errors():
    with pytest.raises(CalibrationError):
        calibrate([])


def test_calibrated_thresholds_reproduce_verdicts():
    pairs = bundled_labelled_pairs()
    report = calibrate(pairs)
    for pair, predicted in zip(pairs, report.predictions):
        title, author = pair.scores()
        verdict = decide_existence(
            [MatchCandidate(pair.candidate_id, title, author)], report.thresholds
        )
        assert verdict.exists == predicted


def test_bundled_fixture_meets_protocol_bounds():
    pairs = bundled_labelled_pairs()
    assert len(pairs) == 100
    report = calibrate(pairs)
    assert report.accuracy >= 0.95
    assert report.missed_true <= 5
    assert report.accepted_false <= 5


def test_default_thresholds_come_from_bundled_calibration():
    thresholds = default_thresholds()
    report = calibrate(bundled_labelled_pairs())
    assert thresholds.title_threshold == pytest.approx(report.thresholds.title_threshold)
    assert thresholds.author_threshold == pytest.approx(report.thresholds.author_threshold)
