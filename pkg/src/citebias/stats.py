"""Per-run summary statistics, run overlap, characteristics
distributions, and citation-bias breakdowns.

Every percentage is an exact rational until the moment it is written
(one decimal, round-half-to-even), and every table is emitted with its
raw counts so numbers are recomputable. Flag semantics form a chain:
a pairwise match implies cited-in-introduction implies cited-in-paper
implies existence.
"""

from __future__ import annotations

import json
import logging
import statistics
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_EVEN, Decimal, localcontext
from fractions import Fraction
from pathlib import Path

from .clients import atomic_write_text, dump_json
from .corpus import CANONICAL_VENUES, PaperRecord
from .llmgate import GeneratedReference
from .matcher import MatchVerdict
from .textnorm import title_key

logger = logging.getLogger(__name__)

SUMMARY_ROWS = (
    ("Existence", "existence_pct"),
    ("Cited in paper", "cited_in_paper_pct"),
    ("Cited in introduction", "cited_in_intro_pct"),
    ("PM all", "pm_all_pct"),
    ("PM unique", "pm_unique_pct"),
)

DEFAULT_SUBPERIOD_BINS: list[tuple[str, int | None, int | None]] = [
    ("<=1988", None, 1988),
    ("1989-1998", 1989, 1998),
    ("1999-2009", 1999, 2009),
    ("2010-2016", 2010, 2016),
    ("2017-2023", 2017, 2023),
    (">=2024", 2024, None),
]

# 1-2-5 ladder for citation-style heavy-tailed counts
DEFAULT_COUNT_BIN_EDGES = [0, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000, 100000]

MISSING_IDENTITY = "missing:"


@dataclass(frozen=True)
class RefFlags:
    """Verdict-derived flags for one (paper, citation slot)."""

    paper_id: str
    citation_number: int
    existing: bool
    cited_in_paper: bool
    cited_in_intro: bool
    pairwise_match: bool
    uniquely_identifiable: bool
    identity: str


@dataclass
class RunSummary:
    """Headline percentages for one run; None marks a zero denominator."""

    existence_pct: Fraction | None
    cited_in_paper_pct: Fraction | None
    cited_in_intro_pct: Fraction | None
    pm_all_pct: Fraction | None
    pm_unique_pct: Fraction | None
    denominators: tuple[int, int]
    counts: dict[str, int] = field(default_factory=dict)


def classify_generated(
    ref: GeneratedReference | None,
    verdict: MatchVerdict | None,
    focal: PaperRecord,
    intro_ids: dict[int, str | None],
    citation_number: int,
    uniquely_identifiable: bool,
) -> RefFlags:
    """Derive the flag chain for one citation slot.

    ``intro_ids`` maps each intro citation number to its resolved index
    id (None when unresolved). A slot the model never answered gets
    all-false flags and a missing identity.
    """
    if ref is None or verdict is None:
        return RefFlags(
            paper_id=focal.index_id,
            citation_number=citation_number,
            existing=False,
            cited_in_paper=False,
            cited_in_intro=False,
            pairwise_match=False,
            uniquely_identifiable=uniquely_identifiable,
            identity=MISSING_IDENTITY + str(citation_number),
        )
    existing = verdict.exists
    matched = verdict.matched_index_id
    reference_ids = set(focal.reference_ids)
    intro_id_set = {i for i in intro_ids.values() if i is not None}
    cited_in_paper = existing and matched in reference_ids
    cited_in_intro = cited_in_paper and matched in intro_id_set
    pairwise = cited_in_intro and matched == intro_ids.get(citation_number)
    identity = f"id:{matched}" if existing else f"title:{title_key(ref.title)}"
    return RefFlags(
        paper_id=focal.index_id,
        citation_number=citation_number,
        existing=existing,
        cited_in_paper=cited_in_paper,
        cited_in_intro=cited_in_intro,
        pairwise_match=pairwise,
        uniquely_identifiable=uniquely_identifiable,
        identity=identity,
    )


def summarize_run(flags: list[RefFlags]) -> RunSummary:
    """Aggregate flags into the five headline percentages.

    The pairwise-match-on-unique-slots figure uses its own denominator
    (the count of uniquely identifiable slots); everything else is over
    all slots.
    """
    total = len(flags)
    unique_total = sum(1 for f in flags if f.uniquely_identifiable)
    counts = {
        "total_refs": total,
        "unique_refs": unique_total,
        "existing": sum(1 for f in flags if f.existing),
        "cited_in_paper": sum(1 for f in flags if f.cited_in_paper),
        "cited_in_intro": sum(1 for f in flags if f.cited_in_intro),
        "pm_all": sum(1 for f in flags if f.pairwise_match),
        "pm_unique": sum(1 for f in flags if f.pairwise_match and f.uniquely_identifiable),
    }

    def pct(numer: int, denom: int) -> Fraction | None:
        return Fraction(100 * numer, denom) if denom else None

    return RunSummary(
        existence_pct=pct(counts["existing"], total),
        cited_in_paper_pct=pct(counts["cited_in_paper"], total),
        cited_in_intro_pct=pct(counts["cited_in_intro"], total),
        pm_all_pct=pct(counts["pm_all"], total),
        pm_unique_pct=pct(counts["pm_unique"], unique_total),
        denominators=(total, unique_total),
        counts=counts,
    )


def run_overlap(flags_a: list[RefFlags], flags_b: list[RefFlags]) -> Fraction:
    """Percentage of slots where two runs generated the same reference.

    Identity is the matched index id for existing references and the
    normalized title otherwise; slots the model skipped match only other
    skipped slots. Runs must cover the same corpus.
    """
    key = lambda f: (f.paper_id, f.citation_number)  # noqa: E731
    a = {key(f): f.identity for f in flags_a}
    b = {key(f): f.identity for f in flags_b}
    if set(a) != set(b):
        raise ValueError("runs cover different corpora")
    if not a:
        raise ValueError("empty runs have no overlap")
    same = sum(1 for k, ident in a.items() if b[k] == ident)
    return Fraction(100 * same, len(a))


# ---------------------------------------------------------------------------
# Characteristics distributions
# ---------------------------------------------------------------------------


@dataclass
class CharacteristicsRow:
    """One reference's comparable properties, tagged by cohort."""

    cohort: str
    title_chars: int
    year: int | None
    author_count: int | None
    venue: str
    citation_count: int | None = None
    influential_citation_count: int | None = None
    reference_count: int | None = None


@dataclass
class Histogram:
    bins: list[tuple[str, int]]
    unknown: int
    n_known: int
    median: float | None

    def total(self) -> int:
        return sum(count for _, count in self.bins) + self.unknown


def _bin_label_ranges(edges: list[int]) -> list[tuple[str, int | None, int | None]]:
    # open head and tail bins make the ranges total over the integers
    out: list[tuple[str, int | None, int | None]] = [(f"<{edges[0]}", None, edges[0] - 1)]
    for lo, hi in zip(edges, edges[1:]):
        label = str(lo) if hi == lo + 1 else f"{lo}-{hi - 1}"
        out.append((label, lo, hi - 1))
    out.append((f">={edges[-1]}", edges[-1], None))
    return out


def _range_bins_for(metric: str) -> list[tuple[str, int | None, int | None]]:
    if metric == "title_chars":
        return _bin_label_ranges(list(range(0, 200, 10)))
    if metric == "year":
        return _bin_label_ranges(list(range(1950, 2031, 5)))
    if metric == "author_count":
        return _bin_label_ranges(list(range(1, 11)))
    return _bin_label_ranges(DEFAULT_COUNT_BIN_EDGES)


def _find_bin(value: int, ranges: list[tuple[str, int | None, int | None]]) -> str:
    for label, lo, hi in ranges:
        if (lo is None or value >= lo) and (hi is None or value <= hi):
            return label
    return ranges[-1][0]


def _histogram(values: list[int | None], metric: str) -> Histogram:
    known = [v for v in values if v is not None]
    unknown = len(values) - len(known)
    if metric == "venue":
        counts = {label: 0 for label in CANONICAL_VENUES}
        for v in known:
            counts[v] = counts.get(v, 0) + 1
        bins = [(label, counts[label]) for label in CANONICAL_VENUES]
        return Histogram(bins=bins, unknown=unknown, n_known=len(known), median=None)
    ranges = _range_bins_for(metric)
    counts = {label: 0 for label, _, _ in ranges}
    for v in known:
        counts[_find_bin(v, ranges)] += 1
    bins = [(label, counts[label]) for label, _, _ in ranges if counts[label]]
    median = statistics.median(known) if known else None
    return Histogram(bins=bins, unknown=unknown, n_known=len(known), median=median)


def count_distribution(values: list[int | None], metric: str = "citation_count") -> Histogram:
    """Histogram + median for one list of count values (None = unknown)."""
    return _histogram(values, metric)


NUMERIC_METRICS = (
    "title_chars",
    "year",
    "author_count",
    "citation_count",
    "influential_citation_count",
    "reference_count",
)


def characteristics(rows: list[CharacteristicsRow]) -> dict[str, dict[str, Histogram]]:
    """Per-cohort distribution tables for every comparable property.

    Medians are computed over known values only; unknowns are tallied,
    never imputed, so every histogram's total equals the cohort size.
    """
    by_cohort: dict[str, list[CharacteristicsRow]] = {}
    for row in rows:
        by_cohort.setdefault(row.cohort, []).append(row)
    tables: dict[str, dict[str, Histogram]] = {}
    for cohort, members in sorted(by_cohort.items()):
        metrics: dict[str, Histogram] = {}
        for metric in NUMERIC_METRICS:
            values = [getattr(row, metric) for row in members]
            metrics[metric] = _histogram(values, metric)
        metrics["venue"] = _histogram([row.venue for row in members], "venue")
        tables[cohort] = metrics
    return tables


# ---------------------------------------------------------------------------
# Bias breakdowns over paired references
# ---------------------------------------------------------------------------


@dataclass
class PairedRefs:
    """An existing generated reference and its slot's ground-truth entry."""

    paper_id: str
    citation_number: int
    generated: CharacteristicsRow
    ground_truth: CharacteristicsRow


@dataclass
class BiasBin:
    facet: str
    bin_label: str
    generated_median: float | None
    ground_truth_median: float | None
    difference: float | None
    n_generated: int
    n_ground_truth: int


@dataclass
class BiasTable:
    facet: str
    metric: str
    bins: list[BiasBin]
    excluded_pairs: int


def _facet_bins(
    facet: str, subperiod_bins: list[tuple[str, int | None, int | None]]
) -> list[tuple[str, int | None, int | None]]:
    if facet == "subperiod":
        return subperiod_bins
    if facet == "title_chars":
        return _range_bins_for("title_chars")
    if facet == "author_count":
        return _range_bins_for("author_count")
    if facet == "venue":
        return [(label, None, None) for label in CANONICAL_VENUES]
    raise ValueError(f"unknown facet {facet!r}")


def _facet_value(row: CharacteristicsRow, facet: str):
    if facet == "subperiod":
        return row.year
    if facet == "title_chars":
        return row.title_chars
    if facet == "author_count":
        return row.author_count
    if facet == "venue":
        return row.venue
    raise ValueError(f"unknown facet {facet!r}")


def bias_breakdown(
    pairs: list[PairedRefs],
    facet: str,
    metric: str = "citation_count",
    subperiod_bins: list[tuple[str, int | None, int | None]] | None = None,
) -> BiasTable:
    """Per-facet-bin medians of a count metric for both cohorts.

    Each side of a pair is binned by its own facet value. Pairs where
    either side's metric is unknown are excluded from the facet entirely
    and tallied. The difference column is generated minus ground truth.
    """
    bins = _facet_bins(facet, subperiod_bins or DEFAULT_SUBPERIOD_BINS)
    gen_values: dict[str, list[int]] = {label: [] for label, _, _ in bins}
    gt_values: dict[str, list[int]] = {label: [] for label, _, _ in bins}
    excluded = 0
    for pair in pairs:
        gen_metric = getattr(pair.generated, metric)
        gt_metric = getattr(pair.ground_truth, metric)
        if gen_metric is None or gt_metric is None:
            excluded += 1
            continue
        placed = False
        for row, value, store in (
            (pair.generated, gen_metric, gen_values),
            (pair.ground_truth, gt_metric, gt_values),
        ):
            facet_value = _facet_value(row, facet)
            if facet_value is None:
                continue
            if facet == "venue":
                if facet_value in store:
                    store[facet_value].append(value)
                    placed = True
            else:
                label = _find_bin(facet_value, bins)
                store[label].append(value)
                placed = True
        if not placed:
            excluded += 1

    out_bins = []
    for label, _, _ in bins:
        gen = gen_values[label]
        gt = gt_values[label]
        gen_median = statistics.median(gen) if gen else None
        gt_median = statistics.median(gt) if gt else None
        difference = (
            gen_median - gt_median if gen_median is not None and gt_median is not None else None
        )
        out_bins.append(
            BiasBin(
                facet=facet,
                bin_label=label,
                generated_median=gen_median,
                ground_truth_median=gt_median,
                difference=difference,
                n_generated=len(gen),
                n_ground_truth=len(gt),
            )
        )
    return BiasTable(facet=facet, metric=metric, bins=out_bins, excluded_pairs=excluded)


def cohort_split_by_counterpart(
    slot_rows: list[tuple[RefFlags, CharacteristicsRow]],
) -> dict[str, list[CharacteristicsRow]]:
    """Group ground-truth rows by what happened to their slot's generation.

    Existing and non-existent form a partition; in-paper is the published
    subset of existing and overlaps it by construction. Rows are copied
    with the cohort tag rewritten, so members of two cohorts stay
    independent.
    """
    cohorts: dict[str, list[CharacteristicsRow]] = {
        "counterpart_of_existing": [],
        "counterpart_of_in_paper": [],
        "counterpart_of_nonexistent": [],
    }
    for flags, gt_row in slot_rows:
        if flags.existing:
            cohorts["counterpart_of_existing"].append(
                replace(gt_row, cohort="counterpart_of_existing")
            )
            if flags.cited_in_paper:
                cohorts["counterpart_of_in_paper"].append(
                    replace(gt_row, cohort="counterpart_of_in_paper")
                )
        else:
            cohorts["counterpart_of_nonexistent"].append(
                replace(gt_row, cohort="counterpart_of_nonexistent")
            )
    return cohorts


# ---------------------------------------------------------------------------
# Formatting and emission
# ---------------------------------------------------------------------------


def format_pct(value: Fraction | None) -> str:
    """One decimal, round-half-to-even, computed from the exact rational."""
    if value is None:
        return "NA"
    with localcontext() as ctx:
        ctx.prec = 50
        quantized = (Decimal(value.numerator) / Decimal(value.denominator)).quantize(
            Decimal("0.1"), rounding=ROUND_HALF_EVEN
        )
    return str(quantized)


def format_median(value: float | None) -> str:
    if value is None:
        return "NA"
    return f"{value:g}"


def _write_csv(path: Path, header: list[str], rows: list[list[str]], manifest_hash: str) -> None:
    lines = [f"# manifest_hash={manifest_hash}"]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_csv_quote(cell) for cell in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _csv_quote(cell: str) -> str:
    if any(ch in cell for ch in ',"\n'):
        return '"' + cell.replace('"', '""') + '"'
    return cell


def run_label(strategy: str, run_index: int) -> str:
    return f"run{run_index}_{strategy}"


def write_summary_csv(
    path: Path,
    summaries: dict[tuple[str, int], RunSummary],
    manifest_hash: str,
) -> None:
    """Table of the five headline metrics, one column per (run, strategy)."""
    columns = sorted(summaries, key=lambda k: (k[1], k[0] != "vanilla"))
    header = ["metric", *(run_label(s, i) for s, i in columns)]
    rows = []
    for label, attr in SUMMARY_ROWS:
        row = [label]
        for key in columns:
            row.append(format_pct(getattr(summaries[key], attr)))
        rows.append(row)
    _write_csv(path, header, rows, manifest_hash)


def write_summary_counts_csv(
    path: Path,
    summaries: dict[tuple[str, int], RunSummary],
    manifest_hash: str,
) -> None:
    columns = sorted(summaries, key=lambda k: (k[1], k[0] != "vanilla"))
    count_keys = [
        "total_refs",
        "unique_refs",
        "existing",
        "cited_in_paper",
        "cited_in_intro",
        "pm_all",
        "pm_unique",
    ]
    header = ["count", *(run_label(s, i) for s, i in columns)]
    rows = []
    for key_name in count_keys:
        row = [key_name]
        for key in columns:
            row.append(str(summaries[key].counts.get(key_name, 0)))
        rows.append(row)
    _write_csv(path, header, rows, manifest_hash)


def write_overlap_csv(
    path: Path,
    overlaps: dict[tuple[int, int], Fraction],
    run_indices: list[int],
    manifest_hash: str,
) -> None:
    """Upper-triangular pairwise overlap matrix between runs."""
    header = ["run", *(f"run{i}" for i in run_indices[:-1])]
    rows = []
    for j in run_indices[1:]:
        row = [f"run{j}"]
        for i in run_indices[:-1]:
            if i < j:
                value = overlaps.get((i, j)) or overlaps.get((j, i))
                row.append(format_pct(value))
            else:
                row.append("")
        rows.append(row)
    _write_csv(path, header, rows, manifest_hash)


def write_characteristics_csvs(
    out_dir: Path,
    tables: dict[str, dict[str, Histogram]],
    manifest_hash: str,
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for cohort, metrics in sorted(tables.items()):
        rows = []
        for metric, hist in sorted(metrics.items()):
            for label, count in hist.bins:
                rows.append([metric, label, str(count)])
            rows.append([metric, "unknown", str(hist.unknown)])
            rows.append([metric, "median", format_median(hist.median)])
            rows.append([metric, "n_known", str(hist.n_known)])
        _write_csv(out_dir / f"{cohort}.csv", ["metric", "bin", "value"], rows, manifest_hash)


def write_bias_csv(path: Path, table: BiasTable, manifest_hash: str) -> None:
    header = [
        "bin",
        "generated_median",
        "ground_truth_median",
        "difference",
        "n_generated",
        "n_ground_truth",
    ]
    rows = []
    for b in table.bins:
        rows.append(
            [
                b.bin_label,
                format_median(b.generated_median),
                format_median(b.ground_truth_median),
                format_median(b.difference),
                str(b.n_generated),
                str(b.n_ground_truth),
            ]
        )
    rows.append(["excluded_pairs", str(table.excluded_pairs), "", "", "", ""])
    _write_csv(path, header, rows, manifest_hash)


def histograms_payload(tables: dict[str, dict[str, Histogram]]) -> dict:
    """JSON-ready bundle of every histogram, for plotting."""
    payload: dict = {}
    for cohort, metrics in sorted(tables.items()):
        payload[cohort] = {}
        for metric, hist in sorted(metrics.items()):
            payload[cohort][metric] = {
                "bins": [[label, count] for label, count in hist.bins],
                "unknown": hist.unknown,
                "n_known": hist.n_known,
                "median": hist.median,
            }
    return payload


def write_histograms_json(path: Path, tables: dict, manifest_hash: str) -> None:
    payload = {"manifest_hash": manifest_hash, "histograms": histograms_payload(tables)}
    atomic_write_text(path, dump_json(payload))


def write_verdicts_jsonl(path: Path, records: list[dict]) -> None:
    lines = [json.dumps(rec, sort_keys=True, ensure_ascii=False) for rec in records]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
