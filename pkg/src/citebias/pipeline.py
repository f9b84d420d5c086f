"""Pipeline orchestration: configuration, stages, manifests, reports.

Stages run in a fixed dependency order::

    ingest -> prepare -> generate -> verify -> iterate -> analyze -> graph -> report

Each stage reads only files written by earlier stages (or the disk
cache), writes its outputs under its own subdirectory of the output
directory, and records a completion marker keyed by a digest of the
configuration and input trees; re-runs with unchanged inputs skip
completed stages. Every emitted file carries the manifest hash, which is
computed from deterministic inputs only, so a run against the replay
provider is bit-for-bit reproducible. Set SOURCE_DATE_EPOCH to pin the
manifest timestamp as well.

Per-paper failures (refusals, unparseable responses) are quarantined and
counted; only infrastructure errors abort a run.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import jsonschema
import yaml
from importlib import resources

from . import citegraph, docprep, llmgate, matcher, stats
from .clients import (
    CachedScholarClient,
    FixtureIndexClient,
    HttpPreprintClient,
    HttpScholarClient,
    JsonCache,
    TokenBucket,
    atomic_write_text,
    dump_json,
    parallel_map,
    safe_filename,
)
from .corpus import (
    EnrichedRecord,
    PaperRecord,
    Venue,
    VenueTable,
    enrich_reference,
    filter_candidates,
    harvest_candidates,
    resolve_paper,
)
from .errors import (
    ConfigError,
    Exclusion,
    PipelineError,
    ProviderRefusal,
    TableParseError,
)
from .llmgate import (
    ITERATIVE,
    VANILLA,
    DirectoryMockProvider,
    GeneratedReference,
    GenerationRun,
    OpenAIChatProvider,
    generate,
    merge_iterative,
    postprocess_references,
    render_iterative_prompt,
    render_vanilla_prompt,
    template_hashes,
)
from .matcher import MatchVerdict, Thresholds, decide_existence, search_candidates, title_similarity
from .textnorm import title_key

logger = logging.getLogger(__name__)

STAGES = ("ingest", "prepare", "generate", "verify", "iterate", "analyze", "graph", "report")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    """Validated pipeline configuration; see data/config.schema.json."""

    window: tuple[str, str]
    category: str
    venue_keywords: list[str]
    blacklist: list[str]
    resolve_fuzzy_threshold: float | None
    sources_dir: Path
    venue_aliases_path: Path | None
    fixture_dir: Path | None
    preprint_url: str | None
    scholar_url: str | None
    scholar_api_key_env: str
    rate_limit_per_sec: float
    max_in_flight: int
    model_id: str
    provider_kind: str
    provider_base_url: str | None
    provider_api_key_env: str
    sampling_params: dict
    provider_rate_limit: float
    vanilla_runs: int
    iterative: bool
    thresholds: Thresholds | None
    search_limit: int
    subperiod_bins: list[tuple[str, int | None, int | None]] | None
    graph_strategy: str
    graph_run_index: int
    latex_command: list[str] | None
    cache_dir: Path
    out_dir: Path
    mock_dir: Path | None
    refresh: bool
    snapshot: dict = field(default_factory=dict, repr=False)


def config_schema() -> dict:
    text = resources.files("citebias.data").joinpath("config.schema.json").read_text("utf-8")
    return json.loads(text)


def load_config(path: Path | str, overrides: dict | None = None) -> PipelineConfig:
    """Load, validate, and normalize a YAML config file.

    CLI overrides (cache_dir, out_dir, mock_dir, refresh, model_id) win
    over file values. Relative paths resolve against the config file's
    directory.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    try:
        jsonschema.validate(raw, config_schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message} (at {'/'.join(map(str, exc.path))})") from exc

    overrides = overrides or {}
    base = path.parent

    def respath(value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else (base / p)

    corpus_cfg = raw["corpus"]
    index_cfg = raw.get("index", {})
    provider_cfg = raw["provider"]
    runs_cfg = raw.get("runs", {})
    matching_cfg = raw.get("matching", {})
    analysis_cfg = raw.get("analysis", {})
    graph_cfg = raw.get("graph", {})
    docprep_cfg = raw.get("docprep", {})

    thresholds_cfg = matching_cfg.get("thresholds")
    thresholds = None
    if thresholds_cfg:
        thresholds = Thresholds(
            title_threshold=thresholds_cfg["title_threshold"],
            author_threshold=thresholds_cfg["author_threshold"],
            provenance=f"config:{path.name}",
        )

    subperiod = analysis_cfg.get("subperiod_bins")
    subperiod_bins = None
    if subperiod:
        subperiod_bins = [(str(b[0]), b[1], b[2]) for b in subperiod]

    cfg = PipelineConfig(
        window=(corpus_cfg["window"][0], corpus_cfg["window"][1]),
        category=corpus_cfg["category"],
        venue_keywords=list(corpus_cfg["venue_keywords"]),
        blacklist=list(corpus_cfg.get("blacklist", [])),
        resolve_fuzzy_threshold=corpus_cfg.get("resolve_fuzzy_threshold"),
        sources_dir=respath(corpus_cfg["sources_dir"]),
        venue_aliases_path=respath(corpus_cfg.get("venue_aliases_path")),
        fixture_dir=respath(index_cfg.get("fixture_dir")),
        preprint_url=index_cfg.get("preprint_url"),
        scholar_url=index_cfg.get("scholar_url"),
        scholar_api_key_env=index_cfg.get("scholar_api_key_env", ""),
        rate_limit_per_sec=index_cfg.get("rate_limit_per_sec", 3.0),
        max_in_flight=index_cfg.get("max_in_flight", 1),
        model_id=overrides.get("model_id") or provider_cfg["model_id"],
        provider_kind=provider_cfg["kind"],
        provider_base_url=provider_cfg.get("base_url"),
        provider_api_key_env=provider_cfg.get("api_key_env", "OPENAI_API_KEY"),
        sampling_params=dict(provider_cfg.get("sampling_params", {})),
        provider_rate_limit=provider_cfg.get("rate_limit_per_sec", 1.0),
        vanilla_runs=runs_cfg.get("vanilla", 1),
        iterative=runs_cfg.get("iterative", False),
        thresholds=thresholds,
        search_limit=matching_cfg.get("search_limit", 3),
        subperiod_bins=subperiod_bins,
        graph_strategy=graph_cfg.get("strategy", VANILLA),
        graph_run_index=graph_cfg.get("run_index", 1),
        latex_command=docprep_cfg.get("latex_command"),
        cache_dir=respath(overrides.get("cache_dir") or raw.get("cache_dir", "cache")),
        out_dir=respath(overrides.get("out_dir") or raw.get("out_dir", "out")),
        mock_dir=respath(overrides.get("mock_dir") or raw.get("mock_dir")),
        refresh=bool(overrides.get("refresh", raw.get("refresh", False))),
        snapshot=raw,
    )
    if cfg.fixture_dir is None and (cfg.preprint_url is None or cfg.scholar_url is None):
        raise ConfigError("index needs either fixture_dir or both service URLs")
    if cfg.provider_kind == "mock" and cfg.mock_dir is None:
        raise ConfigError("mock provider needs mock_dir (or --mock)")
    return cfg


# ---------------------------------------------------------------------------
# Context
# ---------------------------------------------------------------------------


class PipelineContext:
    """Lazily constructed clients and shared state for one run."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.cache = JsonCache(config.cache_dir, "scholar", refresh=config.refresh)
        if config.venue_aliases_path:
            self.venue_table = VenueTable.from_file(config.venue_aliases_path)
        else:
            self.venue_table = VenueTable.default()
        self.thresholds = config.thresholds or matcher.default_thresholds()
        self._fixture = FixtureIndexClient(config.fixture_dir) if config.fixture_dir else None
        self._index_limiter = TokenBucket(config.rate_limit_per_sec)
        self._provider_limiter = TokenBucket(config.provider_rate_limit)
        self._provider = None

    @property
    def preprint(self):
        if self._fixture is not None:
            return self._fixture
        return HttpPreprintClient(self.config.preprint_url, limiter=self._index_limiter)

    @property
    def scholar(self):
        if self._fixture is not None:
            return self._fixture
        return HttpScholarClient(
            self.config.scholar_url,
            limiter=self._index_limiter,
            api_key_env=self.config.scholar_api_key_env,
        )

    @property
    def scholar_cached(self):
        return CachedScholarClient(self.scholar, self.cache)

    @property
    def provider(self):
        if self._provider is None:
            cfg = self.config
            if cfg.provider_kind == "mock":
                self._provider = DirectoryMockProvider(cfg.mock_dir)
            else:
                self._provider = OpenAIChatProvider(
                    cfg.provider_base_url or "https://api.openai.com/v1",
                    cfg.model_id,
                    api_key_env=cfg.provider_api_key_env,
                    limiter=self._provider_limiter,
                )
        return self._provider

    def provider_for(self, strategy: str, run_index: int):
        """Provider bound to one run; replay stores may carry per-run draws."""
        if self.config.provider_kind == "mock":
            return DirectoryMockProvider(self.config.mock_dir, f"{strategy}-{run_index}")
        return self.provider

    # -- paths ----------------------------------------------------------

    @property
    def out(self) -> Path:
        return self.config.out_dir

    def stage_dir(self, stage: str) -> Path:
        return self.out / stage

    def paper_dirname(self, paper: PaperRecord) -> str:
        return safe_filename(paper.preprint_id)

    def run_dir(self, strategy: str, run_index: int) -> Path:
        return self.out / "runs" / safe_filename(self.config.model_id) / f"{strategy}-{run_index}"

    def verdicts_dir(self, strategy: str, run_index: int) -> Path:
        return self.out / "verdicts" / safe_filename(self.config.model_id) / f"{strategy}-{run_index}"


# ---------------------------------------------------------------------------
# Hashing and manifests
# ---------------------------------------------------------------------------


def _digest_tree(digest: "hashlib._Hash", root: Path | None) -> None:
    if root is None or not root.exists():
        return
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(str(path.relative_to(root)).encode("utf-8"))
        digest.update(b"\0")
        digest.update(path.read_bytes())
        digest.update(b"\1")


def inputs_digest(config: PipelineConfig) -> str:
    """Digest of every input tree a run depends on."""
    digest = hashlib.sha256()
    for root in (config.sources_dir, config.fixture_dir, config.mock_dir):
        _digest_tree(digest, root)
    return digest.hexdigest()


def manifest_hash(config: PipelineConfig) -> str:
    core = {
        "config": config.snapshot,
        "templates": template_hashes(),
        "inputs": inputs_digest(config),
    }
    return hashlib.sha256(dump_json(core).encode("utf-8")).hexdigest()


def _now_iso() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


@contextmanager
def output_lock(out_dir: Path):
    """Single-owner lock on the output directory (stale locks are stolen)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    while True:
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            break
        except FileExistsError:
            try:
                pid = int(lock.read_text().strip() or "0")
            except (OSError, ValueError):
                pid = 0
            if pid and _pid_alive(pid) and pid != os.getpid():
                raise PipelineError(f"output directory locked by running pid {pid}")
            lock.unlink(missing_ok=True)
    try:
        os.write(fd, str(os.getpid()).encode("ascii"))
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


# ---------------------------------------------------------------------------
# Record (de)serialization
# ---------------------------------------------------------------------------


def _venue_json(venue: Venue) -> dict:
    return {"canonical": venue.canonical, "raw": venue.raw}


def _venue_from(payload: dict) -> Venue:
    return Venue(payload["canonical"], payload["raw"])


def paper_to_json(paper: PaperRecord) -> dict:
    return {
        "preprint_id": paper.preprint_id,
        "index_id": paper.index_id,
        "title": paper.title,
        "venue": _venue_json(paper.venue),
        "year": paper.year,
        "posted_date": paper.posted_date,
        "authors": paper.authors,
        "reference_ids": paper.reference_ids,
        "intro_reference_numbers": sorted(paper.intro_reference_numbers),
    }


def paper_from_json(payload: dict) -> PaperRecord:
    return PaperRecord(
        preprint_id=payload["preprint_id"],
        index_id=payload["index_id"],
        title=payload["title"],
        venue=_venue_from(payload["venue"]),
        year=payload["year"],
        posted_date=payload["posted_date"],
        authors=list(payload["authors"]),
        reference_ids=list(payload["reference_ids"]),
        intro_reference_numbers=set(payload["intro_reference_numbers"]),
    )


def genref_to_json(ref: GeneratedReference) -> dict:
    return {
        "citation_number": ref.citation_number,
        "raw_text": ref.raw_text,
        "title": ref.title,
        "authors": ref.authors,
        "author_count": ref.author_count,
        "year": ref.year,
        "venue": _venue_json(ref.venue),
        "source_strategy": ref.source_strategy,
        "range_derived": ref.range_derived,
        "et_al": ref.et_al,
    }


def genref_from_json(payload: dict) -> GeneratedReference:
    return GeneratedReference(
        citation_number=payload["citation_number"],
        raw_text=payload["raw_text"],
        title=payload["title"],
        authors=list(payload["authors"]),
        author_count=payload["author_count"],
        year=payload["year"],
        venue=_venue_from(payload["venue"]),
        source_strategy=payload["source_strategy"],
        range_derived=payload["range_derived"],
        et_al=payload.get("et_al", False),
    )


def _fraction_json(value: Fraction | None) -> list[int] | None:
    return None if value is None else [value.numerator, value.denominator]


def _fraction_from(payload) -> Fraction | None:
    return None if payload is None else Fraction(payload[0], payload[1])


# ---------------------------------------------------------------------------
# Stage: ingest
# ---------------------------------------------------------------------------


def stage_ingest(ctx: PipelineContext) -> dict:
    """Harvest, filter, resolve, and enrich the corpus."""
    cfg = ctx.config
    stubs = harvest_candidates(ctx.preprint, cfg.window, cfg.category, cfg.venue_keywords)
    kept = filter_candidates(stubs, cfg.blacklist)
    papers: list[PaperRecord] = []
    exclusions: list[dict] = []
    seen_index_ids: dict[str, str] = {}
    for stub in kept:
        resolved = resolve_paper(
            stub,
            ctx.scholar_cached,
            ctx.venue_table,
            fuzzy_threshold=cfg.resolve_fuzzy_threshold,
        )
        if isinstance(resolved, Exclusion):
            exclusions.append(
                {"preprint_id": stub.preprint_id, "code": resolved.code, "detail": resolved.detail}
            )
        elif resolved.index_id in seen_index_ids:
            exclusions.append(
                {
                    "preprint_id": stub.preprint_id,
                    "code": "duplicate-resolution",
                    "detail": f"{resolved.index_id} already claimed by "
                    f"{seen_index_ids[resolved.index_id]}",
                }
            )
        else:
            seen_index_ids[resolved.index_id] = stub.preprint_id
            papers.append(resolved)

    all_ids = sorted({rid for paper in papers for rid in paper.reference_ids})
    results = parallel_map(
        lambda rid: enrich_reference(rid, ctx.scholar, ctx.cache),
        all_ids,
        max_in_flight=cfg.max_in_flight,
    )
    enrich_missing = sum(1 for r in results if isinstance(r, Exclusion))
    enriched_ok = len(results) - enrich_missing

    out = ctx.stage_dir("corpus")
    atomic_write_text(out / "papers.json", dump_json([paper_to_json(p) for p in papers]))
    atomic_write_text(out / "exclusions.json", dump_json(exclusions))
    by_code: dict[str, int] = {}
    for item in exclusions:
        by_code[item["code"]] = by_code.get(item["code"], 0) + 1
    return {
        "harvested": len(stubs),
        "after_blacklist": len(kept),
        "resolved": len(papers),
        "excluded": len(exclusions),
        "excluded_by_code": by_code,
        "references_enriched": enriched_ok,
        "references_not_found": enrich_missing,
    }


def load_papers(ctx: PipelineContext, prepared: bool = False) -> list[PaperRecord]:
    """Papers as ingested, or (with ``prepared``) the survivors of
    document preparation with their intro numbers filled in."""
    stage = "prepared" if prepared else "corpus"
    path = ctx.stage_dir(stage) / "papers.json"
    if not path.is_file():
        needed = "prepare" if prepared else "ingest"
        raise PipelineError(f"{stage}/papers.json missing: run the {needed} stage first")
    return [paper_from_json(p) for p in json.loads(path.read_text(encoding="utf-8"))]


# ---------------------------------------------------------------------------
# Stage: prepare
# ---------------------------------------------------------------------------


def _enriched_for(ctx: PipelineContext, ids: list[str]) -> dict[str, EnrichedRecord]:
    out = {}
    for rid in ids:
        rec = enrich_reference(rid, ctx.scholar, ctx.cache)
        if not isinstance(rec, Exclusion):
            out[rid] = rec
    return out


def _resolve_gt_title(
    title: str, enriched: dict[str, EnrichedRecord], title_threshold: float
) -> tuple[str | None, str]:
    """Match a structured ground-truth title to the focal paper's
    reference ids (exact normalized key first, then best substring ratio)."""
    key = title_key(title)
    exact = [rid for rid, rec in sorted(enriched.items()) if title_key(rec.title) == key]
    if exact:
        return exact[0], "exact" if len(exact) == 1 else "exact-first-of-several"
    best_id, best_score = None, 0.0
    for rid, rec in sorted(enriched.items()):
        score = title_similarity(title, rec.title)
        if score > best_score:
            best_id, best_score = rid, score
    if best_id is not None and best_score >= title_threshold:
        return best_id, f"fuzzy:{best_score:.3f}"
    return None, "unmatched"


def stage_prepare(ctx: PipelineContext) -> dict:
    """Document preparation plus ground-truth structuring and resolution."""
    cfg = ctx.config
    papers = load_papers(ctx)
    prepared_root = ctx.stage_dir("prepared")
    excluded: list[dict] = []
    survivors: list[PaperRecord] = []
    quarantined: list[dict] = []

    for paper in papers:
        source_dir = cfg.sources_dir / paper.preprint_id
        prep = docprep.prepare_source(source_dir, cfg.latex_command)
        if isinstance(prep, Exclusion):
            excluded.append(
                {"preprint_id": paper.preprint_id, "code": prep.code, "detail": prep.detail}
            )
            continue

        groups = prep.main_content.citation_occurrences
        warnings = list(prep.warnings)
        intro_refs = docprep.select_intro_references(groups, prep.reference_texts, warnings)
        unique_numbers = docprep.uniquely_identifiable_numbers(groups)
        paper.intro_reference_numbers = {num for num, _ in intro_refs}
        if paper.intro_reference_numbers and paper.reference_ids:
            if max(paper.intro_reference_numbers) > len(paper.reference_ids):
                warnings.append(
                    "intro cites beyond the index's reference list "
                    f"({max(paper.intro_reference_numbers)} > {len(paper.reference_ids)})"
                )

        paper_dir = prepared_root / ctx.paper_dirname(paper)
        atomic_write_text(paper_dir / "main_content.txt", prep.main_content.text + "\n")
        ref_lines = [f"[{num}] {raw}" for num, raw in intro_refs]
        atomic_write_text(
            paper_dir / "intro_references.txt", "\n".join(ref_lines) + ("\n" if ref_lines else "")
        )

        # structure the ground-truth list via the postprocessing prompt
        gt_rows: dict[int, dict] = {}
        post_outcome = "ok"
        if intro_refs:
            post_run = GenerationRun(cfg.model_id, VANILLA, 1)
            try:
                table = llmgate.postprocess_references(
                    "\n".join(ref_lines),
                    post_run,
                    ctx.provider,
                    ctx.venue_table,
                    raw_dir=paper_dir,
                    raw_prefix="gt_postprocess",
                )
            except (ProviderRefusal, TableParseError) as exc:
                post_outcome = f"failed:{type(exc).__name__}"
                quarantined.append({"preprint_id": paper.preprint_id, "reason": str(exc)})
                table = None
            atomic_write_text(
                paper_dir / "gt_postprocess_transcript.json",
                dump_json([[role, content] for role, content in post_run.transcript]),
            )
            if table is not None:
                enriched = _enriched_for(ctx, paper.reference_ids)
                raw_by_num = dict(intro_refs)
                for ref in table.references:
                    num = ref.citation_number
                    if num not in raw_by_num or num in gt_rows:
                        continue
                    index_id, resolution = _resolve_gt_title(
                        ref.title, enriched, ctx.thresholds.title_threshold
                    )
                    row = {
                        "citation_number": num,
                        "raw_text": raw_by_num[num],
                        "title": ref.title,
                        "authors": ref.authors,
                        "author_count": ref.author_count,
                        "year": ref.year,
                        "venue": _venue_json(ref.venue),
                        "index_id": index_id,
                        "resolution": resolution,
                    }
                    if index_id is not None:
                        rec = enriched[index_id]
                        row["citation_count"] = rec.citation_count
                        row["influential_citation_count"] = rec.influential_citation_count
                        row["reference_count"] = rec.reference_count
                    gt_rows[num] = row
                for num, raw in intro_refs:
                    if num not in gt_rows:
                        warnings.append(f"postprocess-missing: no structured row for [{num}]")

        record = {
            "preprint_id": paper.preprint_id,
            "index_id": paper.index_id,
            "intro_numbers": sorted(paper.intro_reference_numbers),
            "unique_numbers": sorted(
                unique_numbers & paper.intro_reference_numbers
            ),
            "n_bibliography": len(prep.bibliography),
            "gt_postprocess": post_outcome,
            "gt_refs": [gt_rows[num] for num in sorted(gt_rows)],
            "warnings": warnings,
        }
        atomic_write_text(paper_dir / "record.json", dump_json(record))
        survivors.append(paper)

    out = ctx.stage_dir("prepared")
    atomic_write_text(out / "papers.json", dump_json([paper_to_json(p) for p in survivors]))
    atomic_write_text(out / "exclusions.json", dump_json(excluded))
    by_code: dict[str, int] = {}
    for item in excluded:
        by_code[item["code"]] = by_code.get(item["code"], 0) + 1
    return {
        "prepared": len(survivors),
        "excluded": len(excluded),
        "excluded_by_code": by_code,
        "gt_postprocess_failures": len(quarantined),
    }


def _load_record(ctx: PipelineContext, paper: PaperRecord) -> dict:
    path = ctx.stage_dir("prepared") / ctx.paper_dirname(paper) / "record.json"
    return json.loads(path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Stage: generate
# ---------------------------------------------------------------------------


def _write_run_manifest(ctx: PipelineContext, strategy: str, run_index: int) -> None:
    payload = {
        "model_id": ctx.config.model_id,
        "strategy": strategy,
        "run_index": run_index,
        "sampling_params": ctx.config.sampling_params,
        "template_hashes": template_hashes(),
    }
    atomic_write_text(ctx.run_dir(strategy, run_index) / "run_manifest.json", dump_json(payload))


def _dedupe_refs(
    refs: list[GeneratedReference], valid_numbers: set[int]
) -> tuple[dict[int, GeneratedReference], list[dict], list[str]]:
    """First row per slot wins; rows for uncited slots are quarantined."""
    by_slot: dict[int, GeneratedReference] = {}
    quarantined: list[dict] = []
    anomalies: list[str] = []
    for ref in refs:
        if ref.citation_number not in valid_numbers:
            quarantined.append(
                {"row": ref.raw_text, "reason": f"uncited slot {ref.citation_number}"}
            )
            continue
        if ref.citation_number in by_slot:
            anomalies.append(f"duplicate row for slot {ref.citation_number}; kept the first")
            continue
        by_slot[ref.citation_number] = ref
    return by_slot, quarantined, anomalies


def _write_refs_file(
    paper_dir: Path,
    outcome: str,
    by_slot: dict[int, GeneratedReference],
    quarantined: list[dict],
    anomalies: list[str],
) -> None:
    payload = {
        "outcome": outcome,
        "references": [genref_to_json(by_slot[n]) for n in sorted(by_slot)],
        "quarantined": quarantined,
        "anomalies": anomalies,
    }
    atomic_write_text(paper_dir / "refs.json", dump_json(payload))


def _generate_one(
    ctx: PipelineContext, paper: PaperRecord, record: dict, run_index: int
) -> str:
    cfg = ctx.config
    paper_dir = ctx.run_dir(VANILLA, run_index) / ctx.paper_dirname(paper)
    main_content = (
        ctx.stage_dir("prepared") / ctx.paper_dirname(paper) / "main_content.txt"
    ).read_text(encoding="utf-8")

    provider = ctx.provider_for(VANILLA, run_index)
    run = GenerationRun(cfg.model_id, VANILLA, run_index, dict(cfg.sampling_params))
    messages = render_vanilla_prompt(main_content)
    try:
        response = generate(run, messages, provider, paper_dir / "response_raw.txt")
    except ProviderRefusal:
        atomic_write_text(
            paper_dir / "transcript.json",
            dump_json([[role, content] for role, content in run.transcript]),
        )
        _write_refs_file(paper_dir, "refusal", {}, [], [])
        return "refusal"
    atomic_write_text(
        paper_dir / "transcript.json",
        dump_json([[role, content] for role, content in run.transcript]),
    )

    post_run = GenerationRun(cfg.model_id, VANILLA, run_index, dict(cfg.sampling_params))
    try:
        table = postprocess_references(
            response, post_run, provider, ctx.venue_table, raw_dir=paper_dir
        )
    except (TableParseError, ProviderRefusal) as exc:
        _write_refs_file(paper_dir, f"parse-failure:{exc}", {}, [], [])
        return "parse-failure"
    by_slot, quarantined, anomalies = _dedupe_refs(
        table.references, set(record["intro_numbers"])
    )
    quarantined.extend(table.quarantined)
    anomalies.extend(table.anomalies)
    _write_refs_file(paper_dir, "ok", by_slot, quarantined, anomalies)
    return "ok"


def stage_generate(ctx: PipelineContext) -> dict:
    papers = load_papers(ctx, prepared=True)
    outcomes = {"ok": 0, "refusal": 0, "parse-failure": 0}
    for run_index in range(1, ctx.config.vanilla_runs + 1):
        _write_run_manifest(ctx, VANILLA, run_index)
        for paper in papers:
            record = _load_record(ctx, paper)
            outcome = _generate_one(ctx, paper, record, run_index)
            outcomes[outcome] = outcomes.get(outcome, 0) + 1
    return {"runs": ctx.config.vanilla_runs, **outcomes}


# ---------------------------------------------------------------------------
# Stage: verify
# ---------------------------------------------------------------------------


def _load_refs(ctx: PipelineContext, strategy: str, run_index: int, paper: PaperRecord) -> dict:
    path = ctx.run_dir(strategy, run_index) / ctx.paper_dirname(paper) / "refs.json"
    if not path.is_file():
        raise PipelineError(f"missing {path}; run the {strategy} generation stage first")
    return json.loads(path.read_text(encoding="utf-8"))


def _verify_refs(
    ctx: PipelineContext, refs: list[GeneratedReference]
) -> dict[int, MatchVerdict]:
    verdicts: dict[int, MatchVerdict] = {}
    for ref in refs:
        if not ref.title.strip():
            verdicts[ref.citation_number] = MatchVerdict(
                exists=False,
                matched_index_id=None,
                best_candidate=None,
                thresholds_used=ctx.thresholds.as_tuple(),
            )
            continue
        candidates = search_candidates(
            ctx.scholar_cached,
            ref.title,
            ref.authors,
            et_al=ref.et_al,
            limit=ctx.config.search_limit,
        )
        verdict = decide_existence(candidates, ctx.thresholds)
        if verdict.exists:
            # matched records feed characteristics and the citation graphs
            enrich_reference(verdict.matched_index_id, ctx.scholar, ctx.cache)
        verdicts[ref.citation_number] = verdict
    return verdicts


def _write_verdicts(
    ctx: PipelineContext,
    strategy: str,
    run_index: int,
    paper: PaperRecord,
    refs_by_slot: dict[int, GeneratedReference],
    verdicts: dict[int, MatchVerdict],
) -> None:
    rows = []
    for number in sorted(verdicts):
        verdict = verdicts[number]
        ref = refs_by_slot.get(number)
        rows.append(
            {
                "citation_number": number,
                "generated_title": ref.title if ref else "",
                **verdict.to_json(),
            }
        )
    path = ctx.verdicts_dir(strategy, run_index) / f"{ctx.paper_dirname(paper)}.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    stats.write_verdicts_jsonl(path, rows)


def stage_verify(ctx: PipelineContext) -> dict:
    papers = load_papers(ctx, prepared=True)
    checked = existing = 0
    for run_index in range(1, ctx.config.vanilla_runs + 1):
        for paper in papers:
            payload = _load_refs(ctx, VANILLA, run_index, paper)
            refs = [genref_from_json(r) for r in payload["references"]]
            verdicts = _verify_refs(ctx, refs)
            _write_verdicts(
                ctx, VANILLA, run_index, paper, {r.citation_number: r for r in refs}, verdicts
            )
            checked += len(verdicts)
            existing += sum(1 for v in verdicts.values() if v.exists)
    return {"checked": checked, "existing": existing}


def _load_verdicts(
    ctx: PipelineContext, strategy: str, run_index: int, paper: PaperRecord
) -> dict[int, MatchVerdict]:
    path = ctx.verdicts_dir(strategy, run_index) / f"{ctx.paper_dirname(paper)}.jsonl"
    if not path.is_file():
        raise PipelineError(f"missing {path}; run the verify stage first")
    verdicts: dict[int, MatchVerdict] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        row = json.loads(line)
        best = row.get("best_candidate")
        verdicts[row["citation_number"]] = MatchVerdict(
            exists=row["exists"],
            matched_index_id=row["matched_index_id"],
            best_candidate=(
                matcher.MatchCandidate(
                    index_id=best["index_id"],
                    title_score=best["title_score"],
                    author_score=best["author_score"],
                )
                if best
                else None
            ),
            thresholds_used=tuple(row["thresholds_used"]),
        )
    return verdicts


# ---------------------------------------------------------------------------
# Stage: iterate
# ---------------------------------------------------------------------------


def _iterate_one(
    ctx: PipelineContext, paper: PaperRecord, record: dict, run_index: int
) -> str:
    cfg = ctx.config
    vanilla_dir = ctx.run_dir(VANILLA, run_index) / ctx.paper_dirname(paper)
    iter_dir = ctx.run_dir(ITERATIVE, run_index) / ctx.paper_dirname(paper)

    payload = _load_refs(ctx, VANILLA, run_index, paper)
    parent_refs = {r["citation_number"]: genref_from_json(r) for r in payload["references"]}
    parent_verdicts = _load_verdicts(ctx, VANILLA, run_index, paper)
    intro_numbers = set(record["intro_numbers"])
    existing_slots = {n for n, v in parent_verdicts.items() if v.exists}
    nonexistent = sorted(intro_numbers - existing_slots)

    if not nonexistent:
        _write_refs_file(
            iter_dir, "no-iteration-needed", parent_refs, [], ["all slots verified existing"]
        )
        _write_verdicts(ctx, ITERATIVE, run_index, paper, parent_refs, parent_verdicts)
        return "skipped"

    transcript_path = vanilla_dir / "transcript.json"
    transcript = [tuple(item) for item in json.loads(transcript_path.read_text(encoding="utf-8"))]
    parent_run = GenerationRun(
        cfg.model_id, VANILLA, run_index, dict(cfg.sampling_params), transcript=transcript
    )
    if payload["outcome"] != "ok" and not parent_refs:
        # vanilla never produced a usable response; nothing to build on
        _write_refs_file(iter_dir, f"parent-{payload['outcome']}", {}, [], [])
        _write_verdicts(ctx, ITERATIVE, run_index, paper, {}, parent_verdicts)
        return "parent-failed"

    main_content = (
        ctx.stage_dir("prepared") / ctx.paper_dirname(paper) / "main_content.txt"
    ).read_text(encoding="utf-8")
    messages = render_iterative_prompt(parent_run, set(nonexistent), main_content)
    provider = ctx.provider_for(ITERATIVE, run_index)
    it_run = GenerationRun(
        cfg.model_id, ITERATIVE, run_index, dict(cfg.sampling_params), parent=parent_run
    )
    try:
        response = generate(it_run, messages, provider, iter_dir / "response_raw.txt")
    except ProviderRefusal:
        _write_refs_file(iter_dir, "refusal", parent_refs, [], ["iterative refusal; parent kept"])
        _write_verdicts(ctx, ITERATIVE, run_index, paper, parent_refs, parent_verdicts)
        return "refusal"
    atomic_write_text(
        iter_dir / "transcript.json",
        dump_json([[role, content] for role, content in it_run.transcript]),
    )

    post_run = GenerationRun(cfg.model_id, ITERATIVE, run_index, dict(cfg.sampling_params), parent=parent_run)
    try:
        table = postprocess_references(
            response, post_run, provider, ctx.venue_table, raw_dir=iter_dir
        )
    except (TableParseError, ProviderRefusal) as exc:
        _write_refs_file(
            iter_dir, f"parse-failure:{exc}", parent_refs, [], ["iterative parse failed; parent kept"]
        )
        _write_verdicts(ctx, ITERATIVE, run_index, paper, parent_refs, parent_verdicts)
        return "parse-failure"

    for ref in table.references:
        ref.source_strategy = ITERATIVE
    iter_by_slot, quarantined, anomalies = _dedupe_refs(table.references, intro_numbers)
    quarantined.extend(table.quarantined)
    anomalies.extend(table.anomalies)

    merge = merge_iterative(parent_refs, existing_slots, iter_by_slot, set(nonexistent))
    replaced = {
        n for n, ref in merge.merged.items() if iter_by_slot.get(n) is ref
    }
    new_verdicts = _verify_refs(ctx, [merge.merged[n] for n in sorted(replaced)])

    merged_verdicts: dict[int, MatchVerdict] = {}
    for number in sorted(set(parent_verdicts) | set(new_verdicts)):
        merged_verdicts[number] = new_verdicts.get(number, parent_verdicts.get(number))
    for gap in merge.gaps:
        anomalies.append(f"gap: iterative response missing requested slot {gap}")
    for ignored in merge.ignored:
        anomalies.append(f"ignored iterative row for slot {ignored}")

    _write_refs_file(iter_dir, "ok", merge.merged, quarantined, anomalies)
    _write_verdicts(ctx, ITERATIVE, run_index, paper, merge.merged, merged_verdicts)
    return "ok"


def stage_iterate(ctx: PipelineContext) -> dict:
    if not ctx.config.iterative:
        return {"enabled": False}
    papers = load_papers(ctx, prepared=True)
    outcomes: dict[str, int] = {}
    for run_index in range(1, ctx.config.vanilla_runs + 1):
        _write_run_manifest(ctx, ITERATIVE, run_index)
        for paper in papers:
            record = _load_record(ctx, paper)
            outcome = _iterate_one(ctx, paper, record, run_index)
            outcomes[outcome] = outcomes.get(outcome, 0) + 1
    return {"enabled": True, **outcomes}


# ---------------------------------------------------------------------------
# Stage: analyze
# ---------------------------------------------------------------------------


def _characteristics_row(
    cohort: str,
    title: str,
    year: int | None,
    author_count: int | None,
    venue_label: str,
    counts: tuple[int | None, int | None, int | None] = (None, None, None),
) -> stats.CharacteristicsRow:
    citation, influential, references = counts
    return stats.CharacteristicsRow(
        cohort=cohort,
        title_chars=len(title),
        year=year,
        author_count=author_count,
        venue=venue_label,
        citation_count=citation,
        influential_citation_count=influential,
        reference_count=references,
    )


def _gt_row(gt: dict, cohort: str) -> stats.CharacteristicsRow:
    return _characteristics_row(
        cohort,
        gt["title"],
        gt["year"],
        gt["author_count"],
        gt["venue"]["canonical"],
        (
            gt.get("citation_count"),
            gt.get("influential_citation_count"),
            gt.get("reference_count"),
        ),
    )


def _enriched_counts(
    ctx: PipelineContext, index_id: str | None
) -> tuple[int | None, int | None, int | None]:
    if index_id is None:
        return (None, None, None)
    rec = enrich_reference(index_id, ctx.scholar, ctx.cache)
    if isinstance(rec, Exclusion):
        return (None, None, None)
    return (rec.citation_count, rec.influential_citation_count, rec.reference_count)


def _collect_run(
    ctx: PipelineContext,
    papers: list[PaperRecord],
    strategy: str,
    run_index: int,
) -> dict:
    """Flags, characteristics rows, and bias pairs for one run."""
    flags: list[stats.RefFlags] = []
    char_rows: list[stats.CharacteristicsRow] = []
    pairs: list[stats.PairedRefs] = []
    counterpart: list[tuple[stats.RefFlags, stats.CharacteristicsRow]] = []
    for paper in papers:
        record = _load_record(ctx, paper)
        gt_by_num = {row["citation_number"]: row for row in record["gt_refs"]}
        intro_ids = {num: row["index_id"] for num, row in gt_by_num.items()}
        unique = set(record["unique_numbers"])
        payload = _load_refs(ctx, strategy, run_index, paper)
        refs = {r["citation_number"]: genref_from_json(r) for r in payload["references"]}
        verdicts = _load_verdicts(ctx, strategy, run_index, paper)

        for number in record["intro_numbers"]:
            ref = refs.get(number)
            verdict = verdicts.get(number)
            flag = stats.classify_generated(
                ref, verdict, paper, intro_ids, number, number in unique
            )
            flags.append(flag)

            gt = gt_by_num.get(number)
            if gt is not None:
                char_rows.append(_gt_row(gt, "ground_truth"))
                counterpart.append((flag, _gt_row(gt, "counterpart")))
            if ref is not None and verdict is not None:
                counts = (
                    _enriched_counts(ctx, verdict.matched_index_id)
                    if verdict.exists
                    else (None, None, None)
                )
                gen_cohort = "generated_existing" if verdict.exists else "generated_nonexistent"
                char_rows.append(
                    _characteristics_row(
                        "generated_all",
                        ref.title,
                        ref.year,
                        ref.author_count,
                        ref.venue.canonical,
                        counts,
                    )
                )
                char_rows.append(
                    _characteristics_row(
                        gen_cohort,
                        ref.title,
                        ref.year,
                        ref.author_count,
                        ref.venue.canonical,
                        counts,
                    )
                )
                if verdict.exists and gt is not None:
                    pairs.append(
                        stats.PairedRefs(
                            paper_id=paper.index_id,
                            citation_number=number,
                            generated=_characteristics_row(
                                "generated_existing",
                                ref.title,
                                ref.year,
                                ref.author_count,
                                ref.venue.canonical,
                                counts,
                            ),
                            ground_truth=_gt_row(gt, "ground_truth"),
                        )
                    )
    return {"flags": flags, "char_rows": char_rows, "pairs": pairs, "counterpart": counterpart}


BIAS_FACETS = ("subperiod", "title_chars", "author_count", "venue")


def stage_analyze(ctx: PipelineContext) -> dict:
    cfg = ctx.config
    papers = load_papers(ctx, prepared=True)
    strategies = [VANILLA] + ([ITERATIVE] if cfg.iterative else [])

    run_flags: dict[tuple[str, int], list[stats.RefFlags]] = {}
    all_char_rows: list[stats.CharacteristicsRow] = []
    all_pairs: list[stats.PairedRefs] = []
    all_counterpart: list[tuple[stats.RefFlags, stats.CharacteristicsRow]] = []

    summary_payload: dict = {}
    for strategy in strategies if papers else []:
        for run_index in range(1, cfg.vanilla_runs + 1):
            collected = _collect_run(ctx, papers, strategy, run_index)
            run_flags[(strategy, run_index)] = collected["flags"]
            summary = stats.summarize_run(collected["flags"])
            summary_payload[stats.run_label(strategy, run_index)] = {
                "strategy": strategy,
                "run_index": run_index,
                "pct": {
                    "existence": _fraction_json(summary.existence_pct),
                    "cited_in_paper": _fraction_json(summary.cited_in_paper_pct),
                    "cited_in_intro": _fraction_json(summary.cited_in_intro_pct),
                    "pm_all": _fraction_json(summary.pm_all_pct),
                    "pm_unique": _fraction_json(summary.pm_unique_pct),
                },
                "denominators": list(summary.denominators),
                "counts": summary.counts,
            }
            if strategy == VANILLA:
                all_char_rows.extend(collected["char_rows"])
                all_pairs.extend(collected["pairs"])
                all_counterpart.extend(collected["counterpart"])

    overlap_payload = {}
    vanilla_indices = list(range(1, cfg.vanilla_runs + 1))
    for i in vanilla_indices:
        for j in vanilla_indices:
            if i < j and run_flags.get((VANILLA, i)):
                value = stats.run_overlap(run_flags[(VANILLA, i)], run_flags[(VANILLA, j)])
                overlap_payload[f"{i}-{j}"] = _fraction_json(value)

    tables = stats.characteristics(all_char_rows)
    split = stats.cohort_split_by_counterpart(all_counterpart)
    counterpart_tables = stats.characteristics(
        [row for rows in split.values() for row in rows]
    )

    bias_payload = {}
    for facet in BIAS_FACETS:
        for metric in ("citation_count", "influential_citation_count"):
            table = stats.bias_breakdown(
                all_pairs, facet, metric, subperiod_bins=cfg.subperiod_bins
            )
            name = facet if metric == "citation_count" else f"{facet}_influential"
            bias_payload[name] = {
                "facet": table.facet,
                "metric": table.metric,
                "excluded_pairs": table.excluded_pairs,
                "bins": [
                    {
                        "bin_label": b.bin_label,
                        "generated_median": b.generated_median,
                        "ground_truth_median": b.ground_truth_median,
                        "difference": b.difference,
                        "n_generated": b.n_generated,
                        "n_ground_truth": b.n_ground_truth,
                    }
                    for b in table.bins
                ],
            }

    analysis = {
        "summaries": summary_payload,
        "overlaps": overlap_payload,
        "vanilla_runs": cfg.vanilla_runs,
        "iterative": cfg.iterative,
        "histograms": stats.histograms_payload(tables),
        "counterpart_histograms": stats.histograms_payload(counterpart_tables),
        "bias": bias_payload,
    }
    atomic_write_text(ctx.stage_dir("analysis") / "analysis.json", dump_json(analysis))
    return {
        "runs_analyzed": len(summary_payload),
        "characteristics_rows": len(all_char_rows),
        "bias_pairs": len(all_pairs),
    }


# ---------------------------------------------------------------------------
# Stage: graph
# ---------------------------------------------------------------------------


def stage_graph(ctx: PipelineContext) -> dict:
    cfg = ctx.config
    papers = load_papers(ctx, prepared=True)
    strategy, run_index = cfg.graph_strategy, cfg.graph_run_index
    graphs_dir = ctx.stage_dir("graphs")
    rows = []
    graphs = []
    citation_counts: dict[str, int | None] = {}
    reference_counts: dict[str, int | None] = {}

    for paper in papers:
        record = _load_record(ctx, paper)
        intro_ids = sorted(
            {row["index_id"] for row in record["gt_refs"] if row["index_id"] is not None}
        )
        verdicts = _load_verdicts(ctx, strategy, run_index, paper)
        generated_ids = sorted(
            {v.matched_index_id for v in verdicts.values() if v.exists and v.matched_index_id}
        )
        adjacency: dict[str, list[str]] = {paper.index_id: list(paper.reference_ids)}
        for node in {*intro_ids, *generated_ids}:
            rec = enrich_reference(node, ctx.scholar, ctx.cache)
            if not isinstance(rec, Exclusion):
                adjacency[node] = list(rec.outgoing_reference_ids)
                citation_counts[node] = rec.citation_count
                reference_counts[node] = rec.reference_count

        graph = citegraph.build_graph(paper, intro_ids, generated_ids, adjacency)
        citegraph.categorize(graph, paper)
        citegraph.write_graph_files(graphs_dir / ctx.paper_dirname(paper), graph)
        rows.append(citegraph.metrics_row(graph))
        graphs.append(graph)

    mhash = manifest_hash(cfg)
    citegraph.write_graph_metrics_csv(graphs_dir / "graph_metrics.csv", rows, mhash)
    profiles = citegraph.category_profiles(graphs, citation_counts, reference_counts)
    payload = {
        "manifest_hash": mhash,
        "strategy": strategy,
        "run_index": run_index,
        "profiles": {
            category: {
                metric: {
                    "bins": [[label, count] for label, count in hist.bins],
                    "unknown": hist.unknown,
                    "n_known": hist.n_known,
                    "median": hist.median,
                }
                for metric, hist in sorted(metrics.items())
            }
            for category, metrics in sorted(profiles.items())
        },
    }
    atomic_write_text(graphs_dir / "category_profiles.json", dump_json(payload))
    return {"graphs": len(rows)}


# ---------------------------------------------------------------------------
# Stage: report
# ---------------------------------------------------------------------------


def _rebuild_summaries(analysis: dict) -> dict[tuple[str, int], stats.RunSummary]:
    out = {}
    for payload in analysis["summaries"].values():
        pct = payload["pct"]
        out[(payload["strategy"], payload["run_index"])] = stats.RunSummary(
            existence_pct=_fraction_from(pct["existence"]),
            cited_in_paper_pct=_fraction_from(pct["cited_in_paper"]),
            cited_in_intro_pct=_fraction_from(pct["cited_in_intro"]),
            pm_all_pct=_fraction_from(pct["pm_all"]),
            pm_unique_pct=_fraction_from(pct["pm_unique"]),
            denominators=tuple(payload["denominators"]),
            counts=payload["counts"],
        )
    return out


def _rebuild_histograms(payload: dict) -> dict[str, dict[str, stats.Histogram]]:
    tables: dict[str, dict[str, stats.Histogram]] = {}
    for cohort, metrics in payload.items():
        tables[cohort] = {}
        for metric, hist in metrics.items():
            tables[cohort][metric] = stats.Histogram(
                bins=[(label, count) for label, count in hist["bins"]],
                unknown=hist["unknown"],
                n_known=hist["n_known"],
                median=hist["median"],
            )
    return tables


def stage_report(ctx: PipelineContext) -> dict:
    analysis_path = ctx.stage_dir("analysis") / "analysis.json"
    if not analysis_path.is_file():
        raise PipelineError("analysis/analysis.json missing: run the analyze stage first")
    analysis = json.loads(analysis_path.read_text(encoding="utf-8"))
    report_dir = ctx.stage_dir("report")
    report_dir.mkdir(parents=True, exist_ok=True)
    mhash = manifest_hash(ctx.config)

    summaries = _rebuild_summaries(analysis)
    if summaries:
        stats.write_summary_csv(report_dir / "summary.csv", summaries, mhash)
        stats.write_summary_counts_csv(report_dir / "summary_counts.csv", summaries, mhash)
    else:
        atomic_write_text(report_dir / "summary.csv", f"# manifest_hash={mhash}\nmetric\n")
        atomic_write_text(report_dir / "summary_counts.csv", f"# manifest_hash={mhash}\ncount\n")

    overlaps = {
        tuple(int(x) for x in key.split("-")): _fraction_from(value)
        for key, value in analysis["overlaps"].items()
    }
    run_indices = list(range(1, analysis["vanilla_runs"] + 1))
    if len(run_indices) > 1 and overlaps:
        stats.write_overlap_csv(report_dir / "overlap.csv", overlaps, run_indices, mhash)
    else:
        atomic_write_text(report_dir / "overlap.csv", f"# manifest_hash={mhash}\nrun\n")

    tables = _rebuild_histograms(analysis["histograms"])
    stats.write_characteristics_csvs(report_dir / "characteristics", tables, mhash)
    counterpart = _rebuild_histograms(analysis["counterpart_histograms"])
    stats.write_characteristics_csvs(report_dir / "characteristics", counterpart, mhash)

    bias_dir = report_dir / "bias"
    bias_dir.mkdir(parents=True, exist_ok=True)
    for name, payload in sorted(analysis["bias"].items()):
        table = stats.BiasTable(
            facet=payload["facet"],
            metric=payload["metric"],
            excluded_pairs=payload["excluded_pairs"],
            bins=[
                stats.BiasBin(
                    facet=payload["facet"],
                    bin_label=b["bin_label"],
                    generated_median=b["generated_median"],
                    ground_truth_median=b["ground_truth_median"],
                    difference=b["difference"],
                    n_generated=b["n_generated"],
                    n_ground_truth=b["n_ground_truth"],
                )
                for b in payload["bins"]
            ],
        )
        stats.write_bias_csv(bias_dir / f"{name}.csv", table, mhash)

    stats.write_histograms_json(report_dir / "histograms.json", tables, mhash)

    lines = [
        f"manifest_hash: {mhash}",
        f"model: {ctx.config.model_id}",
        f"vanilla runs: {analysis['vanilla_runs']}"
        + (" (+ iterative)" if analysis["iterative"] else ""),
        "",
        "Headline percentages (see summary.csv):",
    ]
    for key in sorted(analysis["summaries"]):
        payload = analysis["summaries"][key]
        existence = _fraction_from(payload["pct"]["existence"])
        lines.append(f"  {key}: existence {stats.format_pct(existence)}%")
    atomic_write_text(report_dir / "summary.txt", "\n".join(lines) + "\n")
    return {"files": sum(1 for _ in report_dir.rglob("*") if _.is_file())}


# ---------------------------------------------------------------------------
# Stage driver
# ---------------------------------------------------------------------------

_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "prepare": stage_prepare,
    "generate": stage_generate,
    "verify": stage_verify,
    "iterate": stage_iterate,
    "analyze": stage_analyze,
    "graph": stage_graph,
    "report": stage_report,
}


def _stage_input_hash(core: str, stage: str) -> str:
    index = STAGES.index(stage)
    return hashlib.sha256(f"{core}:{index}:{stage}".encode("ascii")).hexdigest()


def _marker_path(ctx: PipelineContext, stage: str) -> Path:
    return ctx.out / "stages" / f"{stage}.json"


def run_pipeline(config: PipelineConfig, stages: list[str] | None = None) -> dict:
    """Run the requested stages in dependency order and write the manifest.

    Returns the manifest dict. Raises PipelineError on hard failure
    (after writing a manifest that records the failure point).
    """
    requested = list(stages) if stages else list(STAGES)
    for stage in requested:
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}")
    requested.sort(key=STAGES.index)

    core = manifest_hash(config)
    ctx = PipelineContext(config)
    manifest: dict = {
        "manifest_hash": core,
        "created_at": _now_iso(),
        "model_id": config.model_id,
        "config": config.snapshot,
        "template_hashes": template_hashes(),
        "inputs_digest": inputs_digest(config),
        "stages": {},
        "failure": None,
    }

    with output_lock(config.out_dir):
        try:
            for stage in requested:
                marker = _marker_path(ctx, stage)
                input_hash = _stage_input_hash(core, stage)
                if marker.is_file() and not config.refresh:
                    try:
                        existing = json.loads(marker.read_text(encoding="utf-8"))
                    except ValueError:
                        existing = None
                    if existing and existing.get("input_hash") == input_hash:
                        manifest["stages"][stage] = {
                            "status": "skipped",
                            "outcomes": existing.get("outcomes", {}),
                        }
                        continue
                logger.info("running stage %s", stage)
                outcomes = _STAGE_FUNCS[stage](ctx)
                atomic_write_text(
                    marker, dump_json({"input_hash": input_hash, "outcomes": outcomes})
                )
                manifest["stages"][stage] = {"status": "ok", "outcomes": outcomes}
        except Exception as exc:
            manifest["failure"] = {"stage": stage, "error": f"{type(exc).__name__}: {exc}"}
            atomic_write_text(config.out_dir / "manifest.json", dump_json(manifest))
            raise
        atomic_write_text(config.out_dir / "manifest.json", dump_json(manifest))
    return manifest
