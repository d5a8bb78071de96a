"""End-to-end pipeline: ingest -> snapshot -> split -> render -> evaluate ->
aggregate -> report, with per-stage digests for idempotent resume.

Every stage persists its outputs under the run directory; a stage is skipped
on resume when its recorded config digest, input digests, and output digests
all still match. In mock mode the whole pipeline is deterministic, so a rerun
with unchanged inputs is byte-identical (the manifest, which carries
timestamps, is metadata rather than an output).
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping

import yaml

from . import __version__
from .bridge import MOCK_ENDPOINT_PREFIX, BridgeClient, ResponseCache
from .errors import ConfigError, DriftprobeError, StageError
from .ingest import (
    DEFAULT_MAX_SUBJECTS,
    IngestStats,
    ingest_dump,
    load_relations_csv,
    read_fact_tsv,
    write_fact_tsv,
)
from .metrics import aggregate as aggregate_records
from .metrics import read_reports_csv, write_reports_csv, write_reports_json
from .probing import (
    DEFAULT_MAX_MASKS,
    DEFAULT_PRECISION_KS,
    DEFAULT_TOP_K,
    DecodePolicy,
    EvaluationRecord,
    SCOPE_ANSWER_SPAN,
    evaluate_mlm_score,
    evaluate_multi_token,
    probe_single_token,
)
from .reports import write_all_tables
from .snapshots import Granularity, QueryKey, SnapshotQuery, build_snapshot, parse_bucket_id
from .snapshots import read_snapshot_files, write_snapshot_files
from .splits import assign_splits, read_split_files, write_split_files
from .templates import (
    AnswerTokens,
    ClozeQuery,
    Template,
    TokenizerHandle,
    VIEW_MULTI,
    VIEW_SCORE,
    VIEW_SINGLE,
    attach_answer_tokens,
    filter_max_tokens,
    filter_single_token,
    render_query,
)

logger = logging.getLogger(__name__)

STAGES = ("ingest", "snapshot", "split", "render", "evaluate", "aggregate", "report")

# CLI view names -> record view names and query subdirectories.
VIEW_ALIASES = {"single": VIEW_SINGLE, "multi": VIEW_MULTI, "pll": VIEW_SCORE}


@dataclass(frozen=True)
class BackendConfig:
    name: str
    endpoint: str


@dataclass
class PipelineConfig:
    """Declarative run configuration; paths are resolved against the config file."""

    relations_path: Path
    backends: list[BackendConfig]
    dump_path: Path | None = None
    facts_path: Path | None = None
    range_start: date = date(2019, 1, 1)
    range_end: date = date(2022, 6, 30)
    granularity: Granularity = Granularity.QUARTER
    max_subjects: int = DEFAULT_MAX_SUBJECTS
    subject_cap_overrides: dict[str, int] = field(default_factory=dict)
    max_answer_tokens: int = DEFAULT_MAX_MASKS
    top_k: int = DEFAULT_TOP_K
    precision_ks: tuple[int, ...] = DEFAULT_PRECISION_KS
    views: tuple[str, ...] = ("single", "multi", "pll")
    decode: DecodePolicy = DecodePolicy()
    pll_scope: str = SCOPE_ANSWER_SPAN
    report_window: int = 3
    workers: int = 1

    def __post_init__(self):
        if not self.backends:
            raise ConfigError("config needs at least one backend")
        names = [b.name for b in self.backends]
        if len(set(names)) != len(names):
            raise ConfigError(f"backend names must be unique: {names}")
        unknown = [v for v in self.views if v not in VIEW_ALIASES]
        if unknown:
            raise ConfigError(f"unknown views {unknown}; choose from {sorted(VIEW_ALIASES)}")
        if self.dump_path is None and self.facts_path is None:
            raise ConfigError("config needs either 'dump' or 'facts'")
        if self.range_start > self.range_end:
            raise ConfigError("range start after range end")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a mapping")
        base = path.parent

        def resolve(key: str) -> Path | None:
            value = raw.get(key)
            return (base / value).resolve() if value else None

        relations = resolve("relations")
        if relations is None:
            raise ConfigError("config is missing 'relations'")
        backends_raw = raw.get("backends") or []
        backends = []
        for entry in backends_raw:
            if not isinstance(entry, dict) or "endpoint" not in entry:
                raise ConfigError(f"bad backend entry: {entry!r}")
            endpoint = str(entry["endpoint"])
            if endpoint.startswith(MOCK_ENDPOINT_PREFIX):
                fixture = (base / endpoint[len(MOCK_ENDPOINT_PREFIX) :]).resolve()
                endpoint = f"{MOCK_ENDPOINT_PREFIX}{fixture}"
            backends.append(BackendConfig(name=str(entry.get("name", "")), endpoint=endpoint))
        time_range = raw.get("range") or {}
        decode_raw = raw.get("decode") or {}
        try:
            return cls(
                relations_path=relations,
                backends=backends,
                dump_path=resolve("dump"),
                facts_path=resolve("facts"),
                range_start=_parse_date(time_range.get("from", "2019-01-01")),
                range_end=_parse_date(time_range.get("to", "2022-06-30")),
                granularity=Granularity(raw.get("granularity", "quarter")),
                max_subjects=int(raw.get("max_subjects", DEFAULT_MAX_SUBJECTS)),
                subject_cap_overrides={
                    str(k): int(v) for k, v in (raw.get("subject_caps") or {}).items()
                },
                max_answer_tokens=int(raw.get("max_answer_tokens", DEFAULT_MAX_MASKS)),
                top_k=int(raw.get("top_k", DEFAULT_TOP_K)),
                precision_ks=tuple(int(k) for k in raw.get("precision_ks", DEFAULT_PRECISION_KS)),
                views=tuple(raw.get("views", ("single", "multi", "pll"))),
                decode=DecodePolicy(
                    mode=str(decode_raw.get("mode", "greedy")),
                    temperature=float(decode_raw.get("temperature", 1.0)),
                    seed=int(decode_raw.get("seed", 0)),
                    top_n=int(decode_raw.get("top_n", 50)),
                ),
                pll_scope=str(raw.get("pll_scope", SCOPE_ANSWER_SPAN)),
                report_window=int(raw.get("report_window", 3)),
                workers=int(raw.get("workers", 1)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config {path}: {exc}") from exc

    def digest(self) -> str:
        payload = {
            "relations": str(self.relations_path),
            "backends": [[b.name, b.endpoint] for b in self.backends],
            "dump": str(self.dump_path),
            "facts": str(self.facts_path),
            "range": [self.range_start.isoformat(), self.range_end.isoformat()],
            "granularity": self.granularity.value,
            "max_subjects": self.max_subjects,
            "subject_caps": sorted(self.subject_cap_overrides.items()),
            "max_answer_tokens": self.max_answer_tokens,
            "top_k": self.top_k,
            "precision_ks": list(self.precision_ks),
            "views": list(self.views),
            "decode": asdict(self.decode),
            "pll_scope": self.pll_scope,
            "report_window": self.report_window,
            "version": __version__,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def _parse_date(value) -> date:
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError as exc:
        raise ConfigError(f"bad date {value!r}: {exc}") from exc


# --------------------------------------------------------------------------
# Rendered query files
# --------------------------------------------------------------------------


def cloze_to_json(query: ClozeQuery, gold_source: str = "answers") -> dict:
    return {
        "query_id": query.query_id,
        "bucket": query.bucket_id,
        "split": query.split,
        "property": query.key.property_id,
        "subject_qid": query.key.subject_qid,
        "subject_label": query.subject_label,
        "template": query.template_text,
        "text": query.text,
        "mask_count": query.mask_count,
        "mask_token": query.mask_token,
        "answers": [
            {"qid": a.qid, "label": a.label, "token_ids": list(a.token_ids)}
            for a in query.answers
        ],
        "gold_source": gold_source,
    }


def cloze_from_json(payload: Mapping) -> ClozeQuery:
    return ClozeQuery(
        query_id=payload["query_id"],
        text=payload["text"],
        mask_count=payload["mask_count"],
        answers=tuple(
            AnswerTokens(a["qid"], a["label"], tuple(a["token_ids"]))
            for a in payload["answers"]
        ),
        split=payload["split"],
        bucket_id=payload["bucket"],
        key=QueryKey(payload["subject_qid"], payload["property"]),
        subject_label=payload["subject_label"],
        template_text=payload["template"],
        mask_token=payload["mask_token"],
    )


def write_query_files(queries_by_bucket: Mapping[str, list[tuple[ClozeQuery, str]]], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for bucket_id, entries in queries_by_bucket.items():
        with open(out_dir / f"{bucket_id}.jsonl", "w", encoding="utf-8") as handle:
            for query, gold_source in entries:
                handle.write(json.dumps(cloze_to_json(query, gold_source), sort_keys=True) + "\n")


def read_query_files(view_dir: str | Path) -> dict[str, list[ClozeQuery]]:
    paths = sorted(Path(view_dir).glob("*.jsonl"))
    out: dict[str, list[ClozeQuery]] = {}
    for path in paths:
        queries = []
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    queries.append(cloze_from_json(json.loads(line)))
        out[path.stem] = queries
    ordered = sorted(out, key=lambda b: parse_bucket_id(b).start)
    return {b: out[b] for b in ordered}


# --------------------------------------------------------------------------
# Run manifest and stage bookkeeping
# --------------------------------------------------------------------------


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _digest_paths(paths: Iterable[Path], root: Path) -> dict[str, str]:
    """Digest files and directory trees, keyed by path relative to ``root``."""
    out: dict[str, str] = {}
    for path in paths:
        if path.is_dir():
            for child in sorted(path.rglob("*")):
                if child.is_file():
                    out[str(child.relative_to(root) if child.is_relative_to(root) else child)] = _sha256_file(child)
        elif path.is_file():
            out[str(path.relative_to(root) if path.is_relative_to(root) else path)] = _sha256_file(path)
    return out


@dataclass
class RunManifest:
    config_digest: str
    input_digests: dict[str, str]
    backends: list[dict]
    granularity: str
    range_start: str
    range_end: str
    max_answer_tokens: int
    top_k: int
    decode: dict
    seed: int
    tool_version: str
    started_at: str
    finished_at: str
    executed_stages: list[str]

    def write(self, path: Path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(asdict(self), handle, indent=2, sort_keys=True)
            handle.write("\n")


class PipelineRun:
    """One pipeline execution rooted at an output directory."""

    def __init__(
        self,
        config: PipelineConfig,
        out_dir: str | Path,
        resume: bool = True,
        seed: int | None = None,
    ):
        self.config = config
        if seed is not None:
            self.config.decode = DecodePolicy(
                mode=config.decode.mode,
                temperature=config.decode.temperature,
                seed=seed,
                top_n=config.decode.top_n,
            )
        self.out_dir = Path(out_dir)
        self.resume = resume
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.facts_path = (
            self.config.facts_path if self.config.facts_path else self.out_dir / "facts.tsv"
        )
        self.snapshot_dir = self.out_dir / "snapshots"
        self.split_dir = self.out_dir / "splits"
        self.query_dir = self.out_dir / "queries"
        self.results_dir = self.out_dir / "results"
        self.cache_dir = self.out_dir / "cache"
        self.aggregates_csv = self.out_dir / "aggregates.csv"
        self.aggregates_json = self.out_dir / "aggregates.json"
        self.reports_dir = self.out_dir / "reports"
        self.stage_log_path = self.out_dir / "stages.json"
        self._stage_log = self._load_stage_log()
        self._clients: dict[str, BridgeClient] = {}

    # -- stage log ---------------------------------------------------------

    def _load_stage_log(self) -> dict:
        if self.stage_log_path.exists():
            return json.loads(self.stage_log_path.read_text(encoding="utf-8"))
        return {}

    def _save_stage_log(self) -> None:
        with open(self.stage_log_path, "w", encoding="utf-8") as handle:
            json.dump(self._stage_log, handle, indent=2, sort_keys=True)
            handle.write("\n")

    def _stage_fresh(self, stage: str, inputs: dict[str, str], outputs: list[Path]) -> bool:
        if not self.resume:
            return False
        entry = self._stage_log.get(stage)
        if not entry:
            return False
        if entry.get("config") != self.config.digest():
            return False
        if entry.get("inputs") != inputs:
            return False
        current = _digest_paths(outputs, self.out_dir)
        return bool(current) and entry.get("outputs") == current

    def _record_stage(self, stage: str, inputs: dict[str, str], outputs: list[Path]) -> None:
        self._stage_log[stage] = {
            "config": self.config.digest(),
            "inputs": inputs,
            "outputs": _digest_paths(outputs, self.out_dir),
        }
        self._save_stage_log()

    # -- backends ----------------------------------------------------------

    def client_for(self, backend: BackendConfig) -> BridgeClient:
        key = f"{backend.name}@{backend.endpoint}"
        if key not in self._clients:
            cache_name = backend.name or "backend"
            self._clients[key] = BridgeClient(
                backend.endpoint,
                name=backend.name or None,
                cache=ResponseCache(self.cache_dir / f"{cache_name}.jsonl"),
            )
        return self._clients[key]

    def _backend_input_digests(self) -> dict[str, str]:
        paths = []
        for backend in self.config.backends:
            if backend.endpoint.startswith(MOCK_ENDPOINT_PREFIX):
                paths.append(Path(backend.endpoint[len(MOCK_ENDPOINT_PREFIX) :]))
        return _digest_paths(paths, self.out_dir)

    # -- stages ------------------------------------------------------------

    def run(self, stages: Iterable[str] | None = None) -> RunManifest:
        requested = list(stages) if stages is not None else list(STAGES)
        unknown = [s for s in requested if s not in STAGES]
        if unknown:
            raise ConfigError(f"unknown stages {unknown}; choose from {STAGES}")
        started = datetime.now(timezone.utc).isoformat()
        executed = []
        for stage in STAGES:
            if stage not in requested:
                continue
            if stage == "ingest" and self.config.facts_path is not None:
                logger.info("facts provided directly; skipping ingest")
                continue
            try:
                ran = getattr(self, f"_stage_{stage}")()
            except DriftprobeError:
                raise
            except Exception as exc:  # noqa: BLE001 - stage boundary
                raise StageError(
                    stage, str(exc), replay=f"driftprobe run --out-dir {self.out_dir}"
                ) from exc
            if ran:
                executed.append(stage)
                logger.info("stage %s executed", stage)
            else:
                logger.info("stage %s up to date; skipped", stage)
        finished = datetime.now(timezone.utc).isoformat()
        manifest = RunManifest(
            config_digest=self.config.digest(),
            input_digests=_digest_paths(
                [p for p in (self.config.dump_path, self.config.facts_path, self.config.relations_path) if p],
                self.out_dir,
            ),
            backends=[
                {"name": b.name, "endpoint": b.endpoint} for b in self.config.backends
            ],
            granularity=self.config.granularity.value,
            range_start=self.config.range_start.isoformat(),
            range_end=self.config.range_end.isoformat(),
            max_answer_tokens=self.config.max_answer_tokens,
            top_k=self.config.top_k,
            decode=asdict(self.config.decode),
            seed=self.config.decode.seed,
            tool_version=__version__,
            started_at=started,
            finished_at=finished,
            executed_stages=executed,
        )
        manifest.write(self.out_dir / "manifest.json")
        return manifest

    def _stage_ingest(self) -> bool:
        assert self.config.dump_path is not None
        inputs = _digest_paths([self.config.dump_path, self.config.relations_path], self.out_dir)
        if self._stage_fresh("ingest", inputs, [self.facts_path]):
            return False
        relations = load_relations_csv(
            self.config.relations_path,
            max_subjects=self.config.max_subjects,
            overrides=self.config.subject_cap_overrides,
        )
        stats = IngestStats()
        facts = ingest_dump(self.config.dump_path, relations, stats)
        write_fact_tsv(facts, self.facts_path)
        with open(self.out_dir / "ingest_stats.json", "w", encoding="utf-8") as handle:
            json.dump(
                {
                    "entities": stats.entities,
                    "malformed_lines": stats.malformed_lines,
                    "claims_seen": stats.claims_seen,
                    "emitted": stats.emitted,
                    "exclusions": dict(sorted(stats.exclusions.items())),
                },
                handle,
                indent=2,
                sort_keys=True,
            )
            handle.write("\n")
        self._record_stage("ingest", inputs, [self.facts_path])
        return True

    def _stage_snapshot(self) -> bool:
        inputs = _digest_paths([self.facts_path], self.out_dir)
        if not inputs:
            raise StageError("snapshot", f"facts file missing: {self.facts_path}")
        if self._stage_fresh("snapshot", inputs, [self.snapshot_dir]):
            return False
        facts = list(read_fact_tsv(self.facts_path))
        snapshot = build_snapshot(
            facts, self.config.range_start, self.config.range_end, self.config.granularity
        )
        if self.snapshot_dir.exists():
            shutil.rmtree(self.snapshot_dir)
        write_snapshot_files(snapshot, self.snapshot_dir)
        self._record_stage("snapshot", inputs, [self.snapshot_dir])
        return True

    def _stage_split(self) -> bool:
        inputs = _digest_paths([self.snapshot_dir], self.out_dir)
        if not inputs:
            raise StageError("split", f"snapshot directory missing: {self.snapshot_dir}")
        if self._stage_fresh("split", inputs, [self.split_dir]):
            return False
        snapshot = read_snapshot_files(self.snapshot_dir)
        assignments = assign_splits(snapshot)
        if self.split_dir.exists():
            shutil.rmtree(self.split_dir)
        write_split_files(assignments, self.split_dir)
        self._record_stage("split", inputs, [self.split_dir])
        return True

    def _stage_render(self) -> bool:
        inputs = _digest_paths(
            [self.split_dir, self.config.relations_path], self.out_dir
        )
        inputs.update(self._backend_input_digests())
        if not any(k.endswith(".jsonl") for k in inputs):
            raise StageError("render", f"split directory missing: {self.split_dir}")
        if self._stage_fresh("render", inputs, [self.query_dir]):
            return False
        relations = load_relations_csv(
            self.config.relations_path,
            max_subjects=self.config.max_subjects,
            overrides=self.config.subject_cap_overrides,
        )
        templates = {
            p: Template(p, r.template_text) for p, r in relations.items()
        }
        tok = TokenizerHandle.from_bridge(self.client_for(self.config.backends[0]))
        assignments = read_split_files(self.split_dir)
        filter_stats: dict[str, dict] = {}
        per_view: dict[str, dict[str, list[tuple[ClozeQuery, str]]]] = {
            v: {} for v in self.config.views
        }
        for bucket_id, bucket_assignments in assignments.items():
            rendered: dict[str, list[tuple[ClozeQuery, str]]] = {v: [] for v in self.config.views}
            for view in self.config.views:
                base = []
                sources = []
                for assignment in bucket_assignments:
                    golds = assignment.answers_after or assignment.answers_before
                    gold_source = "answers" if assignment.answers_after else "answers_before"
                    template = templates.get(assignment.key.property_id)
                    if template is None:
                        raise StageError(
                            "render",
                            f"no template for relation {assignment.key.property_id}",
                        )
                    squery = SnapshotQuery(
                        key=assignment.key,
                        bucket_id=bucket_id,
                        subject_label=assignment.subject_label,
                        answers=golds,
                    )
                    query = render_query(
                        template,
                        squery,
                        mask_count=1,
                        view=VIEW_ALIASES[view],
                        split=assignment.label.value,
                        mask_token=tok.mask_token,
                    )
                    base.append(attach_answer_tokens(query, tok))
                    sources.append(gold_source)
                source_by_id = {q.query_id: s for q, s in zip(base, sources)}
                if view == "single":
                    outcome = filter_single_token(base)
                elif view == "multi":
                    outcome = filter_max_tokens(base, self.config.max_answer_tokens)
                else:
                    outcome = filter_max_tokens(base, 10**9)  # unfiltered, validated
                rendered[view] = [(q, source_by_id[q.query_id]) for q in outcome.kept]
                filter_stats.setdefault(bucket_id, {})[view] = {
                    "total": outcome.total,
                    "kept": len(outcome.kept),
                    "discarded_fraction": outcome.discarded_fraction,
                }
            for view in self.config.views:
                per_view[view][bucket_id] = rendered[view]
        if self.query_dir.exists():
            shutil.rmtree(self.query_dir)
        for view in self.config.views:
            write_query_files(per_view[view], self.query_dir / view)
        with open(self.query_dir / "filter_stats.json", "w", encoding="utf-8") as handle:
            json.dump(filter_stats, handle, indent=2, sort_keys=True)
            handle.write("\n")
        self._record_stage("render", inputs, [self.query_dir])
        return True

    def _evaluate_one(self, view: str, query: ClozeQuery, client: BridgeClient) -> EvaluationRecord:
        if view == "single":
            return probe_single_token(
                query, client, k_max=self.config.top_k, ks=self.config.precision_ks
            )
        if view == "multi":
            return evaluate_multi_token(
                query, client, max_masks=self.config.max_answer_tokens, policy=self.config.decode
            )
        return evaluate_mlm_score(query, client, scope=self.config.pll_scope)

    def _stage_evaluate(self) -> bool:
        inputs = _digest_paths([self.query_dir], self.out_dir)
        inputs.update(self._backend_input_digests())
        if not inputs:
            raise StageError("evaluate", f"query directory missing: {self.query_dir}")
        if self._stage_fresh("evaluate", inputs, [self.results_dir]):
            return False
        if self.results_dir.exists():
            shutil.rmtree(self.results_dir)
        for backend in self.config.backends:
            client = self.client_for(backend)
            for view in self.config.views:
                view_dir = self.query_dir / view
                if not view_dir.exists():
                    continue
                out_dir = self.results_dir / client.descriptor.name / view
                out_dir.mkdir(parents=True, exist_ok=True)
                for bucket_id, queries in read_query_files(view_dir).items():
                    if self.config.workers > 1:
                        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                            records = list(
                                pool.map(lambda q: self._evaluate_one(view, q, client), queries)
                            )
                    else:
                        records = [self._evaluate_one(view, q, client) for q in queries]
                    with open(out_dir / f"{bucket_id}.jsonl", "w", encoding="utf-8") as handle:
                        for record in records:
                            handle.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
        self._record_stage("evaluate", inputs, [self.results_dir])
        return True

    def _stage_aggregate(self) -> bool:
        inputs = _digest_paths([self.results_dir], self.out_dir)
        if not inputs:
            raise StageError("aggregate", f"results directory missing: {self.results_dir}")
        if self._stage_fresh("aggregate", inputs, [self.aggregates_csv, self.aggregates_json]):
            return False
        records = []
        for path in sorted(self.results_dir.rglob("*.jsonl")):
            with open(path, encoding="utf-8") as handle:
                for line in handle:
                    if line.strip():
                        records.append(EvaluationRecord.from_json(json.loads(line)))
        reports = aggregate_records(records)
        write_reports_csv(reports, self.aggregates_csv)
        write_reports_json(reports, self.aggregates_json)
        self._record_stage("aggregate", inputs, [self.aggregates_csv, self.aggregates_json])
        return True

    def _stage_report(self) -> bool:
        split_stats = self.split_dir / "split_stats.csv"
        inputs = _digest_paths([self.aggregates_csv, split_stats], self.out_dir)
        if not inputs:
            raise StageError("report", f"aggregates missing: {self.aggregates_csv}")
        if self._stage_fresh("report", inputs, [self.reports_dir]):
            return False
        if self.reports_dir.exists():
            shutil.rmtree(self.reports_dir)
        self.reports_dir.mkdir(parents=True)
        reports = read_reports_csv(self.aggregates_csv)
        write_all_tables(reports, self.reports_dir, window=self.config.report_window)
        if split_stats.exists():
            shutil.copyfile(split_stats, self.reports_dir / "split_counts.csv")
        self._record_stage("report", inputs, [self.reports_dir])
        return True


def run_pipeline(
    config_path: str | Path,
    out_dir: str | Path,
    resume: bool = True,
    seed: int | None = None,
    stages: Iterable[str] | None = None,
) -> RunManifest:
    """Load a config and execute the pipeline end to end."""
    config = PipelineConfig.load(config_path)
    run = PipelineRun(config, out_dir, resume=resume, seed=seed)
    return run.run(stages)
