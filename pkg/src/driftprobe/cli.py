"""Command-line interface.

Verbs mirror the pipeline stages (ingest, snapshot, split, render, evaluate,
aggregate, report) plus ``run`` for the full pipeline. Exit codes: 0 success,
2 configuration error, 3 stage failure, 4 backend unreachable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path

from .bridge import BridgeClient, ResponseCache
from .errors import ConfigError, StageError, TransportError
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
from .pipeline import (
    STAGES,
    EvaluationRecord,
    PipelineConfig,
    PipelineRun,
    read_query_files,
)
from .probing import DecodePolicy
from .reports import write_all_tables
from .snapshots import Granularity, build_snapshot, read_snapshot_files, write_snapshot_files
from .splits import assign_splits, read_split_files, write_split_files

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_BACKEND = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftprobe",
        description="Dynamic temporal fact benchmarks for masked language models.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="extract temporal facts from a Wikidata dump")
    p.add_argument("--dump", required=True, type=Path)
    p.add_argument("--relations", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--max-subjects", type=int, default=DEFAULT_MAX_SUBJECTS)

    p = sub.add_parser("snapshot", help="bucket facts into per-bucket query sets")
    p.add_argument("--facts", required=True, type=Path)
    p.add_argument("--from", dest="range_from", required=True, type=date.fromisoformat)
    p.add_argument("--to", dest="range_to", required=True, type=date.fromisoformat)
    p.add_argument(
        "--granularity",
        choices=[g.value for g in Granularity],
        default=Granularity.QUARTER.value,
    )
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("split", help="diff adjacent snapshots into fine-grained splits")
    p.add_argument("--snapshots", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("render", help="render cloze queries from split files")
    p.add_argument("--splits", required=True, type=Path)
    p.add_argument("--relations", required=True, type=Path)
    p.add_argument("--backend", required=True, help="tokenizer source: URL or mock:<fixture>")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--max-answer-tokens", type=int, default=5)
    p.add_argument("--views", nargs="+", default=["single", "multi", "pll"])

    p = sub.add_parser("evaluate", help="run one evaluation view against one backend")
    p.add_argument("--queries", required=True, type=Path, help="rendered view directory")
    p.add_argument("--backend", required=True, help="URL or mock:<fixture>")
    p.add_argument("--view", required=True, choices=["single", "multi", "pll"])
    p.add_argument("--M", dest="max_answer_tokens", type=int, default=5)
    p.add_argument("--topk", type=int, default=100)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--name", default=None, help="override the backend's reported name")
    p.add_argument("--cache", type=Path, default=None)
    p.add_argument("--decode", choices=["greedy", "sample"], default="greedy")

    p = sub.add_parser("aggregate", help="aggregate evaluation records into split reports")
    p.add_argument("--results", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="output CSV path")

    p = sub.add_parser("report", help="emit result tables and plots")
    p.add_argument("--aggregates", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--window", type=int, default=3)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--resume", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--stages", nargs="+", choices=STAGES, default=None)

    return parser


def _cmd_ingest(args) -> int:
    relations = load_relations_csv(args.relations, max_subjects=args.max_subjects)
    stats = IngestStats()
    facts = ingest_dump(args.dump, relations, stats)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_fact_tsv(facts, args.out)
    print(
        f"ingested {len(facts)} facts from {stats.entities} entities "
        f"({stats.malformed_lines} malformed lines, exclusions: {dict(stats.exclusions)})"
    )
    return EXIT_OK


def _cmd_snapshot(args) -> int:
    facts = list(read_fact_tsv(args.facts))
    snapshot = build_snapshot(facts, args.range_from, args.range_to, Granularity(args.granularity))
    write_snapshot_files(snapshot, args.out)
    total = sum(len(q) for q in snapshot.values())
    print(f"wrote {len(snapshot)} buckets, {total} queries to {args.out}")
    return EXIT_OK


def _cmd_split(args) -> int:
    snapshot = read_snapshot_files(args.snapshots)
    assignments = assign_splits(snapshot)
    write_split_files(assignments, args.out)
    total = sum(len(a) for a in assignments.values())
    print(f"wrote assignments for {len(assignments)} transitions, {total} keys to {args.out}")
    return EXIT_OK


def _cmd_render(args) -> int:
    # Reuse the pipeline's render stage against explicit paths.
    from .templates import (
        Template,
        TokenizerHandle,
        VIEW_MULTI,
        attach_answer_tokens,
        filter_max_tokens,
        filter_single_token,
        render_query,
    )
    from .pipeline import VIEW_ALIASES, write_query_files
    from .snapshots import SnapshotQuery

    relations = load_relations_csv(args.relations)
    client = BridgeClient(args.backend)
    tok = TokenizerHandle.from_bridge(client)
    assignments = read_split_files(args.splits)
    for view in args.views:
        if view not in VIEW_ALIASES:
            raise ConfigError(f"unknown view {view!r}")
        per_bucket = {}
        for bucket_id, bucket_assignments in assignments.items():
            entries = []
            for assignment in bucket_assignments:
                golds = assignment.answers_after or assignment.answers_before
                source = "answers" if assignment.answers_after else "answers_before"
                template = Template(
                    assignment.key.property_id,
                    relations[assignment.key.property_id].template_text,
                )
                squery = SnapshotQuery(
                    key=assignment.key,
                    bucket_id=bucket_id,
                    subject_label=assignment.subject_label,
                    answers=golds,
                )
                query = attach_answer_tokens(
                    render_query(
                        template,
                        squery,
                        1,
                        view=VIEW_ALIASES[view],
                        split=assignment.label.value,
                        mask_token=tok.mask_token,
                    ),
                    tok,
                )
                entries.append((query, source))
            queries = [q for q, _ in entries]
            sources = {q.query_id: s for q, s in entries}
            if view == "single":
                outcome = filter_single_token(queries)
            elif view == "multi":
                outcome = filter_max_tokens(queries, args.max_answer_tokens)
            else:
                outcome = filter_max_tokens(queries, 10**9)
            per_bucket[bucket_id] = [(q, sources[q.query_id]) for q in outcome.kept]
        write_query_files(per_bucket, args.out / view)
        print(f"rendered view {view}: {sum(len(v) for v in per_bucket.values())} queries")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    from .probing import evaluate_mlm_score, evaluate_multi_token, probe_single_token

    cache = ResponseCache(args.cache) if args.cache else None
    client = BridgeClient(args.backend, name=args.name, cache=cache)
    policy = DecodePolicy(mode=args.decode)
    args.out.mkdir(parents=True, exist_ok=True)
    total = 0
    for bucket_id, queries in read_query_files(args.queries).items():
        records = []
        for query in queries:
            if args.view == "single":
                records.append(probe_single_token(query, client, k_max=args.topk))
            elif args.view == "multi":
                records.append(
                    evaluate_multi_token(
                        query, client, max_masks=args.max_answer_tokens, policy=policy
                    )
                )
            else:
                records.append(evaluate_mlm_score(query, client))
        with open(args.out / f"{bucket_id}.jsonl", "w", encoding="utf-8") as handle:
            for record in records:
                handle.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
        total += len(records)
    print(f"evaluated {total} queries with backend {client.descriptor.name}")
    return EXIT_OK


def _cmd_aggregate(args) -> int:
    records = []
    for path in sorted(Path(args.results).rglob("*.jsonl")):
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    records.append(EvaluationRecord.from_json(json.loads(line)))
    reports = aggregate_records(records)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_reports_csv(reports, args.out)
    write_reports_json(reports, args.out.with_suffix(".json"))
    print(f"aggregated {len(records)} records into {len(reports)} report rows")
    return EXIT_OK


def _cmd_report(args) -> int:
    reports = read_reports_csv(args.aggregates)
    written = write_all_tables(reports, args.out, window=args.window)
    print(f"wrote {len(written)} report files to {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = PipelineConfig.load(args.config)
    run = PipelineRun(config, args.out_dir, resume=args.resume, seed=args.seed)
    manifest = run.run(args.stages)
    print(
        f"pipeline complete; executed stages: {manifest.executed_stages or '(none, all fresh)'}; "
        f"manifest at {args.out_dir / 'manifest.json'}"
    )
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "snapshot": _cmd_snapshot,
    "split": _cmd_split,
    "render": _cmd_render,
    "evaluate": _cmd_evaluate,
    "aggregate": _cmd_aggregate,
    "report": _cmd_report,
    "run": _cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TransportError as exc:
        print(f"backend unreachable: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except StageError as exc:
        print(f"{exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
