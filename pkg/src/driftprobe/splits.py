"""Fine-grained splits: diff adjacent bucket snapshots into unchanged/updated/new/deleted.

Fact identity for diffing is the (subject, relation) query key; answer sets
are compared by object qid. Every key appearing in either of two adjacent
buckets receives exactly one label:

- new: absent before, present after
- deleted: present before, absent after
- unchanged: present in both with equal answer qid sets
- updated: present in both with different answer qid sets
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass
from datetime import timedelta
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigError
from .snapshots import (
    Answer,
    QueryKey,
    SnapshotQuery,
    bucket_for,
    bucket_granularity,
    next_bucket,
    parse_bucket_id,
)


class FineGrainedLabel(str, Enum):
    UNCHANGED = "unchanged"
    UPDATED = "updated"
    NEW = "new"
    DELETED = "deleted"


@dataclass(frozen=True)
class SplitAssignment:
    """The label of one query key at one bucket transition."""

    key: QueryKey
    transition: tuple[str, str]
    label: FineGrainedLabel
    answers_before: tuple[Answer, ...]
    answers_after: tuple[Answer, ...]
    subject_label: str = ""

    def __post_init__(self):
        before = {a.qid for a in self.answers_before}
        after = {a.qid for a in self.answers_after}
        ok = {
            FineGrainedLabel.NEW: not before and bool(after),
            FineGrainedLabel.DELETED: before and not after,
            FineGrainedLabel.UNCHANGED: bool(before) and before == after,
            FineGrainedLabel.UPDATED: bool(before) and bool(after) and before != after,
        }[self.label]
        if not ok:
            raise ValueError(
                f"label {self.label.value} inconsistent with answer sets "
                f"{sorted(before)} -> {sorted(after)} for {self.key}"
            )


def _label_for(before: set[str], after: set[str]) -> FineGrainedLabel:
    if not before:
        return FineGrainedLabel.NEW
    if not after:
        return FineGrainedLabel.DELETED
    if before == after:
        return FineGrainedLabel.UNCHANGED
    return FineGrainedLabel.UPDATED


def _single_bucket_id(queries: Iterable[SnapshotQuery], side: str) -> str | None:
    ids = {q.bucket_id for q in queries}
    if len(ids) > 1:
        raise ConfigError(f"{side} snapshot mixes buckets: {sorted(ids)}")
    return next(iter(ids)) if ids else None


def diff_buckets(
    snapshot_t: Iterable[SnapshotQuery],
    snapshot_t1: Iterable[SnapshotQuery],
    transition: tuple[str, str] | None = None,
) -> list[SplitAssignment]:
    """Diff two adjacent bucket snapshots into one assignment per key.

    Bucket ids are inferred from the queries and checked for adjacency; pass
    ``transition`` explicitly when either side may be empty.
    """
    before_queries = list(snapshot_t)
    after_queries = list(snapshot_t1)
    inferred_t = _single_bucket_id(before_queries, "first")
    inferred_t1 = _single_bucket_id(after_queries, "second")
    if transition is None:
        if inferred_t is None or inferred_t1 is None:
            raise ConfigError("cannot infer transition from an empty snapshot; pass it explicitly")
        transition = (inferred_t, inferred_t1)
    if inferred_t is not None and inferred_t != transition[0]:
        raise ConfigError(f"first snapshot is {inferred_t}, expected {transition[0]}")
    if inferred_t1 is not None and inferred_t1 != transition[1]:
        raise ConfigError(f"second snapshot is {inferred_t1}, expected {transition[1]}")
    if next_bucket(parse_bucket_id(transition[0])).bucket_id != transition[1]:
        raise ConfigError(f"buckets {transition[0]} and {transition[1]} are not adjacent")

    before = {q.key: q for q in before_queries}
    after = {q.key: q for q in after_queries}
    assignments = []
    for key in sorted(set(before) | set(after), key=lambda k: (k.property_id, k.subject_qid)):
        answers_before = before[key].answers if key in before else ()
        answers_after = after[key].answers if key in after else ()
        label = _label_for({a.qid for a in answers_before}, {a.qid for a in answers_after})
        subject_label = (after.get(key) or before[key]).subject_label
        assignments.append(
            SplitAssignment(
                key=key,
                transition=transition,
                label=label,
                answers_before=answers_before,
                answers_after=answers_after,
                subject_label=subject_label,
            )
        )
    return assignments


def assign_splits(
    snapshot: Mapping[str, list[SnapshotQuery]],
) -> dict[str, list[SplitAssignment]]:
    """Label every bucket transition of a chronologically-ordered snapshot run.

    Bucket i (i >= 1) receives the diff of buckets i-1 -> i; the first bucket
    receives none.
    """
    bucket_ids = list(snapshot)
    if len(bucket_ids) < 2:
        raise ConfigError(f"need at least 2 buckets to assign splits, got {len(bucket_ids)}")
    assignments: dict[str, list[SplitAssignment]] = {}
    for prev_id, curr_id in zip(bucket_ids, bucket_ids[1:]):
        assignments[curr_id] = diff_buckets(
            snapshot[prev_id], snapshot[curr_id], transition=(prev_id, curr_id)
        )
    return assignments


def split_counts(assignments: Iterable[SplitAssignment]) -> Counter:
    counts = Counter(a.label.value for a in assignments)
    counts["total"] = sum(counts.values())
    return counts


# --------------------------------------------------------------------------
# Split files: the snapshot line schema plus split and answers_before fields
# --------------------------------------------------------------------------

SPLIT_STATS_COLUMNS = ("bucket", "unchanged", "updated", "new", "deleted", "total")


def assignment_to_json(assignment: SplitAssignment) -> dict:
    return {
        "bucket": assignment.transition[1],
        "subject_qid": assignment.key.subject_qid,
        "subject_label": assignment.subject_label,
        "property": assignment.key.property_id,
        "answers": [{"qid": a.qid, "label": a.label} for a in assignment.answers_after],
        "split": assignment.label.value,
        "answers_before": [{"qid": a.qid, "label": a.label} for a in assignment.answers_before],
    }


def previous_bucket_id(bucket_id: str) -> str:
    bucket = parse_bucket_id(bucket_id)
    return bucket_for(bucket.start - timedelta(days=1), bucket_granularity(bucket_id)).bucket_id


def assignment_from_json(payload: Mapping) -> SplitAssignment:
    bucket_id = payload["bucket"]
    return SplitAssignment(
        key=QueryKey(payload["subject_qid"], payload["property"]),
        transition=(previous_bucket_id(bucket_id), bucket_id),
        label=FineGrainedLabel(payload["split"]),
        answers_before=tuple(Answer(a["qid"], a["label"]) for a in payload["answers_before"]),
        answers_after=tuple(Answer(a["qid"], a["label"]) for a in payload["answers"]),
        subject_label=payload["subject_label"],
    )


def write_split_files(
    assignments: Mapping[str, list[SplitAssignment]], out_dir: str | Path
) -> None:
    """Write per-bucket assignment files plus the per-label count statistics."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for bucket_id, bucket_assignments in assignments.items():
        with open(out / f"{bucket_id}.jsonl", "w", encoding="utf-8") as handle:
            for assignment in bucket_assignments:
                handle.write(json.dumps(assignment_to_json(assignment), sort_keys=True) + "\n")
    with open(out / "split_stats.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SPLIT_STATS_COLUMNS)
        for bucket_id in sorted(assignments, key=lambda b: parse_bucket_id(b).start):
            counts = split_counts(assignments[bucket_id])
            writer.writerow(
                [bucket_id] + [counts.get(column, 0) for column in SPLIT_STATS_COLUMNS[1:]]
            )


def read_split_files(split_dir: str | Path) -> dict[str, list[SplitAssignment]]:
    paths = sorted(Path(split_dir).glob("*.jsonl"))
    if not paths:
        raise ConfigError(f"no split files in {split_dir}")
    by_bucket: dict[str, list[SplitAssignment]] = {}
    for path in paths:
        bucket_id = path.stem
        assignments = []
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    assignments.append(assignment_from_json(json.loads(line)))
        by_bucket[bucket_id] = assignments
    ordered = sorted(by_bucket, key=lambda b: parse_bucket_id(b).start)
    return {b: by_bucket[b] for b in ordered}
