"""Calendar-aligned time buckets and per-bucket query-set snapshots.

A bucket id is canonical text: "YYYY" (year), "YYYY-Qn" (quarter, Q1=Jan-Mar),
or "YYYY-MM" (month). Bucket ids round-trip exactly to their (start, end)
date span, ends inclusive. A fact belongs to every bucket its validity
interval overlaps; overlap is inclusive at bucket boundaries, and missing
interval bounds extend to the unbounded past/future.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

from .errors import ConfigError
from .ingest import FactRecord, TimeInterval


class Granularity(str, Enum):
    MONTH = "month"
    QUARTER = "quarter"
    YEAR = "year"


_YEAR_RE = re.compile(r"^(\d{4})$")
_QUARTER_RE = re.compile(r"^(\d{4})-Q([1-4])$")
_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


@dataclass(frozen=True, order=True)
class TimeBucket:
    """One calendar bucket; ordering follows start date."""

    start: date
    end: date
    bucket_id: str


def _month_end(year: int, month: int) -> date:
    if month == 12:
        return date(year, 12, 31)
    return date(year, month + 1, 1) - timedelta(days=1)


def bucket_for(day: date, granularity: Granularity) -> TimeBucket:
    """The bucket containing ``day`` at the given granularity."""
    if granularity is Granularity.YEAR:
        return TimeBucket(date(day.year, 1, 1), date(day.year, 12, 31), f"{day.year:04d}")
    if granularity is Granularity.QUARTER:
        quarter = (day.month - 1) // 3 + 1
        first_month = 3 * (quarter - 1) + 1
        return TimeBucket(
            date(day.year, first_month, 1),
            _month_end(day.year, first_month + 2),
            f"{day.year:04d}-Q{quarter}",
        )
    return TimeBucket(
        date(day.year, day.month, 1),
        _month_end(day.year, day.month),
        f"{day.year:04d}-{day.month:02d}",
    )


def parse_bucket_id(bucket_id: str) -> TimeBucket:
    """Parse a canonical bucket id back to its bucket; format implies granularity."""
    match = _YEAR_RE.match(bucket_id)
    if match:
        return bucket_for(date(int(match.group(1)), 1, 1), Granularity.YEAR)
    match = _QUARTER_RE.match(bucket_id)
    if match:
        year, quarter = int(match.group(1)), int(match.group(2))
        return bucket_for(date(year, 3 * (quarter - 1) + 1, 1), Granularity.QUARTER)
    match = _MONTH_RE.match(bucket_id)
    if match:
        year, month = int(match.group(1)), int(match.group(2))
        if not 1 <= month <= 12:
            raise ConfigError(f"bad month in bucket id {bucket_id!r}")
        return bucket_for(date(year, month, 1), Granularity.MONTH)
    raise ConfigError(f"unparseable bucket id {bucket_id!r}")


def bucket_granularity(bucket_id: str) -> Granularity:
    if _YEAR_RE.match(bucket_id):
        return Granularity.YEAR
    if _QUARTER_RE.match(bucket_id):
        return Granularity.QUARTER
    if _MONTH_RE.match(bucket_id):
        return Granularity.MONTH
    raise ConfigError(f"unparseable bucket id {bucket_id!r}")


def next_bucket(bucket: TimeBucket) -> TimeBucket:
    granularity = bucket_granularity(bucket.bucket_id)
    return bucket_for(bucket.end + timedelta(days=1), granularity)


def bucket_distance(from_id: str, to_id: str) -> int:
    """Signed number of bucket steps from one id to another (same granularity)."""
    g_from, g_to = bucket_granularity(from_id), bucket_granularity(to_id)
    if g_from is not g_to:
        raise ConfigError(f"bucket ids {from_id!r} and {to_id!r} differ in granularity")
    a, b = parse_bucket_id(from_id), parse_bucket_id(to_id)
    if g_from is Granularity.YEAR:
        return b.start.year - a.start.year
    if g_from is Granularity.QUARTER:
        return (b.start.year - a.start.year) * 4 + (b.start.month - a.start.month) // 3
    return (b.start.year - a.start.year) * 12 + (b.start.month - a.start.month)


def buckets_in_range(
    range_start: date, range_end: date, granularity: Granularity
) -> list[TimeBucket]:
    """All calendar buckets overlapping [range_start, range_end], in order."""
    if range_start > range_end:
        raise ConfigError(f"range start {range_start} after end {range_end}")
    buckets = []
    cursor = bucket_for(range_start, granularity)
    while cursor.start <= range_end:
        buckets.append(cursor)
        cursor = next_bucket(cursor)
    return buckets


def bucketize(
    interval: TimeInterval,
    range_start: date,
    range_end: date,
    granularity: Granularity,
) -> list[str]:
    """Bucket ids within the range that the interval overlaps (possibly none).

    Bucket spans are clipped to the range, so a partial first or last bucket
    only matches validity inside the collection window; this keeps coarser
    granularities exact unions of finer ones over the same range.
    """
    return [
        b.bucket_id
        for b in buckets_in_range(range_start, range_end, granularity)
        if interval.overlaps(max(b.start, range_start), min(b.end, range_end))
    ]


# --------------------------------------------------------------------------
# Snapshot queries
# --------------------------------------------------------------------------


class QueryKey(NamedTuple):
    """Identity of a fact family across buckets."""

    subject_qid: str
    property_id: str


class Answer(NamedTuple):
    qid: str
    label: str


@dataclass(frozen=True)
class SnapshotQuery:
    """One (subject, relation) query in one bucket with its merged answer list."""

    key: QueryKey
    bucket_id: str
    subject_label: str
    answers: tuple[Answer, ...]

    def __post_init__(self):
        if not self.key.subject_qid or not self.key.property_id:
            raise ValueError("query key fields must be non-empty")
        if not self.answers:
            raise ValueError(f"query {self.key} in {self.bucket_id} has no answers")
        qids = [a.qid for a in self.answers]
        if qids != sorted(set(qids)):
            raise ValueError(f"answers must be unique and sorted by qid, got {qids}")


def build_snapshot(
    facts: Iterable[FactRecord],
    range_start: date,
    range_end: date,
    granularity: Granularity,
) -> dict[str, list[SnapshotQuery]]:
    """Group facts into per-bucket query sets with merged, overlapping answers.

    Returns every bucket in the range (possibly with an empty query list),
    keyed by bucket id in chronological order. Queries are sorted by
    (property, subject); answers deduplicated and sorted by object qid.
    Output is independent of fact arrival order.
    """
    buckets = buckets_in_range(range_start, range_end, granularity)
    merged: dict[str, dict[QueryKey, dict[str, str]]] = {b.bucket_id: {} for b in buckets}
    subject_labels: dict[QueryKey, str] = {}
    for fact in facts:
        key = QueryKey(fact.subject_qid, fact.property_id)
        # Lexicographically-least label wins so arrival order never matters.
        if key not in subject_labels or fact.subject_label < subject_labels[key]:
            subject_labels[key] = fact.subject_label
        for bucket_id in bucketize(fact.interval, range_start, range_end, granularity):
            answers = merged[bucket_id].setdefault(key, {})
            if fact.object_qid not in answers or fact.object_label < answers[fact.object_qid]:
                answers[fact.object_qid] = fact.object_label
    snapshot: dict[str, list[SnapshotQuery]] = {}
    for bucket in buckets:
        queries = []
        for key in sorted(merged[bucket.bucket_id], key=lambda k: (k.property_id, k.subject_qid)):
            answers = merged[bucket.bucket_id][key]
            queries.append(
                SnapshotQuery(
                    key=key,
                    bucket_id=bucket.bucket_id,
                    subject_label=subject_labels[key],
                    answers=tuple(Answer(qid, answers[qid]) for qid in sorted(answers)),
                )
            )
        snapshot[bucket.bucket_id] = queries
    return snapshot


# --------------------------------------------------------------------------
# Snapshot files: one JSON-lines file per bucket
# --------------------------------------------------------------------------


def query_to_json(query: SnapshotQuery) -> dict:
    return {
        "bucket": query.bucket_id,
        "subject_qid": query.key.subject_qid,
        "subject_label": query.subject_label,
        "property": query.key.property_id,
        "answers": [{"qid": a.qid, "label": a.label} for a in query.answers],
    }


def query_from_json(payload: Mapping) -> SnapshotQuery:
    return SnapshotQuery(
        key=QueryKey(payload["subject_qid"], payload["property"]),
        bucket_id=payload["bucket"],
        subject_label=payload["subject_label"],
        answers=tuple(Answer(a["qid"], a["label"]) for a in payload["answers"]),
    )


def write_snapshot_files(snapshot: Mapping[str, list[SnapshotQuery]], out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for bucket_id, queries in snapshot.items():
        path = out / f"{bucket_id}.jsonl"
        with open(path, "w", encoding="utf-8") as handle:
            for query in queries:
                handle.write(json.dumps(query_to_json(query), sort_keys=True) + "\n")


def read_snapshot_files(snapshot_dir: str | Path) -> dict[str, list[SnapshotQuery]]:
    """Read per-bucket snapshot files back into chronological bucket order."""
    paths = sorted(Path(snapshot_dir).glob("*.jsonl"))
    if not paths:
        raise ConfigError(f"no snapshot files in {snapshot_dir}")
    by_bucket: dict[str, list[SnapshotQuery]] = {}
    for path in paths:
        bucket_id = path.stem
        parse_bucket_id(bucket_id)
        queries = []
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    queries.append(query_from_json(json.loads(line)))
        by_bucket[bucket_id] = queries
    ordered = sorted(by_bucket, key=lambda b: parse_bucket_id(b).start)
    return {b: by_bucket[b] for b in ordered}
