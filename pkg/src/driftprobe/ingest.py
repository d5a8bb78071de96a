"""Wikidata entity-dump ingestion: temporally-qualified facts for configured relations.

Dump format:
- JSON array streamed one entity object per line: the first/last lines may be
  a lone ``[`` / ``]``, every other line is one entity, possibly with a
  trailing comma.
- Optionally gzip- or bzip2-compressed; compression is sniffed from magic
  bytes so the caller never has to say.
- Malformed single lines are skipped and counted, never fatal. Corruption of
  the stream itself (e.g. a truncated compressed file) raises IngestError
  with the byte offset reached.

A claim survives extraction when all of these hold:
- its property is configured,
- its rank is not deprecated,
- its object is an entity (wikibase-item),
- it carries a start-time and/or end-time qualifier, at least one of which
  falls strictly after 2010-01-01,
- subject and object both have an English Wikipedia sitelink and a label.

Claims failing any condition are excluded silently; exclusions are tallied
per category so that tallies + emitted count = claims seen.
"""

from __future__ import annotations

import bz2
import csv
import gzip
import io
import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping

from .errors import ConfigError, IngestError

logger = logging.getLogger(__name__)

SUBJECT_SLOT = "<subject>"
OBJECT_SLOT = "<object>"

START_TIME_QUALIFIER = "P580"
END_TIME_QUALIFIER = "P582"

# Facts must have a start or an end strictly after this date to be temporal
# in the sense this benchmark cares about.
TEMPORAL_CUTOFF = date(2010, 1, 1)

# Default cap on subjects kept per relation, ranked by fact count.
DEFAULT_MAX_SUBJECTS = 1000

_PROPERTY_ID_RE = re.compile(r"^P\d+$")
_ENTITY_ID_RE = re.compile(r"^Q\d+$")
_WIKIDATA_TIME_RE = re.compile(r"^([+-])(\d{1,16})-(\d{2})-(\d{2})T")


@dataclass(frozen=True)
class RelationConfig:
    """One configured Wikidata relation with its cloze template and subject cap."""

    property_id: str
    template_text: str
    max_subjects: int = DEFAULT_MAX_SUBJECTS
    relation_name: str = ""

    def __post_init__(self):
        if not _PROPERTY_ID_RE.match(self.property_id):
            raise ConfigError(f"bad property id {self.property_id!r}: expected P<digits>")
        for slot in (SUBJECT_SLOT, OBJECT_SLOT):
            if self.template_text.count(slot) != 1:
                raise ConfigError(
                    f"template for {self.property_id} must contain exactly one {slot!r}: "
                    f"{self.template_text!r}"
                )
        if self.max_subjects < 1:
            raise ConfigError(f"max_subjects must be positive, got {self.max_subjects}")


@dataclass(frozen=True, order=True)
class TimeInterval:
    """Validity interval of a statement; missing bounds mean unbounded."""

    start: date | None
    end: date | None

    def __post_init__(self):
        if self.start is None and self.end is None:
            raise ValueError("interval needs at least one of start/end")
        if self.start is not None and self.end is not None and self.start > self.end:
            raise ValueError(f"interval start {self.start} after end {self.end}")

    def overlaps(self, lo: date, hi: date) -> bool:
        """Closed-interval overlap with [lo, hi]; missing start/end extend to infinity."""
        if self.start is not None and self.start > hi:
            return False
        if self.end is not None and self.end < lo:
            return False
        return True


@dataclass(frozen=True)
class FactRecord:
    """One temporally-qualified (subject, relation, object) statement."""

    subject_qid: str
    subject_label: str
    property_id: str
    object_qid: str
    object_label: str
    interval: TimeInterval


@dataclass
class EntityRecord:
    """Raw carrier for one dump entity: label, sitelink flag, and claims."""

    qid: str
    label: str
    has_sitelink: bool
    statements: dict[str, list[dict]]


@dataclass
class IngestStats:
    """Counters filled while parsing and extracting."""

    entities: int = 0
    malformed_lines: int = 0
    claims_seen: int = 0
    emitted: int = 0
    exclusions: Counter = field(default_factory=Counter)

    def consistent(self) -> bool:
        return self.claims_seen == self.emitted + sum(self.exclusions.values())


# --------------------------------------------------------------------------
# Dump parsing
# --------------------------------------------------------------------------

_GZIP_MAGIC = b"\x1f\x8b"
_BZIP2_MAGIC = b"BZh"


def open_dump(source: str | Path | IO[bytes]) -> IO[bytes]:
    """Open a dump path or binary stream, transparently decompressing gzip/bzip2."""
    if isinstance(source, (str, Path)):
        raw: IO[bytes] = open(source, "rb")
    else:
        raw = source
    buffered = raw if isinstance(raw, io.BufferedReader) else io.BufferedReader(raw)  # type: ignore[arg-type]
    magic = buffered.peek(3)[:3]
    if magic[:2] == _GZIP_MAGIC:
        return gzip.GzipFile(fileobj=buffered)  # type: ignore[return-value]
    if magic == _BZIP2_MAGIC:
        return bz2.BZ2File(buffered)  # type: ignore[return-value]
    return buffered


def parse_dump_stream(
    source: str | Path | IO[bytes], stats: IngestStats | None = None
) -> Iterator[EntityRecord]:
    """Yield one EntityRecord per well-formed entity line, in input order.

    Malformed lines are counted on ``stats`` and skipped. Unrecoverable stream
    corruption raises IngestError carrying the byte offset reached.
    """
    stats = stats if stats is not None else IngestStats()
    stream = open_dump(source)
    offset = 0
    line_iter = iter(stream)
    while True:
        try:
            line = next(line_iter)
        except StopIteration:
            return
        except (OSError, EOFError) as exc:
            raise IngestError(f"dump stream corrupted: {exc}", byte_offset=offset) from exc
        offset += len(line)
        record = _parse_entity_line(line)
        if record is None:
            continue
        if record is _MALFORMED:
            stats.malformed_lines += 1
            continue
        stats.entities += 1
        yield record


_MALFORMED = object()


def _parse_entity_line(line: bytes):
    """Parse one dump line; None for structural filler, _MALFORMED for bad lines."""
    stripped = line.strip()
    if not stripped or stripped in (b"[", b"]"):
        return None
    if stripped.endswith(b","):
        stripped = stripped[:-1]
    try:
        entity = json.loads(stripped)
    except (json.JSONDecodeError, UnicodeDecodeError):
        return _MALFORMED
    if not isinstance(entity, dict) or "id" not in entity:
        return _MALFORMED
    labels = entity.get("labels") or {}
    en_label = ""
    if isinstance(labels, dict):
        en_label = (labels.get("en") or {}).get("value", "") or ""
    sitelinks = entity.get("sitelinks") or {}
    claims = entity.get("claims") or {}
    return EntityRecord(
        qid=str(entity["id"]),
        label=en_label,
        has_sitelink=isinstance(sitelinks, dict) and "enwiki" in sitelinks,
        statements=claims if isinstance(claims, dict) else {},
    )


# --------------------------------------------------------------------------
# Wikidata time values
# --------------------------------------------------------------------------


def parse_wikidata_time(value: dict) -> date | None:
    """Resolve a Wikidata time value to a day-precision date.

    Year precision snaps to January 1, month precision to day 1 (earliest
    covered day). Values below year precision, malformed strings, and BCE
    dates resolve to None.
    """
    time_str = value.get("time", "")
    precision = value.get("precision", 11)
    match = _WIKIDATA_TIME_RE.match(time_str)
    if not match or match.group(1) == "-":
        return None
    if precision < 9:
        return None
    year = int(match.group(2))
    month = int(match.group(3))
    day = int(match.group(4))
    if precision < 10 or month == 0:
        month, day = 1, 1
    elif precision < 11 or day == 0:
        day = 1
    try:
        return date(year, month, day)
    except ValueError:
        return None


def _qualifier_dates(claim: dict, qualifier_property: str) -> list[date]:
    dates = []
    for snak in (claim.get("qualifiers") or {}).get(qualifier_property, []):
        datavalue = snak.get("datavalue") or {}
        if datavalue.get("type") != "time":
            continue
        parsed = parse_wikidata_time(datavalue.get("value") or {})
        if parsed is not None:
            dates.append(parsed)
    return dates


def claim_interval(claim: dict) -> tuple[TimeInterval | None, str | None]:
    """Extract the validity interval of a claim from its start/end qualifiers.

    Multiple simultaneous qualifiers resolve to (earliest start, latest end).
    Returns (interval, None) on success, (None, reason) on exclusion.
    """
    qualifiers = claim.get("qualifiers") or {}
    has_any = START_TIME_QUALIFIER in qualifiers or END_TIME_QUALIFIER in qualifiers
    if not has_any:
        return None, "not_temporal"
    starts = _qualifier_dates(claim, START_TIME_QUALIFIER)
    ends = _qualifier_dates(claim, END_TIME_QUALIFIER)
    if not starts and not ends:
        return None, "bad_time_value"
    start = min(starts) if starts else None
    end = max(ends) if ends else None
    if start is not None and end is not None and start > end:
        return None, "invalid_interval"
    return TimeInterval(start=start, end=end), None


# --------------------------------------------------------------------------
# Statement extraction
# --------------------------------------------------------------------------

# qid -> (label, has_sitelink); used to resolve claim objects.
EntityIndex = Mapping[str, tuple[str, bool]]


def _claim_object_qid(claim: dict) -> str | None:
    mainsnak = claim.get("mainsnak") or {}
    datavalue = mainsnak.get("datavalue") or {}
    if datavalue.get("type") != "wikibase-entityid":
        return None
    value = datavalue.get("value") or {}
    qid = value.get("id")
    if not isinstance(qid, str) or not _ENTITY_ID_RE.match(qid):
        return None
    return qid


def extract_temporal_statements(
    entity: EntityRecord,
    relations: Mapping[str, RelationConfig],
    entity_index: EntityIndex,
    stats: IngestStats | None = None,
) -> list[FactRecord]:
    """Extract fact records for one entity's configured claims.

    ``entity_index`` resolves object qids to (label, sitelink) pairs; objects
    the index does not know are excluded. Exclusion reasons are tallied on
    ``stats`` per category.
    """
    stats = stats if stats is not None else IngestStats()
    facts: list[FactRecord] = []
    for property_id in sorted(set(entity.statements) & set(relations)):
        for claim in entity.statements[property_id]:
            stats.claims_seen += 1
            reason = _claim_exclusion(entity, claim, entity_index)
            if isinstance(reason, str):
                stats.exclusions[reason] += 1
                continue
            interval, object_qid = reason
            object_label, _ = entity_index[object_qid]
            facts.append(
                FactRecord(
                    subject_qid=entity.qid,
                    subject_label=entity.label,
                    property_id=property_id,
                    object_qid=object_qid,
                    object_label=object_label,
                    interval=interval,
                )
            )
            stats.emitted += 1
    return facts


def _claim_exclusion(
    entity: EntityRecord, claim: dict, entity_index: EntityIndex
) -> str | tuple[TimeInterval, str]:
    """Return an exclusion reason, or the (interval, object_qid) of a keeper."""
    if claim.get("rank") == "deprecated":
        return "deprecated_rank"
    object_qid = _claim_object_qid(claim)
    if object_qid is None:
        return "object_not_entity"
    interval, reason = claim_interval(claim)
    if interval is None:
        return reason or "not_temporal"
    after_cutoff = (interval.start is not None and interval.start > TEMPORAL_CUTOFF) or (
        interval.end is not None and interval.end > TEMPORAL_CUTOFF
    )
    if not after_cutoff:
        return "before_cutoff"
    if not entity.label:
        return "subject_no_label"
    if not entity.has_sitelink:
        return "subject_no_sitelink"
    if object_qid not in entity_index:
        return "object_unknown"
    object_label, object_sitelink = entity_index[object_qid]
    if not object_sitelink:
        return "object_no_sitelink"
    if not object_label:
        return "object_no_label"
    return interval, object_qid


def select_top_subjects(
    facts: Iterable[FactRecord], relations: Mapping[str, RelationConfig]
) -> list[FactRecord]:
    """Keep facts of the most frequent subjects per relation, up to its cap.

    Frequency is the number of temporal statements for (subject, relation);
    ties are broken by lexicographic qid ascending. Input order is preserved.
    """
    materialized = list(facts)
    counts: dict[str, Counter] = defaultdict(Counter)
    for fact in materialized:
        counts[fact.property_id][fact.subject_qid] += 1
    kept_subjects: dict[str, set[str]] = {}
    for property_id, subject_counts in counts.items():
        cap = relations[property_id].max_subjects if property_id in relations else DEFAULT_MAX_SUBJECTS
        ranked = sorted(subject_counts.items(), key=lambda item: (-item[1], item[0]))
        kept_subjects[property_id] = {qid for qid, _ in ranked[:cap]}
    return [f for f in materialized if f.subject_qid in kept_subjects[f.property_id]]


def sort_facts(facts: Iterable[FactRecord]) -> list[FactRecord]:
    """Deterministic merge order: (property, subject, object, start, end)."""

    def key(fact: FactRecord):
        return (
            fact.property_id,
            fact.subject_qid,
            fact.object_qid,
            fact.interval.start or date.min,
            fact.interval.end or date.min,
        )

    return sorted(facts, key=key)


def ingest_dump(
    source: str | Path | IO[bytes],
    relations: Mapping[str, RelationConfig],
    stats: IngestStats | None = None,
) -> list[FactRecord]:
    """Run the full ingestion pass: parse, extract, cap subjects, sort.

    A single pass over the dump collects an in-memory (label, sitelink) index
    for every entity plus the claims of entities touching configured
    relations; extraction then resolves objects against the index.
    """
    if not relations:
        raise ConfigError("relation set must be non-empty")
    stats = stats if stats is not None else IngestStats()
    entity_index: dict[str, tuple[str, bool]] = {}
    candidates: list[EntityRecord] = []
    for entity in parse_dump_stream(source, stats):
        entity_index[entity.qid] = (entity.label, entity.has_sitelink)
        configured = {p: c for p, c in entity.statements.items() if p in relations}
        if configured:
            candidates.append(replace(entity, statements=configured))
    facts: list[FactRecord] = []
    for entity in candidates:
        facts.extend(extract_temporal_statements(entity, relations, entity_index, stats))
    facts = select_top_subjects(facts, relations)
    logger.info(
        "ingest: %d entities, %d claims seen, %d facts emitted, %d malformed lines",
        stats.entities,
        stats.claims_seen,
        len(facts),
        stats.malformed_lines,
    )
    return sort_facts(facts)


# --------------------------------------------------------------------------
# Fact TSV (the one intermediate that spares re-reading the dump)
# --------------------------------------------------------------------------

FACT_TSV_COLUMNS = (
    "subject_qid",
    "property_id",
    "object_qid",
    "start",
    "end",
    "subject_label",
    "object_label",
)


def _clean_field(text: str) -> str:
    return re.sub(r"[\t\n\r]+", " ", text)


def write_fact_tsv(facts: Iterable[FactRecord], path: str | Path) -> None:
    """Write facts as UTF-8 TSV with ISO dates; empty field for absent bounds."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        writer.writerow(FACT_TSV_COLUMNS)
        for fact in facts:
            writer.writerow(
                [
                    fact.subject_qid,
                    fact.property_id,
                    fact.object_qid,
                    fact.interval.start.isoformat() if fact.interval.start else "",
                    fact.interval.end.isoformat() if fact.interval.end else "",
                    _clean_field(fact.subject_label),
                    _clean_field(fact.object_label),
                ]
            )


def read_fact_tsv(path: str | Path) -> Iterator[FactRecord]:
    """Stream facts back from a TSV written by write_fact_tsv."""
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle, delimiter="\t")
        header = next(reader, None)
        if header is not None and tuple(header) != FACT_TSV_COLUMNS:
            raise ConfigError(f"unexpected fact TSV header in {path}: {header}")
        for row in reader:
            if len(row) != len(FACT_TSV_COLUMNS):
                raise ConfigError(f"bad fact TSV row in {path}: {row!r}")
            subject_qid, property_id, object_qid, start, end, subject_label, object_label = row
            yield FactRecord(
                subject_qid=subject_qid,
                subject_label=subject_label,
                property_id=property_id,
                object_qid=object_qid,
                object_label=object_label,
                interval=TimeInterval(
                    start=date.fromisoformat(start) if start else None,
                    end=date.fromisoformat(end) if end else None,
                ),
            )


# --------------------------------------------------------------------------
# Relation/template files (UTF-8 CSV: property_id, relation_name, template_text)
# --------------------------------------------------------------------------


def load_relations_csv(
    path: str | Path,
    max_subjects: int = DEFAULT_MAX_SUBJECTS,
    overrides: Mapping[str, int] | None = None,
) -> dict[str, RelationConfig]:
    """Load relation configs from the templates CSV.

    ``max_subjects`` applies to every relation unless ``overrides`` names a
    per-property cap.
    """
    overrides = overrides or {}
    relations: dict[str, RelationConfig] = {}
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        for row in reader:
            if not row or row[0].strip().startswith("#"):
                continue
            if row[0].strip() == "property_id":
                continue
            if len(row) != 3:
                raise ConfigError(f"bad relations row in {path}: {row!r}")
            property_id, relation_name, template_text = (cell.strip() for cell in row)
            if property_id in relations:
                raise ConfigError(f"duplicate relation {property_id} in {path}")
            relations[property_id] = RelationConfig(
                property_id=property_id,
                template_text=template_text,
                max_subjects=overrides.get(property_id, max_subjects),
                relation_name=relation_name,
            )
    if not relations:
        raise ConfigError(f"no relations found in {path}")
    return relations
