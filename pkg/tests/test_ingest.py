from __future__ import annotations

import gzip
import io
import random
from collections import Counter
from datetime import date

import pytest

from driftprobe.errors import ConfigError, IngestError
from driftprobe.ingest import (
    EntityRecord,
    FactRecord,
    IngestStats,
    RelationConfig,
    TEMPORAL_CUTOFF,
    TimeInterval,
    extract_temporal_statements,
    ingest_dump,
    load_relations_csv,
    parse_dump_stream,
    parse_wikidata_time,
    read_fact_tsv,
    select_top_subjects,
    sort_facts,
    write_fact_tsv,
)

P54 = RelationConfig("P54", "<subject> plays for <object>.", max_subjects=1000)


def _claim(obj_qid: str, start: str | None = None, end: str | None = None, rank="normal"):
    claim = {
        "mainsnak": {
            "snaktype": "value",
            "property": "P54",
            "datavalue": {
                "value": {"entity-type": "item", "numeric-id": int(obj_qid[1:]), "id": obj_qid},
                "type": "wikibase-entityid",
            },
        },
        "rank": rank,
        "qualifiers": {},
    }
    if start:
        claim["qualifiers"]["P580"] = [
            {
                "snaktype": "value",
                "property": "P580",
                "datavalue": {
                    "value": {"time": f"+{start}T00:00:00Z", "precision": 11},
                    "type": "time",
                },
            }
        ]
    if end:
        claim["qualifiers"]["P582"] = [
            {
                "snaktype": "value",
                "property": "P582",
                "datavalue": {
                    "value": {"time": f"+{end}T00:00:00Z", "precision": 11},
                    "type": "time",
                },
            }
        ]
    if not claim["qualifiers"]:
        del claim["qualifiers"]
    return claim


def _entity(qid="Q11571", label="Cristiano Ronaldo", sitelink=True, claims=None):
    return EntityRecord(qid=qid, label=label, has_sitelink=sitelink, statements=claims or {})


INDEX = {
    "Q1422": ("Juventus F.C.", True),
    "Q18656": ("Manchester United F.C.", True),
    "Q777": ("Ghost Club", False),
}


class TestParseDumpStream:
    def test_three_entity_slice_in_order(self, malformed_dump_path):
        stats = IngestStats()
        records = list(parse_dump_stream(malformed_dump_path, stats))
        assert len(records) == 3
        assert stats.malformed_lines == 1

    def test_truncated_json_counts_malformed(self):
        lines = b'{"id": "Q1", "type": "item"}\n{"id": "Q2", "ty\n'
        stats = IngestStats()
        records = list(parse_dump_stream(io.BytesIO(lines), stats))
        assert [r.qid for r in records] == ["Q1"]
        assert stats.malformed_lines == 1

    def test_bundled_slice_has_200_entities_none_malformed(self, dump_path):
        stats = IngestStats()
        records = list(parse_dump_stream(dump_path, stats))
        assert len(records) == 200
        assert stats.malformed_lines == 0
        assert len({r.qid for r in records}) == 200

    def test_array_wrapper_and_trailing_commas(self):
        raw = b'[\n{"id": "Q1", "type": "item"},\n{"id": "Q2", "type": "item"}\n]\n'
        records = list(parse_dump_stream(io.BytesIO(raw)))
        assert [r.qid for r in records] == ["Q1", "Q2"]

    def test_gzip_sniffing(self, tmp_path):
        payload = b'{"id": "Q5", "type": "item"}\n'
        path = tmp_path / "mini.json.gz"
        path.write_bytes(gzip.compress(payload))
        records = list(parse_dump_stream(path))
        assert [r.qid for r in records] == ["Q5"]

    def test_corrupted_stream_raises_ingest_error_with_offset(self, tmp_path):
        good = gzip.compress(b'{"id": "Q1", "type": "item"}\n' * 200)
        path = tmp_path / "broken.json.gz"
        path.write_bytes(good[: len(good) // 2])
        with pytest.raises(IngestError) as excinfo:
            list(parse_dump_stream(path))
        assert excinfo.value.byte_offset is not None

    def test_labels_and_sitelinks_extracted(self):
        raw = (
            b'{"id": "Q1", "type": "item", '
            b'"labels": {"en": {"language": "en", "value": "Thing"}}, '
            b'"sitelinks": {"enwiki": {"site": "enwiki", "title": "Thing"}}}\n'
        )
        (record,) = parse_dump_stream(io.BytesIO(raw))
        assert record.label == "Thing"
        assert record.has_sitelink


class TestWikidataTime:
    def test_day_precision(self):
        assert parse_wikidata_time({"time": "+2021-08-27T00:00:00Z", "precision": 11}) == date(
            2021, 8, 27
        )

    def test_year_precision_snaps_to_january_first(self):
        assert parse_wikidata_time({"time": "+2021-00-00T00:00:00Z", "precision": 9}) == date(
            2021, 1, 1
        )

    def test_month_precision_snaps_to_day_one(self):
        assert parse_wikidata_time({"time": "+2021-08-00T00:00:00Z", "precision": 10}) == date(
            2021, 8, 1
        )

    def test_bce_and_garbage_resolve_to_none(self):
        assert parse_wikidata_time({"time": "-0044-03-15T00:00:00Z", "precision": 11}) is None
        assert parse_wikidata_time({"time": "bogus", "precision": 11}) is None
        assert parse_wikidata_time({"time": "+2021-01-01T00:00:00Z", "precision": 8}) is None


class TestExtractTemporalStatements:
    def test_ronaldo_claim_with_both_qualifiers(self):
        entity = _entity(claims={"P54": [_claim("Q1422", "2018-07-10", "2021-08-26")]})
        stats = IngestStats()
        facts = extract_temporal_statements(entity, {"P54": P54}, INDEX, stats)
        assert facts == [
            FactRecord(
                subject_qid="Q11571",
                subject_label="Cristiano Ronaldo",
                property_id="P54",
                object_qid="Q1422",
                object_label="Juventus F.C.",
                interval=TimeInterval(date(2018, 7, 10), date(2021, 8, 26)),
            )
        ]
        assert stats.consistent()

    def test_claim_without_temporal_qualifiers_excluded(self):
        entity = _entity(claims={"P54": [_claim("Q1422")]})
        stats = IngestStats()
        assert extract_temporal_statements(entity, {"P54": P54}, INDEX, stats) == []
        assert stats.exclusions["not_temporal"] == 1

    def test_end_before_cutoff_excluded(self):
        entity = _entity(claims={"P54": [_claim("Q1422", None, "2009-05-01")]})
        stats = IngestStats()
        assert extract_temporal_statements(entity, {"P54": P54}, INDEX, stats) == []
        assert stats.exclusions["before_cutoff"] == 1

    def test_deprecated_rank_excluded(self):
        entity = _entity(claims={"P54": [_claim("Q1422", "2020-01-01", rank="deprecated")]})
        stats = IngestStats()
        assert extract_temporal_statements(entity, {"P54": P54}, INDEX, stats) == []
        assert stats.exclusions["deprecated_rank"] == 1

    def test_object_without_sitelink_excluded(self):
        entity = _entity(claims={"P54": [_claim("Q777", "2020-01-01")]})
        stats = IngestStats()
        assert extract_temporal_statements(entity, {"P54": P54}, INDEX, stats) == []
        assert stats.exclusions["object_no_sitelink"] == 1

    def test_subject_without_sitelink_excluded(self):
        entity = _entity(sitelink=False, claims={"P54": [_claim("Q1422", "2020-01-01")]})
        stats = IngestStats()
        assert extract_temporal_statements(entity, {"P54": P54}, INDEX, stats) == []
        assert stats.exclusions["subject_no_sitelink"] == 1

    def test_multiple_simultaneous_qualifiers_take_earliest_start_latest_end(self):
        claim = _claim("Q1422", "2020-06-01", "2021-01-01")
        claim["qualifiers"]["P580"].append(
            {
                "snaktype": "value",
                "property": "P580",
                "datavalue": {
                    "value": {"time": "+2020-03-01T00:00:00Z", "precision": 11},
                    "type": "time",
                },
            }
        )
        entity = _entity(claims={"P54": [claim]})
        (fact,) = extract_temporal_statements(entity, {"P54": P54}, INDEX)
        assert fact.interval == TimeInterval(date(2020, 3, 1), date(2021, 1, 1))

    def test_tally_conservation(self):
        entity = _entity(
            claims={
                "P54": [
                    _claim("Q1422", "2020-01-01"),
                    _claim("Q1422"),
                    _claim("Q777", "2020-01-01"),
                ]
            }
        )
        stats = IngestStats()
        facts = extract_temporal_statements(entity, {"P54": P54}, INDEX, stats)
        assert stats.claims_seen == 3
        assert len(facts) == 1
        assert stats.consistent()


class TestSelectTopSubjects:
    def _facts(self, counts: dict[str, int]) -> list[FactRecord]:
        facts = []
        for qid, n in counts.items():
            for i in range(n):
                facts.append(
                    FactRecord(
                        subject_qid=qid,
                        subject_label=f"subject {qid}",
                        property_id="P54",
                        object_qid=f"Q{i + 100}",
                        object_label=f"club {i}",
                        interval=TimeInterval(date(2020, 1, 1), None),
                    )
                )
        return facts

    def test_cap_keeps_most_frequent(self):
        facts = self._facts({"QA": 5, "QB": 2, "QC": 1})
        relation = RelationConfig("P54", P54.template_text, max_subjects=2)
        kept = select_top_subjects(facts, {"P54": relation})
        assert {f.subject_qid for f in kept} == {"QA", "QB"}
        assert len(kept) == 7

    def test_cap_larger_than_population_is_identity(self):
        facts = self._facts({"QA": 2, "QB": 1})
        kept = select_top_subjects(facts, {"P54": P54})
        assert kept == facts

    def test_randomized_against_sort_and_truncate_oracle(self):
        rng = random.Random(42)
        for _ in range(25):
            counts = {f"Q{i}": rng.randint(1, 8) for i in rng.sample(range(1, 80), k=50)}
            cap = rng.randint(1, 55)
            facts = self._facts(counts)
            relation = RelationConfig("P54", P54.template_text, max_subjects=cap)
            kept = select_top_subjects(facts, {"P54": relation})
            # Independent oracle: sort (count desc, qid asc), truncate, filter.
            ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
            surviving = {qid for qid, _ in ranked[:cap]}
            expected = [f for f in facts if f.subject_qid in surviving]
            assert kept == expected
            assert len({f.subject_qid for f in kept}) <= cap
            assert all(f in facts for f in kept)


class TestIngestDump:
    def test_every_fact_is_after_cutoff(self, dump_path, relations_path):
        relations = load_relations_csv(relations_path)
        facts = ingest_dump(dump_path, relations)
        assert facts
        for fact in facts:
            after = (fact.interval.start is not None and fact.interval.start > TEMPORAL_CUTOFF) or (
                fact.interval.end is not None and fact.interval.end > TEMPORAL_CUTOFF
            )
            assert after, fact

    def test_deterministic_and_sorted(self, dump_path, relations_path):
        relations = load_relations_csv(relations_path)
        first = ingest_dump(dump_path, relations)
        second = ingest_dump(dump_path, relations)
        assert first == second
        assert first == sort_facts(first)

    def test_stats_conserved_on_fixture(self, dump_path, relations_path):
        relations = load_relations_csv(relations_path)
        stats = IngestStats()
        ingest_dump(dump_path, relations, stats)
        assert stats.consistent()

    def test_empty_relation_set_rejected(self, dump_path):
        with pytest.raises(ConfigError):
            ingest_dump(dump_path, {})

    def test_storyline_facts_present(self, dump_path, relations_path):
        relations = load_relations_csv(relations_path)
        facts = ingest_dump(dump_path, relations)
        ronaldo = [f for f in facts if f.subject_qid == "Q11571"]
        assert {(f.object_label, f.interval.start, f.interval.end) for f in ronaldo} == {
            ("Juventus F.C.", date(2018, 7, 10), date(2021, 8, 26)),
            ("Manchester United F.C.", date(2021, 8, 27), date(2022, 11, 22)),
        }
        italy = [f for f in facts if f.subject_qid == "Q38"]
        assert {f.object_label for f in italy} == {"Giuseppe Conte", "Mario Draghi"}


class TestFactTsv:
    def test_round_trip(self, tmp_path, dump_path, relations_path):
        relations = load_relations_csv(relations_path)
        facts = ingest_dump(dump_path, relations)
        path = tmp_path / "facts.tsv"
        write_fact_tsv(facts, path)
        assert list(read_fact_tsv(path)) == facts

    def test_open_bounds_serialized_empty(self, tmp_path):
        fact = FactRecord("Q1", "Someone", "P54", "Q2", "Somewhere", TimeInterval(None, date(2020, 1, 1)))
        path = tmp_path / "facts.tsv"
        write_fact_tsv([fact], path)
        text = path.read_text(encoding="utf-8").splitlines()[1]
        assert text.split("\t")[3] == ""
        assert list(read_fact_tsv(path)) == [fact]


class TestRelationConfig:
    def test_template_must_have_both_slots(self):
        with pytest.raises(ConfigError):
            RelationConfig("P54", "<subject> plays for someone.")
        with pytest.raises(ConfigError):
            RelationConfig("P54", "<subject> <object> <object>")

    def test_property_id_pattern(self):
        with pytest.raises(ConfigError):
            RelationConfig("54", "<subject> plays for <object>.")

    def test_relations_csv_duplicate_rejected(self, tmp_path):
        path = tmp_path / "relations.csv"
        path.write_text(
            "property_id,relation_name,template_text\n"
            "P54,member of sports team,<subject> plays for <object>.\n"
            "P54,duplicate,<subject> also plays for <object>.\n",
            encoding="utf-8",
        )
        with pytest.raises(ConfigError):
            load_relations_csv(path)


class TestTimeInterval:
    def test_needs_at_least_one_bound(self):
        with pytest.raises(ValueError):
            TimeInterval(None, None)

    def test_start_after_end_rejected(self):
        with pytest.raises(ValueError):
            TimeInterval(date(2021, 1, 2), date(2021, 1, 1))

    def test_overlap_semantics(self):
        interval = TimeInterval(date(2021, 1, 15), date(2021, 2, 10))
        assert interval.overlaps(date(2021, 1, 1), date(2021, 3, 31))
        assert interval.overlaps(date(2021, 2, 10), date(2021, 5, 1))  # inclusive boundary
        assert not interval.overlaps(date(2021, 2, 11), date(2021, 5, 1))
        open_end = TimeInterval(date(2021, 8, 15), None)
        assert open_end.overlaps(date(2099, 1, 1), date(2099, 12, 31))
        open_start = TimeInterval(None, date(2020, 1, 1))
        assert open_start.overlaps(date(1900, 1, 1), date(1900, 12, 31))
