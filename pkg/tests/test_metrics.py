from __future__ import annotations

import math
import random

import pytest

from driftprobe.metrics import (
    SplitReport,
    aggregate,
    median_low,
    mrr,
    precision_at_k,
    reciprocal_rank,
    rouge_l,
    rouge_n,
    token_f1,
    write_reports_csv,
    read_reports_csv,
)
from driftprobe.probing import EvaluationRecord


class TestPrecisionAtK:
    def test_rank_one(self):
        assert precision_at_k(1, 1) == 1

    def test_rank_four(self):
        assert precision_at_k(4, 10) == 1
        assert precision_at_k(4, 1) == 0
        assert precision_at_k(4, 3) == 0
        assert precision_at_k(4, 4) == 1

    def test_absent_rank_is_zero_for_all_k(self):
        for k in (1, 10, 100, 10**6):
            assert precision_at_k(None, k) == 0

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            precision_at_k(1, 0)


class TestMrr:
    def test_all_rank_one(self):
        assert mrr([1, 1]) == 1.0

    def test_mixed_ranks(self):
        assert mrr([4, 2]) == pytest.approx((0.25 + 0.5) / 2, abs=1e-12)

    def test_frozen_three_rank_case(self):
        assert mrr([4, 2, 1]) == pytest.approx((0.25 + 0.5 + 1.0) / 3, abs=1e-12)

    def test_min_rank_convention_per_query(self):
        # A query with golds at ranks {4, 2} contributes via its best rank.
        assert reciprocal_rank(min([4, 2])) == 0.5

    def test_absent_contributes_zero(self):
        assert mrr([1, None]) == 0.5

    def test_empty_is_absent_not_zero(self):
        assert mrr([]) is None


class TestTokenF1:
    def test_identical(self):
        assert token_f1(["a", "b"], ["a", "b"]) == 1.0

    def test_partial_overlap_frozen(self):
        got = token_f1(["manchester", "united"], ["manchester", "united", "f.c."])
        assert got == pytest.approx(0.8, abs=1e-12)

    def test_disjoint(self):
        assert token_f1(["x"], ["y"]) == 0.0

    def test_empty_conventions(self):
        assert token_f1([], []) == 1.0
        assert token_f1([], ["a"]) == 0.0
        assert token_f1(["a"], []) == 0.0

    def test_multiset_semantics(self):
        # Repeated tokens only match as many times as the reference has them.
        assert token_f1(["a", "a"], ["a"]) == pytest.approx(2 / 3, abs=1e-12)


class TestRouge:
    def test_identical_three_tokens(self):
        tokens = ["a", "b", "c"]
        assert rouge_n(tokens, tokens, 1) == 1.0
        assert rouge_l(tokens, tokens) == 1.0

    def test_lcs_frozen_case(self):
        got = rouge_l(["manchester", "united"], ["manchester", "united", "f.c."])
        assert got == pytest.approx(0.8, abs=1e-12)

    def test_reversed_bigram(self):
        cand = ["united", "manchester"]
        ref = ["manchester", "united"]
        assert rouge_n(cand, ref, 1) == 1.0
        assert rouge_l(cand, ref) == pytest.approx(0.5, abs=1e-12)

    def test_empty_reference_warns_and_returns_zero(self):
        assert rouge_l(["a"], []) == 0.0
        assert rouge_n(["a"], [], 1) == 0.0

    def test_rouge_l_one_iff_equal_sequences(self):
        rng = random.Random(11)
        alphabet = ["a", "b", "c", "d"]
        for _ in range(200):
            cand = [rng.choice(alphabet) for _ in range(rng.randint(1, 6))]
            ref = [rng.choice(alphabet) for _ in range(rng.randint(1, 6))]
            score = rouge_l(cand, ref)
            if cand == ref:
                assert score == pytest.approx(1.0, abs=1e-12)
            else:
                assert score < 1.0


class TestMedianLow:
    def test_odd_count(self):
        assert median_low([2, 9, 4, 8, 3]) == 4

    def test_even_count_takes_lower_central(self):
        assert median_low([2, 9, 4, 8]) == 4
        assert median_low([1, 2]) == 1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            median_low([])


def _record(backend="m1", bucket="2021-Q1", split="updated", view="single_token", **metrics):
    return EvaluationRecord(
        query_id=f"q{random.random()}",
        backend=backend,
        view=view,
        bucket_id=bucket,
        split=split,
        metrics=metrics,
    )


class TestAggregate:
    def test_single_record_group_equals_record_value(self):
        reports = aggregate([_record(accuracy=1.0, mrr=0.5)])
        by_metric = {(r.split, r.metric): r for r in reports}
        assert by_metric[("updated", "accuracy")].value == 1.0
        assert by_metric[("updated", "mrr")].value == 0.5
        assert by_metric[("overall", "accuracy")].value == 1.0
        assert by_metric[("updated", "accuracy")].n == 1

    def test_mean_for_bounded_median_for_pppl(self):
        records = [
            _record(view="mlm_score", accuracy=a, pppl=p)
            for a, p in [(1.0, 2.0), (0.0, 9.0), (1.0, 4.0), (0.0, 8.0), (1.0, 3.0)]
        ]
        reports = {r.metric: r for r in aggregate(records) if r.split == "updated"}
        assert reports["accuracy"].value == pytest.approx(0.6, abs=1e-12)
        assert reports["pppl"].value == 4.0

    def test_even_count_median_is_lower_central(self):
        records = [_record(view="mlm_score", pppl=p) for p in (2.0, 9.0, 4.0, 8.0)]
        reports = {r.metric: r for r in aggregate(records) if r.split == "updated"}
        assert reports["pppl"].value == 4.0

    def test_accuracy_equals_p_at_1_aggregate(self):
        rng = random.Random(3)
        records = []
        for _ in range(50):
            hit = float(rng.random() < 0.4)
            records.append(_record(accuracy=hit, p_at_1=hit))
        reports = {(r.split, r.metric): r.value for r in aggregate(records)}
        assert reports[("updated", "accuracy")] == reports[("updated", "p_at_1")]
        assert reports[("overall", "accuracy")] == reports[("overall", "p_at_1")]

    def test_permutation_invariance(self):
        rng = random.Random(8)
        records = [
            _record(bucket=rng.choice(["2021-Q1", "2021-Q2"]), split=rng.choice(["new", "updated"]),
                    accuracy=float(rng.random() < 0.5), mrr=rng.random())
            for _ in range(60)
        ]
        shuffled = list(records)
        rng.shuffle(shuffled)
        assert aggregate(records) == aggregate(shuffled)

    def test_overall_pools_all_splits(self):
        records = [
            _record(split="new", accuracy=1.0),
            _record(split="updated", accuracy=0.0),
        ]
        reports = {(r.split, r.metric): r for r in aggregate(records)}
        assert reports[("overall", "accuracy")].value == 0.5
        assert reports[("overall", "accuracy")].n == 2

    def test_bounded_aggregates_in_range(self):
        rng = random.Random(13)
        records = [
            _record(accuracy=float(rng.random() < 0.5), mrr=rng.random(),
                    view="mlm_score", pppl=1 + rng.random() * 40)
            for _ in range(80)
        ]
        for report in aggregate(records):
            if report.metric in ("accuracy", "mrr"):
                assert 0.0 <= report.value <= 1.0
            if report.metric == "pppl":
                assert report.value >= 1.0

    def test_csv_round_trip(self, tmp_path):
        records = [_record(accuracy=1.0, mrr=1 / 3)]
        reports = aggregate(records)
        path = tmp_path / "aggregates.csv"
        write_reports_csv(reports, path)
        assert read_reports_csv(path) == reports


def test_split_report_requires_positive_n():
    with pytest.raises(ValueError):
        SplitReport("m", "2021-Q1", "overall", "single_token", "accuracy", 0.5, 0)


def test_median_metrics_tolerate_float_repr():
    # exp-based medians survive the CSV repr round-trip exactly.
    value = math.exp(1.5)
    report = SplitReport("m", "2021-Q1", "overall", "mlm_score", "pppl", value, 3)
    assert float(repr(report.value)) == value
