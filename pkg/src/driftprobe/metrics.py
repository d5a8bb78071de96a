"""Per-query metrics and per-split aggregation for the three evaluation views.

Rank-based metrics follow the knowledge-probe convention: a query's rank is
the best (minimum) rank over its acceptable answers, and a gold answer below
the retrieval cutoff contributes rank "absent" (P@k = 0 for every k,
reciprocal rank 0). Token-overlap metrics operate on normalized token
multisets; ROUGE-L uses the longest common subsequence with beta = 1.

Aggregation is a mean for bounded metrics and a median for the scoring
metrics (pll, pppl); an even-count median takes the lower of the two central
values. "overall" rows pool every split of a bucket.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

# Metrics aggregated by median rather than mean (unbounded, skewed).
MEDIAN_METRICS = frozenset({"pll", "pppl"})

OVERALL_SPLIT = "overall"

REPORT_COLUMNS = ("backend", "bucket", "split", "view", "metric", "value", "n")


def precision_at_k(rank: int | None, k: int) -> int:
    """1 iff a gold answer sits within the top-k predictions."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return int(rank is not None and rank <= k)


def reciprocal_rank(rank: int | None) -> float:
    return 0.0 if rank is None else 1.0 / rank


def mrr(ranks: Iterable[int | None]) -> float | None:
    """Mean reciprocal rank; None (absent) on empty input, never 0."""
    ranks = list(ranks)
    if not ranks:
        return None
    return sum(reciprocal_rank(r) for r in ranks) / len(ranks)


def token_f1(candidate_tokens: Sequence[str], answer_tokens: Sequence[str]) -> float:
    """Harmonic precision/recall over token multisets."""
    if not candidate_tokens and not answer_tokens:
        return 1.0
    if not candidate_tokens or not answer_tokens:
        return 0.0
    overlap = sum((Counter(candidate_tokens) & Counter(answer_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(candidate_tokens)
    recall = overlap / len(answer_tokens)
    return 2 * precision * recall / (precision + recall)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate_tokens: Sequence[str], answer_tokens: Sequence[str], n: int) -> float:
    """Standard ROUGE-N F-measure (beta = 1) over n-gram multisets."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not answer_tokens:
        logger.warning("rouge_n called with empty reference")
        return 0.0
    candidate_grams = _ngrams(candidate_tokens, n)
    answer_grams = _ngrams(answer_tokens, n)
    if not candidate_grams or not answer_grams:
        return 0.0
    overlap = sum((candidate_grams & answer_grams).values())
    if overlap == 0:
        return 0.0
    precision = overlap / sum(candidate_grams.values())
    recall = overlap / sum(answer_grams.values())
    return 2 * precision * recall / (precision + recall)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token_a in a:
        current = [0]
        for j, token_b in enumerate(b, start=1):
            if token_a == token_b:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(candidate_tokens: Sequence[str], answer_tokens: Sequence[str]) -> float:
    """ROUGE-L F-measure (beta = 1) based on the longest common subsequence."""
    if not answer_tokens:
        logger.warning("rouge_l called with empty reference")
        return 0.0
    if not candidate_tokens:
        return 0.0
    lcs = _lcs_length(candidate_tokens, answer_tokens)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate_tokens)
    recall = lcs / len(answer_tokens)
    return 2 * precision * recall / (precision + recall)


def median_low(values: Sequence[float]) -> float:
    """Median taking the lower of the two central values on even counts."""
    if not values:
        raise ValueError("median of empty sequence")
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


# --------------------------------------------------------------------------
# Aggregation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitReport:
    """One aggregated metric for one (backend, bucket, split, view) group."""

    backend: str
    bucket_id: str
    split: str
    view: str
    metric: str
    value: float
    n: int

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("sample count must be positive")


def aggregate(records: Iterable) -> list[SplitReport]:
    """Aggregate evaluation records into per-group SplitReports.

    ``records`` need ``backend``, ``bucket_id``, ``split``, ``view`` and
    ``metrics`` attributes (see probing.EvaluationRecord). Groups are keyed by
    (backend, bucket, split, view); every bucket additionally receives
    "overall" rows pooling all of its splits. Empty groups are omitted, and
    the output order is deterministic.
    """
    pools: dict[tuple[str, str, str, str], dict[str, list[float]]] = defaultdict(
        lambda: defaultdict(list)
    )
    for record in records:
        for split in (record.split, OVERALL_SPLIT):
            group = pools[(record.backend, record.bucket_id, split, record.view)]
            for metric, value in record.metrics.items():
                if value is not None:
                    group[metric].append(float(value))
    reports = []
    for (backend, bucket_id, split, view), metric_values in pools.items():
        for metric, values in metric_values.items():
            if not values:
                continue
            if metric in MEDIAN_METRICS:
                value = median_low(values)
            else:
                # Summing in sorted order keeps the mean exactly
                # permutation-invariant despite float rounding.
                value = sum(sorted(values)) / len(values)
            reports.append(
                SplitReport(
                    backend=backend,
                    bucket_id=bucket_id,
                    split=split,
                    view=view,
                    metric=metric,
                    value=value,
                    n=len(values),
                )
            )
    reports.sort(key=lambda r: (r.backend, r.bucket_id, r.split, r.view, r.metric))
    return reports


def write_reports_csv(reports: Iterable[SplitReport], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in reports:
            writer.writerow([r.backend, r.bucket_id, r.split, r.view, r.metric, repr(r.value), r.n])


def write_reports_json(reports: Iterable[SplitReport], path: str | Path) -> None:
    payload = [
        {
            "backend": r.backend,
            "bucket": r.bucket_id,
            "split": r.split,
            "view": r.view,
            "metric": r.metric,
            "value": r.value,
            "n": r.n,
        }
        for r in reports
    ]
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_reports_csv(path: str | Path) -> list[SplitReport]:
    reports = []
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is not None and tuple(header) != REPORT_COLUMNS:
            raise ValueError(f"unexpected report header in {path}: {header}")
        for row in reader:
            backend, bucket, split, view, metric, value, n = row
            reports.append(
                SplitReport(
                    backend=backend,
                    bucket_id=bucket,
                    split=split,
                    view=view,
                    metric=metric,
                    value=float(value),
                    n=int(n),
                )
            )
    return reports
