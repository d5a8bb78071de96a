"""Result tables and plot-ready views over aggregated split reports.

Tables are models x buckets grids of one metric under one view, with rows and
columns in chronological order whenever names parse as bucket ids. The window
view keeps, per backend, only the buckets within a centered window around the
backend's own timestep, which makes peak-at-own-timestep patterns visible.
"""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError
from .metrics import OVERALL_SPLIT, SplitReport
from .snapshots import bucket_distance, parse_bucket_id

logger = logging.getLogger(__name__)


@dataclass
class ResultTable:
    """One metric under one view, cells traceable to SplitReports."""

    view: str
    metric: str
    rows: list[str]
    columns: list[str]
    cells: dict[tuple[str, str], float]
    # Window tables: per-row flag, true when the center bucket is the row max.
    center_peaks: dict[str, bool] = field(default_factory=dict)

    def value(self, row: str, column: str) -> float | None:
        return self.cells.get((row, column))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow([f"{self.view}:{self.metric}"] + self.columns)
            for row in self.rows:
                cells = [
                    repr(self.cells[(row, c)]) if (row, c) in self.cells else ""
                    for c in self.columns
                ]
                writer.writerow([row] + cells)


def _chronological(names: Iterable[str]) -> list[str]:
    """Sort by bucket start when every name parses as a bucket id."""
    names = sorted(set(names))
    try:
        return sorted(names, key=lambda n: (parse_bucket_id(n).start, n))
    except ConfigError:
        return names


def _select(
    reports: Iterable[SplitReport], view: str, metric: str, split: str
) -> list[SplitReport]:
    return [r for r in reports if r.view == view and r.metric == metric and r.split == split]


def emit_model_by_bucket_table(
    reports: Iterable[SplitReport],
    view: str,
    metric: str,
    split: str = OVERALL_SPLIT,
) -> ResultTable:
    """Backends (rows, chronological) x buckets (columns, chronological)."""
    selected = _select(reports, view, metric, split)
    if not selected:
        raise ConfigError(f"no reports for view={view!r} metric={metric!r} split={split!r}")
    rows = _chronological(r.backend for r in selected)
    columns = _chronological(r.bucket_id for r in selected)
    cells = {(r.backend, r.bucket_id): r.value for r in selected}
    return ResultTable(view=view, metric=metric, rows=rows, columns=columns, cells=cells)


def emit_window_view(
    reports: Iterable[SplitReport],
    view: str,
    metric: str,
    window: int,
    split: str = OVERALL_SPLIT,
) -> ResultTable:
    """Per backend, retain only buckets within the window centered on its own timestep."""
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"window must be odd and >= 1, got {window}")
    selected = _select(reports, view, metric, split)
    if not selected:
        raise ConfigError(f"no reports for view={view!r} metric={metric!r} split={split!r}")
    half = window // 2
    by_backend: dict[str, dict[str, float]] = defaultdict(dict)
    for r in selected:
        by_backend[r.backend][r.bucket_id] = r.value

    rows = []
    columns: set[str] = set()
    cells: dict[tuple[str, str], float] = {}
    center_peaks: dict[str, bool] = {}
    for backend in _chronological(by_backend):
        try:
            parse_bucket_id(backend)
        except ConfigError:
            logger.warning("backend %r is not a bucket id; skipped from window view", backend)
            continue
        retained = {}
        for bucket_id, value in by_backend[backend].items():
            try:
                distance = bucket_distance(backend, bucket_id)
            except ConfigError:
                continue
            if abs(distance) <= half:
                retained[bucket_id] = value
        if not retained:
            continue
        rows.append(backend)
        columns.update(retained)
        for bucket_id, value in retained.items():
            cells[(backend, bucket_id)] = value
        center = retained.get(backend)
        center_peaks[backend] = center is not None and center >= max(retained.values())
    return ResultTable(
        view=view,
        metric=metric,
        rows=rows,
        columns=_chronological(columns),
        cells=cells,
        center_peaks=center_peaks,
    )


def render_plot(table: ResultTable, path: str | Path) -> None:
    """Static line chart of a table: one line per row across its columns."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 4.5))
    x = range(len(table.columns))
    for row in table.rows:
        ys = [table.cells.get((row, c)) for c in table.columns]
        ax.plot(x, [y if y is not None else float("nan") for y in ys], marker="o", label=row)
    ax.set_xticks(list(x))
    ax.set_xticklabels(table.columns, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel(table.metric)
    ax.set_title(f"{table.view}: {table.metric}")
    if table.rows:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": "driftprobe"})
    plt.close(fig)


def write_all_tables(
    reports: Sequence[SplitReport],
    out_dir: str | Path,
    window: int | None = 3,
    with_plots: bool = True,
) -> list[Path]:
    """Emit per-(view, metric) bucket tables, window tables, and plots."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    pairs = sorted({(r.view, r.metric) for r in reports if r.split == OVERALL_SPLIT})
    for view, metric in pairs:
        table = emit_model_by_bucket_table(reports, view, metric)
        path = out / f"{view}__{metric}__by_bucket.csv"
        table.to_csv(path)
        written.append(path)
        if with_plots:
            plot_path = out / f"{view}__{metric}__by_bucket.png"
            render_plot(table, plot_path)
            written.append(plot_path)
        if window is not None:
            windowed = emit_window_view(reports, view, metric, window)
            if windowed.rows:
                wpath = out / f"{view}__{metric}__window{window}.csv"
                windowed.to_csv(wpath)
                written.append(wpath)
    return written
