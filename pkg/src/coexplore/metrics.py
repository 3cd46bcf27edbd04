"""Run metrics: coverage, map-quality scores, frontier reduction, comparisons."""

from __future__ import annotations

import csv
import math
import pathlib
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .world_model import (
    UNKNOWN,
    OccupancyGrid,
    WorldModel,
    occupancy_to_intensity,
)

_EIGHT = np.ones((3, 3), dtype=int)

SSIM_WINDOW = 8
SSIM_C1 = (0.01 * 255) ** 2
SSIM_C2 = (0.03 * 255) ** 2


def reachable_region_mask(world: WorldModel) -> np.ndarray:
    """Cells counting toward coverage: the largest connected free region plus
    the obstacle cells bordering it (enclosed pockets are unreachable)."""
    free = world.free_mask()
    labels, count = ndimage.label(free, structure=_EIGHT)
    if count == 0:
        raise ValueError("world has no free space")
    sizes = ndimage.sum_labels(free, labels, index=np.arange(1, count + 1))
    main = labels == (1 + int(np.argmax(sizes)))
    border = ndimage.binary_dilation(main, structure=_EIGHT > 0) & ~free.astype(bool) & (
        world.heights > 0
    )
    return main | border


def coverage_percent(grid: OccupancyGrid, world: WorldModel, region: np.ndarray = None) -> float:
    """Percent of the reachable region known in the map."""
    if grid.cells.shape != world.heights.shape or not math.isclose(
        grid.resolution, world.resolution, rel_tol=0, abs_tol=1e-12
    ):
        raise ValueError("map frame does not match the world")
    if region is None:
        region = reachable_region_mask(world)
    known = (grid.cells != UNKNOWN) & region
    return 100.0 * known.sum() / region.sum()


def _ssim(a: np.ndarray, b: np.ndarray) -> float:
    win = min(SSIM_WINDOW, a.shape[0], a.shape[1])
    wa = np.lib.stride_tricks.sliding_window_view(a, (win, win)).astype(np.float64)
    wb = np.lib.stride_tricks.sliding_window_view(b, (win, win)).astype(np.float64)
    mu_a = wa.mean(axis=(-1, -2))
    mu_b = wb.mean(axis=(-1, -2))
    var_a = wa.var(axis=(-1, -2))
    var_b = wb.var(axis=(-1, -2))
    cov = (wa * wb).mean(axis=(-1, -2)) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float((num / den).mean())


def map_quality(grid: OccupancyGrid, truth: OccupancyGrid) -> dict[str, float]:
    """Intensity-image similarity of a map against a truth rendering.

    Maps render to grayscale (free 255, occupied 0, unknown 127). Returns MSE,
    single-scale SSIM over 8x8 sliding windows, mean-centered normalized
    cross-correlation remapped to [0, 1], and plain cosine similarity.
    """
    if (grid.width, grid.height) != (truth.width, truth.height):
        raise ValueError(
            f"dimension mismatch: {grid.width}x{grid.height} vs {truth.width}x{truth.height}"
        )
    a = occupancy_to_intensity(grid).astype(np.float64)
    b = occupancy_to_intensity(truth).astype(np.float64)

    mse = float(((a - b) ** 2).mean())
    ssim = _ssim(a, b)

    identical = bool(np.array_equal(a, b))
    af, bf = a.ravel(), b.ravel()
    ac, bc = af - af.mean(), bf - bf.mean()
    na, nb = np.linalg.norm(ac), np.linalg.norm(bc)
    if identical:
        r = 1.0
    elif na == 0 or nb == 0:
        r = 0.0
    else:
        r = float(ac @ bc / (na * nb))
    ncc = (r + 1.0) / 2.0

    la, lb = np.linalg.norm(af), np.linalg.norm(bf)
    if identical:
        cs = 1.0
    elif la == 0 or lb == 0:
        cs = 0.0
    else:
        cs = float(af @ bf / (la * lb))
    return {"mse": mse, "ssim": ssim, "ncc": ncc, "cs": cs}


@dataclass
class ReductionSeries:
    per_tick: list[float]
    running_mean: list[float]
    raw_running_mean: list[float]
    filtered_running_mean: list[float]


def frontier_reduction(raw, filtered) -> ReductionSeries:
    """Per-tick frontier reduction percentage with running averages.

    reduction_t = 100 * (1 - filtered_t / raw_t) when raw_t > 0, else 0. The
    running means of the raw and filtered counts themselves are also emitted.
    """
    raw = list(raw)
    filtered = list(filtered)
    if len(raw) != len(filtered):
        raise ValueError("raw and filtered series differ in length")
    per_tick = [
        100.0 * (1.0 - f / r) if r > 0 else 0.0 for r, f in zip(raw, filtered)
    ]

    def running(series):
        out, total = [], 0.0
        for i, v in enumerate(series, start=1):
            total += v
            out.append(total / i)
        return out

    return ReductionSeries(per_tick, running(per_tick), running(raw), running(filtered))


@dataclass
class MetricsLog:
    """Per-tick metric rows plus the end-of-run summary."""

    columns: list[str]
    rows: list[list[float]] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        return np.array([row[idx] for row in self.rows], dtype=float)

    def append(self, row: list[float]) -> None:
        if len(row) != len(self.columns):
            raise ValueError("row width does not match columns")
        self.rows.append(row)

    def save(self, out_dir) -> None:
        out_dir = pathlib.Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "metrics.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([_num(v) for v in row])
        with open(out_dir / "summary.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["key", "value"])
            for key in sorted(self.summary):
                writer.writerow([key, _num(self.summary[key])])

    @classmethod
    def load(cls, run_dir) -> "MetricsLog":
        run_dir = pathlib.Path(run_dir)
        with open(run_dir / "metrics.csv", newline="") as f:
            reader = csv.reader(f)
            columns = next(reader)
            rows = [[float(v) for v in row] for row in reader]
        summary = {}
        summary_path = run_dir / "summary.csv"
        if summary_path.exists():
            with open(summary_path, newline="") as f:
                reader = csv.reader(f)
                next(reader)
                for key, value in reader:
                    try:
                        summary[key] = float(value)
                    except ValueError:
                        summary[key] = value
        return cls(columns, rows, summary)


def _num(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def post_transient_mean(log: MetricsLog, column: str, transient_frac: float = 0.25) -> float:
    values = log.column(column)
    start = int(len(values) * transient_frac)
    tail = values[start:]
    return float(tail.mean()) if len(tail) else 0.0


@dataclass
class RunDelta:
    seed: str
    coverage_delta: float
    iou_delta: float
    reloc_delta: float


@dataclass
class ComparisonReport:
    baseline_label: str
    deltas: dict[str, list[RunDelta]]  # label -> per-seed deltas vs baseline


def _by_seed(logs) -> dict[str, MetricsLog]:
    out = {}
    for log in logs:
        seed = str(log.summary.get("seed", len(out)))
        out[seed] = log
    return out


def compare_runs(run_sets, labels=None, transient_frac: float = 0.25) -> ComparisonReport:
    """Pairwise per-seed comparison of run sets against the first set.

    Each entry of run_sets is a list of MetricsLog sharing a seed set; logs are
    paired by their summary seed. Delta = other - baseline for final merged
    coverage, post-transient mean total overlap area, and total re-localization
    count. Runs must share the tick grid.
    """
    if labels is None:
        labels = [f"set{i}" for i in range(len(run_sets))]
    if len(run_sets) < 2:
        raise ValueError("compare_runs needs at least two run sets")
    base = _by_seed(run_sets[0])
    report = ComparisonReport(labels[0], {})
    for label, logs in zip(labels[1:], run_sets[1:]):
        other = _by_seed(logs)
        for seed in base:
            if seed not in other:
                raise ValueError(f"seed {seed} missing from run set {label!r}")
        for seed in other:
            if seed not in base:
                raise ValueError(f"seed {seed} missing from run set {labels[0]!r}")
        deltas = []
        for seed in sorted(base, key=_seed_key):
            a, b = base[seed], other[seed]
            if list(a.column("tick")) != list(b.column("tick")):
                raise ValueError(f"seed {seed}: runs do not share a tick grid")
            deltas.append(
                RunDelta(
                    seed=seed,
                    coverage_delta=_final(b, "coverage_merged") - _final(a, "coverage_merged"),
                    iou_delta=post_transient_mean(b, "iou_total", transient_frac)
                    - post_transient_mean(a, "iou_total", transient_frac),
                    reloc_delta=_final(b, "reloc_total") - _final(a, "reloc_total"),
                )
            )
        report.deltas[label] = deltas
    return report


def _seed_key(seed: str):
    try:
        return (0, float(seed))
    except ValueError:
        return (1, seed)


def _final(log: MetricsLog, column: str) -> float:
    values = log.column(column)
    return float(values[-1]) if len(values) else 0.0


def comparison_csv_rows(report: ComparisonReport) -> list[list]:
    rows = [["set", "seed", "coverage_delta", "iou_delta", "reloc_delta"]]
    for label, deltas in report.deltas.items():
        for d in deltas:
            rows.append([label, d.seed, _num(d.coverage_delta), _num(d.iou_delta), _num(d.reloc_delta)])
    return rows
