"""Benchmark harness: the MSE metric, the method-comparison table, and the
process-uncertainty/data-variance ratio summary for gene panels."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .baselines import (
    BaselineAlgorithm,
    BaselineConfig,
    UT_DEFAULT,
    UtParams,
    run_baseline,
)
from .core import (
    VARIANCE_FLOOR,
    GroundTruth,
    InvalidDataError,
    TimeSeriesData,
    Trajectory,
)
from .models import ModelKind
from .pkf import PkfResult, run_pkf
from .synth import BirthDeathScenario, simulate_birth_death


def mse(filter_trajectory: Trajectory, truth: GroundTruth) -> float:
    """Mean squared error of the filter means against the true state."""
    if not np.array_equal(filter_trajectory.grid.times, truth.grid.times):
        raise InvalidDataError("filter and truth grids differ")
    return float(np.mean((filter_trajectory.means - truth.values) ** 2))


def squared_error_trace(filter_trajectory: Trajectory, truth: GroundTruth) -> np.ndarray:
    """Per-timepoint squared error, for trace plots."""
    if not np.array_equal(filter_trajectory.grid.times, truth.grid.times):
        raise InvalidDataError("filter and truth grids differ")
    return (filter_trajectory.means - truth.values) ** 2


@dataclass(frozen=True)
class AlgorithmSpec:
    """One benchmark row: which algorithm, with which parameters."""

    label: str
    algorithm: str  # pkf | kf | ukf | urts | ipls
    q: float = 1.0
    iterations: int = 1
    ut_params: UtParams = UT_DEFAULT

    def params_text(self) -> str:
        if self.algorithm == "pkf":
            return f"iterations={self.iterations}"
        if self.algorithm == "ipls":
            return f"q={self.q:g},iterations={self.iterations}"
        return f"q={self.q:g}"


def table_specs() -> tuple[AlgorithmSpec, ...]:
    """The default method-comparison table: every algorithm/parameter pair."""
    return (
        AlgorithmSpec("kf-q1", "kf", q=1.0),
        AlgorithmSpec("kf-q10", "kf", q=10.0),
        AlgorithmSpec("ukf-q1", "ukf", q=1.0),
        AlgorithmSpec("ukf-q10", "ukf", q=10.0),
        AlgorithmSpec("urts-q1", "urts", q=1.0),
        AlgorithmSpec("urts-q10", "urts", q=10.0),
        AlgorithmSpec("ipls-q1-i1", "ipls", q=1.0, iterations=1),
        AlgorithmSpec("ipls-q1-i10", "ipls", q=1.0, iterations=10),
        AlgorithmSpec("ipls-q10-i1", "ipls", q=10.0, iterations=1),
        AlgorithmSpec("ipls-q10-i10", "ipls", q=10.0, iterations=10),
        AlgorithmSpec("pkf-i1", "pkf", iterations=1),
        AlgorithmSpec("pkf-i10", "pkf", iterations=10),
    )


_BASELINE_BY_NAME = {
    "kf": BaselineAlgorithm.ADAPTIVE_KF,
    "ukf": BaselineAlgorithm.UNSCENTED_KF,
    "urts": BaselineAlgorithm.UNSCENTED_RTS,
    "ipls": BaselineAlgorithm.IPLS,
}


def run_spec(
    spec: AlgorithmSpec, data: TimeSeriesData, kind: ModelKind
) -> tuple[Trajectory, PkfResult | None]:
    """Run one spec; PKF rows also return the full filter result."""
    if spec.algorithm == "pkf":
        result = run_pkf(data, kind, iterations=spec.iterations)
        return result.final.filter, result
    config = BaselineConfig(
        algorithm=_BASELINE_BY_NAME[spec.algorithm],
        q=spec.q,
        iterations=spec.iterations,
        ut_params=spec.ut_params,
    )
    return run_baseline(config, data, kind), None


@dataclass(frozen=True, eq=False)
class BenchmarkRow:
    spec: AlgorithmSpec
    mse: float | None
    trajectory: Trajectory | None
    sq_errors: np.ndarray | None
    pkf_result: PkfResult | None = None
    error: str | None = None

    def __post_init__(self):
        if self.mse is not None and (self.mse < 0 or not math.isfinite(self.mse)):
            raise InvalidDataError("row MSE must be finite and non-negative")


@dataclass(frozen=True, eq=False)
class BenchmarkReport:
    """Per-algorithm MSE rows plus their trajectories, from one shared dataset."""

    scenario: BirthDeathScenario
    seed: int
    rows: tuple[BenchmarkRow, ...]
    truth: GroundTruth
    data: TimeSeriesData

    def row(self, label: str) -> BenchmarkRow:
        for row in self.rows:
            if row.spec.label == label:
                return row
        raise KeyError(label)

    def mse_of(self, label: str) -> float:
        row = self.row(label)
        if row.mse is None:
            raise InvalidDataError(f"row {label!r} failed: {row.error}")
        return row.mse


def run_benchmark(
    scenario: BirthDeathScenario,
    specs: tuple[AlgorithmSpec, ...] = (),
    kind: ModelKind = ModelKind.BIRTH_DEATH,
) -> BenchmarkReport:
    """Generate the scenario once and run every spec on the identical data.

    A failing row records its error and leaves the other rows untouched.
    """
    if not specs:
        specs = table_specs()
    truth, data = simulate_birth_death(scenario)
    rows = []
    for spec in specs:
        try:
            trajectory, pkf_result = run_spec(spec, data, kind)
            rows.append(
                BenchmarkRow(
                    spec=spec,
                    mse=mse(trajectory, truth),
                    trajectory=trajectory,
                    sq_errors=squared_error_trace(trajectory, truth),
                    pkf_result=pkf_result,
                )
            )
        except Exception as exc:  # isolate per-row failures
            rows.append(
                BenchmarkRow(
                    spec=spec,
                    mse=None,
                    trajectory=None,
                    sq_errors=None,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
    return BenchmarkReport(scenario, scenario.seed, tuple(rows), truth, data)


@dataclass(frozen=True)
class QRatioEntry:
    series_id: str
    label: str
    log_ratio: float
    mean_data_variance: float


@dataclass(frozen=True, eq=False)
class QRatioBin:
    """One variance-percentile bin with its per-label mean ratios."""

    decile: int
    variance_low: float
    variance_high: float
    label_means: dict[str, float]
    count: int


@dataclass(frozen=True, eq=False)
class QRatioSummary:
    """Per-series mean log(Q / V(Z)) with label and variance-decile groupings."""

    entries: tuple[QRatioEntry, ...]
    label_means: dict[str, float]
    bins: tuple[QRatioBin, ...]


def q_ratio_summary(
    results: list[tuple[str, PkfResult, TimeSeriesData]],
) -> QRatioSummary:
    """Summarize process uncertainty relative to data variance.

    For each series the statistic is the time-average of
    ``log(max(Q_t, floor) / max(V(Z_t), floor))``. Series are then grouped
    by their label and binned into deciles of their mean data variance.
    """
    if not results:
        raise InvalidDataError("q_ratio_summary needs at least one series")
    entries = []
    for label, result, data in results:
        _, z_vars = data.summaries()
        q = np.maximum(result.final.process_uncertainty, VARIANCE_FLOOR)
        v = np.maximum(z_vars, VARIANCE_FLOOR)
        entries.append(
            QRatioEntry(
                series_id=data.series_id,
                label=label,
                log_ratio=float(np.mean(np.log(q / v))),
                mean_data_variance=float(np.mean(z_vars)),
            )
        )

    labels = sorted({e.label for e in entries})
    label_means = {
        lab: float(np.mean([e.log_ratio for e in entries if e.label == lab]))
        for lab in labels
    }

    variances = np.array([e.mean_data_variance for e in entries])
    edges = np.percentile(variances, np.linspace(0.0, 100.0, 11))
    bins = []
    for d in range(10):
        lo, hi = edges[d], edges[d + 1]
        if d < 9:
            in_bin = [e for e, v in zip(entries, variances) if lo <= v < hi]
        else:
            in_bin = [e for e, v in zip(entries, variances) if lo <= v <= hi]
        bin_label_means = {
            lab: float(np.mean([e.log_ratio for e in in_bin if e.label == lab]))
            for lab in labels
            if any(e.label == lab for e in in_bin)
        }
        bins.append(
            QRatioBin(
                decile=d,
                variance_low=float(lo),
                variance_high=float(hi),
                label_means=bin_label_means,
                count=len(in_bin),
            )
        )
    return QRatioSummary(tuple(entries), label_means, tuple(bins))
