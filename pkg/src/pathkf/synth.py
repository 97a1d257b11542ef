"""Deterministic, seeded generators for benchmark and panel data.

Two scenarios: a birth/death population with piecewise-constant rates and a
noise level that steps up mid-course (the benchmark dataset), and a panel
of constant-regulation gene series, half of which carry an expression-rate
change point (the desk-scale stand-in for a time-course expression panel).
Ground truth is integrated exactly, segment by segment, from the closed-form
flows; replicates are Gaussian draws fully determined by the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    GroundTruth,
    InvalidConfigError,
    TimeGrid,
    TimeSeriesData,
)

#: Labels attached to panel genes.
DYNAMIC_LABEL = "dynamic"
STATIC_LABEL = "static"


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous step function: ``values[i]`` on ``[breaks[i], breaks[i+1])``."""

    breaks: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.breaks) != len(self.values) or not self.breaks:
            raise InvalidConfigError("breaks and values must be equal-length, non-empty")
        if any(b <= a for a, b in zip(self.breaks, self.breaks[1:])):
            raise InvalidConfigError("breaks must be strictly increasing")

    def value_at(self, t: float) -> float:
        idx = int(np.searchsorted(self.breaks, t, side="right")) - 1
        if idx < 0:
            raise InvalidConfigError(f"schedule has a gap: no value defined at t={t}")
        return self.values[idx]

    def check_covers(self, start: float, end: float) -> None:
        if self.breaks[0] > start:
            raise InvalidConfigError(
                f"schedule starts at t={self.breaks[0]}, leaving [{start}, "
                f"{self.breaks[0]}) undefined"
            )

    def change_points(self, start: float, end: float) -> list[float]:
        return [b for b in self.breaks if start < b < end]

    @classmethod
    def constant(cls, value: float) -> PiecewiseConstant:
        return cls((0.0,), (value,))


@dataclass(frozen=True)
class BirthDeathScenario:
    """Population benchmark scenario.

    Default schedules: birth 0.05 before t=5 then 0.15, death 0.05 before
    t=15 then 0.5, noise standard deviation 1 before t=10 then 5. The grid
    spans [0, t_end] with spacing dt.
    """

    n0: float = 100.0
    t_end: float = 20.0
    dt: float = 0.25
    replicates: int = 100
    birth: PiecewiseConstant = PiecewiseConstant((0.0, 5.0), (0.05, 0.15))
    death: PiecewiseConstant = PiecewiseConstant((0.0, 15.0), (0.05, 0.5))
    noise: PiecewiseConstant = PiecewiseConstant((0.0, 10.0), (1.0, 5.0))
    seed: int = 42

    def __post_init__(self):
        if self.n0 <= 0:
            raise InvalidConfigError("n0 must be positive")
        if self.dt <= 0 or self.t_end <= 0:
            raise InvalidConfigError("dt and t_end must be positive")
        if self.replicates < 1:
            raise InvalidConfigError("replicates must be at least 1")
        for schedule in (self.birth, self.death, self.noise):
            schedule.check_covers(0.0, self.t_end)

    def grid(self) -> TimeGrid:
        n_steps = int(round(self.t_end / self.dt))
        return TimeGrid(self.dt * np.arange(n_steps + 1))


def _piecewise_exponential(times: np.ndarray, n0: float, growth: PiecewiseConstant) -> np.ndarray:
    """Exact integration of ``dN/dt = g(t) N`` with piecewise-constant ``g``."""
    t_end = float(times[-1])
    events = sorted({float(times[0]), *growth.change_points(float(times[0]), t_end)})
    seg_starts = events
    seg_values = [n0]
    for a, b in zip(seg_starts, seg_starts[1:]):
        seg_values.append(seg_values[-1] * math.exp(growth.value_at(a) * (b - a)))
    out = np.empty_like(times)
    for i, t in enumerate(times):
        idx = int(np.searchsorted(seg_starts, t, side="right")) - 1
        t0 = seg_starts[idx]
        out[i] = seg_values[idx] * math.exp(growth.value_at(t0) * (t - t0))
    return out


def _piecewise_relaxation(
    times: np.ndarray,
    x0: float,
    expression: PiecewiseConstant,
    degradation: PiecewiseConstant,
) -> np.ndarray:
    """Exact integration of ``dX/dt = k_exp(t) - k_deg(t) X``, piecewise rates."""
    t_end = float(times[-1])
    events = sorted(
        {
            float(times[0]),
            *expression.change_points(float(times[0]), t_end),
            *degradation.change_points(float(times[0]), t_end),
        }
    )
    seg_values = [x0]
    for a, b in zip(events, events[1:]):
        k_exp = expression.value_at(a)
        k_deg = degradation.value_at(a)
        steady = k_exp / k_deg
        seg_values.append(steady + (seg_values[-1] - steady) * math.exp(-k_deg * (b - a)))
    out = np.empty_like(times)
    for i, t in enumerate(times):
        idx = int(np.searchsorted(events, t, side="right")) - 1
        t0 = events[idx]
        k_exp = expression.value_at(t0)
        k_deg = degradation.value_at(t0)
        steady = k_exp / k_deg
        out[i] = steady + (seg_values[idx] - steady) * math.exp(-k_deg * (t - t0))
    return out


def simulate_birth_death(
    scenario: BirthDeathScenario,
) -> tuple[GroundTruth, TimeSeriesData]:
    """Generate the population ground truth and its noisy replicates."""
    grid = scenario.grid()
    growth = PiecewiseConstant(
        tuple(sorted({*scenario.birth.breaks, *scenario.death.breaks})),
        tuple(
            scenario.birth.value_at(b) - scenario.death.value_at(b)
            for b in sorted({*scenario.birth.breaks, *scenario.death.breaks})
        ),
    )
    truth_values = _piecewise_exponential(grid.times, scenario.n0, growth)
    rng = np.random.default_rng(scenario.seed)
    samples = tuple(
        rng.normal(truth_values[i], scenario.noise.value_at(float(t)), scenario.replicates)
        for i, t in enumerate(grid.times)
    )
    truth = GroundTruth(grid, truth_values)
    data = TimeSeriesData("population", grid, samples)
    return truth, data


@dataclass(frozen=True)
class GeneSpec:
    """One synthetic gene: rate schedules, initial value, noise, label."""

    gene_id: str
    expression: PiecewiseConstant
    degradation: PiecewiseConstant
    x0: float
    noise_sd: float
    label: str


@dataclass(frozen=True)
class GenePanelScenario:
    """A panel of independent constant-regulation gene series."""

    genes: tuple[GeneSpec, ...]
    times: tuple[float, ...]
    replicates: int = 2
    seed: int = 7

    def __post_init__(self):
        if not self.genes:
            raise InvalidConfigError("panel needs at least one gene")
        if self.replicates < 1:
            raise InvalidConfigError("replicates must be at least 1")
        t_end = self.times[-1]
        for gene in self.genes:
            gene.expression.check_covers(self.times[0], t_end)
            gene.degradation.check_covers(self.times[0], t_end)

    @classmethod
    def default(
        cls,
        n_genes: int = 200,
        n_timepoints: int = 14,
        spacing: float = 2.0,
        replicates: int = 2,
        noise_level: float = 0.02,
        seed: int = 7,
    ) -> GenePanelScenario:
        """Half-dynamic, half-static panel with randomized per-gene rates.

        Static genes hold constant rates and start at steady state; dynamic
        genes step their expression rate at a random interior timepoint.
        Noise standard deviation is ``noise_level`` times the initial steady
        state.
        """
        rng = np.random.default_rng(seed)
        times = tuple(spacing * i for i in range(n_timepoints))
        genes = []
        for i in range(n_genes):
            k_deg = float(rng.uniform(0.2, 1.0))
            steady = float(rng.uniform(5.0, 50.0))
            k_exp = steady * k_deg
            dynamic = i < n_genes // 2
            if dynamic:
                cp_index = int(rng.integers(3, max(n_timepoints - 3, 4)))
                t_cp = times[cp_index]
                factor = float(rng.uniform(4.0, 8.0))
                expression = PiecewiseConstant((0.0, t_cp), (k_exp, k_exp * factor))
                label = DYNAMIC_LABEL
            else:
                expression = PiecewiseConstant.constant(k_exp)
                label = STATIC_LABEL
            genes.append(
                GeneSpec(
                    gene_id=f"gene{i:04d}",
                    expression=expression,
                    degradation=PiecewiseConstant.constant(k_deg),
                    x0=steady,
                    noise_sd=noise_level * steady,
                    label=label,
                )
            )
        return cls(tuple(genes), times, replicates, seed)


def simulate_gene_panel(
    scenario: GenePanelScenario,
) -> list[tuple[GroundTruth, TimeSeriesData]]:
    """Generate every gene in the panel.

    Each gene draws from its own generator seeded by ``(seed, gene index)``,
    so panels are reproducible and genes are independent.
    """
    grid = TimeGrid(np.asarray(scenario.times, dtype=float))
    out = []
    for i, gene in enumerate(scenario.genes):
        truth_values = _piecewise_relaxation(
            grid.times, gene.x0, gene.expression, gene.degradation
        )
        rng = np.random.default_rng([scenario.seed, i])
        samples = tuple(
            rng.normal(truth_values[t], gene.noise_sd, scenario.replicates)
            for t in range(len(grid))
        )
        out.append(
            (GroundTruth(grid, truth_values), TimeSeriesData(gene.gene_id, grid, samples))
        )
    return out


def panel_labels(scenario: GenePanelScenario) -> dict[str, str]:
    """Mapping of gene id to its dynamic/static label."""
    return {gene.gene_id: gene.label for gene in scenario.genes}
