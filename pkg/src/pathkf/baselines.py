"""Comparison filters and smoothers sharing the spline internal models.

Four algorithms: an adaptive non-linear Kalman filter (the pathspace filter
with the path feedback removed and a constant process uncertainty), an
unscented Kalman filter, an unscented Rauch-Tung-Striebel smoother, and an
iterated posterior linearization smoother. All consume the same
per-timepoint data summaries and fit their step dynamics from
right-endpoint windows of the same ODE families, so benchmark differences
isolate the algorithms themselves.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    VARIANCE_FLOOR,
    DegeneratePosteriorError,
    GaussianEstimate,
    InvalidDataError,
    InvalidParameterError,
    TimeSeriesData,
    Trajectory,
)
from .models import (
    POSITIVE_VALUE_FLOOR,
    FitPosition,
    ModelKind,
    ScanGrid,
    Window,
    fit_spline_posterior,
    posterior_moments,
    uniform_posterior,
)


class BaselineAlgorithm(enum.Enum):
    ADAPTIVE_KF = "kf"
    UNSCENTED_KF = "ukf"
    UNSCENTED_RTS = "urts"
    IPLS = "ipls"


@dataclass(frozen=True)
class UtParams:
    """Scaled sigma-point parameters.

    For a one-dimensional state the common alpha=1e-3 collapses the sigma
    spread far below the data noise, so alpha defaults to 1 (points at one
    standard deviation).
    """

    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 0.0


UT_DEFAULT = UtParams()


@dataclass(frozen=True)
class BaselineConfig:
    """One baseline run: algorithm, constant process uncertainty, knobs."""

    algorithm: BaselineAlgorithm
    q: float = 1.0
    iterations: int = 1
    ut_params: UtParams = UT_DEFAULT

    def __post_init__(self):
        if not math.isfinite(self.q) or self.q < 0:
            raise InvalidParameterError("q must be finite and non-negative")
        if self.iterations < 1:
            raise InvalidParameterError("iterations must be at least 1")


@dataclass(frozen=True, eq=False)
class SigmaPoints:
    """Sigma points with their mean and covariance weights."""

    points: np.ndarray
    mean_weights: np.ndarray
    cov_weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        wm = np.asarray(self.mean_weights, dtype=float)
        wc = np.asarray(self.cov_weights, dtype=float)
        if not (len(pts) == len(wm) == len(wc) == 3):
            raise InvalidDataError("a univariate state uses exactly 3 sigma points")
        if abs(float(np.sum(wm)) - 1.0) > 1e-12:
            raise InvalidDataError("mean weights must sum to one")
        for name, arr in (("points", pts), ("mean_weights", wm), ("cov_weights", wc)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def merwe_sigma_points(
    mean: float, variance: float, params: UtParams = UT_DEFAULT
) -> SigmaPoints:
    """Scaled sigma points for a univariate Gaussian."""
    if variance < 0:
        raise InvalidParameterError("variance must be non-negative")
    lam = params.alpha**2 * (1.0 + params.kappa) - 1.0
    if 1.0 + lam <= 0:
        raise InvalidParameterError("sigma-point scaling requires alpha^2 (1 + kappa) > 0")
    spread = math.sqrt((1.0 + lam) * variance)
    points = np.array([mean, mean + spread, mean - spread])
    w_side = 1.0 / (2.0 * (1.0 + lam))
    w0_mean = lam / (1.0 + lam)
    w0_cov = w0_mean + 1.0 - params.alpha**2 + params.beta
    mean_weights = np.array([w0_mean, w_side, w_side])
    cov_weights = np.array([w0_cov, w_side, w_side])
    return SigmaPoints(points, mean_weights, cov_weights)


def _propagate(points: np.ndarray, f) -> np.ndarray:
    try:
        out = np.asarray(f(points), dtype=float)
    except (TypeError, ValueError):
        return np.array([float(f(x)) for x in points])
    if out.shape != points.shape:
        out = np.array([float(f(x)) for x in points])
    return out


def unscented_transform(
    estimate: GaussianEstimate, f, params: UtParams = UT_DEFAULT
) -> GaussianEstimate:
    """Propagate a Gaussian through ``f`` via sigma points; exact for affine maps."""
    pts = merwe_sigma_points(estimate.mean, estimate.variance, params)
    prop = _propagate(pts.points, f)
    mean = float(np.sum(pts.mean_weights * prop))
    variance = float(np.sum(pts.cov_weights * (prop - mean) ** 2))
    return GaussianEstimate(mean, max(variance, VARIANCE_FLOOR))


def _cross_covariance(pts: SigmaPoints, prop: np.ndarray, mean_in: float) -> float:
    mean_out = float(np.sum(pts.mean_weights * prop))
    return float(np.sum(pts.cov_weights * (pts.points - mean_in) * (prop - mean_out)))


def statistical_linearization(
    mean: float, variance: float, f, params: UtParams = UT_DEFAULT
) -> tuple[float, float, float]:
    """Sigma-point linear regression of ``f`` around a Gaussian.

    Returns ``(slope, intercept, residual_variance)`` with the slope the
    cross-covariance over the input variance and the intercept matching the
    propagated mean. Exact (zero residual) for affine maps.
    """
    var = max(variance, VARIANCE_FLOOR)
    pts = merwe_sigma_points(mean, var, params)
    prop = _propagate(pts.points, f)
    mean_out = float(np.sum(pts.mean_weights * prop))
    var_out = float(np.sum(pts.cov_weights * (prop - mean_out) ** 2))
    cross = _cross_covariance(pts, prop, mean)
    slope = cross / var
    intercept = mean_out - slope * mean
    residual = max(var_out - slope**2 * var, 0.0)
    return slope, intercept, residual


def _right_window(
    times: np.ndarray,
    ref_means: np.ndarray,
    target: GaussianEstimate,
    index: int,
    kind: ModelKind,
) -> Window:
    """Right-endpoint window: anchors at the two preceding reference points."""
    va = float(ref_means[index - 2])
    vb = float(ref_means[index - 1])
    if kind is ModelKind.BIRTH_DEATH:
        va = max(va, POSITIVE_VALUE_FLOOR)
        vb = max(vb, POSITIVE_VALUE_FLOOR)
    return Window(
        anchor_a=(float(times[index - 2]), va),
        anchor_b=(float(times[index - 1]), vb),
        target=(float(times[index]), target),
    )


@dataclass(frozen=True)
class FlowStepDynamics:
    """Per-step transition maps fitted from right-endpoint windows.

    The step into timepoint ``t`` extrapolates the flow whose parameters are
    fitted to the reference trajectory at ``t-2`` and ``t-1`` (for the
    constant-regulation family the free parameter is the posterior argmax
    against the data at ``t``). The step into the second timepoint, where no
    window exists yet, is the identity.
    """

    kind: ModelKind
    z_means: np.ndarray
    z_vars: np.ndarray
    scan: ScanGrid = field(default_factory=ScanGrid)

    def step_map(self, times: np.ndarray, ref_means: np.ndarray, index: int):
        if index < 2:
            return lambda x: x
        delta = float(times[index] - times[index - 1])
        if self.kind is ModelKind.BIRTH_DEATH:
            na = max(float(ref_means[index - 2]), POSITIVE_VALUE_FLOOR)
            nb = max(float(ref_means[index - 1]), POSITIVE_VALUE_FLOOR)
            growth = math.log(nb / na) / float(times[index - 1] - times[index - 2])
            factor = math.exp(growth * delta)
            return lambda x, _f=factor: _f * x
        target = GaussianEstimate(float(self.z_means[index]), float(self.z_vars[index]))
        window = _right_window(times, ref_means, target, index, self.kind)
        try:
            posterior = fit_spline_posterior(
                window, self.kind, FitPosition.RIGHT_ENDPOINT, self.scan
            )
        except DegeneratePosteriorError:
            posterior = uniform_posterior(
                window, self.kind, FitPosition.RIGHT_ENDPOINT, self.scan
            )
        best = int(np.argmax(posterior.weights))
        k_deg = float(posterior.k1_grid[best])
        steady = float(posterior.k2_values[best]) / k_deg
        decay = math.exp(-k_deg * delta)
        return lambda x, _s=steady, _d=decay: _s + (x - _s) * _d


@dataclass(frozen=True)
class AffineStepDynamics:
    """Fixed affine transition ``x -> slope * x + intercept`` for every step."""

    slope: float
    intercept: float = 0.0

    def step_map(self, times, ref_means, index):
        return lambda x: self.slope * x + self.intercept


def run_adaptive_kf(
    data: TimeSeriesData,
    kind: ModelKind = ModelKind.BIRTH_DEATH,
    q: float = 1.0,
    scan: ScanGrid = ScanGrid(),
) -> Trajectory:
    """Forward-only adaptive non-linear Kalman filter with constant ``q``.

    The first two timepoints take the data summaries directly. From the
    third on, a right-endpoint window of the data trajectory supplies the
    flow parameters and the model variance; the model mean propagates the
    previous filter estimate through that flow. The gain
    ``w = (V(M) + q) / (V(M) + q + V(Z))`` then weights data against model,
    and the data variance is recomputed from the replicates at every
    timepoint.
    """
    grid = data.grid
    z_means, z_vars = data.summaries()
    dynamics = FlowStepDynamics(kind, z_means, z_vars, scan)
    n = len(grid)
    f_means = np.empty(n)
    f_vars = np.empty(n)
    f_means[:2] = z_means[:2]
    f_vars[:2] = z_vars[:2]
    for t in range(2, n):
        target = GaussianEstimate(float(z_means[t]), float(z_vars[t]))
        window = _right_window(grid.times, z_means, target, t, kind)
        try:
            try:
                posterior = fit_spline_posterior(
                    window, kind, FitPosition.RIGHT_ENDPOINT, scan
                )
            except DegeneratePosteriorError:
                posterior = uniform_posterior(
                    window, kind, FitPosition.RIGHT_ENDPOINT, scan
                )
        except DegeneratePosteriorError as exc:
            raise DegeneratePosteriorError(
                f"model fit failed at timepoint {t} (t={grid.times[t]}): {exc}"
            ) from exc
        flow = dynamics.step_map(grid.times, z_means, t)
        e_model = float(flow(f_means[t - 1]))
        v_model = posterior_moments(posterior).estimate.variance
        b = v_model + q
        w = b / (b + z_vars[t])
        f_means[t] = w * z_means[t] + (1.0 - w) * e_model
        f_vars[t] = max(w**2 * z_vars[t] + (1.0 - w) ** 2 * b, VARIANCE_FLOOR)
    return Trajectory(grid, f_means, f_vars)


@dataclass(frozen=True, eq=False)
class _ForwardPass:
    means: np.ndarray
    variances: np.ndarray
    pred_means: np.ndarray
    pred_variances: np.ndarray
    maps: tuple


def _ukf_forward(
    times: np.ndarray,
    z_means: np.ndarray,
    z_vars: np.ndarray,
    dynamics,
    q: float,
    ut: UtParams,
) -> _ForwardPass:
    n = len(times)
    m = np.empty(n)
    p = np.empty(n)
    m_pred = np.empty(n)
    p_pred = np.empty(n)
    maps: list = [None] * n
    m[0] = z_means[0]
    p[0] = max(z_vars[0], VARIANCE_FLOOR)
    m_pred[0] = m[0]
    p_pred[0] = p[0]
    for t in range(1, n):
        f = dynamics.step_map(times, m, t)
        maps[t] = f
        predicted = unscented_transform(GaussianEstimate(m[t - 1], p[t - 1]), f, ut)
        m_pred[t] = predicted.mean
        p_pred[t] = predicted.variance + q
        gain = p_pred[t] / (p_pred[t] + z_vars[t])
        m[t] = m_pred[t] + gain * (z_means[t] - m_pred[t])
        p[t] = max((1.0 - gain) * p_pred[t], VARIANCE_FLOOR)
    return _ForwardPass(m, p, m_pred, p_pred, tuple(maps))


def _urts_backward(
    times: np.ndarray, forward: _ForwardPass, ut: UtParams
) -> tuple[np.ndarray, np.ndarray]:
    n = len(times)
    ms = forward.means.copy()
    ps = forward.variances.copy()
    for t in range(n - 2, -1, -1):
        pts = merwe_sigma_points(forward.means[t], forward.variances[t], ut)
        prop = _propagate(pts.points, forward.maps[t + 1])
        cross = _cross_covariance(pts, prop, forward.means[t])
        gain = cross / forward.pred_variances[t + 1]
        ms[t] = forward.means[t] + gain * (ms[t + 1] - forward.pred_means[t + 1])
        ps[t] = max(
            forward.variances[t]
            + gain**2 * (ps[t + 1] - forward.pred_variances[t + 1]),
            VARIANCE_FLOOR,
        )
    return ms, ps


def run_ukf(
    data: TimeSeriesData,
    kind: ModelKind = ModelKind.BIRTH_DEATH,
    q: float = 1.0,
    ut_params: UtParams = UT_DEFAULT,
    scan: ScanGrid = ScanGrid(),
    dynamics=None,
) -> Trajectory:
    """Unscented Kalman filter: sigma-point predict, Gaussian data update.

    ``dynamics`` may inject custom per-step transition maps (an object with
    ``step_map(times, ref_means, index)``); by default the ODE flows are
    window-fitted on the filter's own past means.
    """
    grid = data.grid
    z_means, z_vars = data.summaries()
    if dynamics is None:
        dynamics = FlowStepDynamics(kind, z_means, z_vars, scan)
    forward = _ukf_forward(grid.times, z_means, z_vars, dynamics, q, ut_params)
    return Trajectory(grid, forward.means, forward.variances)


def run_urts(
    data: TimeSeriesData,
    kind: ModelKind = ModelKind.BIRTH_DEATH,
    q: float = 1.0,
    ut_params: UtParams = UT_DEFAULT,
    scan: ScanGrid = ScanGrid(),
    dynamics=None,
) -> Trajectory:
    """Unscented RTS smoother: UKF forward pass, sigma-point backward pass."""
    grid = data.grid
    z_means, z_vars = data.summaries()
    if dynamics is None:
        dynamics = FlowStepDynamics(kind, z_means, z_vars, scan)
    forward = _ukf_forward(grid.times, z_means, z_vars, dynamics, q, ut_params)
    ms, ps = _urts_backward(grid.times, forward, ut_params)
    return Trajectory(grid, ms, ps)


def _linear_rts_pass(
    times: np.ndarray,
    z_means: np.ndarray,
    z_vars: np.ndarray,
    slopes: np.ndarray,
    intercepts: np.ndarray,
    noises: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Forward KF and backward RTS with per-step affine dynamics."""
    n = len(times)
    m = np.empty(n)
    p = np.empty(n)
    m_pred = np.empty(n)
    p_pred = np.empty(n)
    m[0] = z_means[0]
    p[0] = max(z_vars[0], VARIANCE_FLOOR)
    for t in range(1, n):
        m_pred[t] = slopes[t] * m[t - 1] + intercepts[t]
        p_pred[t] = slopes[t] ** 2 * p[t - 1] + noises[t]
        gain = p_pred[t] / (p_pred[t] + z_vars[t])
        m[t] = m_pred[t] + gain * (z_means[t] - m_pred[t])
        p[t] = max((1.0 - gain) * p_pred[t], VARIANCE_FLOOR)
    ms = m.copy()
    ps = p.copy()
    for t in range(n - 2, -1, -1):
        gain = slopes[t + 1] * p[t] / p_pred[t + 1]
        ms[t] = m[t] + gain * (ms[t + 1] - m_pred[t + 1])
        ps[t] = max(p[t] + gain**2 * (ps[t + 1] - p_pred[t + 1]), VARIANCE_FLOOR)
    return ms, ps


def run_ipls(
    data: TimeSeriesData,
    kind: ModelKind = ModelKind.BIRTH_DEATH,
    q: float = 1.0,
    iterations: int = 1,
    ut_params: UtParams = UT_DEFAULT,
    scan: ScanGrid = ScanGrid(),
    dynamics=None,
) -> Trajectory:
    """Iterated posterior linearization smoother.

    The first iteration is the unscented RTS smoother. Every further
    iteration statistically linearizes the step dynamics around the current
    smoothed posterior (adding the linearization residual to ``q``) and
    re-runs a linear RTS pass. When no dynamics are injected, the flows are
    refit from the current smoothed means, so the model too feeds back on
    the smoother's own path.
    """
    if iterations < 1:
        raise InvalidParameterError("iterations must be at least 1")
    grid = data.grid
    z_means, z_vars = data.summaries()
    if dynamics is None:
        dynamics = FlowStepDynamics(kind, z_means, z_vars, scan)
    forward = _ukf_forward(grid.times, z_means, z_vars, dynamics, q, ut_params)
    ms, ps = _urts_backward(grid.times, forward, ut_params)

    n = len(grid)
    for _ in range(1, iterations):
        slopes = np.zeros(n)
        intercepts = np.zeros(n)
        noises = np.zeros(n)
        for t in range(1, n):
            f = dynamics.step_map(grid.times, ms, t)
            slope, intercept, residual = statistical_linearization(
                float(ms[t - 1]), float(ps[t - 1]), f, ut_params
            )
            slopes[t] = slope
            intercepts[t] = intercept
            noises[t] = residual + q
        ms, ps = _linear_rts_pass(grid.times, z_means, z_vars, slopes, intercepts, noises)
    return Trajectory(grid, ms, ps)


def run_baseline(
    config: BaselineConfig,
    data: TimeSeriesData,
    kind: ModelKind = ModelKind.BIRTH_DEATH,
    scan: ScanGrid = ScanGrid(),
) -> Trajectory:
    """Dispatch a configured baseline run."""
    if config.algorithm is BaselineAlgorithm.ADAPTIVE_KF:
        return run_adaptive_kf(data, kind, config.q, scan)
    if config.algorithm is BaselineAlgorithm.UNSCENTED_KF:
        return run_ukf(data, kind, config.q, config.ut_params, scan)
    if config.algorithm is BaselineAlgorithm.UNSCENTED_RTS:
        return run_urts(data, kind, config.q, config.ut_params, scan)
    return run_ipls(data, kind, config.q, config.iterations, config.ut_params, scan)
