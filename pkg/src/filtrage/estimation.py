"""Model-free estimators of cumulative characteristics from simulated paths.

These never look at a model's formulas: they see paths, event times and
jump records only, which makes them an independent check on the engines in
``shrinkage`` and on the closed-form oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import (
    TRUNCATION_BOUND,
    CompensatorMeasure,
    FiltrageError,
    Gaussian,
    JumpEvents,
    TimeGrid,
    standard_error,
)

QV_CONSTANT = 4.0
QV_EXPONENT = 0.49


class EstimationError(FiltrageError, ValueError):
    """Inputs to an estimator are inconsistent."""


# ---------------------------------------------------------------------------
# cumulative hazard


@dataclass(frozen=True)
class HazardEstimate:
    """Nelson-Aalen cumulative hazard on a grid with its Aalen variance."""

    grid: TimeGrid
    cumulative: np.ndarray
    variance: np.ndarray
    events: int

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def at(self, t: float) -> tuple[float, float]:
        k = self.grid.index(t)
        return float(self.cumulative[k]), float(self.stderr[k])

    def slope(self, t: float, window: float = 0.025) -> tuple[float, float]:
        """Central difference of the cumulative hazard over ``[t - w, t + w]``.

        The standard error treats the two endpoints' increments as
        independent, which holds for the Aalen variance.
        """
        g = self.grid
        lo = int(np.clip(round((t - window) / g.dt), 0, g.steps))
        hi = int(np.clip(round((t + window) / g.dt), 0, g.steps))
        if hi <= lo:
            raise EstimationError(f"window {window} is narrower than one grid step")
        width = g.times[hi] - g.times[lo]
        est = (self.cumulative[hi] - self.cumulative[lo]) / width
        var = (self.variance[hi] - self.variance[lo]) / width**2
        return float(est), float(math.sqrt(max(var, 0.0)))


def nelson_aalen(event_times, grid: TimeGrid, at_risk=None) -> HazardEstimate:
    """Cumulative hazard of per-path event times.

    ``event_times`` holds one time per path; values beyond the horizon (or
    ``inf``/``nan``) mean no event was observed.  Without ``at_risk`` a path
    is at risk until its own event and every event contributes
    ``1/#{T >= t_i}`` at its exact time.  With an ``(n, size)`` indicator
    series the risk set of a cell is read at its left end.
    """
    t = np.asarray(event_times, dtype=float)
    if t.ndim != 1:
        raise EstimationError("event_times must be one value per path")
    n = len(t)
    observed = np.isfinite(t) & (t <= grid.horizon + 1e-12)
    if np.any(t[observed] < 0):
        raise EstimationError("event times must be nonnegative")
    times = grid.times
    if at_risk is None:
        ev = np.sort(t[observed])
        # paths still at risk at each event: everyone whose time is not smaller
        risk = n - np.searchsorted(np.sort(np.where(np.isfinite(t), t, np.inf)), ev, side="left")
        if np.any(risk <= 0):
            raise EstimationError("empty risk set at an event")
        inc, var = 1.0 / risk, 1.0 / risk.astype(float) ** 2
        pos = np.searchsorted(ev, times, side="right")
        cum = np.r_[0.0, np.cumsum(inc)][pos]
        v = np.r_[0.0, np.cumsum(var)][pos]
        return HazardEstimate(grid, cum, v, len(ev))
    risk_paths = np.asarray(at_risk, dtype=float)
    if risk_paths.shape != (n, grid.size):
        raise EstimationError(f"at_risk has shape {risk_paths.shape}, expected {(n, grid.size)}")
    d = np.bincount(grid.event_index(t[observed]), minlength=grid.size).astype(float)
    y = risk_paths.sum(axis=0)
    y_left = np.r_[0.0, y[:-1]]
    if np.any((d > 0) & (y_left <= 0)):
        raise EstimationError("empty risk set at an event")
    with np.errstate(divide="ignore", invalid="ignore"):
        inc = np.where(d > 0, d / y_left, 0.0)
        var = np.where(d > 0, d / y_left**2, 0.0)
    return HazardEstimate(grid, np.cumsum(inc), np.cumsum(var), int(d.sum()))


# ---------------------------------------------------------------------------
# quadratic variation


def qv_threshold(dt: float, c: float = QV_CONSTANT, exponent: float = QV_EXPONENT) -> float:
    return c * dt**exponent


def realized_qv(series, grid: TimeGrid, c: float = QV_CONSTANT, exponent: float = QV_EXPONENT) -> np.ndarray:
    """Cumulative sum of squared increments no larger than ``c dt^exponent``."""
    x = np.atleast_2d(np.asarray(series, dtype=float))
    if x.shape[1] != grid.size:
        raise EstimationError(f"series has {x.shape[1]} points, grid has {grid.size}")
    dx = np.diff(x, axis=1)
    keep = np.abs(dx) <= qv_threshold(grid.dt, c, exponent)
    out = np.zeros_like(x)
    out[:, 1:] = np.cumsum(np.where(keep, dx * dx, 0.0), axis=1)
    return out


def detect_jumps(series, grid: TimeGrid, c: float = QV_CONSTANT, exponent: float = QV_EXPONENT,
                 fixed_indices=None, fixed_only: bool = False, detrend: bool = False) -> JumpEvents:
    """Grid increments treated as jumps.

    An increment is a jump when it exceeds the QV threshold or, if given,
    when it ends at one of ``fixed_indices`` and is nonzero.  With
    ``fixed_only`` the threshold rule is switched off.  ``detrend`` removes
    from each mark the cross-path mean of the jump-free increments of the
    same cell, i.e. the drift accrued over the step.
    """
    x = np.atleast_2d(np.asarray(series, dtype=float))
    dx = np.diff(x, axis=1)
    hit = np.zeros(dx.shape, dtype=bool)
    if not fixed_only:
        hit |= np.abs(dx) > qv_threshold(grid.dt, c, exponent)
    if fixed_indices is not None:
        cols = np.asarray(fixed_indices, dtype=np.int64) - 1
        hit[:, cols] |= dx[:, cols] != 0
    p, j = np.nonzero(hit)
    marks = dx[p, j]
    if detrend:
        quiet = np.where(hit, 0.0, dx).sum(axis=0)
        n_quiet = (~hit).sum(axis=0)
        drift = np.divide(quiet, n_quiet, out=np.zeros_like(quiet), where=n_quiet > 0)
        marks = marks - drift[j]
    return JumpEvents(p, j + 1, grid.times[j + 1], marks)


# ---------------------------------------------------------------------------
# drift


@dataclass(frozen=True)
class DriftEstimate:
    """Cross-path mean of the cutoff process ``X - X_0 - sum (dX - chi(dX))``.

    ``raw`` is the mean of ``X - X_0`` and ``big`` the mean cumulative sum
    of the jump parts beyond the truncation bound; ``mean = raw - big``.
    """

    grid: TimeGrid
    mean: np.ndarray
    stderr: np.ndarray
    raw: np.ndarray
    big: np.ndarray
    n_paths: int

    def slope(self) -> tuple[float, float]:
        """Average slope over the horizon and its standard error."""
        T = self.grid.horizon
        return float(self.mean[-1] / T), float(self.stderr[-1] / T)


def big_jump_paths(jumps: JumpEvents, n_paths: int, size: int) -> np.ndarray:
    """Per-path cumulative sum of the jump parts beyond the truncation bound."""
    m = jumps.mark
    return np.cumsum(jumps.cell_sums(n_paths, size, np.where(np.abs(m) > TRUNCATION_BOUND, m, 0.0)), axis=1)


def drift_estimate(series, jumps: JumpEvents, grid: TimeGrid, se_basis=None) -> DriftEstimate:
    """Estimate the first characteristic of a series from its increments.

    ``se_basis`` optionally supplies ``(n, size)`` samples with the same
    mean whose spread gives the standard error (e.g. raw targets behind a
    projected path).
    """
    x = np.atleast_2d(np.asarray(series, dtype=float))
    n = x.shape[0]
    if x.shape[1] != grid.size:
        raise EstimationError(f"series has {x.shape[1]} points, grid has {grid.size}")
    big_paths = big_jump_paths(jumps, n, grid.size)
    moved = x - x[:, :1]
    raw = moved.mean(axis=0)
    big = big_paths.mean(axis=0)
    basis = moved - big_paths if se_basis is None else np.asarray(se_basis, dtype=float)
    return DriftEstimate(grid, raw - big, standard_error(basis), raw, big, n)


# ---------------------------------------------------------------------------
# jump marks


@dataclass(frozen=True)
class MarkHistogram:
    """Empirical mark distribution per time window and at fixed grid indices."""

    edges: np.ndarray
    windows: np.ndarray
    counts: np.ndarray
    fixed: dict[int, np.ndarray] = field(default_factory=dict)
    total: int = 0

    def is_empty(self) -> bool:
        return self.total == 0

    def ks_normal(self, k: int, mean: float = 0.0, variance: float = 1.0, level: float = 0.01):
        """KS test of the marks at fixed index ``k`` against a Gaussian.

        Returns ``(statistic, critical value at level, p-value)``.
        """
        x = self.fixed[k]
        res = stats.kstest(x, "norm", args=(mean, math.sqrt(variance)))
        crit = float(stats.kstwo.isf(level, len(x)))
        return float(res.statistic), crit, float(res.pvalue)


def jump_mark_histogram(jumps: JumpEvents, grid: TimeGrid, n_windows: int = 4, bins: int = 40,
                        fixed_indices=None) -> MarkHistogram:
    windows = np.linspace(0.0, grid.horizon, n_windows + 1)
    fixed = {}
    if fixed_indices is not None:
        for k in fixed_indices:
            fixed[int(k)] = np.sort(jumps.mark[jumps.index == k])
    if len(jumps) == 0:
        return MarkHistogram(np.zeros(0), windows, np.zeros((n_windows, 0), dtype=np.int64), fixed, 0)
    lo, hi = float(jumps.mark.min()), float(jumps.mark.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    w = np.clip(np.searchsorted(windows, jumps.time, side="left") - 1, 0, n_windows - 1)
    counts = np.stack([np.histogram(jumps.mark[w == i], edges)[0] for i in range(n_windows)])
    return MarkHistogram(edges, windows, counts, fixed, len(jumps))


@dataclass(frozen=True)
class AtomFit:
    index: int
    gaussian: Gaussian
    mean_se: float
    variance_se: float
    count: int


def fit_atomic_compensator(hist: MarkHistogram, grid: TimeGrid, n_paths: int) -> tuple[CompensatorMeasure, list[AtomFit]]:
    """Gaussian descriptor of the marks at every fixed index.

    Paths without a recorded jump at the index count as a zero mark, so the
    fitted law describes ``X_t - X_{t-}`` itself.
    """
    atoms, fits = [], []
    for k, marks in sorted(hist.fixed.items()):
        x = np.r_[marks, np.zeros(n_paths - len(marks))]
        mean, var = float(x.mean()), float(x.var(ddof=1))
        g = Gaussian(mean, var)
        atoms.append((k, g))
        fits.append(AtomFit(k, g, math.sqrt(var / n_paths), var * math.sqrt(2.0 / (n_paths - 1)), n_paths))
    z = np.zeros((1, grid.size, 0))
    return CompensatorMeasure(grid, z, z, tuple(atoms)), fits
