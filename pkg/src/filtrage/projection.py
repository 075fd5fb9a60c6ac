"""Binned Monte Carlo estimates of optional and predictable projections.

At every grid point the paths are partitioned by their observable features
and the target is averaged within each cell.  Discrete features get one bin
per distinct value; continuous ones get equal-mass (quantile) bins.  Several
features are combined by taking the product of their per-feature bins.

The bin mean is a two-pass corrected sum over the sorted bin, so the
count-weighted grand mean of the fit reproduces the raw sample mean to
rounding (the tower identity).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import FiltrageError, PathBundle

log = logging.getLogger(__name__)

BIN_KINDS = ("auto", "exact", "quantile")
UNRELIABLE_POLICIES = ("nearest", "drop")


class ProjectionError(FiltrageError, ValueError):
    """Projection inputs are empty, non-finite, or too thin to estimate."""


@dataclass(frozen=True)
class Binning:
    kind: str = "auto"
    n_bins: int = 64
    min_count: int = 30
    # auto: a feature with at most this many distinct values is binned exactly
    max_exact: int = 256
    # exact bins compare values rounded to this many decimals
    decimals: int = 9

    def __post_init__(self):
        if self.kind not in BIN_KINDS:
            raise ValueError(f"unknown binning kind {self.kind!r}; choose from {BIN_KINDS}")
        if self.n_bins < 1 or self.min_count < 1 or self.max_exact < 1:
            raise ValueError("bin counts must be positive")


@dataclass(frozen=True)
class FeatureBins:
    """Bins of one feature at one grid point."""

    exact: bool
    # exact: sorted distinct (rounded) values; quantile: bin edges
    points: np.ndarray

    @property
    def n(self) -> int:
        return len(self.points) if self.exact else len(self.points) - 1

    def label(self, x: np.ndarray, decimals: int) -> np.ndarray:
        if self.exact:
            x = np.round(x, decimals)
            pos = np.clip(np.searchsorted(self.points, x), 0, len(self.points) - 1)
            lower = np.clip(pos - 1, 0, len(self.points) - 1)
            closer = np.abs(self.points[lower] - x) < np.abs(self.points[pos] - x)
            return np.where(closer, lower, pos)
        inner = self.points[1:-1]
        return np.searchsorted(inner, x, side="right")

    @classmethod
    def fit(cls, x: np.ndarray, binning: Binning) -> "FeatureBins":
        if binning.kind != "quantile":
            vals = np.unique(np.round(x, binning.decimals))
            if binning.kind == "exact" or len(vals) <= binning.max_exact:
                return cls(True, vals)
        edges = np.unique(np.quantile(x, np.linspace(0.0, 1.0, binning.n_bins + 1)))
        if len(edges) < 2:
            return cls(True, np.unique(np.round(x, binning.decimals)))
        return cls(False, edges)


@dataclass(frozen=True)
class SliceFit:
    """Fitted bin means at one grid point."""

    features: tuple[FeatureBins, ...]
    # combined bin codes present in the fit, sorted; one entry per bin below
    codes: np.ndarray
    coords: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    reliable: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.codes)

    def grand_mean(self) -> float:
        return float(np.dot(self.counts, self.values) / self.counts.sum())

    def unreliable_mass(self) -> int:
        return int(self.counts[~self.reliable].sum())


def _radix(features: tuple[FeatureBins, ...]) -> np.ndarray:
    sizes = np.array([f.n for f in features], dtype=np.int64)
    return np.r_[1, np.cumprod(sizes[:-1])].astype(np.int64)


def _labels(features: tuple[FeatureBins, ...], x: np.ndarray, decimals: int) -> np.ndarray:
    """Per-feature labels ``(n, d)``."""
    return np.stack([f.label(x[:, j], decimals) for j, f in enumerate(features)], axis=1)


def _fit_slice(y: np.ndarray, x: np.ndarray, binning: Binning) -> SliceFit:
    feats = tuple(FeatureBins.fit(x[:, j], binning) for j in range(x.shape[1]))
    lab = _labels(feats, x, binning.decimals)
    code = lab @ _radix(feats)
    order = np.argsort(code, kind="stable")
    cs, ys = code[order], y[order]
    starts = np.r_[0, np.nonzero(np.diff(cs))[0] + 1]
    counts = np.diff(np.r_[starts, len(cs)])
    codes = cs[starts]
    mean = np.add.reduceat(ys, starts) / counts
    resid = ys - np.repeat(mean, counts)
    mean = mean + np.add.reduceat(resid, starts) / counts
    resid = ys - np.repeat(mean, counts)
    ss = np.add.reduceat(resid * resid, starts)
    with np.errstate(invalid="ignore", divide="ignore"):
        se = np.where(counts > 1, np.sqrt(ss / np.maximum(counts - 1, 1) / counts), 0.0)
    lo = np.minimum.reduceat(ys, starts)
    hi = np.maximum.reduceat(ys, starts)
    flat = lo == hi
    mean = np.where(flat, lo, mean)
    se = np.where(flat, 0.0, se)
    coords = lab[order][starts]
    reliable = counts >= binning.min_count
    return SliceFit(feats, codes, coords, mean, se, counts, reliable)


@dataclass(frozen=True)
class ProjectionEstimate:
    """Fitted ``(grid index, feature bin) -> conditional mean`` map."""

    kind: str
    binning: Binning
    slices: tuple[SliceFit, ...]
    lag: int = 0
    feature_names: tuple[str, ...] = field(default=())

    @property
    def size(self) -> int:
        return len(self.slices)

    def grand_mean(self, k: int) -> float:
        return self.slices[k].grand_mean()

    def unreliable_fraction(self) -> float:
        """Share of (path, time) samples that fell in unreliable bins."""
        bad = sum(s.unreliable_mass() for s in self.slices)
        total = sum(int(s.counts.sum()) for s in self.slices)
        return bad / total

    def values_at(self, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        s = self.slices[k]
        return s.values, s.stderr, s.counts, s.reliable

    def _lookup(self, k: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Bin index into slice ``k`` for features ``x`` and whether it was reliable."""
        s = self.slices[k]
        lab = _labels(s.features, x, self.binning.decimals)
        code = lab @ _radix(s.features)
        pos = np.clip(np.searchsorted(s.codes, code), 0, s.n_bins - 1)
        found = s.codes[pos] == code
        ok = found & s.reliable[pos]
        if not ok.all():
            good = np.nonzero(s.reliable)[0]
            miss = np.nonzero(~ok)[0]
            dist = np.abs(lab[miss][:, None, :] - s.coords[good][None, :, :]).sum(axis=2)
            pos[miss] = good[np.argmin(dist, axis=1)]
        return pos, ok, lab

    def bin_index(self, k: int, x) -> np.ndarray:
        """Bin positions in slice ``k`` (after the nearest-reliable remap) for feature rows ``x``."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return self._lookup(k, x)[0]

    def describe(self, k: int, x) -> tuple[float, float, int, bool]:
        """Value, standard error, count and reliability of the bin holding one feature row."""
        row = np.atleast_2d(np.asarray(x, dtype=float))
        pos, ok, _ = self._lookup(k, row)
        s = self.slices[k]
        j = int(pos[0])
        return float(s.values[j]), float(s.stderr[j]), int(s.counts[j]), bool(ok[0])

    def grand_stderr(self, k: int, weight=None) -> float:
        """Standard error of the count-weighted mean of ``weight(value)`` over bins.

        Bin estimates are independent given the bins, so the errors add in
        quadrature; ``weight`` defaults to the identity and is applied by
        the delta method through its numerical derivative.
        """
        s = self.slices[k]
        w = s.counts / s.counts.sum()
        if weight is None:
            grad = np.ones_like(s.values)
        else:
            eps = 1e-6
            grad = (weight(s.values + eps) - weight(s.values - eps)) / (2 * eps)
        return float(np.sqrt(np.sum((w * grad * s.stderr) ** 2)))

    def evaluate(self, k: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Fitted values for feature rows ``x`` (``(n, d)``) at grid index ``k``.

        Returns the values and a mask of rows whose own bin was reliable;
        the others were mapped to the nearest reliable bin.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        pos, ok, _ = self._lookup(k, x)
        return self.slices[k].values[pos], ok

    def evaluate_paths(self, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate along paths; ``features`` is ``(n, size, d)`` (unshifted)."""
        features = _as_features(features)
        n, size, _ = features.shape
        out = np.empty((n, size))
        ok = np.empty((n, size), dtype=bool)
        for k in range(size):
            src = max(k - self.lag, 0)
            out[:, k], ok[:, k] = self.evaluate(k, features[:, src, :])
        return out, ok


def _as_features(features) -> np.ndarray:
    f = np.asarray(features, dtype=float)
    if f.ndim == 2:
        f = f[:, :, None]
    if f.ndim != 3 or f.shape[2] == 0 or f.shape[0] == 0:
        raise ProjectionError(f"empty or malformed feature set with shape {f.shape}")
    return f


def _fit(targets, features, binning: Binning, lag: int, kind: str, names=()) -> ProjectionEstimate:
    y = np.asarray(targets, dtype=float)
    x = _as_features(features)
    if y.ndim != 2 or y.shape != x.shape[:2]:
        raise ProjectionError(f"targets {y.shape} and features {x.shape[:2]} disagree")
    if not np.all(np.isfinite(y)):
        raise ProjectionError("targets must be finite (finite-sample-mean precondition)")
    if not np.all(np.isfinite(x)):
        raise ProjectionError("features must be finite")
    slices = []
    for k in range(y.shape[1]):
        s = _fit_slice(y[:, k], x[:, max(k - lag, 0), :], binning)
        if not s.reliable.any():
            raise ProjectionError(
                f"every bin at grid index {k} has fewer than {binning.min_count} paths; "
                "increase n_paths or coarsen the binning"
            )
        slices.append(s)
    return ProjectionEstimate(kind, binning, tuple(slices), lag, tuple(names))


def fit_optional_projection(targets, features, binning: Binning | None = None, names=()) -> ProjectionEstimate:
    """Estimate ``E[target_t | features_t]`` at every grid point."""
    return _fit(targets, features, binning or Binning(), 0, "optional", names)


def fit_predictable_projection(targets, features, binning: Binning | None = None, names=()) -> ProjectionEstimate:
    """As :func:`fit_optional_projection` with features taken one grid step earlier."""
    return _fit(targets, features, binning or Binning(), 1, "predictable", names)


def project_path(bundle: PathBundle, estimate: ProjectionEstimate, series: str, features,
                 policy: str = "nearest", name: str | None = None) -> PathBundle:
    """Add the fitted projection evaluated along each path as a new series.

    ``policy`` decides what happens to paths that hit an unreliable bin:
    ``nearest`` uses the nearest reliable bin, ``drop`` removes the path.
    """
    if policy not in UNRELIABLE_POLICIES:
        raise ValueError(f"unknown policy {policy!r}; choose from {UNRELIABLE_POLICIES}")
    if series not in bundle.series:
        raise KeyError(f"unknown series {series!r}")
    if estimate.size != bundle.grid.size:
        raise ProjectionError("estimate does not cover the bundle's grid")
    values, ok = estimate.evaluate_paths(features)
    bad_paths = ~ok.all(axis=1)
    name = name or f"proj[{series}]"
    out = bundle.with_series(name, values)
    if bad_paths.any():
        if policy == "nearest":
            log.info("%s: %d of %d paths used a nearest reliable bin", name, int(bad_paths.sum()), bundle.n_paths)
        else:
            log.info("%s: dropping %d of %d paths that hit unreliable bins", name, int(bad_paths.sum()), bundle.n_paths)
            out = out.subset(~bad_paths)
    return out


def median_stderr(estimate: ProjectionEstimate, k: int) -> float:
    s = estimate.slices[k]
    return float(np.median(s.stderr[s.reliable]))
