"""Two default times with a joint density; the observer sees only the first.

``X = 1{T1 <= t}``.  In the filtration of both default indicators ``X`` has
intensity ``kappa_s`` with two regimes (both alive, or only the first alive).
Its projection on the filtration of ``X`` alone is the marginal hazard of
``T1`` on ``{T1 > s}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from ..core import (
    CharacteristicReport,
    CompensatorMeasure,
    DifferentialCharacteristics,
    JumpEvents,
    PathBundle,
    TimeGrid,
    left_integral,
)
from ..streams import uniforms
from .base import ModelFamily

FAMILIES = ("exp", "uniform", "fgm")


@dataclass(frozen=True)
class TwoDefaultsModel(ModelFamily):
    """Joint law of ``(T1, T2)``: independent exponentials, uniform on the
    unit square, or exponential marginals glued by an FGM copula."""

    kind: str = "exp"
    lam1: float = 1.0
    lam2: float = 2.0
    theta: float = 0.0

    family = "two_defaults"
    target = "X"
    feature_names = ("X",)

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown two-defaults family {self.kind!r}; choose from {FAMILIES}")
        if self.kind != "uniform" and (self.lam1 <= 0 or self.lam2 <= 0):
            raise ValueError("exponential rates must be positive")
        if self.kind == "fgm" and not -1 <= self.theta <= 1:
            raise ValueError("FGM parameter must lie in [-1, 1]")

    # -- law ---------------------------------------------------------------

    @property
    def support_end(self) -> float:
        return 1.0 if self.kind == "uniform" else math.inf

    def _marg(self, x, lam):
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            inside = (x >= 0) & (x <= 1)
            return np.where(inside, 1.0, 0.0), np.clip(x, 0.0, 1.0)
        xp = np.maximum(x, 0.0)
        dens = np.where(x >= 0, lam * np.exp(-lam * xp), 0.0)
        return dens, -np.expm1(-lam * xp)

    def density(self, u, v):
        f1, F1 = self._marg(u, self.lam1)
        f2, F2 = self._marg(v, self.lam2)
        out = f1 * f2
        if self.kind == "fgm":
            out = out * (1 + self.theta * (1 - 2 * F1) * (1 - 2 * F2))
        return out

    def marginal_cdf(self, s):
        return self._marg(s, self.lam1)[1]

    def own_hazard(self, s):
        """Hazard ``f1/(1 - F1)`` of ``T1`` in its own filtration."""
        s = np.asarray(s, dtype=float)
        if self.kind == "uniform":
            with np.errstate(divide="ignore"):
                return np.where(s < 1, 1.0 / np.maximum(1 - s, 0.0), np.inf)
        return np.full_like(s, self.lam1)

    def kappa(self, s, t2, alive2):
        """Intensity of ``T1`` given both histories.

        ``alive2`` selects the first regime (``s <= T2``); otherwise the
        second regime with ``T2 < s`` is used.  Caller handles ``T1 >= s``.
        """
        s = np.asarray(s, dtype=float)
        t2 = np.asarray(t2, dtype=float)
        alive2 = np.asarray(alive2, dtype=bool)
        if self.kind == "exp":
            return np.broadcast_to(self.lam1, np.broadcast(s, t2, alive2).shape).astype(float)
        if self.kind == "uniform":
            return np.broadcast_to(self.own_hazard(s), np.broadcast(s, t2, alive2).shape).astype(float)
        th, l1 = self.theta, self.lam1
        S1 = np.exp(-l1 * s)
        F1 = 1 - S1
        F2s = -np.expm1(-self.lam2 * s)
        both = l1 - th * l1 * S1 * F2s / (1 + th * F1 * F2s)
        c = 2 * np.exp(-self.lam2 * np.maximum(t2, 0.0)) - 1
        one = l1 * (1 + th * (2 * S1 - 1) * c) / (1 - th * c * F1)
        return np.where(alive2, both, one)

    # -- quadrature oracles -------------------------------------------------

    def normalisation(self) -> float:
        end = self.support_end
        val, _ = integrate.dblquad(lambda v, u: float(self.density(u, v)), 0, end, 0, end, epsabs=1e-10)
        return val

    def kappa_quadrature(self, s: float, t2: float | None = None) -> float:
        """Direct numerical evaluation of the two-regime intensity formula."""
        end = self.support_end
        if t2 is None or s <= t2:
            num, _ = integrate.quad(lambda v: float(self.density(s, v)), s, end)
            den, _ = integrate.dblquad(lambda v, u: float(self.density(u, v)), s, end, s, end, epsabs=1e-12)
        else:
            num = float(self.density(s, t2))
            den, _ = integrate.quad(lambda u: float(self.density(u, t2)), s, end)
        return num / den

    def projected_kappa_quadrature(self, s: float) -> float:
        """Optional projection of ``kappa`` on ``{T1 > s}`` by quadrature."""
        end = self.support_end
        num, _ = integrate.quad(lambda v: float(self.density(s, v)), 0, end)
        den, _ = integrate.dblquad(lambda v, u: float(self.density(u, v)), s, end, 0, end, epsabs=1e-12)
        return num / den

    # -- simulation ---------------------------------------------------------

    def sample_times(self, seed: int, n_paths: int) -> tuple[np.ndarray, np.ndarray]:
        u = uniforms(seed, n_paths, 2)
        a, w = u[:, 0], u[:, 1]
        if self.kind == "uniform":
            return a.copy(), w.copy()
        t1 = -np.log1p(-a) / self.lam1
        if self.kind == "exp" or self.theta == 0:
            b = w
        else:
            # invert the conditional copula b + th' b (1 - b) = w
            tp = self.theta * (1 - 2 * a)
            b = w.copy()
            nz = np.abs(tp) > 1e-12
            q = 1 + tp[nz]
            b[nz] = (q - np.sqrt(q * q - 4 * tp[nz] * w[nz])) / (2 * tp[nz])
        t2 = -np.log1p(-b) / self.lam2
        return t1, t2

    def simulate(self, grid: TimeGrid, n_paths: int, seed: int) -> PathBundle:
        t1, t2 = self.sample_times(seed, n_paths)
        times = grid.times
        series, jumps = {}, {}
        for name, tau in (("X", t1), ("Y2", t2)):
            series[name] = (tau[:, None] <= times[None, :]).astype(float)
            hit = np.nonzero(tau <= grid.horizon)[0]
            idx = grid.event_index(tau[hit])
            jumps[name] = JumpEvents(hit, idx, tau[hit], np.ones(len(hit)))
        return PathBundle(grid, n_paths, series, jumps, seed, self.family, {"T1": t1, "T2": t2})

    # -- characteristics ----------------------------------------------------

    def kappa_paths(self, bundle: PathBundle) -> np.ndarray:
        """Pathwise ``kappa`` at grid points, zero once ``T1`` has occurred."""
        self.check_bundle(bundle)
        s = bundle.grid.times[None, :]
        t1 = bundle.meta["T1"][:, None]
        t2 = bundle.meta["T2"][:, None]
        alive1 = s <= t1
        with np.errstate(divide="ignore", invalid="ignore"):
            k = self.kappa(s, t2, s <= t2)
        return np.where(alive1, k, 0.0)

    def cell_kappa(self, bundle: PathBundle, nodes: int = 6) -> np.ndarray:
        """``kappa_s 1{s <= T1}`` averaged over each grid cell ``[t_k, t_k+1)``.

        Gauss-Legendre on the pieces of the cell cut at ``T1`` and ``T2``,
        so the left-endpoint sum is the compensator of ``X`` at every grid
        point.  The last column is zero.
        """
        self.check_bundle(bundle)
        grid = bundle.grid
        x, w = np.polynomial.legendre.leggauss(nodes)
        lo = grid.times[None, :-1]
        t1 = bundle.meta["T1"][:, None]
        t2 = bundle.meta["T2"][:, None]
        hi = np.minimum(grid.times[None, 1:], t1)
        cut = np.clip(t2, lo, np.maximum(hi, lo))
        out = np.zeros((bundle.n_paths, grid.size))
        # before T2 (both alive) and after it (only the first alive)
        for a, b, alive2 in ((lo, cut, True), (cut, hi, False)):
            width = np.maximum(b - a, 0.0)
            if not np.any(width > 0):
                continue
            mid, half = 0.5 * (a + b), 0.5 * width
            acc = np.zeros_like(width)
            for xi, wi in zip(x, w):
                with np.errstate(divide="ignore", invalid="ignore"):
                    val = self.kappa(mid + half * xi, t2, alive2)
                acc += wi * np.where(width > 0, val, 0.0)
            out[:, :-1] += acc * half
        out[:, :-1] /= grid.dt
        return out

    def g_characteristics(self, bundle: PathBundle) -> DifferentialCharacteristics:
        """Cell-averaged intensity; see :meth:`cell_kappa`."""
        k = self.cell_kappa(bundle)
        return DifferentialCharacteristics(
            bundle.grid, k, np.zeros((1, bundle.grid.size)), np.ones(k.shape + (1,)), k[:, :, None]
        )

    def f_oracle(self, grid: TimeGrid, bundle: PathBundle | None = None) -> CharacteristicReport:
        """Exact answer in the filtration of ``X``.

        With a bundle the rows are pathwise (hazard on ``{T1 > s}``, left
        sums).  Without one a single row holds the expectation
        ``E B^F_t = P(T1 <= t)``, with the compensator intensity averaged
        over each cell so that it integrates to the same values.
        """
        s = grid.times
        if bundle is None:
            F1 = self.marginal_cdf(s)
            first = F1[None, :]
            inten = np.zeros((1, grid.size))
            inten[0, :-1] = np.diff(F1) / grid.dt
        else:
            self.check_bundle(bundle)
            with np.errstate(divide="ignore"):
                haz = np.nan_to_num(self.own_hazard(s), posinf=0.0)
            alive = s[None, :] < bundle.meta["T1"][:, None]
            inten = np.where(alive, haz[None, :], 0.0)
            first = left_integral(inten, grid.dt)
        nu = CompensatorMeasure(grid, np.ones(inten.shape + (1,)), inten[:, :, None])
        return CharacteristicReport(grid, first, np.zeros((1, grid.size)), nu)

    def f_observables(self, bundle: PathBundle, k: int | None = None) -> np.ndarray:
        self.check_bundle(bundle)
        return self._select(bundle["X"], k)
