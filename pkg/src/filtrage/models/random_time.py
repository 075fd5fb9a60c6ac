"""Default indicator of a random time seen from a Brownian filtration.

Two laws for ``tau`` are supported.  ``independent``: ``tau`` is exponential
and independent of ``W``, so its conditional density never moves.
``gaussian``: ``tau = exp(int_0^inf f dW)`` with ``f`` piecewise constant;
given ``F_t`` the exponent is Gaussian with mean ``I_t = int_0^t f dW`` and
variance ``v_t = int_t^inf f^2``, so the conditional density ``alpha_t(u)``
is lognormal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from ..core import (
    CharacteristicReport,
    CompensatorMeasure,
    DifferentialCharacteristics,
    JumpEvents,
    PathBundle,
    TimeGrid,
)
from ..streams import draw_rows
from .base import ClosedFormMissing, ModelFamily

KINDS = ("independent", "gaussian")


def _trapezoid(density: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros_like(density)
    out[:, 1:] = np.cumsum(0.5 * (density[:, 1:] + density[:, :-1]), axis=1) * dt
    return out


@dataclass(frozen=True)
class RandomTimeModel(ModelFamily):
    kind: str = "independent"
    rate: float = 1.0
    # f = values[j] on [breaks[j], breaks[j+1]), zero after the last break
    breaks: tuple[float, ...] = (0.0, 2.0)
    values: tuple[float, ...] = (1.0,)

    family = "random_time"
    target = "X"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown random-time kind {self.kind!r}; choose from {KINDS}")
        if self.kind == "independent" and self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.kind == "gaussian":
            b = np.asarray(self.breaks, dtype=float)
            if len(b) != len(self.values) + 1 or b[0] != 0 or np.any(np.diff(b) <= 0):
                raise ValueError("breaks must start at 0, increase, and be one longer than values")
            if not math.isfinite(b[-1]):
                raise ValueError("f must vanish after a finite time (square integrability)")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return ("W",) if self.kind == "independent" else ("I",)

    # -- Gaussian-threshold law ---------------------------------------------

    def f_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        j = np.searchsorted(np.asarray(self.breaks), t, side="right") - 1
        vals = np.r_[self.values, 0.0]
        j = np.where((j >= 0) & (j < len(self.values)), j, len(self.values))
        return vals[j]

    def remaining_variance(self, t) -> np.ndarray:
        """``v_t = int_t^inf f^2``."""
        t = np.asarray(t, dtype=float)
        b = np.asarray(self.breaks)
        v = np.asarray(self.values) ** 2
        lo = np.clip(t[..., None], b[:-1], b[1:])
        return ((b[1:] - lo) * v).sum(axis=-1)

    def jacod_density(self, t: float, u, i_t):
        """``alpha_t(u)``: conditional density of ``tau`` given ``F_t``."""
        u = np.asarray(u, dtype=float)
        if self.kind == "independent":
            return np.where(u >= 0, self.rate * np.exp(-self.rate * np.maximum(u, 0.0)), 0.0)
        sd = math.sqrt(float(self.remaining_variance(t)))
        with np.errstate(divide="ignore"):
            lu = np.log(np.where(u > 0, u, 1.0))
        dens = stats.norm.pdf((lu - i_t) / sd) / (np.where(u > 0, u, 1.0) * sd)
        return np.where(u > 0, dens, 0.0)

    def density_mass(self, t: float, i_t: float) -> float:
        """``int_0^inf alpha_t(u) du``; should be one."""
        if self.kind == "gaussian":
            sd = math.sqrt(float(self.remaining_variance(t)))
            # integrate in log space, where the density is a plain Gaussian
            val, _ = integrate.quad(lambda y: float(self.jacod_density(t, math.exp(y), i_t)) * math.exp(y),
                                    i_t - 12 * sd, i_t + 12 * sd)
            return val
        val, _ = integrate.quad(lambda u: float(self.jacod_density(t, u, 0.0)), 0, np.inf)
        return val

    def _d(self, t, i_t):
        t = np.asarray(t, dtype=float)
        sd = np.sqrt(self.remaining_variance(t))
        with np.errstate(divide="ignore"):
            return (np.log(np.where(t > 0, t, 1.0)) - i_t) / sd, sd

    def survival(self, t, i_t) -> np.ndarray:
        """Azema supermartingale ``A_t = P(tau > t | F_t)``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "independent":
            return np.exp(-self.rate * t) + 0 * np.asarray(i_t, dtype=float)
        d, _ = self._d(t, i_t)
        return np.where(t > 0, stats.norm.sf(d), 1.0)

    def diagonal_density(self, t, i_t) -> np.ndarray:
        """``alpha_t(t)``: the drift density of the dual projection of ``X``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "independent":
            return self.rate * np.exp(-self.rate * t) + 0 * np.asarray(i_t, dtype=float)
        d, sd = self._d(t, i_t)
        safe_t = np.where(t > 0, t, 1.0)
        return np.where(t > 0, stats.norm.pdf(d) / (safe_t * sd), 0.0)

    def hazard(self, t, i_t) -> np.ndarray:
        """``alpha_t(t) / A_t``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "independent":
            return np.full(np.broadcast(t, i_t).shape, self.rate)
        d, sd = self._d(t, i_t)
        safe_t = np.where(t > 0, t, 1.0)
        log_h = stats.norm.logpdf(d) - stats.norm.logsf(d) - np.log(safe_t * sd)
        return np.where(t > 0, np.exp(log_h), 0.0)

    def martingale_bracket_density(self, t, i_t) -> np.ndarray:
        """``d<m>/dt`` of the martingale part of ``A`` (zero when independent)."""
        if self.kind == "independent":
            return np.zeros(np.broadcast(t, i_t).shape)
        d, sd = self._d(t, i_t)
        t = np.asarray(t, dtype=float)
        return np.where(t > 0, (stats.norm.pdf(d) * self.f_at(t) / sd) ** 2, 0.0)

    # -- simulation ---------------------------------------------------------

    def _check_grid(self, grid: TimeGrid) -> None:
        if self.kind != "gaussian":
            return
        if self.breaks[-1] <= grid.horizon:
            raise ValueError("tau becomes observable once f vanishes; the horizon must end before the last breakpoint")
        for b in self.breaks[1:]:
            if b < grid.horizon:
                k = round(b / grid.dt)
                if abs(k * grid.dt - b) > 1e-9:
                    raise ValueError(f"breakpoint {b} of f must sit on the grid")

    def simulate(self, grid: TimeGrid, n_paths: int, seed: int) -> PathBundle:
        self._check_grid(grid)
        n, T = n_paths, grid.horizon

        def draw(g, width):
            return np.r_[g.standard_normal(grid.steps), g.random(), g.standard_normal()]

        raw = draw_rows(seed, n, 0, draw)
        u, xi = raw[:, grid.steps].copy(), raw[:, grid.steps + 1].copy()
        dW = raw[:, : grid.steps]
        dW *= math.sqrt(grid.dt)
        w = np.zeros((n, grid.size))
        np.cumsum(dW, axis=1, out=w[:, 1:])
        series = {"W": w}
        if self.kind == "independent":
            tau = -np.log1p(-u) / self.rate
        else:
            dW *= self.f_at(grid.times[:-1])[None, :]
            i = np.zeros((n, grid.size))
            np.cumsum(dW, axis=1, out=i[:, 1:])
            series["I"] = i
            tau = np.exp(i[:, -1] + math.sqrt(float(self.remaining_variance(T))) * xi)
        del raw, dW
        hit = np.nonzero(tau <= T)[0]
        ev = JumpEvents(hit, grid.event_index(tau[hit]), tau[hit], np.ones(len(hit)))
        x = (tau[:, None] <= grid.times[None, :]).astype(float)
        series["X"] = x
        series["Xhat"] = x - self._compensator(grid, series, tau)
        return PathBundle(grid, n, series, {"X": ev, "Xhat": ev}, seed, self.family, {"tau": tau})

    def _i_path(self, bundle_or_series) -> np.ndarray:
        s = bundle_or_series
        return s["W"] if self.kind == "independent" else s["I"]

    def _compensator(self, grid: TimeGrid, series, tau) -> np.ndarray:
        """``int_0^{t ^ tau} alpha_s(s) / A_s ds``, trapezoid with the partial cell cut at ``tau``."""
        t = grid.times
        if self.kind == "independent":
            return self.rate * np.minimum(t[None, :], tau[:, None])
        lam = self.hazard(t[None, :], self._i_path(series))
        alive = np.clip(tau[:, None] - t[None, :-1], 0.0, grid.dt)
        # value at the cut point interpolated linearly inside the cell
        w = alive / grid.dt
        end = lam[:, :-1] + w * (lam[:, 1:] - lam[:, :-1])
        inc = 0.5 * (lam[:, :-1] + end) * alive
        out = np.zeros_like(lam)
        out[:, 1:] = np.cumsum(inc, axis=1)
        return out

    # -- characteristics ----------------------------------------------------

    def g_characteristics(self, bundle: PathBundle) -> DifferentialCharacteristics:
        """``(1 - X) * hazard`` averaged over each grid cell.

        Cell averages make the left-endpoint sum reproduce the compensator
        at every grid point, so ``tau`` falling inside a cell costs no bias.
        """
        self.check_bundle(bundle)
        comp = bundle["X"] - bundle["Xhat"]
        lam = np.zeros_like(comp)
        lam[:, :-1] = np.diff(comp, axis=1) / bundle.grid.dt
        z = np.zeros((1, bundle.grid.size))
        return DifferentialCharacteristics(bundle.grid, lam, z, np.ones(lam.shape + (1,)), lam[:, :, None])

    def bracket_ratio(self, bundle: PathBundle) -> np.ndarray:
        """``d<Xhat, W>/dt``: zero when ``tau`` is independent of ``W``."""
        self.check_bundle(bundle)
        if self.kind != "independent":
            raise ClosedFormMissing("no martingale-representation driver without immersion")
        return np.zeros((bundle.n_paths, bundle.grid.size))

    def compensated_characteristics(self, bundle: PathBundle) -> DifferentialCharacteristics:
        """G-side of ``Xhat``: zero drift, same jump kernel as ``X``."""
        diff = self.g_characteristics(bundle)
        z = np.zeros((1, bundle.grid.size))
        return DifferentialCharacteristics(bundle.grid, z, z, diff.jump_marks, diff.jump_intensity)

    def f_oracle(self, grid: TimeGrid, bundle: PathBundle | None = None) -> CharacteristicReport:
        """``(int alpha_s(s) ds, <m>, 0)``.

        Independent case: exact ``1 - e^{-rate t}`` and ``<m> = 0``.  Gaussian
        case: pathwise trapezoid sums, which need a bundle.
        """
        t = grid.times
        nu = CompensatorMeasure.empty(grid)
        if self.kind == "independent":
            first = -np.expm1(-self.rate * t)[None, :]
            return CharacteristicReport(grid, first, np.zeros((1, grid.size)), nu)
        if bundle is None:
            raise ClosedFormMissing("the gaussian-threshold oracle is pathwise and needs a bundle")
        self.check_bundle(bundle)
        i = bundle["I"]
        first = _trapezoid(self.diagonal_density(t[None, :], i), grid.dt)
        second = _trapezoid(self.martingale_bracket_density(t[None, :], i), grid.dt)
        return CharacteristicReport(grid, first, second, nu)

    def f_observables(self, bundle: PathBundle, k: int | None = None) -> np.ndarray:
        self.check_bundle(bundle)
        return self._select(self._i_path(bundle), k)
