"""Jump-diffusion driven by a Brownian motion and an independent Poisson process.

``X = X0 + int beta ds + int gamma dW + int kappa 1{|kappa|<=1} dM
+ int kappa 1{|kappa|>1} dN`` with ``M = N - int lambda``.  The intensity
comes from two deterministic functions: ``lambda = alpha^2 / phi^2`` where
``phi != 0`` and zero elsewhere.  ``V`` solves the structure equation
``d[V] = dt + (phi/alpha) dV`` and ``Z = int alpha dV``.

The coefficients ``beta``, ``gamma`` and ``kappa`` are
``const + sin_w * sin(W) + m * M``, evaluated at the left end of each grid
cell.  The sub-filtration and martingale driver depend on ``case``:

===== ============== ============ ==========================================
case  observed       driver Z     bracket ratio H
===== ============== ============ ==========================================
a     V              int alpha dV (gamma/alpha) i + (1 - i) kappa/phi
b     M              M            kappa
c     W              W            gamma
d     W              W            gamma (= 0; X is a Poisson process)
===== ============== ============ ==========================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, stats

from ..core import (
    CharacteristicReport,
    CompensatorMeasure,
    DifferentialCharacteristics,
    JumpEvents,
    PathBundle,
    SimulationError,
    TimeGrid,
    TRUNCATION_BOUND,
    left_integral,
    realized_bracket,
)
from ..streams import path_stream, sub_seed
from .base import ClosedFormMissing, ModelFamily

CASES = ("a", "b", "c", "d")
Profile = float | Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Coefficient:
    """``const + sin_w * sin(W_t-) + m * M_t-``."""

    const: float = 0.0
    sin_w: float = 0.0
    m: float = 0.0

    def __call__(self, w, m):
        return self.const + self.sin_w * np.sin(w) + self.m * np.asarray(m)

    @property
    def uses_w(self) -> bool:
        return self.sin_w != 0

    @property
    def uses_m(self) -> bool:
        return self.m != 0

    @property
    def bound(self) -> float:
        """Sup of ``|coef|`` when ``M`` is ignored (used for integrability proxies)."""
        return abs(self.const) + abs(self.sin_w)


def _profile(p: Profile, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if callable(p):
        return np.broadcast_to(np.asarray(p(t), dtype=float), t.shape).copy()
    return np.full(t.shape, float(p))


@dataclass(frozen=True)
class Driver:
    """Martingale with the representation property in the observed filtration."""

    name: str
    bracket_density: np.ndarray
    cont_bracket_density: np.ndarray
    jump_compensator: CompensatorMeasure


def _big_part(x):
    return np.where(np.abs(x) > TRUNCATION_BOUND, x, 0.0)


@lru_cache(maxsize=200_000)
def _sine_gauss_big(a: float, b: float, var: float) -> float:
    """``E[(a + b sin G) 1{|a + b sin G| > 1}]`` for ``G ~ N(0, var)``."""
    if var <= 0 or b == 0:
        return float(_big_part(a))
    sd = math.sqrt(var)
    lo, hi = -10 * sd, 10 * sd
    breaks = []
    for y in ((1 - a) / b, (-1 - a) / b):
        if -1 < y < 1:
            r = math.asin(y)
            j0 = math.floor((lo - math.pi) / (2 * math.pi))
            j1 = math.ceil((hi + math.pi) / (2 * math.pi))
            for j in range(j0, j1 + 1):
                for w in (r + 2 * math.pi * j, math.pi - r + 2 * math.pi * j):
                    if lo < w < hi:
                        breaks.append(w)
    edges = [lo] + sorted(breaks) + [hi]

    def integrand(w):
        x = a + b * math.sin(w)
        return (x if abs(x) > TRUNCATION_BOUND else 0.0) * math.exp(-0.5 * w * w / var)

    total = 0.0
    for u, v in zip(edges[:-1], edges[1:]):
        if v > u:
            total += integrate.quad(integrand, u, v, limit=200, epsabs=1e-13)[0]
    return total / (sd * math.sqrt(2 * math.pi))


@dataclass(frozen=True)
class StructureDrivenModel(ModelFamily):
    case: str = "a"
    phi: Profile = 0.5
    alpha: Profile = 1.0
    beta: Coefficient = Coefficient()
    gamma: Coefficient = Coefficient()
    kappa: Coefficient = Coefficient()
    x0: float = 0.0

    family = "structure"
    target = "X"
    immersion = True

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; choose from {CASES}")
        if self.case == "d":
            lam = self._const_intensity()
            if lam is None or lam <= 0:
                raise ValueError("case d needs a constant positive intensity")
            if (self.beta != Coefficient(lam) or self.kappa != Coefficient(1.0) or self.gamma != Coefficient()):
                raise ValueError("case d fixes beta = lambda, kappa = 1, gamma = 0")

    @classmethod
    def poisson(cls, lam: float) -> "StructureDrivenModel":
        """Case d: ``X = N`` observed through ``W`` only."""
        return cls("d", phi=1 / math.sqrt(lam), alpha=1.0, beta=Coefficient(lam), kappa=Coefficient(1.0))

    def _const_intensity(self) -> float | None:
        if callable(self.phi) or callable(self.alpha):
            return None
        return 0.0 if self.phi == 0 else self.alpha**2 / self.phi**2

    # -- deterministic profiles ---------------------------------------------

    def phi_at(self, t):
        return _profile(self.phi, t)

    def alpha_at(self, t):
        a = _profile(self.alpha, t)
        if np.any(a <= 0) or not np.all(np.isfinite(a)):
            raise ValueError("alpha must be positive and finite")
        return a

    def brownian_indicator(self, t):
        return (self.phi_at(t) == 0).astype(float)

    def intensity(self, t):
        ph, al = self.phi_at(t), self.alpha_at(t)
        with np.errstate(divide="ignore"):
            return np.where(ph != 0, al**2 / np.where(ph != 0, ph, 1.0) ** 2, 0.0)

    def jump_ratio(self, t):
        """``phi / alpha``: size of a ``V`` jump."""
        return self.phi_at(t) / self.alpha_at(t)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return {"a": ("V", "[V]"), "b": ("M",), "c": ("W",), "d": ("W",)}[self.case]

    def reveals(self, grid: TimeGrid) -> str:
        """Which source the observed filtration reveals: ``"N"`` or ``"W"``."""
        if self.case == "b":
            return "N"
        if self.case in ("c", "d"):
            return "W"
        i = self.brownian_indicator(grid.times)
        if np.all(i == 1):
            return "W"
        if np.all(i == 0):
            return "N"
        raise ClosedFormMissing("phi switches between zero and nonzero; no closed form is registered")

    # -- simulation ---------------------------------------------------------

    def _arrivals(self, rng: np.random.Generator, horizon: float, lam_max: float) -> np.ndarray:
        if lam_max <= 0:
            return np.zeros(0)
        n = rng.poisson(lam_max * horizon)
        cand = np.sort(rng.random(n) * horizon)
        keep = rng.random(n) * lam_max < self.intensity(cand)
        return cand[keep]

    def _lam_max(self, grid: TimeGrid) -> float:
        fine = np.linspace(0.0, grid.horizon, 8 * grid.steps + 1)
        return float(np.max(self.intensity(fine)))

    def _brownian(self, grid: TimeGrid, n: int, seed: int) -> np.ndarray:
        w = np.zeros((n, grid.size))
        sd = math.sqrt(grid.dt)
        for i in range(n):
            w[i, 1:] = np.cumsum(path_stream(seed, i).standard_normal(grid.steps)) * sd
        return w

    def _poisson_events(self, grid: TimeGrid, n: int, seed: int, lam_max: float):
        paths, times = [], []
        for i in range(n):
            t = self._arrivals(path_stream(seed, i), grid.horizon, lam_max)
            paths.append(np.full(len(t), i))
            times.append(t)
        p = np.concatenate(paths).astype(np.int64) if paths else np.zeros(0, np.int64)
        t = np.concatenate(times) if times else np.zeros(0)
        return p, t

    def simulate(self, grid: TimeGrid, n_paths: int, seed: int) -> PathBundle:
        # one stream per path and source: W on the seed itself, N on a derived seed
        w = self._brownian(grid, n_paths, seed)
        p, t = self._poisson_events(grid, n_paths, sub_seed(seed, 1), self._lam_max(grid))
        return self._assemble(grid, n_paths, seed, w, p, t)

    def _assemble(self, grid, n, seed, w, p, t) -> PathBundle:
        times = grid.times
        dt = grid.dt
        idx = grid.event_index(t)
        ones = np.ones(len(t))
        n_ev = JumpEvents(p, idx, t, ones)
        counts = n_ev.cell_sums(n, grid.size)
        N = np.cumsum(counts, axis=1)
        lam = self.intensity(times)
        Lam = left_integral(lam, dt)
        M = N - Lam[None, :]

        ratio = self.jump_ratio(times)
        ind = self.brownian_indicator(times)
        al = self.alpha_at(times)
        dW = np.diff(w, axis=1)
        dN = counts[:, 1:]
        dM = dN - lam[None, :-1] * dt
        dV = ind[None, :-1] * dW + ratio[None, :-1] * dM
        V = np.zeros((n, grid.size))
        V[:, 1:] = np.cumsum(dV, axis=1)
        Z = np.zeros((n, grid.size))
        Z[:, 1:] = np.cumsum(al[None, :-1] * dV, axis=1)

        beta = self.beta(w, M)
        gamma = self.gamma(w, M)
        kap = self.kappa(w, M)
        small = np.where(np.abs(kap) <= TRUNCATION_BOUND, kap, 0.0)
        dX = (beta[:, :-1] * dt + gamma[:, :-1] * dW + kap[:, :-1] * dN
              - small[:, :-1] * lam[None, :-1] * dt)
        X = np.full((n, grid.size), float(self.x0))
        X[:, 1:] += np.cumsum(dX, axis=1)
        if not np.all(np.isfinite(X)):
            raise SimulationError("structure-driven path blew up (non-finite state)")

        left = np.maximum(idx - 1, 0)
        x_marks = kap[p, left]
        v_marks = ratio[left]
        z_marks = self.phi_at(times)[left]
        keep_x = np.abs(x_marks) > 0
        jumps = {
            "N": n_ev,
            "M": n_ev,
            "V": JumpEvents(p, idx, t, v_marks).where(v_marks != 0),
            "Z": JumpEvents(p, idx, t, z_marks).where(z_marks != 0),
            "X": JumpEvents(p, idx, t, x_marks).where(keep_x),
        }
        series = {"W": w, "N": N, "M": M, "V": V, "Z": Z, "X": X}
        return PathBundle(grid, n, series, jumps, seed, self.family)

    # -- invariants ---------------------------------------------------------

    def structure_residual(self, bundle: PathBundle) -> np.ndarray:
        """``[V]_t - t - sum (phi/alpha) dV`` per path and grid point.

        ``[V]`` sums squared continuous increments and squared exact jumps.
        """
        self.check_bundle(bundle)
        grid = bundle.grid
        ratio = self.jump_ratio(grid.times)
        dV = np.diff(bundle["V"], axis=1)
        drive = np.zeros((bundle.n_paths, grid.size))
        drive[:, 1:] = np.cumsum(ratio[None, :-1] * dV, axis=1)
        return realized_bracket(bundle, "V") - grid.times[None, :] - drive

    def integrability_proxies(self, bundle: PathBundle) -> dict[str, float]:
        """Sampled versions of the moment conditions on the coefficients."""
        self.check_bundle(bundle)
        w, m = bundle["W"], bundle["M"]
        lam = self.intensity(bundle.grid.times)[None, :]
        kap = self.kappa(w, m)
        sup_drift = np.max(np.abs(self.beta(w, m)) + np.abs(kap * lam) * (np.abs(kap) > 1), axis=1)
        l2 = left_integral(self.gamma(w, m) ** 2 + kap**2 * lam, bundle.grid.dt)[:, -1]
        return {"sup_drift": float(sup_drift.mean()), "square_integral": float(l2.mean())}

    # -- G side -------------------------------------------------------------

    def coefficient_paths(self, bundle: PathBundle) -> dict[str, np.ndarray]:
        self.check_bundle(bundle)
        w, m = bundle["W"], bundle["M"]
        return {"beta": self.beta(w, m), "gamma": self.gamma(w, m), "kappa": self.kappa(w, m)}

    def g_characteristics(self, bundle: PathBundle) -> DifferentialCharacteristics:
        c = self.coefficient_paths(bundle)
        lam = self.intensity(bundle.grid.times)
        kap = c["kappa"]
        inten = np.where(kap != 0, lam[None, :], 0.0)
        return DifferentialCharacteristics(bundle.grid, c["beta"], c["gamma"] ** 2, kap[:, :, None], inten[:, :, None])

    def bracket_ratio(self, bundle: PathBundle) -> np.ndarray:
        """Closed-form ``H = d<M_hat, Z> / d<Z>`` per path and grid point."""
        c = self.coefficient_paths(bundle)
        if self.case == "b":
            return c["kappa"]
        if self.case in ("c", "d"):
            return c["gamma"]
        t = bundle.grid.times
        i = self.brownian_indicator(t)[None, :]
        ph = self.phi_at(t)[None, :]
        safe = np.where(ph != 0, ph, 1.0)
        return i * c["gamma"] / self.alpha_at(t)[None, :] + (1 - i) * c["kappa"] / safe

    def driver(self, grid: TimeGrid) -> Driver:
        t = grid.times
        one = np.ones((1, grid.size, 1))
        if self.case in ("c", "d"):
            d = np.ones(grid.size)
            return Driver("W", d, d, CompensatorMeasure.empty(grid))
        lam = self.intensity(t)
        if self.case == "b":
            nu = CompensatorMeasure(grid, one, lam[None, :, None])
            return Driver("M", lam, np.zeros(grid.size), nu)
        al, ph = self.alpha_at(t), self.phi_at(t)
        i = self.brownian_indicator(t)
        nu = CompensatorMeasure(grid, ph[None, :, None], lam[None, :, None])
        return Driver("Z", al**2, i * al**2, nu)

    # -- F side -------------------------------------------------------------

    def conditional_coefficients(self, bundle: PathBundle) -> dict[str, np.ndarray]:
        """Exact ``E[. | F_t]`` of the coefficients and of ``kappa 1{|kappa|>1}``."""
        self.check_bundle(bundle)
        grid = bundle.grid
        t = grid.times
        lam_cum = left_integral(self.intensity(t), grid.dt)
        side = self.reveals(grid)
        out = {}
        if side == "N":
            m = bundle["M"]
            for name in ("beta", "gamma", "kappa"):
                c = getattr(self, name)
                out[name] = c.const + c.m * m
            a = self.kappa.const + self.kappa.m * m
            if self.kappa.uses_w:
                big = np.empty_like(a)
                for k in range(grid.size):
                    col = a[:, k]
                    vals, inv = np.unique(np.round(col, 12), return_inverse=True)
                    tab = np.array([_sine_gauss_big(float(v), self.kappa.sin_w, float(t[k])) for v in vals])
                    big[:, k] = tab[inv]
            else:
                big = _big_part(a)
        else:
            sw = np.sin(bundle["W"])
            for name in ("beta", "gamma", "kappa"):
                c = getattr(self, name)
                out[name] = c.const + c.sin_w * sw
            a = self.kappa.const + self.kappa.sin_w * sw
            if self.kappa.uses_m:
                big = np.zeros_like(a)
                for k in range(grid.size):
                    mean = lam_cum[k]
                    if mean <= 0:
                        big[:, k] = _big_part(a[:, k])
                        continue
                    top = int(stats.poisson.ppf(1 - 1e-13, mean)) + 1
                    for j in range(top + 1):
                        big[:, k] += stats.poisson.pmf(j, mean) * _big_part(a[:, k] + self.kappa.m * (j - mean))
            else:
                big = _big_part(a)
        out["kappa_big"] = big
        return out

    def f_oracle(self, grid: TimeGrid, bundle: PathBundle | None = None) -> CharacteristicReport:
        """Characteristics of the optional projection of ``X``.

        Pathwise when a bundle is supplied.  Without one the coefficients'
        conditional laws must be deterministic (no dependence on the
        observed path), otherwise :class:`ClosedFormMissing` is raised.
        """
        if bundle is None:
            side = self.reveals(grid)
            pathwise = [c.uses_m if side == "N" else c.uses_w for c in (self.beta, self.gamma, self.kappa)]
            if any(pathwise):
                raise ClosedFormMissing("the projected coefficients depend on the path; supply a bundle")
            bundle = self._degenerate_bundle(grid)
        self.check_bundle(bundle)
        e = self.conditional_coefficients(bundle)
        t = grid.times
        lam = self.intensity(t)[None, :]
        side = self.reveals(grid)
        modified = e["beta"] + lam * e["kappa_big"]
        if side == "N":
            kbar = e["kappa"]
            marks = kbar[:, :, None]
            inten = np.where(kbar != 0, lam, 0.0)[:, :, None]
            nu = CompensatorMeasure(grid, marks, inten)
            second = np.zeros((1, grid.size))
        else:
            nu = CompensatorMeasure.empty(grid)
            second = left_integral(e["gamma"] ** 2, grid.dt)
        big = nu.big_jump_integral()
        mod_first = left_integral(modified, grid.dt)
        first = mod_first - big
        return CharacteristicReport(grid, first, second, nu, modified_first=mod_first)

    def _degenerate_bundle(self, grid: TimeGrid) -> PathBundle:
        z = np.zeros((1, grid.size))
        series = {k: z for k in ("W", "N", "M", "V", "Z", "X")}
        return PathBundle(grid, 1, series, {}, 0, self.family)

    def f_observables(self, bundle: PathBundle, k: int | None = None) -> np.ndarray:
        self.check_bundle(bundle)
        if self.case == "a":
            feats = np.stack([bundle["V"], realized_bracket(bundle, "V")], axis=2)
        elif self.case == "b":
            feats = bundle["M"]
        else:
            feats = bundle["W"]
        return self._select(feats, k)

    # -- brute-force conditional expectation --------------------------------

    def nested_bracket_ratio(self, bundle: PathBundle, path: int, k: int, n_inner: int, seed: int):
        """``E[H_k | observed history of path up to t_k]`` by resampling.

        The source the observed filtration reveals is held fixed at its
        values on ``path``; the other source is redrawn ``n_inner`` times.
        Returns ``(mean, standard error)``.
        """
        self.check_bundle(bundle)
        grid = bundle.grid
        side = self.reveals(grid)
        inner_seed = sub_seed(seed, 1000 + k)
        if side == "N":
            w_inner = self._brownian(grid, n_inner, inner_seed)
            w_k = w_inner[:, k]
            m_k = np.full(n_inner, bundle["M"][path, k])
        else:
            p, t = self._poisson_events(grid, n_inner, inner_seed, self._lam_max(grid))
            t_k = grid.times[k]
            n_k = np.bincount(p[t <= t_k + 1e-12], minlength=n_inner).astype(float)
            lam_cum = left_integral(self.intensity(grid.times), grid.dt)[k]
            m_k = n_k - lam_cum
            w_k = np.full(n_inner, bundle["W"][path, k])
        vals = self._ratio_from(w_k, m_k, grid.times[k])
        return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_inner))

    def _ratio_from(self, w, m, t) -> np.ndarray:
        if self.case == "b":
            return self.kappa(w, m)
        if self.case in ("c", "d"):
            return self.gamma(w, m)
        t = np.asarray(t, dtype=float)
        if self.brownian_indicator(t) == 1:
            return self.gamma(w, m) / self.alpha_at(t)
        return self.kappa(w, m) / self.phi_at(t)
