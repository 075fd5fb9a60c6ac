"""Bivariate Poisson process built from three independent sources.

``N1 = P10 + P11`` and ``N2 = P01 + P11``; the common source ``P11`` makes
the two counts jump together.  ``N1`` is a Poisson process in both its own
filtration and the joint one, so its characteristics are deterministic and
unchanged by shrinking.

The drift of ``N1`` in the joint filtration is ``(lam10 + lam11) t``: the
rate of the two sources feeding ``N1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import (
    CharacteristicReport,
    DifferentialCharacteristics,
    JumpEvents,
    PathBundle,
    TimeGrid,
    integrate_characteristics,
)
from ..streams import path_stream, poisson_arrivals
from .base import ModelFamily


@dataclass(frozen=True)
class PoissonPairModel(ModelFamily):
    lam10: float = 1.0
    lam01: float = 1.0
    lam11: float = 0.5

    family = "poisson_pair"
    target = "N1"
    feature_names = ("N1",)
    immersion = True

    def __post_init__(self):
        rates = (self.lam10, self.lam01, self.lam11)
        if min(rates) < 0:
            raise ValueError("intensities must be nonnegative")
        if max(rates) <= 0:
            raise ValueError("at least one intensity must be positive")

    @property
    def rate1(self) -> float:
        return self.lam10 + self.lam11

    def simulate(self, grid: TimeGrid, n_paths: int, seed: int) -> PathBundle:
        T = grid.horizon
        cols = {"N1": ([], []), "N2": ([], [])}
        for i in range(n_paths):
            rng = path_stream(seed, i)
            p10 = poisson_arrivals(rng, self.lam10, T)
            p01 = poisson_arrivals(rng, self.lam01, T)
            p11 = poisson_arrivals(rng, self.lam11, T)
            for name, parts in (("N1", (p10, p11)), ("N2", (p01, p11))):
                t = np.sort(np.concatenate(parts))
                cols[name][0].append(np.full(len(t), i))
                cols[name][1].append(t)
        series, jumps = {}, {}
        for name, (paths, times) in cols.items():
            p = np.concatenate(paths).astype(np.int64)
            t = np.concatenate(times)
            ev = JumpEvents(p, grid.event_index(t), t, np.ones(len(t)))
            jumps[name] = ev
            series[name] = np.cumsum(ev.cell_sums(n_paths, grid.size), axis=1)
        return PathBundle(grid, n_paths, series, jumps, seed, self.family)

    def _triple(self, grid: TimeGrid) -> DifferentialCharacteristics:
        r = np.full((1, grid.size), self.rate1)
        return DifferentialCharacteristics(grid, r, np.zeros_like(r), np.ones((1, grid.size, 1)), r[:, :, None])

    def g_characteristics(self, bundle: PathBundle) -> DifferentialCharacteristics:
        self.check_bundle(bundle)
        return self._triple(bundle.grid)

    def f_oracle(self, grid: TimeGrid, bundle: PathBundle | None = None) -> CharacteristicReport:
        return integrate_characteristics(self._triple(grid), grid)

    def f_observables(self, bundle: PathBundle, k: int | None = None) -> np.ndarray:
        self.check_bundle(bundle)
        return self._select(bundle["N1"], k)


def interarrival_times(bundle: PathBundle, name: str = "N1") -> np.ndarray:
    """Gaps between consecutive events on each path (first gap from 0)."""
    ev = bundle.jump_events(name)
    order = np.lexsort((ev.time, ev.path))
    p, t = ev.path[order], ev.time[order]
    prev = np.r_[0.0, t[:-1]]
    first = np.r_[True, p[1:] != p[:-1]]
    prev[first] = 0.0
    return t - prev

