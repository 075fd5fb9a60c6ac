"""Two-dimensional diffusion whose first coordinate is autonomous in law.

The first row of the volatility matrix has norm ``sigma1(y1)`` and the first
drift depends on ``y1`` only, so ``Y1`` solves a one-dimensional SDE driven
by the Brownian motion ``Z`` even though the mixing between ``W1`` and ``W2``
depends on ``Y2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..core import (
    CharacteristicReport,
    CompensatorMeasure,
    DifferentialCharacteristics,
    PathBundle,
    SimulationError,
    TimeGrid,
    left_integral,
)
from ..streams import normals
from .base import ClosedFormMissing, ModelFamily

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BivariateDiffusionModel(ModelFamily):
    mean_reversion: float = 0.1
    vol_base: float = 0.2
    vol_amp: float = 0.1
    mix_base: float = 0.6
    mix_amp: float = 0.4
    drift2: float = 0.1
    sigma21: float = 0.1
    sigma22: float = 0.25
    y0: tuple[float, float] = (1.0, 1.0)
    clamp: float = 10.0

    family = "biv_diffusion"
    target = "Y1"
    feature_names = ("Y1",)

    def __post_init__(self):
        if self.vol_base - abs(self.vol_amp) <= 0:
            raise ValueError("sigma1 must stay positive: need vol_base > |vol_amp|")
        if self.clamp <= 0:
            raise ValueError("clamp box must be positive")

    def mu1(self, x):
        return -self.mean_reversion * np.asarray(x)

    def sigma1(self, x):
        return self.vol_base + self.vol_amp * np.tanh(x)

    def mixing_angle(self, y2):
        return self.mix_base + self.mix_amp * np.tanh(y2)

    def first_row(self, y1, y2):
        s = self.sigma1(y1)
        a = self.mixing_angle(y2)
        return s * np.cos(a), s * np.sin(a)

    def simulate(self, grid: TimeGrid, n_paths: int, seed: int) -> PathBundle:
        n, dt = n_paths, grid.dt
        dW = normals(seed, n, 2 * grid.steps).reshape(n, grid.steps, 2) * np.sqrt(dt)
        y1 = np.empty((n, grid.size))
        y2 = np.empty((n, grid.size))
        z = np.zeros((n, grid.size))
        y1[:, 0], y2[:, 0] = self.y0
        clamped = 0
        for k in range(grid.steps):
            a, b = y1[:, k], y2[:, k]
            s11, s12 = self.first_row(a, b)
            d1, d2 = dW[:, k, 0], dW[:, k, 1]
            nxt1 = a + self.mu1(a) * dt + s11 * d1 + s12 * d2
            nxt2 = b + self.drift2 * (1 - b) * dt + self.sigma21 * d1 + self.sigma22 * d2
            z[:, k + 1] = z[:, k] + (s11 * d1 + s12 * d2) / self.sigma1(a)
            for arr in (nxt1, nxt2):
                out = np.abs(arr) > self.clamp
                if out.any():
                    clamped += int(out.sum())
                    np.clip(arr, -self.clamp, self.clamp, out=arr)
            y1[:, k + 1], y2[:, k + 1] = nxt1, nxt2
        if not (np.all(np.isfinite(y1)) and np.all(np.isfinite(y2))):
            raise SimulationError("diffusion produced a non-finite state")
        if clamped:
            log.warning("clamped %d diffusion states to the box [-%g, %g]", clamped, self.clamp, self.clamp)
        w = np.zeros((n, 2, grid.size))
        w[:, :, 1:] = np.cumsum(dW, axis=1).transpose(0, 2, 1)
        series = {"Y1": y1, "Y2": y2, "W1": w[:, 0], "W2": w[:, 1], "Z": z}
        return PathBundle(grid, n, series, {}, seed, self.family)

    def g_characteristics(self, bundle: PathBundle) -> DifferentialCharacteristics:
        self.check_bundle(bundle)
        x = bundle["Y1"]
        return DifferentialCharacteristics(bundle.grid, self.mu1(x), self.sigma1(x) ** 2)

    def f_oracle(self, grid: TimeGrid, bundle: PathBundle | None = None) -> CharacteristicReport:
        """Pathwise integrals of ``mu1(Y1)`` and ``sigma1(Y1)^2``; needs the paths."""
        if bundle is None:
            raise ClosedFormMissing("the diffusion oracle is pathwise and needs a bundle")
        self.check_bundle(bundle)
        x = bundle["Y1"]
        return CharacteristicReport(
            grid,
            left_integral(self.mu1(x), grid.dt),
            left_integral(self.sigma1(x) ** 2, grid.dt),
            CompensatorMeasure.empty(grid),
        )

    def f_observables(self, bundle: PathBundle, k: int | None = None) -> np.ndarray:
        self.check_bundle(bundle)
        return self._select(bundle["Y1"], k)
