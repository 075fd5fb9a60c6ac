"""Brownian motion observed only at integer times.

The large filtration is that of ``W``; the small one freezes the information
at the last integer, so the optional projection of ``W`` is the step process
``W_n`` on ``[n, n + 1)``.  That projection is pure jump with standard
Gaussian jumps at the integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import (
    CharacteristicReport,
    CompensatorMeasure,
    DifferentialCharacteristics,
    Gaussian,
    PathBundle,
    TimeGrid,
)
from ..streams import normals
from .base import ModelFamily


@dataclass(frozen=True)
class CoarseBrownianModel(ModelFamily):
    horizon: int = 4

    family = "coarse_brownian"
    target = "W"
    feature_names = ("W_floor",)

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError("horizon must be a positive integer number of unit blocks")

    def grid(self, steps_per_unit: int) -> TimeGrid:
        return TimeGrid(self.horizon, self.horizon * steps_per_unit)

    def integer_indices(self, grid: TimeGrid) -> np.ndarray:
        """Grid indices of the times ``1, 2, ..., horizon``."""
        return np.array([grid.index(n) for n in range(1, int(grid.horizon) + 1)], dtype=np.int64)

    def _check_grid(self, grid: TimeGrid) -> None:
        per = grid.steps / grid.horizon
        if grid.horizon != self.horizon or per != int(per):
            raise ValueError(f"grid must cover [0, {self.horizon}] with a whole number of steps per unit")

    def simulate(self, grid: TimeGrid, n_paths: int, seed: int) -> PathBundle:
        self._check_grid(grid)
        w = np.zeros((n_paths, grid.size))
        w[:, 1:] = np.cumsum(normals(seed, n_paths, grid.steps), axis=1) * math.sqrt(grid.dt)
        return PathBundle(grid, n_paths, {"W": w}, {}, seed, self.family)

    def g_characteristics(self, bundle: PathBundle) -> DifferentialCharacteristics:
        self.check_bundle(bundle)
        g = bundle.grid
        return DifferentialCharacteristics(g, np.zeros((1, g.size)), np.ones((1, g.size)))

    def f_oracle(self, grid: TimeGrid, bundle: PathBundle | None = None) -> CharacteristicReport:
        self._check_grid(grid)
        z = np.zeros((1, grid.size))
        atoms = tuple((int(k), Gaussian(0.0, 1.0)) for k in self.integer_indices(grid))
        nu = CompensatorMeasure(grid, np.zeros((1, grid.size, 0)), np.zeros((1, grid.size, 0)), atoms)
        first = nu.truncated_integral()
        return CharacteristicReport(grid, first, z, nu)

    def floor_indices(self, grid: TimeGrid) -> np.ndarray:
        """Grid index of ``floor(t)`` for every grid point."""
        per = grid.steps // int(grid.horizon)
        return (np.arange(grid.size) // per) * per

    def exact_projection(self, bundle: PathBundle) -> np.ndarray:
        self.check_bundle(bundle)
        return bundle["W"][:, self.floor_indices(bundle.grid)]

    def f_observables(self, bundle: PathBundle, k: int | None = None) -> np.ndarray:
        return self._select(self.exact_projection(bundle), k)
