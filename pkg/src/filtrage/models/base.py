from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from ..core import (
    CharacteristicReport,
    DifferentialCharacteristics,
    FamilyMismatch,
    PathBundle,
    TimeGrid,
)


class ClosedFormMissing(LookupError):
    """The family has no closed-form F-side answer for the requested setup."""


class ModelFamily(ABC):
    """Common interface of the simulated model families.

    ``family`` tags every bundle a model produces; the G-side and observable
    methods refuse bundles carrying another tag.
    """

    family: str = ""
    # name of the series whose characteristics are studied
    target: str = "X"
    # names of the observable features, in column order
    feature_names: tuple[str, ...] = ()
    # whether the family declares the sub-filtration immersed in the large one
    immersion: bool = False

    def check_bundle(self, bundle: PathBundle) -> None:
        if bundle.family != self.family:
            raise FamilyMismatch(f"bundle from {bundle.family!r} passed to {self.family!r}")

    @abstractmethod
    def simulate(self, grid: TimeGrid, n_paths: int, seed: int) -> PathBundle:
        ...

    @abstractmethod
    def g_characteristics(self, bundle: PathBundle) -> DifferentialCharacteristics:
        ...

    @abstractmethod
    def f_oracle(self, grid: TimeGrid, bundle: PathBundle | None = None) -> CharacteristicReport:
        ...

    @abstractmethod
    def f_observables(self, bundle: PathBundle, k: int | None = None) -> np.ndarray:
        """Feature array ``(n_paths, size, d)``, or ``(n_paths, d)`` at index ``k``."""

    def _select(self, feats: np.ndarray, k: int | None) -> np.ndarray:
        if feats.ndim == 2:
            feats = feats[:, :, None]
        if k is None:
            return feats
        return feats[:, k, :]
