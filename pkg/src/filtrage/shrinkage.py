"""Characteristics in a smaller filtration from characteristics in a larger one.

Two engines:

* adapted: ``X`` is observable in the small filtration.  The drift density
  is optionally projected and integrated, the second characteristic is kept,
  and each jump-kernel intensity is predictably projected.
* not adapted: the optional projection of ``X`` is studied through a driver
  ``Z`` with the predictable representation property.  With
  ``h = E[d<M_hat, Z>/d<Z> | F_t-]`` the second characteristic is
  ``int h^2 d<Z^c>``, the jump compensator is the image of the driver's
  compensator under ``x -> h x`` and the first characteristic is the
  integrated projection of the modified drift minus the big jumps of the new
  compensator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import (
    TRUNCATION_BOUND,
    CharacteristicReport,
    CompensatorMeasure,
    DifferentialCharacteristics,
    FiltrageError,
    PathBundle,
    TimeGrid,
    left_integral,
    standard_error,
)
from .projection import (
    Binning,
    ProjectionEstimate,
    ProjectionError,
    fit_optional_projection,
    fit_predictable_projection,
)

ADAPTED = "adapted"
NOT_ADAPTED = "not_adapted"
MODES = (ADAPTED, NOT_ADAPTED)


class ShrinkageError(FiltrageError, ValueError):
    """Inputs violate a precondition of one of the engines."""


@dataclass(frozen=True)
class ShrinkageCase:
    """How the small filtration relates to the large one.

    ``immersion`` is declared by the model family, never detected.  The
    driver fields are needed in not-adapted mode only.
    """

    mode: str
    immersion: bool = False
    driver: str | None = None
    bracket_density: np.ndarray | None = None
    cont_bracket_density: np.ndarray | None = None
    nu_Z: CompensatorMeasure | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ShrinkageError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.mode == NOT_ADAPTED:
            if not self.driver:
                raise ShrinkageError("not-adapted mode needs a driver martingale")
            if not self.immersion:
                raise ShrinkageError("not-adapted mode needs immersion (the driver must stay a martingale)")
            if self.bracket_density is None or self.cont_bracket_density is None:
                raise ShrinkageError("not-adapted mode needs the driver's bracket densities")
            z = np.asarray(self.bracket_density, dtype=float)
            zc = np.asarray(self.cont_bracket_density, dtype=float)
            if np.any(zc < 0) or np.any(zc > z + 1e-12):
                raise ShrinkageError("continuous bracket density must lie between 0 and the full bracket density")

    @classmethod
    def adapted(cls, immersion: bool = False) -> "ShrinkageCase":
        return cls(ADAPTED, immersion)

    @classmethod
    def from_driver(cls, driver, immersion: bool = True) -> "ShrinkageCase":
        """Not-adapted case from a model's driver description."""
        return cls(NOT_ADAPTED, immersion, driver.name, driver.bracket_density,
                   driver.cont_bracket_density, driver.jump_compensator)


@dataclass(frozen=True)
class Cumulative:
    """A cumulative characteristic: per-path rows, cross-path mean and its SE.

    ``exact`` marks values produced without Monte Carlo estimation.
    """

    paths: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    exact: bool


def _aggregate(rows: np.ndarray, se_basis: np.ndarray | None = None, exact: bool = False) -> Cumulative:
    rows = np.atleast_2d(rows)
    if exact or rows.shape[0] == 1:
        return Cumulative(rows, rows.mean(axis=0), np.zeros(rows.shape[1]), exact or rows.shape[0] == 1)
    basis = rows if se_basis is None else se_basis
    return Cumulative(rows, rows.mean(axis=0), standard_error(basis), False)


def _check_reliability(proj: ProjectionEstimate, max_unreliable: float) -> None:
    frac = proj.unreliable_fraction()
    if frac > max_unreliable:
        raise ProjectionError(
            f"{frac:.2%} of samples fell in unreliable bins (allowed {max_unreliable:.2%})"
        )


# ---------------------------------------------------------------------------
# adapted engine


def adapted_first_characteristic(diff: DifferentialCharacteristics, proj: ProjectionEstimate | None = None,
                                 features=None, case: ShrinkageCase | None = None,
                                 max_unreliable: float = 0.01) -> Cumulative:
    """``B^F = int o,F(b a) ds``.

    Deterministic drift, or an adapted process under declared immersion,
    short-circuits to ``B^G`` exactly.  Otherwise ``proj`` (fitted on the
    drift density) is evaluated along each path at its own features and
    integrated.  The mean's standard error is that of the raw drift
    integrals: by the tower identity the two sample means coincide.
    """
    raw = left_integral(diff.drift_density, diff.grid.dt)
    if diff.is_deterministic():
        return _aggregate(raw[:1], exact=True)
    if case is not None and case.mode == ADAPTED and case.immersion:
        return Cumulative(raw, raw.mean(axis=0), standard_error(raw), True)
    if proj is None or features is None:
        raise ShrinkageError("random drift without immersion needs a fitted projection and features")
    _check_reliability(proj, max_unreliable)
    projected, _ = proj.evaluate_paths(features)
    return _aggregate(left_integral(projected, diff.grid.dt), se_basis=raw)


def adapted_second_characteristic(diff: DifferentialCharacteristics) -> Cumulative:
    """``C^F = C^G``, returned unchanged."""
    return _aggregate(left_integral(diff.diffusion_density, diff.grid.dt), exact=True)


def adapted_jump_compensator(diff: DifferentialCharacteristics, projections=None, features=None,
                             max_unreliable: float = 0.01) -> CompensatorMeasure:
    """``nu^F = (K^G a^G dt)^{p,F}``: same marks, predictably projected intensities.

    ``projections`` holds one predictable-projection fit per kernel atom.
    """
    grid = diff.grid
    if diff.n_atoms == 0:
        return CompensatorMeasure.empty(grid)
    if diff.is_deterministic():
        return CompensatorMeasure(grid, diff.jump_marks[:1], diff.jump_intensity[:1])
    if projections is None or features is None or len(projections) != diff.n_atoms:
        raise ShrinkageError("need one fitted intensity projection per kernel atom")
    inten = []
    for proj in projections:
        _check_reliability(proj, max_unreliable)
        vals, _ = proj.evaluate_paths(features)
        inten.append(np.maximum(vals, 0.0))
    inten = np.stack(inten, axis=2)
    marks = np.broadcast_to(diff.jump_marks, inten.shape)
    return CompensatorMeasure(grid, marks, inten)


def modified_drift(diff: DifferentialCharacteristics) -> np.ndarray:
    """``b_hat a = b a + sum_{|mark| > 1} mark * intensity`` per grid point."""
    m = diff.jump_marks
    big = (np.where(np.abs(m) > TRUNCATION_BOUND, m, 0.0) * diff.jump_intensity).sum(axis=2)
    return diff.drift_density + big


# ---------------------------------------------------------------------------
# not-adapted engine


@dataclass(frozen=True)
class HCoefficient:
    """``h = p,F(H)`` with ``H = d<M_hat, Z>/d<Z>``, fitted and evaluated per path."""

    estimate: ProjectionEstimate
    values: np.ndarray
    reliable: np.ndarray

    def grand_mean(self, k: int) -> float:
        return self.estimate.grand_mean(k)


def h_coefficient(bundle: PathBundle, case: ShrinkageCase, H: np.ndarray, features,
                  binning: Binning | None = None, max_unreliable: float = 0.01) -> HCoefficient:
    """Predictable projection of the closed-form bracket ratio ``H``.

    ``H`` is ``(n_paths, size)`` as supplied by the model family.
    """
    if case.mode != NOT_ADAPTED:
        raise ShrinkageError("h is defined for the not-adapted engine only")
    H = np.asarray(H, dtype=float)
    if H.shape != (bundle.n_paths, bundle.grid.size):
        raise ShrinkageError(f"H has shape {H.shape}, expected {(bundle.n_paths, bundle.grid.size)}")
    z = np.broadcast_to(np.asarray(case.bracket_density, dtype=float), (bundle.grid.size,))
    dead = z == 0
    if np.any(dead) and np.any(H[:, dead] != 0):
        raise ShrinkageError("bracket density of the driver vanishes where H is nonzero (ill-posed ratio)")
    est = fit_predictable_projection(H, features, binning)
    _check_reliability(est, max_unreliable)
    values, ok = est.evaluate_paths(features)
    return HCoefficient(est, values, ok)


def notadapted_characteristics(case: ShrinkageCase, h: HCoefficient | np.ndarray, modified_projected,
                               grid: TimeGrid, modified_raw=None) -> CharacteristicReport:
    """Characteristics of the optional projection of ``X``.

    ``modified_projected`` is the optional projection of ``b_hat a`` along
    each path (``(P, size)``); ``modified_raw`` optionally supplies the raw
    targets whose integrals give the mean's standard error.  The big-jump
    correction is taken from the constructed ``nu^F``, so
    ``first == modified_first - nu^F.big_jump_integral()`` holds bitwise.
    """
    if case.mode != NOT_ADAPTED:
        raise ShrinkageError("case is not in not-adapted mode")
    if case.nu_Z is None:
        raise ShrinkageError("the driver's jump compensator is missing")
    hv = h.values if isinstance(h, HCoefficient) else np.atleast_2d(np.asarray(h, dtype=float))
    zc = np.broadcast_to(np.asarray(case.cont_bracket_density, dtype=float), (grid.size,))
    second = left_integral(hv**2 * zc[None, :], grid.dt)
    nu = case.nu_Z.image(hv) if not case.nu_Z.is_empty() else CompensatorMeasure.empty(grid)
    mod_first = left_integral(np.atleast_2d(modified_projected), grid.dt)
    first = mod_first - nu.big_jump_integral()
    first_se = None
    if modified_raw is not None and first.shape[0] > 1:
        first_se = standard_error(left_integral(np.atleast_2d(modified_raw), grid.dt))
    return CharacteristicReport(grid, first, second, nu, first_se=first_se, modified_first=mod_first)


def modified_first_gap(report: CharacteristicReport) -> float:
    """Largest ``|B^F - (B_hat^F - int int_{|x|>1} x nu^F)|``; zero by construction."""
    if report.modified_first is None:
        raise ShrinkageError("report carries no modified first characteristic")
    rebuilt = report.modified_first - report.jump_compensator.big_jump_integral()
    return float(np.max(np.abs(report.first - rebuilt)))


# ---------------------------------------------------------------------------
# drift identity under immersion


@dataclass(frozen=True)
class DriftIdentityCheck:
    """Per-bin test that ``o,F B^G_t - int_0^t o,F(b a) du`` vanishes."""

    max_deviation: float
    stderr_at_max: float
    max_z: float
    z_critical: float
    comparisons: int

    @property
    def passed(self) -> bool:
        return self.max_z <= self.z_critical


def heroic_drift_identity_check(bundle: PathBundle, drift_density, features, case: ShrinkageCase | None = None,
                                binning: Binning | None = None, family_alpha: float = 0.01,
                                times: list[int] | None = None) -> DriftIdentityCheck:
    """Compare the projected drift integral with the projected integrated drift.

    ``D_t = B^G_t - int_0^t o,F(b a)_u du`` is projected on the features at
    ``t``; under immersion every bin mean should vanish.  The z-scores of the
    reliable bins are compared with a Bonferroni bound at family level
    ``family_alpha``.  Deterministic drift gives exactly zero.
    """
    if case is not None and not case.immersion:
        raise ShrinkageError("the drift identity is only asserted under immersion")
    grid = bundle.grid
    b = np.broadcast_to(np.atleast_2d(np.asarray(drift_density, dtype=float)), (bundle.n_paths, grid.size))
    if np.all(b == b[:1]):
        return DriftIdentityCheck(0.0, 0.0, 0.0, math.inf, 0)
    binning = binning or Binning()
    proj_b = fit_optional_projection(b, features, binning)
    integrated, _ = proj_b.evaluate_paths(features)
    D = left_integral(b, grid.dt) - left_integral(integrated, grid.dt)
    proj_d = fit_optional_projection(D, features, binning)
    ks = range(1, grid.size) if times is None else times
    best = (0.0, 0.0, 0.0)
    m = 0
    for k in ks:
        vals, se, _, rel = proj_d.values_at(k)
        for v, s in zip(vals[rel], se[rel]):
            m += 1
            z = abs(v) / s if s > 0 else (0.0 if v == 0 else math.inf)
            if z > best[2]:
                best = (abs(v), s, z)
    zc = float(stats.norm.isf(family_alpha / (2 * max(m, 1))))
    return DriftIdentityCheck(best[0], best[1], best[2], zc, m)
