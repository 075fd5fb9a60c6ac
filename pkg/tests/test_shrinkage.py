from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filtrage.core import CompensatorMeasure, DifferentialCharacteristics, PathBundle, TimeGrid
from filtrage.models import Coefficient, Driver, PoissonPairModel, StructureDrivenModel, TwoDefaultsModel
from filtrage.projection import fit_optional_projection, fit_predictable_projection
from filtrage.shrinkage import (
    ShrinkageCase,
    ShrinkageError,
    adapted_first_characteristic,
    adapted_jump_compensator,
    adapted_second_characteristic,
    h_coefficient,
    heroic_drift_identity_check,
    modified_drift,
    modified_first_gap,
    notadapted_characteristics,
)

SEED = 7


def test_deterministic_characteristics_pass_through_exactly():
    m = PoissonPairModel(0.5, 0.0, 1.0)
    g = TimeGrid(1.0, 50)
    b = m.simulate(g, 100, SEED)
    d = m.g_characteristics(b)
    first = adapted_first_characteristic(d)
    assert first.exact
    assert np.array_equal(first.mean, first.paths[0])
    assert np.allclose(first.mean, 1.5 * g.times)
    assert np.all(first.stderr == 0)
    nu = adapted_jump_compensator(d)
    assert np.allclose(nu.mass()[0], 1.5 * g.times)
    second = adapted_second_characteristic(d)
    assert np.all(second.mean == 0)


def test_immersion_passes_adapted_drift_through():
    g = TimeGrid(1.0, 10)
    rng = np.random.default_rng(0)
    drift = rng.normal(size=(50, g.size))
    d = DifferentialCharacteristics(g, drift, np.zeros((1, g.size)))
    out = adapted_first_characteristic(d, case=ShrinkageCase.adapted(immersion=True))
    assert out.exact
    assert np.array_equal(out.paths[:, 1], drift[:, 0] * g.dt)
    with pytest.raises(ShrinkageError):
        adapted_first_characteristic(d)


def test_second_characteristic_is_unchanged():
    g = TimeGrid(1.0, 4)
    c = np.array([[1.0, 2.0, 3.0, 4.0, 5.0]])
    d = DifferentialCharacteristics(g, np.zeros((1, g.size)), c)
    assert np.array_equal(adapted_second_characteristic(d).mean, np.r_[0.0, np.cumsum(c[0, :-1]) * g.dt])


def test_modified_drift_examples():
    g = TimeGrid(1.0, 4)
    marks = np.array([[[2.0, 0.5]] * g.size])
    inten = np.ones((1, g.size, 2))
    d = DifferentialCharacteristics(g, np.zeros((1, g.size)), np.zeros((1, g.size)), marks, inten)
    assert np.allclose(modified_drift(d), 2.0)
    d_small = DifferentialCharacteristics(g, np.full((1, g.size), 0.3), np.zeros((1, g.size)),
                                          np.full((1, g.size, 1), 0.5), inten[:, :, :1])
    assert np.allclose(modified_drift(d_small), 0.3)


def test_random_intensities_are_projected():
    m = TwoDefaultsModel("exp", 1.0, 2.0)
    g = TimeGrid(1.0, 20)
    b = m.simulate(g, 20_000, SEED)
    d = m.g_characteristics(b)
    feats = m.f_observables(b)
    projs = [fit_predictable_projection(d.jump_intensity[:, :, j], feats) for j in range(d.n_atoms)]
    nu = adapted_jump_compensator(d, projs, feats)
    assert np.all(nu.ac_intensity >= 0)
    with pytest.raises(ShrinkageError):
        adapted_jump_compensator(d)


def _case(z, zc, nu):
    return ShrinkageCase.from_driver(Driver("Z", z, zc, nu))


def test_case_validation():
    g = TimeGrid(1.0, 4)
    one = np.ones(g.size)
    with pytest.raises(ShrinkageError):
        ShrinkageCase("partial")
    with pytest.raises(ShrinkageError):
        ShrinkageCase("not_adapted", immersion=True)
    with pytest.raises(ShrinkageError):
        ShrinkageCase.from_driver(Driver("Z", one, one, CompensatorMeasure.empty(g)), immersion=False)
    with pytest.raises(ShrinkageError):
        _case(one, 2 * one, CompensatorMeasure.empty(g))


def test_zero_h_kills_second_characteristic_and_jumps():
    g = TimeGrid(1.0, 10)
    nu_z = CompensatorMeasure(g, np.ones((1, g.size, 1)), np.ones((1, g.size, 1)))
    case = _case(np.full(g.size, 2.0), np.ones(g.size), nu_z)
    rep = notadapted_characteristics(case, np.zeros((3, g.size)), np.ones((3, g.size)), g)
    assert np.all(rep.second == 0)
    assert rep.jump_compensator.is_empty() or np.all(rep.jump_compensator.mass() == 0)
    assert np.allclose(rep.first, g.times)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32))
def test_image_conserves_mass_and_identity_is_exact(seed):
    rng = np.random.default_rng(seed)
    g = TimeGrid(1.0, 10)
    nu_z = CompensatorMeasure(g, np.full((1, g.size, 1), 1.5), np.full((1, g.size, 1), 0.7))
    case = _case(np.full(g.size, 2.0), np.ones(g.size), nu_z)
    h = rng.normal(0, 2, size=(5, g.size))
    rep = notadapted_characteristics(case, h, rng.normal(size=(5, g.size)), g)
    mass = rep.jump_compensator.mass()
    nonzero = (np.abs(h * 1.5) > 1e-12).astype(float) * 0.7
    assert np.allclose(mass, np.c_[np.zeros(5), np.cumsum(nonzero[:, :-1], axis=1) * g.dt])
    assert modified_first_gap(rep) == 0.0
    assert np.all(np.diff(rep.second, axis=1) >= 0)


def test_h_coefficient_validation():
    g = TimeGrid(1.0, 4)
    b = PathBundle(g, 40, {"W": np.zeros((40, g.size))})
    z = np.r_[1.0, 1.0, 0.0, 1.0, 1.0]
    case = _case(z, np.zeros(g.size), CompensatorMeasure.empty(g))
    H = np.ones((40, g.size))
    with pytest.raises(ShrinkageError):
        h_coefficient(b, case, H, b["W"])
    with pytest.raises(ShrinkageError):
        h_coefficient(b, case, np.ones((40, 3)), b["W"])
    with pytest.raises(ShrinkageError):
        h_coefficient(b, ShrinkageCase.adapted(), H, b["W"])
    H[:, 2] = 0.0
    h = h_coefficient(b, case, H, b["W"])
    assert np.allclose(h.values[:, [0, 1, 3, 4]], 1.0)


def test_structure_b_h_matches_closed_form():
    m = StructureDrivenModel("b", phi=1.0, alpha=1.0, kappa=Coefficient(1.0, 0.0, 0.5))
    g = TimeGrid(1.0, 20)
    b = m.simulate(g, 20_000, SEED)
    case = ShrinkageCase.from_driver(m.driver(g))
    feats = m.f_observables(b)
    h = h_coefficient(b, case, m.bracket_ratio(b), feats)
    # M is a martingale and kappa is affine in M, so h = 1 + M_{t-}/2 per bin
    m_path = np.reshape(feats, h.values.shape)
    for k in (5, 10, 20):
        vals, se, _, rel = h.estimate.values_at(k)
        left = np.unique(m_path[:, k - 1])
        assert len(left) == len(vals)
        assert np.all(np.abs(vals - (1 + 0.5 * left))[rel] <= 5 * se[rel] + 1e-12)


def test_drift_identity_check():
    g = TimeGrid(1.0, 10)
    b = PathBundle(g, 200, {"W": np.zeros((200, g.size))})
    out = heroic_drift_identity_check(b, np.ones(g.size), b["W"])
    assert out.passed and out.max_z == 0.0
    with pytest.raises(ShrinkageError):
        heroic_drift_identity_check(b, np.ones(g.size), b["W"], case=ShrinkageCase.adapted(immersion=False))


def test_drift_identity_holds_for_independent_drift():
    rng = np.random.default_rng(1)
    g = TimeGrid(1.0, 20)
    n = 20_000
    w = np.c_[np.zeros(n), np.cumsum(rng.normal(0, np.sqrt(g.dt), (n, g.steps)), axis=1)]
    coin = rng.integers(0, 2, n).astype(float)
    b = PathBundle(g, n, {"W": w})
    out = heroic_drift_identity_check(b, np.repeat(coin[:, None], g.size, axis=1), w,
                                      case=ShrinkageCase.adapted(immersion=True), times=[5, 10, 20])
    assert out.comparisons > 0
    assert out.passed
