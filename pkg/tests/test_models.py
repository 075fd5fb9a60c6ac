from __future__ import annotations

import logging
import math

import numpy as np
import pytest
from scipy import integrate, stats

from filtrage.core import FamilyMismatch, TimeGrid, standard_error
from filtrage.models import (
    BivariateDiffusionModel,
    ClosedFormMissing,
    CoarseBrownianModel,
    Coefficient,
    PoissonPairModel,
    RandomTimeModel,
    StructureDrivenModel,
    TwoDefaultsModel,
    interarrival_times,
)

SEED = 7


# -- two defaults -----------------------------------------------------------


@pytest.mark.parametrize("model", [TwoDefaultsModel("exp", 1.0, 2.0), TwoDefaultsModel("uniform"),
                                   TwoDefaultsModel("fgm", 1.0, 2.0, 0.5)])
def test_joint_density_integrates_to_one(model):
    assert model.normalisation() == pytest.approx(1.0, abs=1e-6)


def test_two_defaults_marginal_law():
    m = TwoDefaultsModel("exp", 1.0, 2.0)
    t1, t2 = m.sample_times(SEED, 100_000)
    alive = (t1 > 1.0).astype(float)
    assert abs(alive.mean() - math.exp(-1)) <= 3 * alive.std() / math.sqrt(len(alive))
    assert stats.kstest(t2, "expon", args=(0, 0.5)).pvalue > 1e-3


def test_fgm_sampler_matches_copula():
    m = TwoDefaultsModel("fgm", 1.0, 2.0, 0.5)
    t1, t2 = m.sample_times(SEED, 200_000)
    u, v = -np.expm1(-t1), -np.expm1(-2.0 * t2)
    # FGM: E[UV] = 1/4 + theta/36
    prod = u * v
    assert abs(prod.mean() - (0.25 + 0.5 / 36)) <= 3 * prod.std() / math.sqrt(len(prod))


def test_kappa_examples():
    assert float(TwoDefaultsModel("exp", 1.0, 2.0).kappa(0.5, 5.0, True)) == pytest.approx(1.0)
    assert float(TwoDefaultsModel("uniform").kappa(0.5, 0.9, True)) == pytest.approx(2.0)
    # direct quadrature of the same ratio
    assert TwoDefaultsModel("uniform").kappa_quadrature(0.5) == pytest.approx(2.0, rel=1e-8)


@pytest.mark.parametrize("s,t2", [(0.3, None), (0.7, None), (0.8, 0.2), (1.5, 1.0)])
def test_fgm_kappa_closed_form_matches_quadrature(s, t2):
    m = TwoDefaultsModel("fgm", 1.0, 2.0, 0.5)
    closed = float(m.kappa(s, 0.0 if t2 is None else t2, t2 is None))
    assert closed == pytest.approx(m.kappa_quadrature(s, t2), rel=1e-7)


def test_kappa_regime_switch():
    m = TwoDefaultsModel("fgm", 1.0, 2.0, 0.5)
    g = TimeGrid(1.0, 10)
    b = m.simulate(g, 2000, SEED)
    k = m.kappa_paths(b)
    t1, t2 = b.meta["T1"], b.meta["T2"]
    s = g.times
    for i in range(50):
        for j in range(g.size):
            if s[j] > t1[i]:
                assert k[i, j] == 0.0
            elif s[j] <= t2[i]:
                assert k[i, j] == pytest.approx(float(m.kappa(s[j], t2[i], True)))
            else:
                assert k[i, j] == pytest.approx(float(m.kappa(s[j], t2[i], False)))


def test_cell_kappa_is_the_exact_cell_average():
    m = TwoDefaultsModel("fgm", 1.0, 2.0, 0.5)
    g = TimeGrid(1.0, 10)
    b = m.simulate(g, 40, SEED)
    ck = m.cell_kappa(b)
    t1, t2 = b.meta["T1"], b.meta["T2"]
    for i in range(40):
        for j in (0, 3, 9):
            lo, hi = g.times[j], min(g.times[j + 1], t1[i])
            if hi <= lo:
                assert ck[i, j] == 0.0
                continue
            pts = [p for p in (t2[i],) if lo < p < hi]
            val, _ = integrate.quad(lambda s: float(m.kappa(s, t2[i], s <= t2[i])), lo, hi, points=pts or None)
            assert ck[i, j] == pytest.approx(val / g.dt, rel=1e-9, abs=1e-12)


def test_two_defaults_oracle_and_observables():
    m = TwoDefaultsModel("exp", 1.0, 2.0)
    g = TimeGrid(1.0, 100)
    rep = m.f_oracle(g)
    assert np.allclose(rep.first[0], -np.expm1(-g.times))
    b = m.simulate(g, 500, SEED)
    pathwise = m.f_oracle(g, b)
    # slope 1 on the survival set
    alive = g.times[None, :] < b.meta["T1"][:, None]
    inten = pathwise.jump_compensator.total_intensity()
    assert np.all(inten[alive] == 1.0)
    assert np.all(inten[~alive] == 0.0)
    feats = m.f_observables(b, 50)
    assert np.all(feats[b.meta["T1"] > g.times[50], 0] == 0.0)


# -- Poisson pair -----------------------------------------------------------


def test_poisson_pair_mean_count():
    m = PoissonPairModel(1.0, 1.0, 0.0)
    b = m.simulate(TimeGrid(1.0, 10), 100_000, SEED)
    n1 = b["N1"][:, -1]
    assert abs(n1.mean() - 1.0) <= 3 * standard_error(n1)


def test_poisson_pair_interarrivals_are_exponential():
    m = PoissonPairModel(1.0, 1.0, 0.5)
    b = m.simulate(TimeGrid(20.0, 20), 500, SEED)
    gaps = interarrival_times(b)
    assert stats.kstest(gaps, "expon", args=(0, 1 / 1.5)).pvalue > 1e-3


def test_poisson_pair_characteristics_are_deterministic():
    m = PoissonPairModel(1.0, 1.0, 0.5)
    g = TimeGrid(2.0, 20)
    b = m.simulate(g, 10, SEED)
    d = m.g_characteristics(b)
    assert d.is_deterministic()
    assert np.all(d.drift_density == 1.5)
    assert np.allclose(m.f_oracle(g).first[0], 1.5 * g.times)
    with pytest.raises(ValueError):
        PoissonPairModel(0.0, 0.0, 0.0)


def test_common_shock_jumps_together():
    m = PoissonPairModel(0.0, 0.0, 2.0)
    b = m.simulate(TimeGrid(1.0, 10), 200, SEED)
    assert np.array_equal(b["N1"], b["N2"])


# -- diffusion --------------------------------------------------------------


def test_diffusion_first_row_norm():
    m = BivariateDiffusionModel()
    y1, y2 = np.linspace(-3, 3, 7), np.linspace(-2, 4, 7)
    s11, s12 = m.first_row(y1, y2)
    assert np.allclose(s11**2 + s12**2, m.sigma1(y1) ** 2)


def test_diffusion_driver_is_brownian():
    m = BivariateDiffusionModel()
    g = TimeGrid(1.0, 200)
    b = m.simulate(g, 4000, SEED)
    z1 = b["Z"][:, -1]
    assert abs(z1.mean()) <= 3 * standard_error(z1)
    assert z1.var() == pytest.approx(1.0, rel=0.08)
    d = m.g_characteristics(b)
    assert np.allclose(d.diffusion_density, m.sigma1(b["Y1"]) ** 2)
    with pytest.raises(ClosedFormMissing):
        m.f_oracle(g)


def test_diffusion_clamp_warns(caplog):
    m = BivariateDiffusionModel(clamp=1.05)
    with caplog.at_level(logging.WARNING):
        b = m.simulate(TimeGrid(1.0, 50), 200, SEED)
    assert np.max(np.abs(b["Y1"])) <= 1.05
    assert any("clamped" in r.message for r in caplog.records)
    with pytest.raises(ValueError):
        BivariateDiffusionModel(vol_base=0.1, vol_amp=0.2)


# -- structure-equation family ------------------------------------------------


def test_brownian_structure_solution():
    m = StructureDrivenModel("c", phi=0.0, alpha=1.0, gamma=Coefficient(1.0))
    b = m.simulate(TimeGrid(1.0, 100), 50, SEED)
    assert np.allclose(b["V"], b["W"], atol=1e-12)
    assert len(b.jump_events("V")) == 0
    assert np.all(b["N"] == 0)


def test_intensity_relation():
    m = StructureDrivenModel("a", phi=0.5, alpha=2.0)
    t = np.linspace(0, 1, 5)
    assert np.allclose(m.intensity(t) * m.phi_at(t), m.alpha_at(t) ** 2 / m.phi_at(t))


def test_structure_residual_small():
    m = StructureDrivenModel("a", phi=0.5, alpha=1.0, kappa=Coefficient(0.5))
    g = TimeGrid(1.0, 2000)
    b = m.simulate(g, 20, SEED)
    assert np.max(np.abs(m.structure_residual(b))) <= 10 * g.dt


def test_structure_jump_marks_match_increments():
    m = StructureDrivenModel("b", phi=1.0, alpha=1.0, kappa=Coefficient(1.5, 0.5))
    g = TimeGrid(1.0, 100)
    b = m.simulate(g, 200, SEED)
    ev = b.jump_events("V")
    # each V increment is its cell's jumps minus a dt-sized compensator step
    jumps = ev.cell_sums(b.n_paths, g.size)[:, 1:]
    assert np.allclose(np.diff(b["V"], axis=1), jumps - g.dt, atol=1e-12)
    proxies = m.integrability_proxies(b)
    assert all(math.isfinite(v) for v in proxies.values())


def test_case_d_oracle():
    lam = 1.3
    m = StructureDrivenModel.poisson(lam)
    g = TimeGrid(1.0, 50)
    rep = m.f_oracle(g)
    assert np.allclose(rep.first[0], lam * g.times)
    assert np.all(rep.second == 0)
    assert rep.jump_compensator.is_empty()
    with pytest.raises(ValueError):
        StructureDrivenModel("d", phi=1.0, alpha=1.0, beta=Coefficient(2.0), kappa=Coefficient(1.0))


def test_case_c_observables_and_h_inputs():
    m = StructureDrivenModel("c", phi=1.0, alpha=1.0, gamma=Coefficient(0.5, 0.0, 0.3))
    g = TimeGrid(1.0, 20)
    b = m.simulate(g, 30, SEED)
    assert np.array_equal(m.f_observables(b, 7)[:, 0], b["W"][:, 7])
    assert np.allclose(m.bracket_ratio(b), 0.5 + 0.3 * b["M"])


def test_structure_oracle_needs_bundle_when_pathwise():
    m = StructureDrivenModel("c", phi=1.0, alpha=1.0, gamma=Coefficient(0.5, 0.4))
    with pytest.raises(ClosedFormMissing):
        m.f_oracle(TimeGrid(1.0, 10))


def test_mixed_phi_has_no_closed_form():
    m = StructureDrivenModel("a", phi=lambda t: np.where(t < 0.5, 0.0, 1.0), alpha=1.0)
    with pytest.raises(ClosedFormMissing):
        m.reveals(TimeGrid(1.0, 10))


def test_case_b_projection_of_big_jumps():
    # E[(a + b sin W_t) 1{|.| > 1}] by brute force
    from filtrage.models.structure import _sine_gauss_big

    rng = np.random.default_rng(1)
    w = rng.normal(0, math.sqrt(0.7), 4_000_000)
    x = 1.0 + 0.5 * np.sin(w)
    mc = np.where(np.abs(x) > 1, x, 0.0)
    assert _sine_gauss_big(1.0, 0.5, 0.7) == pytest.approx(mc.mean(), abs=4 * mc.std() / 2000)


# -- coarse Brownian ----------------------------------------------------------


def test_coarse_brownian_characteristics_and_features():
    m = CoarseBrownianModel(4)
    g = m.grid(10)
    b = m.simulate(g, 20, SEED)
    d = m.g_characteristics(b)
    assert np.all(d.drift_density == 0) and np.all(d.diffusion_density == 1)
    k = g.index(1.5)
    assert np.array_equal(m.f_observables(b, k)[:, 0], b["W"][:, g.index(1.0)])
    rep = m.f_oracle(g)
    assert np.all(rep.first == 0)
    assert [k for k, _ in rep.jump_compensator.atomic_part] == [10, 20, 30, 40]
    with pytest.raises(ValueError):
        m.simulate(TimeGrid(4.0, 41), 2, SEED)


# -- random times -------------------------------------------------------------


def test_independent_random_time_azema():
    m = RandomTimeModel("independent", 1.0)
    t = np.linspace(0, 2, 21)
    g_int = np.array([integrate.quad(lambda u: float(m.jacod_density(s, u, 0.0)), 0, s)[0] for s in t])
    assert np.allclose(m.survival(t, 0.0), 1 - g_int, atol=1e-12)
    assert np.all(m.martingale_bracket_density(t, 0.0) == 0)
    g = TimeGrid(1.0, 10)
    rep = m.f_oracle(g)
    assert np.all(rep.second == 0)
    assert np.allclose(rep.first[0], -np.expm1(-g.times))


def test_gaussian_threshold_density_mass():
    m = RandomTimeModel("gaussian", breaks=(0.0, 2.0), values=(1.0,))
    for t, i in ((0.0, 0.0), (0.5, 0.3), (1.5, -0.8)):
        assert m.density_mass(t, i) == pytest.approx(1.0, abs=1e-4)


def test_gaussian_threshold_grid_checks():
    m = RandomTimeModel("gaussian", breaks=(0.0, 0.55, 3.0), values=(1.0, 0.5))
    with pytest.raises(ValueError):
        m.simulate(TimeGrid(1.0, 10), 5, SEED)
    with pytest.raises(ValueError):
        RandomTimeModel("gaussian", breaks=(0.0, 1.0), values=(1.0,)).simulate(TimeGrid(1.0, 10), 5, SEED)
    with pytest.raises(ClosedFormMissing):
        RandomTimeModel("gaussian", breaks=(0.0, 3.0), values=(1.0,)).f_oracle(TimeGrid(1.0, 10))


def test_random_time_compensator_is_exact_between_grid_points():
    m = RandomTimeModel("independent", 2.0)
    g = TimeGrid(1.0, 20)
    b = m.simulate(g, 300, SEED)
    tau = b.meta["tau"]
    comp = b["X"] - b["Xhat"]
    assert np.allclose(comp, 2.0 * np.minimum(g.times[None, :], tau[:, None]))
    d = m.g_characteristics(b)
    assert np.allclose(np.cumsum(d.drift_density[:, :-1], axis=1) * g.dt, comp[:, 1:])


# -- shared behaviour -----------------------------------------------------------


def test_family_mismatch():
    b = PoissonPairModel().simulate(TimeGrid(1.0, 5), 3, SEED)
    with pytest.raises(FamilyMismatch):
        TwoDefaultsModel().g_characteristics(b)


@pytest.mark.parametrize("model,grid", [
    (PoissonPairModel(), TimeGrid(1.0, 10)),
    (StructureDrivenModel("b", phi=1.0, alpha=1.0, kappa=Coefficient(1.0, 0.5)), TimeGrid(1.0, 10)),
    (BivariateDiffusionModel(), TimeGrid(1.0, 10)),
    (RandomTimeModel("gaussian", breaks=(0.0, 3.0), values=(1.0,)), TimeGrid(2.0, 10)),
])
def test_paths_do_not_depend_on_the_path_count(model, grid):
    small = model.simulate(grid, 5, SEED)
    big = model.simulate(grid, 12, SEED)
    for name, arr in small.series.items():
        assert np.array_equal(arr, big[name][:5]), name
    again = model.simulate(grid, 5, SEED)
    for name, arr in small.series.items():
        assert np.array_equal(arr, again[name])
