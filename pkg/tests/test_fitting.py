from __future__ import annotations

import math

import numpy as np
import pytest

from ginifit.geometry import Rectangle
from ginifit.model.convergence import (Component, _empty_fraction, convergence_experiment,
                                       plan_components, probe_centers)
from ginifit.model.fitting import (FitError, FitResult, estimate_lambda, fit_beta, fit_pattern,
                                   golden_section, implied_area_km2)
from ginifit.model.theory import GinibreParams, theoretical_J
from ginifit.pattern import PointPattern
from ginifit.samplers import Seed, sample_beta_gpp, sample_ppp
from ginifit.summaries import RadialGrid, SummaryEstimate

W = Rectangle(0, 0, 8000, 6000)


def noiseless_summary(beta: float, lam: float, grid: RadialGrid | None = None) -> SummaryEstimate:
    grid = grid or RadialGrid.uniform()
    j = theoretical_J(grid.r_values, GinibreParams.from_intensity(lam, beta))
    nan = np.full(len(grid), np.nan)
    ones = np.ones(len(grid), dtype=np.int64)
    return SummaryEstimate(grid, nan, nan, j, ones, ones)


def test_noiseless_self_consistency():
    res = fit_beta(noiseless_summary(0.65, 3e-6), 3e-6)
    assert abs(res.beta_hat - 0.65) < 1e-3
    assert res.residual >= 0 and res.n_grid_used == 513
    assert res.c_hat == pytest.approx(3e-6 * math.pi)


@pytest.mark.parametrize("beta", [0.05, 0.3, 0.9, 1.1])
def test_noiseless_recovery_across_range(beta):
    # for beta > 1 the model J has a pole (near 530 m at beta = 1.1); stay below it
    grid = RadialGrid.uniform(400 if beta > 1 else 600, 512)
    assert abs(fit_beta(noiseless_summary(beta, 3e-6, grid), 3e-6).beta_hat - beta) < 1e-3


def test_fit_is_deterministic():
    s = noiseless_summary(0.4, 5e-6)
    assert fit_beta(s, 5e-6) == fit_beta(s, 5e-6)


def test_undefined_values_are_skipped():
    s = noiseless_summary(0.65, 3e-6)
    j = s.j_hat.copy()
    j[100:] = np.nan
    s2 = SummaryEstimate(s.grid, s.f_hat, s.g_hat, j, s.n_valid_f, s.n_valid_g)
    res = fit_beta(s2, 3e-6)
    assert res.n_grid_used == 100 and abs(res.beta_hat - 0.65) < 1e-3
    assert res.r_max == pytest.approx(s.r[99])


def test_too_few_values_names_count():
    s = noiseless_summary(0.65, 3e-6)
    j = np.full(len(s.r), np.nan)
    j[:9] = 1.0
    s2 = SummaryEstimate(s.grid, s.f_hat, s.g_hat, j, s.n_valid_f, s.n_valid_g)
    with pytest.raises(FitError, match="only 9"):
        fit_beta(s2, 3e-6)
    with pytest.raises(FitError, match="only 5"):
        fit_beta(noiseless_summary(0.5, 3e-6), 3e-6, r_min=0, r_max=5.0)


def test_r_window_restricts_loss():
    res = fit_beta(noiseless_summary(0.65, 3e-6), 3e-6, r_min=100, r_max=300)
    assert 100 <= res.r_min <= res.r_max <= 300
    assert abs(res.beta_hat - 0.65) < 1e-3


def test_beta_range_validation():
    s = noiseless_summary(0.5, 3e-6)
    with pytest.raises(ValueError):
        fit_beta(s, 3e-6, beta_range=(0.0, 1.0))
    with pytest.raises(ValueError):
        fit_beta(s, 3e-6, beta_range=(0.1, 1.5))
    res = fit_beta(noiseless_summary(1.1, 3e-6, RadialGrid.uniform(400, 100)), 3e-6,
                   beta_range=(0.01, 1.0))
    assert res.beta_hat <= 1.0


def test_golden_section():
    x = golden_section(lambda b: (b - 0.37) ** 2, 0.0, 1.0, 1e-6)
    assert abs(x - 0.37) < 1e-6


def test_estimate_lambda_examples():
    w = Rectangle(0, 0, 5000, 5000)
    pts = np.random.default_rng(0).uniform(0, 5000, (50, 2))
    assert estimate_lambda(PointPattern(pts, w)) * 1e6 == pytest.approx(2.0)
    assert estimate_lambda(PointPattern([[0.5, 0.5]], Rectangle(0, 0, 1, 1))) == 1.0
    with pytest.raises(ValueError):
        estimate_lambda(PointPattern(np.empty((0, 2)), w))


def test_implied_area_table2():
    assert implied_area_km2(185, 3.48) == pytest.approx(53.16, abs=0.01)


def test_fit_result_serialisation():
    res = fit_beta(noiseless_summary(1.1, 3e-6, RadialGrid.uniform(400, 100)), 3e-6, n_points=144)
    d = res.to_dict()
    assert list(d)[:8] == ["beta", "lambda_per_km2", "c_per_m2", "residual", "r_min_m",
                           "r_max_m", "n_points", "n_grid_used"]
    assert d["outside_thinning_range"] is True and d["lambda_per_km2"] == pytest.approx(3.0)
    assert FitResult.from_dict(d) == res


def test_ppp_fits_near_zero():
    fits = [fit_pattern(sample_ppp(3e-6, W, Seed(50, (i,)))).beta_hat for i in range(20)]
    assert np.mean(fits) <= 0.15


@pytest.mark.parametrize("s", [2.0, 0.5, 3.0])
def test_scale_consistency(s):
    p = sample_beta_gpp(GinibreParams.from_intensity(3e-6, 0.7), W, Seed(51))
    grid = RadialGrid.uniform(600, 256)
    a = fit_pattern(p, grid, spacing=80.0)
    b = fit_pattern(p.scaled(s), RadialGrid(grid.r_values * s), spacing=80.0 * s)
    assert b.lambda_hat == pytest.approx(a.lambda_hat / s ** 2, rel=1e-12)
    assert abs(a.beta_hat - b.beta_hat) < 1e-6


# -- superposition experiment --------------------------------------------------

def test_components_validate():
    with pytest.raises(ValueError):
        Component(1.2, 3.0)
    with pytest.raises(ValueError):
        Component(0.5, 0.0)


def test_plan_components():
    comps = [Component(0.8, 10.0)]
    plan = plan_components(comps, 4)
    assert len(plan) == 4 and sum(c.lambda_per_km2 for c in plan) == pytest.approx(10.0)
    two = [Component(0.9, 2.0), Component(0.5, 4.0)]
    assert [c.beta for c in plan_components(two, 3, "none")] == [0.9, 0.5, 0.9]
    assert [c.lambda_per_km2 for c in plan_components(two, 2, "none")] == [2.0, 4.0]
    with pytest.raises(ValueError):
        plan_components(comps, 2, "other")


def test_probe_centers_disjoint_and_inside():
    c = probe_centers(W, 300.0)
    assert len(c) == 130
    d = np.hypot(c[:, None, 0] - c[None, :, 0], c[:, None, 1] - c[None, :, 1])
    np.fill_diagonal(d, np.inf)
    assert d.min() >= 600.0
    assert c[:, 0].min() >= 300 and c[:, 0].max() <= 7700
    assert c[:, 1].min() >= 300 and c[:, 1].max() <= 5700


def test_empty_fraction_brute_force():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 8000, (60, 2))
    centers = probe_centers(W, 300.0)
    brute = np.mean([not np.any(np.hypot(*(pts - c).T) <= 300.0) for c in centers])
    assert _empty_fraction(pts, centers, 300.0) == brute
    assert _empty_fraction(np.empty((0, 2)), centers, 300.0) == 1.0


def test_convergence_rows_are_independent_of_other_stages():
    w = Rectangle(0, 0, 3000, 2000)
    comps = [Component(0.8, 10.0)]
    a = convergence_experiment(comps, [1, 2], w, 2, Seed(5), probe_radius=200)
    b = convergence_experiment(comps, [2], w, 2, Seed(5), probe_radius=200)
    assert a[1] == b[0]
    assert a[0].n == 1 and a[0].reps == 2 and a[1].lambda_total_per_km2 == pytest.approx(10.0)
    assert a[0].p0_poisson == pytest.approx(math.exp(-10e-6 * math.pi * 200 ** 2))


def test_convergence_rejects_bad_input():
    with pytest.raises(ValueError):
        convergence_experiment([Component(0.8, 10.0)], [1], W, 0, 1)
    with pytest.raises(ValueError):
        convergence_experiment([Component(0.8, 10.0)], [1], Rectangle(0, 0, 100, 100), 1, 1)
