import math

import numpy as np
import pytest

from pli_mv.calibration import CalibrationSolution, Scenario, calibrate
from pli_mv.contract import NO_PARTICIPATION_S4, PROTECTED_S4, ProductVariant, payoff_F
from pli_mv.lagrangian import optimal_terminal_wealth
from pli_mv.market import MarketCurves
from pli_mv.simulation import (
    SimConfig,
    replication_diagnostics,
    simulate_ensemble,
    summarize,
    weighted_average_strategy,
)


def test_config_validation(np_scenario):
    with pytest.raises(ValueError):
        SimConfig(n_paths=0)
    with pytest.raises(ValueError, match="divide"):
        SimConfig(dt=0.03).grid(np_scenario)


def test_reproducible_across_workers(np_scenario, np_solution, monkeypatch):
    cfg = SimConfig(n_paths=300, dt=0.05, seed=3)
    a = simulate_ensemble(np_scenario, np_solution, cfg)
    monkeypatch.setenv("PLI_MV_THREADS", "4")
    b = simulate_ensemble(np_scenario, np_solution, cfg)
    for name in ("xi_T", "wealth_T", "wealth_paths", "mean_wealth"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    for k in a.weighted_fraction:
        assert np.array_equal(a.weighted_fraction[k], b.weighted_fraction[k], equal_nan=True)


def test_paths_do_not_depend_on_ensemble_size(np_scenario, np_solution):
    small = simulate_ensemble(np_scenario, np_solution, SimConfig(n_paths=5, dt=0.1, seed=1, record_paths=5))
    large = simulate_ensemble(np_scenario, np_solution, SimConfig(n_paths=50, dt=0.1, seed=1, record_paths=5))
    assert np.array_equal(small.xi_paths, large.xi_paths)


def test_closed_form_paths(np_scenario, np_solution):
    ens = simulate_ensemble(np_scenario, np_solution, SimConfig(n_paths=200, dt=0.1, seed=2))
    assert np.all(ens.wealth_paths >= 0)
    ok = ens.wealth_paths[:, :-1] > 0
    assert np.all(np.isfinite(ens.fraction_paths[:, :-1][ok]))
    th, m = np_solution.thresholds, np_solution.multipliers
    np.testing.assert_array_equal(ens.wealth_T, optimal_terminal_wealth(np_scenario.params, th, m, ens.xi_T))
    assert ens.wealth_paths[0, 0] == pytest.approx(4.0, abs=1e-8)


def zero_sharpe():
    flat = MarketCurves.constant(0.02, [0.02], [[0.2]], 10.0)
    sc = Scenario(PROTECTED_S4, flat, 4.0, 10.0)
    p = sc.params
    w = sc.x0 * math.exp(0.2)
    lam = 1 + 2 * p.gamma * p.alpha * (w - p.k1 - p.k0)
    # chosen so the deterministic terminal density maps to x0 e^{int r}
    return sc, CalibrationSolution.from_multipliers(sc, p.alpha * math.exp(0.2), lam)


def test_zero_sharpe_paths():
    sc, sol = zero_sharpe()
    ens = simulate_ensemble(sc, sol, SimConfig(n_paths=20, dt=0.1, seed=0))
    np.testing.assert_allclose(ens.wealth_paths, np.broadcast_to(4.0 * np.exp(0.02 * ens.times), ens.wealth_paths.shape), rtol=1e-12)
    assert np.all(ens.fraction_paths[:, :-1] == 0.0)


def test_zero_sharpe_replication_exact():
    sc, sol = zero_sharpe()
    rep = replication_diagnostics(sc, sol, SimConfig(n_paths=10, seed=0))
    assert all(lv.rmse <= 1e-12 for lv in rep.levels)


def test_single_path_weighted_curve(np_scenario, np_solution):
    ens = simulate_ensemble(np_scenario, np_solution, SimConfig(n_paths=1, dt=0.1, seed=5, record_paths=1))
    for weighting in ("wealth", "amount"):
        curve = weighted_average_strategy(ens, weighting)
        assert np.array_equal(curve[:-1], ens.fraction_paths[0, :-1])
        assert np.all(np.isnan(curve[-1]))


def test_summary_single_constant_path():
    sc, sol = zero_sharpe()
    ens = simulate_ensemble(sc, sol, SimConfig(n_paths=1, dt=0.5, seed=0))
    s = summarize(ens)
    assert s.J_estimate == ens.terminal_F[0]


def test_summary_split_and_budget(np_scenario, np_solution):
    ens = simulate_ensemble(np_scenario, np_solution, SimConfig(n_paths=4000, dt=0.1, seed=11))
    s = summarize(ens, ProductVariant.non_protected(2.5))
    assert s.mean_insurer + s.mean_policyholder == pytest.approx(s.mean_terminal_wealth, abs=1e-10)
    assert abs(s.budget_mean - 4.0) < 3 * s.budget_stderr
    assert s.mean_insurer == pytest.approx(s.mean_terminal_F, abs=1e-12)


def test_optimal_beats_no_participation_strategy(np_scenario, np_solution, bench_curves):
    ens = simulate_ensemble(np_scenario, np_solution, SimConfig(n_paths=4000, dt=0.5, seed=21))
    alt_scenario = Scenario(NO_PARTICIPATION_S4, bench_curves, np_scenario.x0, np_scenario.T)
    alt = calibrate(alt_scenario)
    x_alt = optimal_terminal_wealth(alt_scenario.params, alt.thresholds, alt.multipliers, ens.xi_T)
    gamma = np_scenario.params.gamma
    F_opt = ens.terminal_F
    F_alt = payoff_F(np_scenario.params, x_alt)
    J = lambda F: F.mean() - gamma * F.var(ddof=1)
    infl = lambda F: F - gamma * (F - F.mean()) ** 2
    diff = infl(F_opt) - infl(F_alt)
    se = diff.std(ddof=1) / math.sqrt(diff.size)
    assert J(F_opt) >= J(F_alt) - 2 * se


def test_replication_small(np_scenario, np_solution):
    rep = replication_diagnostics(np_scenario, np_solution, SimConfig(n_paths=2000, seed=0))
    assert rep.is_monotone()
    assert all(1.2 <= r <= 2.8 for r in rep.decay_ratios()[:1])
    # measured at this configuration: about 6.2% of the mean terminal wealth
    assert rep.levels[2].relative_rmse < 0.07
