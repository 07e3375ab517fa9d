"""Monte Carlo replay of the optimal strategy.

Wealth and risky fractions along each path come from the closed forms
evaluated at the exact density path. An Euler discretisation of the
self-financing wealth equation, driven by the same Brownian increments, is
available separately as a replication check.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .calibration import CalibrationSolution, Scenario
from .contract import ProductVariant, Variant, payoff_F, split_payoffs, variant_of
from .lagrangian import optimal_terminal_wealth
from .market import grid_increments, stream_normals
from .strategy import GUARD_VARIANCE, degenerate_wealth, fraction_from_hedge, wealth_and_hedge

THREADS_ENV = "PLI_MV_THREADS"
REPLICATION_LADDER = (0.04, 0.02, 0.01, 0.005)


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 10000
    dt: float = 0.01
    seed: int = 0
    record_paths: int = 10
    antithetic: bool = False

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.record_paths < 0:
            raise ValueError("record_paths must be nonnegative")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    def grid(self, scenario: Scenario) -> np.ndarray:
        """Uniform grid with step ``dt``; ``dt`` must divide ``T``."""
        n = round(scenario.T / self.dt)
        if n < 1 or abs(n * self.dt - scenario.T) > 1e-12 * max(1.0, scenario.T):
            raise ValueError(f"dt={self.dt} does not divide T={scenario.T}")
        return np.linspace(0.0, scenario.T, n + 1)


@dataclass
class EnsembleSummary:
    mean_terminal_wealth: float
    mean_insurer: float | None
    mean_policyholder: float | None
    weighted_avg_fraction: np.ndarray
    J_estimate: float
    J_stderr: float
    mean_terminal_F: float
    budget_mean: float
    budget_stderr: float
    lambda_mc: float
    lambda_mc_stderr: float
    replication_rmse: float | None = None

    def to_dict(self) -> dict:
        curve = self.weighted_avg_fraction
        finite = np.flatnonzero(np.all(np.isfinite(curve), axis=-1))
        return {
            "mean_terminal_wealth": self.mean_terminal_wealth,
            "mean_insurer": self.mean_insurer,
            "mean_policyholder": self.mean_policyholder,
            "mean_terminal_F": self.mean_terminal_F,
            "J_estimate": self.J_estimate,
            "J_stderr": self.J_stderr,
            "budget_mean": self.budget_mean,
            "budget_stderr": self.budget_stderr,
            "lambda_mc": self.lambda_mc,
            "lambda_mc_stderr": self.lambda_mc_stderr,
            "weighted_fraction_start": curve[finite[0]].tolist() if finite.size else None,
            "weighted_fraction_end": curve[finite[-1]].tolist() if finite.size else None,
            "replication_rmse": self.replication_rmse,
        }


@dataclass
class PathEnsemble:
    """Simulation output.

    Full per-path trajectories are kept only for the first ``record_paths``
    paths; aggregate curves over all paths are accumulated on the fly.
    ``fraction_paths`` and the fraction curves are NaN at ``t = T``.
    """

    scenario: Scenario
    solution: CalibrationSolution
    times: np.ndarray
    xi_paths: np.ndarray
    wealth_paths: np.ndarray
    fraction_paths: np.ndarray
    xi_T: np.ndarray
    wealth_T: np.ndarray
    terminal_F: np.ndarray
    mean_wealth: np.ndarray
    weighted_fraction: dict[str, np.ndarray]
    summary: EnsembleSummary | None = field(default=None)

    @property
    def n_paths(self) -> int:
        return self.xi_T.size


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def path_increments(scenario: Scenario, grid: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Brownian increments of shape ``(n_paths, n_steps, d)``.

    Path ``i`` reads substream ``i`` (or ``i // 2`` with sign flip for odd
    ``i`` when antithetic), so a path never depends on the others.
    """
    dt = np.diff(grid)
    d = scenario.curves.dimension
    out = np.empty((cfg.n_paths, dt.size, d))
    sq = np.sqrt(dt)[:, None]
    for i in range(cfg.n_paths):
        if cfg.antithetic:
            z = stream_normals(cfg.seed, i // 2, (dt.size, d))
            if i % 2:
                z = -z
        else:
            z = stream_normals(cfg.seed, i, (dt.size, d))
        out[i] = z * sq
    return out


def density_paths(scenario: Scenario, grid: np.ndarray, dW: np.ndarray) -> np.ndarray:
    ir, ik2, kap, _, _ = grid_increments(scenario.curves, grid)
    log_steps = -(ir + 0.5 * ik2) - np.einsum("pnd,nd->pn", dW, kap)
    out = np.zeros((dW.shape[0], grid.size))
    np.cumsum(log_steps, axis=1, out=out[:, 1:])
    return np.exp(out)


def _column(scenario: Scenario, sol: CalibrationSolution, grid, tail_r, tail_k2, xi_col, j):
    """Wealth and fractions of every path at grid index ``j``."""
    p, th, m = scenario.params, sol.thresholds, sol.multipliers
    d = scenario.curves.dimension
    if j == grid.size - 1:
        return optimal_terminal_wealth(p, th, m, xi_col), np.full((xi_col.size, d), np.nan)
    _, _, sigma, kappa = scenario.curves.coefficients_at(grid[j])
    if tail_k2[j] < GUARD_VARIANCE:
        wealth = degenerate_wealth(p, th, m, xi_col, tail_r[j])
        return wealth, np.zeros((xi_col.size, d))
    wealth, hedge = wealth_and_hedge(p, th, m, xi_col, tail_r[j], tail_k2[j])
    return wealth, fraction_from_hedge(sigma, kappa, hedge, wealth)


def _tail_integrals(scenario: Scenario, grid: np.ndarray):
    ir, ik2, _, _, _ = grid_increments(scenario.curves, grid)
    tail_r = np.concatenate([np.cumsum(ir[::-1])[::-1], [0.0]])
    tail_k2 = np.concatenate([np.cumsum(ik2[::-1])[::-1], [0.0]])
    return tail_r, tail_k2


WEIGHTINGS = ("wealth", "amount")


def _weighted(frac: np.ndarray, wealth: np.ndarray, weighting: str) -> np.ndarray:
    """Cross-sectional average of ``frac`` at one time.

    ``"wealth"`` weights path ``i`` by ``X_i``, giving aggregate invested
    amount over aggregate wealth. ``"amount"`` weights each component by the
    absolute invested amount ``|u^k_i X_i|``.
    """
    if weighting == "wealth":
        w = np.broadcast_to(np.abs(wealth)[:, None], frac.shape)
    else:
        w = np.abs(frac * wealth[:, None])
    total = w.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, ((w / np.where(total > 0, total, 1.0)) * frac).sum(axis=0), np.nan)


def simulate_ensemble(scenario: Scenario, sol: CalibrationSolution, cfg: SimConfig) -> PathEnsemble:
    grid = cfg.grid(scenario)
    dW = path_increments(scenario, grid, cfg)
    xi = density_paths(scenario, grid, dW)
    del dW
    tail_r, tail_k2 = _tail_integrals(scenario, grid)
    n_t, d = grid.size, scenario.curves.dimension
    n_rec = min(cfg.record_paths, cfg.n_paths)

    wealth_rec = np.empty((n_rec, n_t))
    frac_rec = np.empty((n_rec, n_t, d))
    mean_wealth = np.empty(n_t)
    weighted = {k: np.empty((n_t, d)) for k in WEIGHTINGS}
    wealth_T = None

    def work(j):
        return j, _column(scenario, sol, grid, tail_r, tail_k2, xi[:, j], j)

    def store(j, wealth, frac):
        nonlocal wealth_T
        wealth_rec[:, j] = wealth[:n_rec]
        frac_rec[:, j] = frac[:n_rec]
        mean_wealth[j] = wealth.mean()
        for k in WEIGHTINGS:
            weighted[k][j] = _weighted(frac, wealth, k) if j < n_t - 1 else np.nan
        if j == n_t - 1:
            wealth_T = wealth

    n_workers = worker_count()
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            for j, (wealth, frac) in pool.map(work, range(n_t)):
                store(j, wealth, frac)
    else:
        for j in range(n_t):
            store(j, *work(j)[1])

    ens = PathEnsemble(
        scenario=scenario,
        solution=sol,
        times=grid,
        xi_paths=xi[:n_rec].copy(),
        wealth_paths=wealth_rec,
        fraction_paths=frac_rec,
        xi_T=xi[:, -1].copy(),
        wealth_T=wealth_T,
        terminal_F=np.asarray(payoff_F(scenario.params, wealth_T)),
        mean_wealth=mean_wealth,
        weighted_fraction=weighted,
    )
    return ens


def weighted_average_strategy(ensemble: PathEnsemble, weighting: str = "wealth") -> np.ndarray:
    """Average risky fraction over time, shape ``(n_times, d)``.

    ``weighting="wealth"`` returns aggregate invested amount divided by
    aggregate wealth; ``"amount"`` weights each fraction by ``|u^k X|``.
    Times at which every weight vanishes are NaN, as is ``t = T``.
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    return ensemble.weighted_fraction[weighting]


def _stderr(x: np.ndarray) -> float:
    return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0


def summarize(
    ensemble: PathEnsemble,
    variant: ProductVariant | None = None,
    replication_rmse: float | None = None,
    weighting: str = "wealth",
) -> EnsembleSummary:
    p = ensemble.scenario.params
    variant = variant if variant is not None else variant_of(p)
    X, F = ensemble.wealth_T, ensemble.terminal_F
    mean_ins = mean_pol = None
    if variant.tag in (Variant.NON_PROTECTED, Variant.PROTECTED):
        pol, ins = split_payoffs(variant, X, alpha2=p.alpha2, k2=p.k2)
        mean_pol, mean_ins = float(pol.mean()), float(ins.mean())
    var_F = float(F.var(ddof=1)) if F.size > 1 else 0.0
    # delta method: d/dF_i of mean - gamma var
    J_infl = F - p.gamma * (F - F.mean()) ** 2
    budget = ensemble.xi_T * X
    lam_terms = 1 + 2 * p.gamma * F
    summary = EnsembleSummary(
        mean_terminal_wealth=float(X.mean()),
        mean_insurer=mean_ins,
        mean_policyholder=mean_pol,
        weighted_avg_fraction=weighted_average_strategy(ensemble, weighting),
        J_estimate=float(F.mean() - p.gamma * var_F),
        J_stderr=_stderr(J_infl),
        mean_terminal_F=float(F.mean()),
        budget_mean=float(budget.mean()),
        budget_stderr=_stderr(budget),
        lambda_mc=float(lam_terms.mean()),
        lambda_mc_stderr=_stderr(lam_terms),
        replication_rmse=replication_rmse,
    )
    ensemble.summary = summary
    return summary


@dataclass(frozen=True)
class ReplicationLevel:
    dt: float
    rmse: float
    relative_rmse: float
    n_used: int
    n_excluded: int


@dataclass(frozen=True)
class ReplicationReport:
    levels: tuple[ReplicationLevel, ...]
    mean_terminal_wealth: float

    def rmse_at(self, dt: float) -> float:
        for lv in self.levels:
            if abs(lv.dt - dt) < 1e-12:
                return lv.rmse
        raise KeyError(dt)

    def decay_ratios(self) -> list[float]:
        return [a.rmse / b.rmse if b.rmse > 0 else math.inf for a, b in zip(self.levels, self.levels[1:])]

    def is_monotone(self) -> bool:
        r = [lv.rmse for lv in self.levels]
        return all(b < a for a, b in zip(r, r[1:]))


def _euler_terminal(scenario, sol, grid, xi, dW):
    """Wealth at ``T`` from stepping the self-financing equation on ``grid``.

    The bond part grows by its exact factor ``e^{int r}`` per step; the risky
    part ``u^T (mu - r) dt + u^T sigma dW`` is an Euler step. Paths whose
    wealth reaches zero are frozen there and reported as not alive.
    """
    tail_r, tail_k2 = _tail_integrals(scenario, grid)
    ir, _, _, dt, seg = grid_increments(scenario.curves, grid)
    X = np.full(xi.shape[0], scenario.x0)
    alive = np.ones(xi.shape[0], dtype=bool)
    for j in range(grid.size - 1):
        s = seg[j]
        r, mu, sigma = scenario.curves.r[s], scenario.curves.mu[s], scenario.curves.sigma[s]
        _, frac = _column(scenario, sol, grid, tail_r, tail_k2, xi[:, j], j)
        excess = frac @ (mu - r) * dt[j] + np.einsum("pd,de,pe->p", frac, sigma, dW[:, j])
        X = X * (math.exp(ir[j]) + excess)
        alive &= X > 0
        X = np.where(alive, X, 0.0)
    return X, alive


def replication_diagnostics(
    scenario: Scenario, sol: CalibrationSolution, cfg: SimConfig, ladder=REPLICATION_LADDER
) -> ReplicationReport:
    """Euler replication error across a ladder of step sizes.

    All levels share the Brownian increments of the finest level, summed over
    blocks for the coarser ones, and the RMSE is taken over the paths that stay
    solvent at every level, so differences between levels reflect the step
    size alone. ``n_excluded`` counts the paths lost at each level.
    """
    ladder = tuple(sorted(ladder, reverse=True))
    fine_cfg = SimConfig(cfg.n_paths, ladder[-1], cfg.seed, 0, cfg.antithetic)
    fine = fine_cfg.grid(scenario)
    dW = path_increments(scenario, fine, fine_cfg)
    xi = density_paths(scenario, fine, dW)
    target = np.asarray(
        optimal_terminal_wealth(scenario.params, sol.thresholds, sol.multipliers, xi[:, -1])
    )
    runs = []
    for h in ladder:
        grid = SimConfig(cfg.n_paths, h, cfg.seed).grid(scenario)
        block = round(h / ladder[-1])
        if abs(block * ladder[-1] - h) > 1e-12:
            raise ValueError(f"step {h} is not a multiple of the finest step {ladder[-1]}")
        dW_h = dW.reshape(dW.shape[0], -1, block, dW.shape[2]).sum(axis=2)
        runs.append(_euler_terminal(scenario, sol, grid, xi[:, ::block], dW_h))
    # compare every level on the same paths: those solvent at all step sizes
    common = np.logical_and.reduce([alive for _, alive in runs])
    levels = []
    for h, (X, alive) in zip(ladder, runs):
        err = X[common] - target[common]
        rmse = float(np.sqrt(np.mean(err**2))) if err.size else math.nan
        levels.append(
            ReplicationLevel(h, rmse, rmse / float(target.mean()), int(common.sum()), int((~alive).sum()))
        )
    return ReplicationReport(tuple(levels), float(target.mean()))
