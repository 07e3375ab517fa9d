"""Closed-form interim wealth and optimal risky fraction.

The interim wealth is the conditional expectation of the deflated terminal
wealth, which for a lognormal density reduces to normal cdfs of the d-scores
at the five threshold points. The hedge numerator ``v`` is its elasticity
``-xi dX/dxi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .contract import ContractParams
from .lagrangian import Multipliers, Thresholds, optimal_terminal_wealth
from .market import MarketCurves, d_scores_from_integrals, integrate_coefficients, norm_cdf, norm_pdf

if TYPE_CHECKING:
    from .calibration import CalibrationSolution, Scenario

# Remaining Sharpe variance below which the closed form is replaced by its
# point-mass limit.
GUARD_VARIANCE = 1e-10


def _coefficients(p: ContractParams, m: Multipliers):
    at = p.alpha_tilde
    a1 = p.k2 + m.lam / (2 * p.gamma * at) - p.alpha / at * (p.k2 - p.k1 - p.k0)
    b1 = m.y / (2 * p.gamma * at * at)
    a3 = p.k0 + p.k1 + m.lam / (2 * p.gamma * p.alpha)
    b3 = m.y / (2 * p.gamma * p.alpha * p.alpha)
    return a1, b1, a3, b3


def _points(th: Thresholds) -> np.ndarray:
    return np.array([th.xi1_star, th.lo2, th.xi2_star, th.lo3, th.xi3_star])


def wealth_and_hedge(
    params: ContractParams, th: Thresholds, m: Multipliers, xi, int_r: float, int_k2: float
):
    """Interim wealth and hedge numerator for remaining integrals ``(int_r, int_k2)``.

    ``xi`` may be an array; the result has its shape. Requires
    ``int_k2 >= GUARD_VARIANCE``.
    """
    xi = np.asarray(xi, dtype=float)
    _, d1, d2 = d_scores_from_integrals(_points(th), xi[..., None], int_r, int_k2)
    P1, P2 = norm_cdf(d1), norm_cdf(d2)
    p1, p2 = norm_pdf(d1), norm_pdf(d2)
    s = math.sqrt(int_k2)
    disc = math.exp(-int_r)
    growth = math.exp(-2 * int_r + int_k2)
    a1, b1, a3, b3 = _coefficients(params, m)
    k2 = params.k2

    # columns: 0 xi1*, 1 lo2, 2 xi2*, 3 lo3, 4 xi3*
    wealth = (
        a1 * disc * P1[..., 0]
        - b1 * xi * growth * P2[..., 0]
        + k2 * disc * (P1[..., 2] - P1[..., 1])
        + a3 * disc * (P1[..., 4] - P1[..., 3])
        - b3 * xi * growth * (P2[..., 4] - P2[..., 3])
    )
    hedge = (
        a1 * disc * p1[..., 0] / s
        + b1 * xi * growth * (P2[..., 0] - p2[..., 0] / s)
        + k2 * disc * (p1[..., 2] - p1[..., 1]) / s
        + a3 * disc * (p1[..., 4] - p1[..., 3]) / s
        + b3 * xi * growth * ((P2[..., 4] - p2[..., 4] / s) - (P2[..., 3] - p2[..., 3] / s))
    )
    # the terms cancel for very bad states; clip round-off below zero
    wealth = np.maximum(wealth, 0.0)
    if wealth.ndim == 0:
        return wealth[()], hedge[()]
    return wealth, hedge


def degenerate_wealth(params: ContractParams, th: Thresholds, m: Multipliers, xi, int_r: float):
    """Point-mass limit of the interim wealth when no Sharpe variance remains."""
    xi = np.asarray(xi, dtype=float)
    disc = math.exp(-int_r)
    return disc * optimal_terminal_wealth(params, th, m, xi * disc)


def fraction_from_hedge(sigma: np.ndarray, kappa: np.ndarray, hedge, wealth):
    """``(sigma^T)^{-1} kappa * v / X`` broadcast over leading axes of ``hedge``.

    Entries where the wealth is zero get a zero fraction.
    """
    if sigma.shape == (1, 1):
        direction = kappa / sigma[0]
    else:
        direction = np.linalg.solve(sigma.T, kappa)
    hedge = np.asarray(hedge, dtype=float)
    wealth = np.asarray(wealth, dtype=float)
    safe = np.where(wealth > 0, wealth, 1.0)
    ratio = np.where(wealth > 0, hedge / safe, 0.0)
    return ratio[..., None] * direction


def last_wellposed_time(curves: MarketCurves, t: float) -> float | None:
    """Latest time ``s >= t`` whose remaining Sharpe variance is at least the guard.

    ``None`` when even ``[t, T]`` falls short.
    """
    _, total = integrate_coefficients(curves, t, curves.T)
    if total < GUARD_VARIANCE:
        return None
    need = GUARD_VARIANCE
    k2 = curves.kappa_sq()
    bp = curves.breakpoints
    for i in range(curves.n_segments - 1, -1, -1):
        lo = max(bp[i], t)
        chunk = k2[i] * (bp[i + 1] - lo)
        if chunk >= need:
            return float(bp[i + 1] - need / k2[i])
        need -= chunk
    return t


@dataclass(frozen=True)
class StrategyState:
    t: float
    xi: float
    wealth: float
    v: float
    fraction: np.ndarray
    near_maturity: bool = False


def _remaining(scenario: "Scenario", t: float):
    if not (0.0 <= t <= scenario.T):
        raise ValueError(f"time {t} outside [0, {scenario.T}]")
    return integrate_coefficients(scenario.curves, t, scenario.T)


def wealth_at(scenario: "Scenario", sol: "CalibrationSolution", t: float, xi):
    """Optimal wealth ``X_t`` at density value ``xi``.

    Close to maturity (remaining Sharpe variance below ``GUARD_VARIANCE``) the
    point-mass limit ``e^{-int r} X_T(xi e^{-int r})`` is returned instead.
    """
    xi = np.asarray(xi, dtype=float)
    if np.any(~(xi > 0)):
        raise ValueError("density values must be positive")
    int_r, int_k2 = _remaining(scenario, t)
    m, th = sol.multipliers, sol.thresholds
    if int_k2 < GUARD_VARIANCE:
        return degenerate_wealth(scenario.params, th, m, xi, int_r)[()]
    return wealth_and_hedge(scenario.params, th, m, xi, int_r, int_k2)[0]


def risky_fraction_at(scenario: "Scenario", sol: "CalibrationSolution", t: float, xi: float) -> StrategyState:
    """Hedge numerator and risky fraction at ``(t, xi)``.

    Near maturity the state is evaluated at the last well-posed time and the
    result is flagged with ``near_maturity=True``.
    """
    if not xi > 0:
        raise ValueError("density value must be positive")
    _, _, sigma, kappa = scenario.curves.coefficients_at(min(t, scenario.T))
    int_r, int_k2 = _remaining(scenario, t)
    near = int_k2 < GUARD_VARIANCE
    s = t
    if near:
        s = last_wellposed_time(scenario.curves, 0.0)
        if s is None:
            wealth = float(wealth_at(scenario, sol, t, xi))
            return StrategyState(t, xi, wealth, 0.0, np.zeros(scenario.curves.dimension), True)
        int_r, int_k2 = integrate_coefficients(scenario.curves, s, scenario.T)
        _, _, sigma, kappa = scenario.curves.coefficients_at(s)
    wealth, hedge = wealth_and_hedge(scenario.params, sol.thresholds, sol.multipliers, xi, int_r, int_k2)
    if not wealth > 0:
        raise ValueError(f"wealth is {wealth} at t={s}, xi={xi}; the risky fraction is undefined")
    frac = fraction_from_hedge(sigma, kappa, hedge, wealth)
    return StrategyState(t, float(xi), float(wealth), float(hedge), np.asarray(frac, dtype=float), near)
