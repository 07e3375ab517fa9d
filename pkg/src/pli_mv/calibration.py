"""Calibration of the multiplier pair ``(y, lam)``.

``y`` enforces the budget ``E[xi_T X_T] = x0`` and ``lam`` the fixed point
``lam = 1 + 2 gamma E[F(X_T)]``. Both equations are evaluated in closed form
and solved by nested bisection: ``y`` for fixed ``lam`` (the budget residual
is strictly decreasing in ``y``), then ``lam`` on a bracket that starts just
above the lower bound ``C``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .contract import ContractParams
from .lagrangian import Multipliers, Thresholds, thresholds
from .market import MIN_HORIZON_VARIANCE, MarketCurves, d_scores_from_integrals, integrate_coefficients, norm_cdf
from .strategy import wealth_and_hedge

LAMBDA_EQUATIONS = ("undiscounted", "exact")


class CalibrationError(RuntimeError):
    """Root finding failed; ``diagnostics`` carries the brackets visited."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class Scenario:
    params: ContractParams
    curves: MarketCurves
    x0: float
    T: float

    def __post_init__(self):
        if not self.x0 > 0:
            raise ValueError(f"initial wealth must be positive, got {self.x0}")
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        if abs(self.curves.T - self.T) > 1e-12:
            raise ValueError(f"market curves end at {self.curves.T}, horizon is {self.T}")

    def horizon_integrals(self) -> tuple[float, float]:
        return integrate_coefficients(self.curves, 0.0, self.T)


@dataclass(frozen=True)
class CalibrationSolution:
    y: float
    lam: float
    C: float
    residual_f1: float
    residual_f2: float
    iterations: int
    thresholds: Thresholds
    bracket_history: list[tuple[float, float]] = field(default_factory=list)
    lambda_equation: str = "undiscounted"

    @property
    def multipliers(self) -> Multipliers:
        return Multipliers(self.y, self.lam)

    @classmethod
    def from_multipliers(cls, scenario: Scenario, y: float, lam: float) -> "CalibrationSolution":
        """Wrap a hand-picked multiplier pair; residuals are left as NaN."""
        m = Multipliers(y, lam)
        return cls(y, lam, lambda_lower_bound(scenario), math.nan, math.nan, 0, thresholds(scenario.params, m))

    def to_dict(self) -> dict:
        return {
            "y": self.y,
            "lambda": self.lam,
            "C": self.C,
            "residual_f1": self.residual_f1,
            "residual_f2": self.residual_f2,
            "iterations": self.iterations,
            "lambda_equation": self.lambda_equation,
            "xi_star": self.thresholds.xi_star,
            "bracket_history": [list(b) for b in self.bracket_history],
        }


def lambda_lower_bound(scenario: Scenario) -> float:
    p = scenario.params
    int_r, _ = scenario.horizon_integrals()
    w = scenario.x0 * math.exp(int_r)
    if w <= p.k1:
        return -2 * p.gamma * p.alpha * p.k0
    if w <= p.k2:
        return 2 * p.gamma * p.alpha * (w - p.k1 - p.k0)
    return 2 * p.gamma * (p.alpha_tilde * w + p.alpha2 * p.k2 - p.alpha * (p.k0 + p.k1))


def _integrals(scenario: Scenario) -> tuple[float, float]:
    int_r, int_k2 = scenario.horizon_integrals()
    if int_k2 < MIN_HORIZON_VARIANCE:
        raise ValueError("the market has no Sharpe variance over the horizon; the residuals are undefined")
    return int_r, int_k2


def budget_value(scenario: Scenario, th: Thresholds, m: Multipliers) -> float:
    """Closed-form ``E[xi_T X_T]``."""
    int_r, int_k2 = _integrals(scenario)
    return float(wealth_and_hedge(scenario.params, th, m, 1.0, int_r, int_k2)[0])


def _cdfs(th: Thresholds, int_r: float, int_k2: float):
    pts = np.array([th.xi1_star, th.lo2, th.xi2_star, th.lo3, th.xi3_star])
    d0, d1, _ = d_scores_from_integrals(pts, 1.0, int_r, int_k2)
    return norm_cdf(d0), norm_cdf(d1)


def expected_payoff(scenario: Scenario, th: Thresholds, m: Multipliers) -> float:
    """Closed-form ``E[F(X_T)]`` over the four payoff regions."""
    p = scenario.params
    int_r, int_k2 = _integrals(scenario)
    P0, P1 = _cdfs(th, int_r, int_k2)
    disc = math.exp(-int_r)
    prob1, prob2, prob3 = P0[0], P0[2] - P0[1], P0[4] - P0[3]
    # E[xi_T 1{region}]
    mass1, mass3 = disc * P1[0], disc * (P1[4] - P1[3])
    at, a, g = p.alpha_tilde, p.alpha, p.gamma
    return float(
        (m.lam * at * prob1 - m.y * mass1) / (2 * g * at)
        + p.plateau_payoff * prob2
        + (m.lam * a * prob3 - m.y * mass3) / (2 * g * a)
        - a * p.k0 * (1.0 - prob1 - prob2 - prob3)
    )


def _f2_undiscounted(scenario: Scenario, th: Thresholds, m: Multipliers) -> float:
    # Term-by-term form of the lambda equation, already net of lam; its
    # y-term carries no discount factor, which matters only when int r != 0.
    p = scenario.params
    int_r, int_k2 = _integrals(scenario)
    P0, P1 = _cdfs(th, int_r, int_k2)
    a, at, g = p.alpha, p.alpha_tilde, p.gamma
    f2 = (
        1
        - 2 * g * a * p.k0
        + 2 * g * a * p.k0 * (P0[4] - P0[3] + P0[2] - P0[1] + P0[0])
        + m.lam * (-1 + P0[4] - P0[3] + P0[0])
        - m.y * (P1[4] / a - P1[3] / a + P1[0] / at)
        + 2 * g * a * (p.k2 - p.k1 - p.k0) * (P0[2] - P0[1])
    )
    return float(f2)


def kkt_residuals(scenario: Scenario, m: Multipliers, lambda_equation: str = "undiscounted") -> tuple[float, float]:
    """``(f1, f2)`` at multipliers ``m``.

    ``f1 = E[xi_T X_T] - x0``. ``f2`` is the residual of the lambda equation:
    with ``lambda_equation="exact"`` it is ``1 + 2 gamma E[F] - lam``; the
    default ``"undiscounted"`` form omits the discount factor on the ``y`` term.
    """
    if lambda_equation not in LAMBDA_EQUATIONS:
        raise ValueError(f"lambda_equation must be one of {LAMBDA_EQUATIONS}")
    th = thresholds(scenario.params, m)
    f1 = budget_value(scenario, th, m) - scenario.x0
    if lambda_equation == "exact":
        f2 = 1 + 2 * scenario.params.gamma * expected_payoff(scenario, th, m) - m.lam
    else:
        f2 = _f2_undiscounted(scenario, th, m)
    return f1, f2


def _f1(scenario: Scenario, y: float, lam: float) -> float:
    m = Multipliers(y, lam)
    return budget_value(scenario, thresholds(scenario.params, m), m) - scenario.x0


def solve_y_given_lambda(scenario: Scenario, lam: float, *, max_doublings: int = 1000) -> float:
    """Unique ``y`` solving the budget equation at fixed ``lam > C``."""
    C = lambda_lower_bound(scenario)
    if not lam > C:
        raise ValueError(f"lambda={lam} must exceed the lower bound C={C}")
    tol = 1e-10 * max(1.0, scenario.x0)
    lo, hi = 0.5, 2.0
    f_lo, f_hi = _f1(scenario, lo, lam), _f1(scenario, hi, lam)
    n = 0
    while f_lo <= 0:
        if abs(f_lo) <= tol:
            return lo
        hi, f_hi = lo, f_lo
        lo *= 0.5
        f_lo = _f1(scenario, lo, lam)
        n += 1
        if n > max_doublings:
            raise CalibrationError("budget bracket did not open towards y -> 0", {"lambda": lam, "y_lo": lo})
    while f_hi > 0:
        lo, f_lo = hi, f_hi
        hi *= 2.0
        f_hi = _f1(scenario, hi, lam)
        n += 1
        if n > max_doublings:
            raise CalibrationError("budget bracket did not close towards y -> inf", {"lambda": lam, "y_hi": hi})
    if abs(f_hi) <= tol:
        return hi
    while True:
        mid = 0.5 * (lo + hi)
        f_mid = _f1(scenario, mid, lam)
        if abs(f_mid) <= tol or hi - lo <= 1e-14 * mid:
            return mid
        if f_mid > 0:
            lo = mid
        else:
            hi = mid


def calibrate(
    scenario: Scenario,
    *,
    lambda_equation: str = "undiscounted",
    max_outer: int = 200,
    initial_step: float = 1e-3,
) -> CalibrationSolution:
    """Solve both equations; returns the smallest bracketed ``lam`` root.

    The outer scan moves ``lam`` upward from ``C + eps`` by geometrically
    growing steps and bisects the first sign change of
    ``g(lam) = f2(y*(lam), lam)``.
    """
    if lambda_equation not in LAMBDA_EQUATIONS:
        raise ValueError(f"lambda_equation must be one of {LAMBDA_EQUATIONS}")
    C = lambda_lower_bound(scenario)
    scale = max(1.0, abs(C))
    history: list[tuple[float, float]] = []

    def g(lam: float) -> tuple[float, float]:
        y = solve_y_given_lambda(scenario, lam)
        return kkt_residuals(scenario, Multipliers(y, lam), lambda_equation)[1], y

    lo = C + 1e-6 * scale
    g_lo, _ = g(lo)
    if not g_lo > 0:
        raise CalibrationError(
            f"lambda residual is {g_lo} just above C={C}; expected a positive value",
            {"C": C, "lambda_lo": lo},
        )
    step = initial_step * scale
    hi = lo + step
    g_hi, y_hi = g(hi)
    it = 1
    history.append((lo, hi))
    while g_hi >= 0:
        if it >= max_outer:
            raise CalibrationError("no sign change of the lambda residual", {"C": C, "brackets": history})
        lo, g_lo = hi, g_hi
        step *= 2.0
        hi = lo + step
        g_hi, y_hi = g(hi)
        it += 1
        history.append((lo, hi))

    lam, y, g_mid = hi, y_hi, g_hi
    while abs(g_mid) > 1e-8 * max(1.0, abs(lam)):
        if it >= max_outer:
            raise CalibrationError("lambda bisection did not converge", {"C": C, "brackets": history})
        if hi - lo <= 4 * np.finfo(float).eps * abs(hi):
            break
        lam = 0.5 * (lo + hi)
        g_mid, y = g(lam)
        it += 1
        if g_mid > 0:
            lo = lam
        else:
            hi = lam
        history.append((lo, hi))

    f1, f2 = kkt_residuals(scenario, Multipliers(y, lam), lambda_equation)
    return CalibrationSolution(
        y=y,
        lam=lam,
        C=C,
        residual_f1=f1,
        residual_f2=f2,
        iterations=it,
        thresholds=thresholds(scenario.params, Multipliers(y, lam)),
        bracket_history=history,
        lambda_equation=lambda_equation,
    )
