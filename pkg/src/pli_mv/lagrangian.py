"""Pointwise Lagrangian maximisation in density space.

For multipliers ``(y, lam)`` the optimal terminal wealth is a piecewise
linear, non-increasing function of the terminal density value ``xi``. The
breakpoints live in :class:`Thresholds`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .contract import ContractParams, payoff_F

# Slack for the strict comparisons that pick the cutoff xi_star.
TIE_SLACK = 1e-12


@dataclass(frozen=True)
class Multipliers:
    """Budget multiplier ``y`` and mean shift ``lam = 1 + 2 gamma E[F]``."""

    y: float
    lam: float

    def __post_init__(self):
        if not self.y > 0:
            raise ValueError(f"budget multiplier must be positive, got {self.y}")
        if not math.isfinite(self.lam):
            raise ValueError("lambda must be finite")


@dataclass(frozen=True)
class Thresholds:
    xi_hat: float
    xi_bar: float
    xi1_tilde: float
    xi1_star: float
    xi2_tilde: float
    xi2_star: float
    xi3_star: float
    xi_star: float
    # alpha_tilde * xi_hat and alpha * xi_hat, the lower ends of regions 2 and 3
    lo2: float
    lo3: float

    def chain(self) -> tuple[float, ...]:
        """``(xi1*, lo2, xi2*, lo3, xi3*, xi_bar)``, non-decreasing by construction."""
        return (self.xi1_star, self.lo2, self.xi2_star, self.lo3, self.xi3_star, self.xi_bar)


def _greater(a: float, b: float) -> bool:
    return a > b + TIE_SLACK * max(1.0, abs(b))


def thresholds(params: ContractParams, m: Multipliers) -> Thresholds:
    p = params
    a, at, g = p.alpha, p.alpha_tilde, p.gamma
    k0, k1, k2 = p.k0, p.k1, p.k2
    y, lam = m.y, m.lam

    xi_hat = max(0.0, (lam - 2 * g * a * (k2 - k1 - k0)) / y)
    xi_bar = (lam * a + 2 * g * a * a * k0) / y

    disc1 = (a * (k0 + k1) - p.alpha2 * k2) ** 2 - a * a * k0 * k0 + lam / g * (a * k1 - p.alpha2 * k2)
    xi1_tilde = at * xi_hat - 2 * g * at / y * (math.sqrt(max(0.0, disc1)) - at * k2)
    xi1_star = max(0.0, min(at * xi_hat, xi1_tilde))

    xi2_tilde = a * lam / y - (
        g * a * a * (k2 - k1) ** 2 - 2 * g * a * a * k0 * (k2 - k1) + lam * a * k1
    ) / (y * k2)
    xi2_star = max(at * xi_hat, min(a * xi_hat, xi2_tilde))

    rad3 = k1 * k1 + k1 * (2 * k0 + lam / (g * a))
    if rad3 < 0:
        raise ValueError(
            f"lambda={lam} is below -gamma*alpha*(k1 + 2 k0); the middle-branch cutoff is undefined"
        )
    xi3_star = max(a * xi_hat, xi_bar - 2 * g * a * a / y * (math.sqrt(rad3) - k1))

    if _greater(xi3_star, a * xi_hat):
        xi_star = xi3_star
    elif _greater(xi2_star, at * xi_hat):
        xi_star = xi2_star
    else:
        xi_star = xi1_star

    return Thresholds(
        xi_hat=xi_hat,
        xi_bar=xi_bar,
        xi1_tilde=xi1_tilde,
        xi1_star=xi1_star,
        xi2_tilde=xi2_tilde,
        xi2_star=xi2_star,
        xi3_star=xi3_star,
        xi_star=xi_star,
        lo2=at * xi_hat,
        lo3=a * xi_hat,
    )


def _regions(th: Thresholds, xi):
    """Masks of the three half-open intervals ``(0, xi1*]``, ``(lo2, xi2*]``, ``(lo3, xi3*]``."""
    r1 = (xi > 0) & (xi <= th.xi1_star)
    r2 = (xi > th.lo2) & (xi <= th.xi2_star)
    r3 = (xi > th.lo3) & (xi <= th.xi3_star)
    return r1, r2, r3


def _check_xi(xi):
    xi = np.asarray(xi, dtype=float)
    if np.any(~(xi > 0)):
        raise ValueError("density values must be positive")
    return xi


def upper_branch(params: ContractParams, m: Multipliers, xi):
    """Wealth on ``(0, xi1*]``: above ``k2``, slope ``-y / (2 gamma alpha_tilde^2)``."""
    p = params
    at = p.alpha_tilde
    return p.k2 + (m.lam * at - m.y * xi) / (2 * p.gamma * at * at) - p.alpha / at * (p.k2 - p.k1 - p.k0)


def middle_branch(params: ContractParams, m: Multipliers, xi):
    """Wealth on ``(alpha xi_hat, xi3*]``: between ``k1`` and ``k2``."""
    p = params
    return p.k0 + p.k1 + (m.lam * p.alpha - m.y * xi) / (2 * p.gamma * p.alpha * p.alpha)


def optimal_terminal_wealth(params: ContractParams, th: Thresholds, m: Multipliers, xi):
    """Closed-form pointwise maximiser of the Lagrangian; zero beyond ``xi*``."""
    xi = _check_xi(xi)
    r1, r2, r3 = _regions(th, xi)
    out = np.zeros_like(xi)
    out = np.where(r1, upper_branch(params, m, xi), out)
    out = np.where(r2, params.k2, out)
    # with k1 = 0 the branch ends at exactly zero; keep rounding from going negative
    out = np.where(r3, np.maximum(middle_branch(params, m, xi), 0.0), out)
    return out[()] if out.ndim == 0 else out


def insurer_terminal_payoff(params: ContractParams, th: Thresholds, m: Multipliers, xi):
    """Insurer payoff at the optimum, written directly in ``xi``."""
    xi = _check_xi(xi)
    p = params
    r1, r2, r3 = _regions(th, xi)
    out = np.full_like(xi, -p.alpha * p.k0)
    out = np.where(r1, (m.lam * p.alpha_tilde - m.y * xi) / (2 * p.gamma * p.alpha_tilde), out)
    out = np.where(r2, p.plateau_payoff, out)
    out = np.where(r3, (m.lam * p.alpha - m.y * xi) / (2 * p.gamma * p.alpha), out)
    return out[()] if out.ndim == 0 else out


def lagrangian_value(params: ContractParams, m: Multipliers, xi, x):
    """``lam F(x) - gamma F(x)^2 - y xi x``, broadcasting ``xi`` against ``x``."""
    xi = _check_xi(xi)
    f = payoff_F(params, x)
    return m.lam * f - params.gamma * f * f - m.y * xi * np.asarray(x, dtype=float)


def candidate_points(params: ContractParams, m: Multipliers, xi: float) -> np.ndarray:
    """Stationary points of the three concave pieces, the kinks, and zero."""
    p = params
    return np.array(
        [
            0.0,
            float(middle_branch(p, m, xi)),
            float(upper_branch(p, m, xi)),
            p.k1,
            p.k2,
        ]
    )


def brute_force_argmax(
    params: ContractParams, m: Multipliers, xi: float, x_max: float, n_grid: int = 10**6
) -> tuple[float, float]:
    """Exhaustive search for the Lagrangian maximiser on ``[0, x_max]``.

    Independent of :func:`optimal_terminal_wealth`: a uniform grid plus the
    analytic stationary points and kinks that fall in range.
    """
    if n_grid < 1000:
        raise ValueError("n_grid must be at least 1000")
    grid = np.linspace(0.0, x_max, n_grid)
    cands = candidate_points(params, m, xi)
    cands = cands[(cands >= 0) & (cands <= x_max)]
    xs = np.concatenate([grid, cands])
    vals = lagrangian_value(params, m, xi, xs)
    i = int(np.argmax(vals))
    return float(xs[i]), float(vals[i])


def oracle_support(params: ContractParams, m: Multipliers) -> float:
    """A search bound on ``x`` that contains every maximiser, for any ``xi > 0``."""
    p = params
    at = p.alpha_tilde
    return 2.0 * (p.k2 + abs(m.lam) / (2 * p.gamma * at * at) * max(1.0, 1.0 / m.y)) + 2.0 * abs(
        p.alpha / at * (p.k2 - p.k1 - p.k0)
    )


def tilde_loss(params: ContractParams, x):
    """Two-target loss and the participation functional.

    Returns ``(loss, g)`` with ``loss`` the piecewise quadratic distance to
    ``k1 + k0`` (on ``[k1, k2)``) or to the upper target (on ``[k2, inf)``).
    """
    p = params
    x = np.asarray(x, dtype=float)
    a, at = p.alpha, p.alpha_tilde
    upper_gap = x - p.k2 + a / at * (p.k2 - p.k1 - p.k0)
    loss = np.where(
        x < p.k1,
        p.gamma * a * a * p.k0 * p.k0,
        np.where(x < p.k2, p.gamma * a * a * (x - p.k1 - p.k0) ** 2, p.gamma * at * at * upper_gap**2),
    )
    g = np.where(
        (x >= p.k1) & (x < p.k2),
        a * (x - p.k1),
        np.where(x >= p.k2, at * (x - p.k2 + a / at * (p.k2 - p.k1)), 0.0),
    )
    if loss.ndim == 0:
        return loss[()], g[()]
    return loss, g
