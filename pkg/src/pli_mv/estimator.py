"""Estimator-style facade over calibration and the closed forms.

``fit`` calibrates the multipliers for a scenario; ``predict`` maps terminal
density values to optimal terminal wealth. Hyperparameters follow the usual
``get_params``/``set_params`` protocol, so the object can be cloned and
parameter-swept like any other estimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .calibration import Scenario, calibrate
from .contract import ProductVariant, Variant, build_params, payoff_F
from .lagrangian import insurer_terminal_payoff, optimal_terminal_wealth
from .market import MarketCurves
from .strategy import risky_fraction_at, wealth_at


def _positive_column(X, name="xi"):
    X = check_array(X, ensure_2d=False, dtype=float)
    X = np.asarray(X).reshape(-1)
    if np.any(X <= 0):
        raise ValueError(f"{name} values must be positive")
    return X


class MeanVarianceInsurer(BaseEstimator):
    """Pre-committed mean-variance optimal investment for one contract.

    Parameters
    ----------
    variant : {"non_protected", "protected", "no_participation", "custom"}
        Product family. For ``"custom"`` all of ``k0``, ``k1``, ``alpha`` are used.
    G : float
        Guarantee for the two guaranteed products.
    k0, k1, alpha : float or None
        Payoff shape; ignored where the variant fixes them.
    k2, alpha2, gamma : float
        Participation threshold, participation rate and risk aversion.
    x0, T : float
        Initial wealth and horizon.
    r, mu, sigma : float
        Constant one-asset market.
    lambda_equation : {"undiscounted", "exact"}
        Form of the lambda equation used by the calibration.
    """

    def __init__(
        self,
        variant="non_protected",
        G=2.5,
        k0=None,
        k1=None,
        k2=7.0,
        alpha=None,
        alpha2=0.25,
        gamma=0.25,
        x0=4.0,
        T=10.0,
        r=0.02,
        mu=0.08,
        sigma=0.2,
        lambda_equation="undiscounted",
    ):
        self.variant = variant
        self.G = G
        self.k0 = k0
        self.k1 = k1
        self.k2 = k2
        self.alpha = alpha
        self.alpha2 = alpha2
        self.gamma = gamma
        self.x0 = x0
        self.T = T
        self.r = r
        self.mu = mu
        self.sigma = sigma
        self.lambda_equation = lambda_equation

    def _scenario(self) -> Scenario:
        tag = Variant(self.variant)
        pv = ProductVariant(tag, self.G if tag in (Variant.NON_PROTECTED, Variant.PROTECTED) else None)
        fields = dict(k0=self.k0, k1=self.k1, k2=self.k2, alpha=self.alpha, alpha2=self.alpha2, gamma=self.gamma)
        if tag is Variant.NO_PARTICIPATION:
            fields["alpha2"] = None
        params = build_params(pv, **fields)
        curves = MarketCurves.constant(self.r, [self.mu], [[self.sigma]], self.T)
        return Scenario(params, curves, float(self.x0), float(self.T))

    def fit(self, X=None, y=None):
        """Calibrate ``(y, lambda)``. ``X`` and ``y`` are ignored."""
        self.scenario_ = self._scenario()
        self.solution_ = calibrate(self.scenario_, lambda_equation=self.lambda_equation)
        self.multiplier_y_ = self.solution_.y
        self.lambda_ = self.solution_.lam
        self.thresholds_ = self.solution_.thresholds
        return self

    def predict(self, X):
        """Optimal terminal wealth for terminal density values ``X``."""
        check_is_fitted(self, "solution_")
        xi = _positive_column(X)
        return np.asarray(
            optimal_terminal_wealth(self.scenario_.params, self.thresholds_, self.solution_.multipliers, xi)
        )

    def transform(self, X):
        """Columns ``(terminal wealth, insurer payoff)`` for density values ``X``."""
        check_is_fitted(self, "solution_")
        xi = _positive_column(X)
        m = self.solution_.multipliers
        return np.column_stack(
            [
                optimal_terminal_wealth(self.scenario_.params, self.thresholds_, m, xi),
                insurer_terminal_payoff(self.scenario_.params, self.thresholds_, m, xi),
            ]
        )

    def wealth(self, t, X):
        """Interim optimal wealth at time ``t`` for density values ``X``."""
        check_is_fitted(self, "solution_")
        return np.asarray(wealth_at(self.scenario_, self.solution_, t, _positive_column(X)))

    def risky_fraction(self, t, X):
        """Optimal risky fraction at time ``t``; shape ``(n, d)``."""
        check_is_fitted(self, "solution_")
        xi = _positive_column(X)
        return np.array([risky_fraction_at(self.scenario_, self.solution_, t, v).fraction for v in xi])

    def score(self, X, y=None):
        """Sample ``mean(F) - gamma var(F)`` of the optimal payoff at terminal densities ``X``."""
        F = payoff_F(self.scenario_.params, self.predict(X))
        return float(np.mean(F) - self.scenario_.params.gamma * np.var(F))
