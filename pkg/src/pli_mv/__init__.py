"""Mean-variance optimal investment for participating life insurance contracts."""

from .calibration import (
    CalibrationError,
    CalibrationSolution,
    Scenario,
    calibrate,
    expected_payoff,
    kkt_residuals,
    lambda_lower_bound,
    solve_y_given_lambda,
)
from .contract import (
    ContractParams,
    ProductVariant,
    Variant,
    build_params,
    payoff_F,
    split_payoffs,
)
from .lagrangian import (
    Multipliers,
    Thresholds,
    brute_force_argmax,
    insurer_terminal_payoff,
    lagrangian_value,
    optimal_terminal_wealth,
    thresholds,
    tilde_loss,
)
from .market import (
    DensityState,
    MarketCurves,
    d_scores,
    integrate_coefficients,
    lognormal_partial_expectation,
    sample_density_path,
)
from .estimator import MeanVarianceInsurer
from .scenario import ScenarioError, ScenarioFile, load_preset, load_scenario, parse_scenario
from .simulation import (
    EnsembleSummary,
    PathEnsemble,
    SimConfig,
    replication_diagnostics,
    simulate_ensemble,
    summarize,
    weighted_average_strategy,
)
from .strategy import StrategyState, risky_fraction_at, wealth_at

__all__ = [
    "CalibrationError",
    "CalibrationSolution",
    "ContractParams",
    "DensityState",
    "EnsembleSummary",
    "MarketCurves",
    "MeanVarianceInsurer",
    "Multipliers",
    "PathEnsemble",
    "ProductVariant",
    "Scenario",
    "ScenarioError",
    "ScenarioFile",
    "SimConfig",
    "StrategyState",
    "Thresholds",
    "Variant",
    "brute_force_argmax",
    "build_params",
    "calibrate",
    "d_scores",
    "expected_payoff",
    "insurer_terminal_payoff",
    "integrate_coefficients",
    "kkt_residuals",
    "lagrangian_value",
    "lambda_lower_bound",
    "load_preset",
    "load_scenario",
    "lognormal_partial_expectation",
    "optimal_terminal_wealth",
    "parse_scenario",
    "payoff_F",
    "replication_diagnostics",
    "risky_fraction_at",
    "sample_density_path",
    "simulate_ensemble",
    "solve_y_given_lambda",
    "split_payoffs",
    "summarize",
    "thresholds",
    "tilde_loss",
    "wealth_at",
    "weighted_average_strategy",
]
