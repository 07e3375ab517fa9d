import numpy as np
import pytest

from pli_mv.calibration import Scenario, calibrate
from pli_mv.contract import NO_PARTICIPATION_S4, NON_PROTECTED_S4, PROTECTED_S4, ContractParams
from pli_mv.lagrangian import Multipliers
from pli_mv.market import MarketCurves


@pytest.fixture(scope="session")
def bench_curves():
    return MarketCurves.constant(0.02, [0.08], [[0.2]], 10.0)


@pytest.fixture(scope="session")
def np_scenario(bench_curves):
    return Scenario(NON_PROTECTED_S4, bench_curves, 4.0, 10.0)


@pytest.fixture(scope="session")
def pr_scenario(bench_curves):
    return Scenario(PROTECTED_S4, bench_curves, 4.0, 10.0)


@pytest.fixture(scope="session")
def nopart_scenario(bench_curves):
    return Scenario(NO_PARTICIPATION_S4, bench_curves, 4.665, 10.0)


@pytest.fixture(scope="session")
def np_solution(np_scenario):
    return calibrate(np_scenario)


@pytest.fixture(scope="session")
def pr_solution(pr_scenario):
    return calibrate(pr_scenario)


# Reference contract with k0 = 0 and a jump at the cutoff.
REF_PARAMS = ContractParams(k0=0.0, k1=2.5, k2=7.0, alpha=1.0, alpha2=0.5, gamma=0.25)
REF_MULT = Multipliers(y=1.0, lam=3.0)


def random_contract(rng):
    k2 = rng.uniform(0.5, 10.0)
    k0, k1 = rng.dirichlet([1.0, 1.0, 1.0])[:2] * k2
    if rng.random() < 0.2:
        k0 = 0.0
    if rng.random() < 0.2:
        k1 = 0.0
    alpha = rng.uniform(0.2, 2.0)
    alpha2 = rng.uniform(0.0, 0.95) * alpha
    gamma = rng.uniform(0.05, 1.0)
    return ContractParams(k0, k1, k2, alpha, alpha2, gamma)


def random_multipliers(rng, params):
    lo = -2 * params.gamma * params.alpha * params.k0
    return Multipliers(y=rng.uniform(0.05, 5.0), lam=rng.uniform(lo, lo + 10.0))


def lognormal_expectation(fn, mean_log, sd_log, breaks=(), n_nodes=200):
    """``E[fn(Z)]`` for ``ln Z ~ N(mean_log, sd_log^2)`` by piecewise Gauss-Legendre in log space.

    ``breaks`` are points where ``fn`` may jump; each piece between them gets
    its own rule, so the quadrature never straddles a discontinuity.
    """
    lo, hi = mean_log - 12 * sd_log, mean_log + 12 * sd_log
    cuts = sorted({lo, hi, *(np.log(b) for b in breaks if b > 0 and lo < np.log(b) < hi)})
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    total = 0.0
    for a, b in zip(cuts, cuts[1:]):
        u = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        dens = np.exp(-0.5 * ((u - mean_log) / sd_log) ** 2) / (sd_log * np.sqrt(2 * np.pi))
        total += 0.5 * (b - a) * np.sum(weights * fn(np.exp(u)) * dens)
    return total
