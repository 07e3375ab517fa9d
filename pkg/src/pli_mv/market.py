"""Deterministic-coefficient Black-Scholes market.

Coefficients are piecewise constant between breakpoints, so every time
integral used by the closed forms is an exact segment sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

# Below this remaining variance the d-scores are 0/0; callers switch to the
# terminal formula.
MIN_HORIZON_VARIANCE = 1e-14

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(x):
    """Standard normal cdf with ``norm_cdf(-inf) = 0`` and ``norm_cdf(inf) = 1``.

    Backed by ``scipy.special.ndtr`` (Cephes erf/erfc rational approximations,
    relative error near machine epsilon).
    """
    return ndtr(x)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


@dataclass(frozen=True)
class MarketCurves:
    """Piecewise-constant ``r``, ``mu`` and ``sigma`` on ``[0, T]``.

    Parameters
    ----------
    breakpoints : array of shape (n + 1,)
        Strictly increasing segment boundaries, starting at 0.
    r : array of shape (n,)
        Risk-free rate per segment.
    mu : array of shape (n, d)
        Drift vector per segment.
    sigma : array of shape (n, d, d)
        Volatility matrix per segment.
    sigma_floor : float
        Smallest admissible singular value of every ``sigma`` block.
    """

    breakpoints: np.ndarray
    r: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    sigma_floor: float = 1e-10
    kappa: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float).reshape(-1)
        r = np.asarray(self.r, dtype=float).reshape(-1)
        n = r.size
        if bp.size != n + 1:
            raise ValueError(f"need {n + 1} breakpoints for {n} segments, got {bp.size}")
        if bp[0] != 0.0:
            raise ValueError("breakpoints must start at 0")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ValueError("r must be finite and >= 0")
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim == 1:
            mu = mu.reshape(n, -1)
        d = mu.shape[1]
        sigma = np.asarray(self.sigma, dtype=float).reshape(n, d, d)
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ValueError("mu and sigma must be finite")
        smallest = np.linalg.svd(sigma, compute_uv=False)[:, -1]
        if np.any(smallest < self.sigma_floor):
            raise ValueError(
                f"sigma is singular on some segment (smallest singular value "
                f"{smallest.min():.3g} < floor {self.sigma_floor:g})"
            )
        excess = mu - r[:, None]
        kappa = np.linalg.solve(sigma, excess[..., None])[..., 0]
        if not np.all(np.isfinite(kappa)):
            raise ValueError("Sharpe ratio is not finite")
        for name, value in (("breakpoints", bp), ("r", r), ("mu", mu), ("sigma", sigma), ("kappa", kappa)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    def __eq__(self, other):
        if not isinstance(other, MarketCurves):
            return NotImplemented
        return self.sigma_floor == other.sigma_floor and all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in ("breakpoints", "r", "mu", "sigma")
        )

    __hash__ = None

    @classmethod
    def constant(cls, r: float, mu, sigma, T: float, **kwargs) -> "MarketCurves":
        """Constant coefficients on ``[0, T]``; scalars are read as ``d = 1``."""
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        d = mu.size
        sigma = np.asarray(sigma, dtype=float).reshape(d, d)
        return cls(np.array([0.0, T]), np.array([r]), mu[None, :], sigma[None, :, :], **kwargs)

    @property
    def T(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def dimension(self) -> int:
        return self.mu.shape[1]

    @property
    def n_segments(self) -> int:
        return self.r.size

    def kappa_sq(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.kappa, self.kappa)

    def segment_index(self, t: float) -> int:
        """Index of the segment containing ``t`` (right-continuous, ``T`` maps to the last)."""
        self._check_time(t)
        return int(min(np.searchsorted(self.breakpoints, t, side="right") - 1, self.n_segments - 1))

    def coefficients_at(self, t: float):
        """Return ``(r, mu, sigma, kappa)`` in force at time ``t``."""
        i = self.segment_index(t)
        return float(self.r[i]), self.mu[i], self.sigma[i], self.kappa[i]

    def _check_time(self, t):
        if not (0.0 <= t <= self.T):
            raise ValueError(f"time {t} outside [0, {self.T}]")

    def overlaps(self, t0: float, t1: float) -> np.ndarray:
        """Length of ``[t0, t1]`` falling in each segment."""
        self._check_time(t0)
        self._check_time(t1)
        if t0 > t1:
            raise ValueError(f"t0={t0} > t1={t1}")
        lo = np.clip(self.breakpoints[:-1], t0, t1)
        hi = np.clip(self.breakpoints[1:], t0, t1)
        return hi - lo


def integrate_coefficients(curves: MarketCurves, t0: float, t1: float) -> tuple[float, float]:
    """Exact ``(int r ds, int |kappa|^2 ds)`` over ``[t0, t1]``."""
    w = curves.overlaps(t0, t1)
    return float(w @ curves.r), float(w @ curves.kappa_sq())


@dataclass(frozen=True)
class DensityState:
    t: float
    xi: float

    def __post_init__(self):
        if not self.xi > 0:
            raise ValueError(f"density value must be positive, got {self.xi}")


def _log(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("d-scores need x >= 0")
    with np.errstate(divide="ignore"):
        return np.log(x)


def d_scores_from_integrals(x, xi, int_r: float, int_k2: float):
    """``(d0, d1, d2)`` from precomputed integrals over ``[t, T]``.

    ``x = 0`` maps to ``-inf`` and ``x = inf`` to ``+inf``. ``x`` and ``xi``
    broadcast against each other.
    """
    if int_k2 < MIN_HORIZON_VARIANCE:
        raise ValueError(
            f"remaining Sharpe variance {int_k2:.3g} is degenerate; use the terminal formula"
        )
    s = math.sqrt(int_k2)
    base = _log(x) - np.log(xi) + int_r
    d1 = (base - 0.5 * int_k2) / s
    d0 = (base + 0.5 * int_k2) / s
    d2 = d1 - s
    return d0, d1, d2


def d_scores(curves: MarketCurves, x, state: DensityState):
    """d-scores of threshold(s) ``x`` seen from ``state`` with integrals over ``[t, T]``."""
    if state.t >= curves.T:
        raise ValueError("d-scores need t < T")
    int_r, int_k2 = integrate_coefficients(curves, state.t, curves.T)
    return d_scores_from_integrals(x, state.xi, int_r, int_k2)


def lognormal_partial_expectation(mu: float, sigma: float, a: float, b: float = math.inf) -> float:
    """``E[X 1{a <= X <= b}]`` for ``ln X ~ N(mu, sigma^2)``.

    Open or closed ends give the same value.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if a < 0 or b < 0:
        raise ValueError("interval ends must be nonnegative")
    if a > b:
        raise ValueError(f"empty interval: a={a} > b={b}")
    if a == b:
        return 0.0
    shift = mu + sigma * sigma

    def z(v):
        if v == 0:
            return -math.inf
        if math.isinf(v):
            return math.inf
        return (math.log(v) - shift) / sigma

    return math.exp(mu + 0.5 * sigma * sigma) * float(norm_cdf(z(b)) - norm_cdf(z(a)))


# Normal draws: Philox4x64 counter-based generator (Salmon et al., Random123),
# keyed by (seed, stream), turned into normals by inverse cdf. A path's
# draws depend only on its key, never on the order paths are generated in.


def stream_normals(seed: int, stream: int, size) -> np.ndarray:
    """Standard normals for one substream via inverse cdf of open-interval uniforms."""
    key = np.array([seed, stream], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    bits = gen.integers(0, 1 << 53, size=size, dtype=np.int64)
    u = (bits + 0.5) * (1.0 / (1 << 53))
    return ndtri(u)


def check_grid(curves: MarketCurves, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("time grid needs at least two points")
    if grid[0] != 0.0 or abs(grid[-1] - curves.T) > 1e-12:
        raise ValueError(f"time grid must run from 0 to T={curves.T}")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    inner = curves.breakpoints[1:-1]
    missing = [b for b in inner if np.min(np.abs(grid - b)) > 1e-12]
    if missing:
        raise ValueError(f"time grid must contain the curve breakpoints {missing}")
    return grid


def grid_increments(curves: MarketCurves, grid):
    """Per-step ``(int r, int |kappa|^2, kappa)`` for a grid aligned with the breakpoints."""
    grid = check_grid(curves, grid)
    mids = 0.5 * (grid[:-1] + grid[1:])
    seg = np.clip(np.searchsorted(curves.breakpoints, mids, side="right") - 1, 0, curves.n_segments - 1)
    dt = np.diff(grid)
    return dt * curves.r[seg], dt * curves.kappa_sq()[seg], curves.kappa[seg], dt, seg


def brownian_increments(curves: MarketCurves, grid, seed: int, stream: int) -> np.ndarray:
    """Brownian increments of shape ``(n_steps, d)`` for path ``stream``."""
    grid = check_grid(curves, grid)
    dt = np.diff(grid)
    z = stream_normals(seed, stream, (dt.size, curves.dimension))
    return z * np.sqrt(dt)[:, None]


def density_from_increments(curves: MarketCurves, grid, dW: np.ndarray) -> np.ndarray:
    """Exact density path(s) from Brownian increments.

    ``dW`` has shape ``(..., n_steps, d)``; the result has shape ``(..., n_steps + 1)``.
    """
    ir, ik2, kap, _, _ = grid_increments(curves, grid)
    stoch = np.einsum("...nd,nd->...n", dW, kap)
    log_steps = -(ir + 0.5 * ik2) - stoch
    out = np.zeros(log_steps.shape[:-1] + (log_steps.shape[-1] + 1,))
    np.cumsum(log_steps, axis=-1, out=out[..., 1:])
    return np.exp(out)


def sample_density_path(curves: MarketCurves, grid, seed: int, stream: int) -> list[DensityState]:
    """One exact path of the price density on ``grid``."""
    grid = check_grid(curves, grid)
    xi = density_from_increments(curves, grid, brownian_increments(curves, grid, seed, stream))
    return [DensityState(float(t), float(v)) for t, v in zip(grid, xi)]
