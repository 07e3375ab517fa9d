"""Participating contract parameters, the insurer payoff and the payoff split."""

from __future__ import annotations

from dataclasses import dataclass, fields
from enum import Enum

import numpy as np


class Variant(str, Enum):
    NON_PROTECTED = "non_protected"
    PROTECTED = "protected"
    NO_PARTICIPATION = "no_participation"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ProductVariant:
    """Product family plus its guarantee ``G`` where one applies."""

    tag: Variant
    G: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "tag", Variant(self.tag))
        if self.tag in (Variant.NON_PROTECTED, Variant.PROTECTED):
            if self.G is None or self.G < 0:
                raise ValueError(f"{self.tag.value} needs a guarantee G >= 0")

    @classmethod
    def non_protected(cls, G: float) -> "ProductVariant":
        return cls(Variant.NON_PROTECTED, G)

    @classmethod
    def protected(cls, G: float) -> "ProductVariant":
        return cls(Variant.PROTECTED, G)

    @classmethod
    def no_participation(cls) -> "ProductVariant":
        return cls(Variant.NO_PARTICIPATION)

    @classmethod
    def custom(cls) -> "ProductVariant":
        return cls(Variant.CUSTOM)


@dataclass(frozen=True)
class ContractParams:
    """Shape of the insurer payoff ``alpha((x - k1)+ - k0) - alpha2 (x - k2)+``.

    ``gamma`` is the mean-variance risk aversion (per currency unit).
    """

    k0: float
    k1: float
    k2: float
    alpha: float
    alpha2: float
    gamma: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v):
                raise ValueError(f"{f.name} must be finite, got {v}")
            object.__setattr__(self, f.name, float(v))
        checks = [
            (self.k0 >= 0, "k0 >= 0"),
            (self.k1 >= 0, "k1 >= 0"),
            (self.k2 > 0, "k2 > 0"),
            (self.k0 <= self.k2, "k0 <= k2"),
            (self.k1 <= self.k2, "k1 <= k2"),
            (self.k0 + self.k1 <= self.k2, "k0 + k1 <= k2"),
            (self.alpha > 0, "alpha > 0"),
            (self.alpha2 >= 0, "alpha2 >= 0"),
            (self.alpha2 < self.alpha, "alpha2 < alpha"),
            (self.gamma > 0, "gamma > 0"),
        ]
        for ok, rule in checks:
            if not ok:
                raise ValueError(f"contract parameters violate {rule}: {self}")

    @property
    def alpha_tilde(self) -> float:
        return self.alpha - self.alpha2

    @property
    def plateau_payoff(self) -> float:
        """Insurer payoff at ``x = k2``."""
        return self.alpha * (self.k2 - self.k1 - self.k0)


def build_params(variant: ProductVariant, **overrides) -> ContractParams:
    """Contract parameters for ``variant`` with field overrides.

    Product presets fix ``alpha = 1`` and place the guarantee in ``k1``
    (non-protected) or ``k0`` (protected); ``NoParticipation`` fixes
    ``alpha2 = k0 = k1 = 0``. Remaining fields come from ``overrides``.
    """
    base: dict[str, float] = {}
    if variant.tag is Variant.NON_PROTECTED:
        base = dict(alpha=1.0, k0=0.0, k1=variant.G)
    elif variant.tag is Variant.PROTECTED:
        base = dict(alpha=1.0, k0=variant.G, k1=0.0)
    elif variant.tag is Variant.NO_PARTICIPATION:
        base = dict(alpha=1.0, alpha2=0.0, k0=0.0, k1=0.0)
    clash = {k for k, v in overrides.items() if k in base and v is not None and v != base[k]}
    if clash:
        raise ValueError(f"{variant.tag.value} fixes {sorted(clash)}; they cannot be overridden")
    values = {**base, **{k: v for k, v in overrides.items() if v is not None}}
    missing = {f.name for f in fields(ContractParams)} - set(values)
    if missing:
        raise ValueError(f"missing contract fields: {sorted(missing)}")
    unknown = set(values) - {f.name for f in fields(ContractParams)}
    if unknown:
        raise ValueError(f"unknown contract fields: {sorted(unknown)}")
    return ContractParams(**values)


NON_PROTECTED_S4 = build_params(ProductVariant.non_protected(2.5), k2=7.0, alpha2=0.25, gamma=0.25)
PROTECTED_S4 = build_params(ProductVariant.protected(2.5), k2=7.0, alpha2=0.25, gamma=0.25)
NO_PARTICIPATION_S4 = build_params(ProductVariant.no_participation(), k2=7.0, gamma=0.25)


def payoff_F(params: ContractParams, x):
    """Insurer payoff; vectorised over ``x >= 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("terminal wealth must be nonnegative")
    p = params
    out = np.where(
        x < p.k1,
        -p.alpha * p.k0,
        np.where(
            x < p.k2,
            p.alpha * (x - p.k1 - p.k0),
            p.alpha_tilde * (x - p.k2) + p.plateau_payoff,
        ),
    )
    return out[()] if out.ndim == 0 else out


def split_payoffs(variant: ProductVariant, x, *, alpha2: float, k2: float):
    """``(policyholder, insurer)`` payoffs for the two guaranteed products.

    The insurer keeps whatever the policyholder does not receive, so the two
    shares add up to ``x`` (up to one rounding of the subtraction).
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("terminal wealth must be nonnegative")
    if variant.tag not in (Variant.NON_PROTECTED, Variant.PROTECTED):
        raise ValueError(f"no policyholder/insurer split defined for {variant.tag.value}")
    G = variant.G
    surplus = G + alpha2 * (x - k2)
    if variant.tag is Variant.NON_PROTECTED:
        pol = np.where(x < G, x, np.where(x < k2, G, surplus))
    else:
        pol = np.where(x < k2, G, surplus)
    ins = x - pol
    if pol.ndim == 0:
        return pol[()], ins[()]
    return pol, ins


def variant_of(params: ContractParams) -> ProductVariant:
    """Recognise which product family ``params`` encode."""
    if params.alpha == 1.0 and params.k0 == 0.0 and params.alpha2 == 0.0 and params.k1 == 0.0:
        return ProductVariant.no_participation()
    if params.alpha == 1.0 and params.k0 == 0.0:
        return ProductVariant.non_protected(params.k1)
    if params.alpha == 1.0 and params.k1 == 0.0:
        return ProductVariant.protected(params.k0)
    return ProductVariant.custom()
