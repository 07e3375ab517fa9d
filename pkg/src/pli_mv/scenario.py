"""Scenario files (JSON) and bundled presets.

A scenario file looks like::

    {
      "contract": {"variant": "non_protected", "G": 2.5, "k2": 7, "alpha2": 0.25, "gamma": 0.25},
      "market": {"r": 0.02, "mu": [0.08], "sigma": [[0.2]]},
      "x0": 4, "T": 10,
      "sim": {"n_paths": 10000, "dt": 0.01, "seed": 7},
      "calibration": {"lambda_equation": "undiscounted"}
    }

The contract block takes either a ``variant`` with its free fields or the six
explicit fields ``k0, k1, k2, alpha, alpha2, gamma``. The market block takes
constants (as above) or per-segment arrays together with ``breakpoints``.
Currency amounts are in abstract currency units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .calibration import LAMBDA_EQUATIONS, Scenario
from .contract import ContractParams, ProductVariant, Variant, build_params, variant_of
from .market import MarketCurves
from .simulation import SimConfig

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_MAT = {"type": "array", "items": _VEC, "minItems": 1}
_TENSOR = {"type": "array", "items": _MAT, "minItems": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["contract", "market", "x0", "T"],
    "properties": {
        "name": {"type": "string"},
        "contract": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "variant": {"enum": [v.value for v in Variant]},
                "G": _NUM,
                "k0": _NUM,
                "k1": _NUM,
                "k2": _NUM,
                "alpha": _NUM,
                "alpha2": _NUM,
                "gamma": _NUM,
            },
            "required": ["k2", "gamma"],
        },
        "market": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dimension": {"type": "integer", "minimum": 1},
                "breakpoints": _VEC,
                "r": {"oneOf": [_NUM, _VEC]},
                "mu": {"oneOf": [_NUM, _VEC, _MAT]},
                "sigma": {"oneOf": [_NUM, _MAT, _TENSOR]},
                "sigma_floor": _NUM,
            },
            "required": ["r", "mu", "sigma"],
        },
        "x0": _NUM,
        "T": _NUM,
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_paths": {"type": "integer", "minimum": 1},
                "dt": _NUM,
                "seed": {"type": "integer", "minimum": 0},
                "record_paths": {"type": "integer", "minimum": 0},
                "antithetic": {"type": "boolean"},
            },
        },
        "calibration": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lambda_equation": {"enum": list(LAMBDA_EQUATIONS)}},
        },
    },
}


class ScenarioError(ValueError):
    """Invalid scenario input; ``field`` names the offending location."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


@dataclass(frozen=True)
class ScenarioFile:
    scenario: Scenario
    sim: SimConfig = field(default_factory=SimConfig)
    lambda_equation: str = "undiscounted"
    name: str = ""

    @property
    def variant(self) -> ProductVariant:
        return variant_of(self.scenario.params)


def _contract(block: dict) -> ContractParams:
    block = dict(block)
    tag = block.pop("variant", None)
    G = block.pop("G", None)
    try:
        if tag is None:
            if G is not None:
                raise ScenarioError("G needs a variant", "contract.G")
            return build_params(ProductVariant.custom(), **block)
        return build_params(ProductVariant(Variant(tag), G), **block)
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc), "contract") from exc


def _market(block: dict, T: float) -> MarketCurves:
    try:
        if "breakpoints" in block:
            bp = np.asarray(block["breakpoints"], dtype=float)
            n = bp.size - 1
            r = np.asarray(block["r"], dtype=float).reshape(n)
            mu = np.asarray(block["mu"], dtype=float).reshape(n, -1)
            d = mu.shape[1]
            sigma = np.asarray(block["sigma"], dtype=float).reshape(n, d, d)
        else:
            mu = np.atleast_1d(np.asarray(block["mu"], dtype=float))
            d = mu.size
            bp = np.array([0.0, T])
            r = np.array([float(block["r"])])
            mu = mu.reshape(1, d)
            sigma = np.asarray(block["sigma"], dtype=float).reshape(1, d, d)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"inconsistent array shapes ({exc})", "market") from exc
    if "dimension" in block and block["dimension"] != d:
        raise ScenarioError(f"dimension {block['dimension']} does not match mu with {d} entries", "market.dimension")
    kwargs = {"sigma_floor": block["sigma_floor"]} if "sigma_floor" in block else {}
    try:
        return MarketCurves(bp, r, mu, sigma, **kwargs)
    except ValueError as exc:
        raise ScenarioError(str(exc), "market") from exc


def parse_scenario(data: dict) -> ScenarioFile:
    """Validate a decoded scenario document."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ScenarioError(e.message, where)
    T = float(data["T"])
    params = _contract(data["contract"])
    curves = _market(data["market"], T)
    try:
        scenario = Scenario(params, curves, float(data["x0"]), T)
        sim = SimConfig(**data.get("sim", {}))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    eq = data.get("calibration", {}).get("lambda_equation", "undiscounted")
    return ScenarioFile(scenario, sim, eq, data.get("name", ""))


def load_scenario(path) -> ScenarioFile:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_scenario(data)


def serialize(sf: ScenarioFile) -> dict:
    """Explicit JSON document; ``parse_scenario(serialize(sf))`` reproduces ``sf``."""
    p, c = sf.scenario.params, sf.scenario.curves
    doc = {
        "contract": {
            "k0": p.k0,
            "k1": p.k1,
            "k2": p.k2,
            "alpha": p.alpha,
            "alpha2": p.alpha2,
            "gamma": p.gamma,
        },
        "market": {
            "dimension": c.dimension,
            "breakpoints": c.breakpoints.tolist(),
            "r": c.r.tolist(),
            "mu": c.mu.tolist(),
            "sigma": c.sigma.tolist(),
            "sigma_floor": c.sigma_floor,
        },
        "x0": sf.scenario.x0,
        "T": sf.scenario.T,
        "sim": {
            "n_paths": sf.sim.n_paths,
            "dt": sf.sim.dt,
            "seed": sf.sim.seed,
            "record_paths": sf.sim.record_paths,
            "antithetic": sf.sim.antithetic,
        },
        "calibration": {"lambda_equation": sf.lambda_equation},
    }
    if sf.name:
        doc["name"] = sf.name
    return doc


def _benchmark(contract: dict, x0: float, name: str) -> dict:
    return {
        "name": name,
        "contract": contract,
        "market": {"dimension": 1, "r": 0.02, "mu": [0.08], "sigma": [[0.2]]},
        "x0": x0,
        "T": 10.0,
        "sim": {"n_paths": 10000, "dt": 0.01, "seed": 7, "record_paths": 10},
    }


_NP = {"variant": "non_protected", "G": 2.5, "k2": 7.0, "alpha2": 0.25, "gamma": 0.25}
_PR = {"variant": "protected", "G": 2.5, "k2": 7.0, "alpha2": 0.25, "gamma": 0.25}
_NO = {"variant": "no_participation", "k2": 7.0, "gamma": 0.25}

PRESETS: dict[str, dict] = {
    "non_protected_s4": _benchmark(_NP, 4.0, "non_protected_s4"),
    "protected_s4": _benchmark(_PR, 4.0, "protected_s4"),
    # initial wealth chosen so that all three products end near the same mean
    "protected_s4_matched": _benchmark(_PR, 4.692, "protected_s4_matched"),
    "no_participation_s4": _benchmark(_NO, 4.665, "no_participation_s4"),
}

COMPARE_DEFAULT = ("non_protected_s4", "protected_s4_matched", "no_participation_s4")


def load_preset(name: str) -> ScenarioFile:
    if name not in PRESETS:
        raise ScenarioError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", "preset")
    return parse_scenario(json.loads(json.dumps(PRESETS[name])))
