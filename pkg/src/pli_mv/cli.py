"""Command line entry point ``pli-mv``.

Every subcommand reads a scenario (``--scenario file.json`` or ``--preset
name``), writes its tables to ``--out`` and prints a JSON digest on stdout.
Failures print a JSON error object on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .calibration import CalibrationError, calibrate
from .lagrangian import insurer_terminal_payoff, optimal_terminal_wealth
from .market import integrate_coefficients
from .scenario import COMPARE_DEFAULT, PRESETS, ScenarioError, ScenarioFile, load_preset, load_scenario
from .simulation import (
    REPLICATION_LADDER,
    replication_diagnostics,
    simulate_ensemble,
    summarize,
    weighted_average_strategy,
)
from .strategy import GUARD_VARIANCE, degenerate_wealth, fraction_from_hedge, wealth_and_hedge

EXIT_USAGE = 2
EXIT_FAILURE = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _num(v):
    """Shortest round-trip text for floats; integers and strings unchanged."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path: Path, doc: str, header: list[str], rows, fmt: str) -> Path:
    """Write ``rows`` as CSV (doc line + header) or as a JSON document."""
    rows = [list(r) for r in rows]
    if fmt == "json":
        path = path.with_suffix(".json")
        data = {
            "description": doc,
            "columns": header,
            "rows": [[_jsonable(v) for v in r] for r in rows],
        }
        path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
        return path
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {doc}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(v) for v in r])
    return path


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def _write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(_jsonable(data), indent=2) + "\n", encoding="utf-8")
    return path


def _scenario_from(args) -> ScenarioFile:
    if args.scenario and args.preset:
        raise UsageError("pass either --scenario or --preset, not both")
    if args.scenario:
        sf = load_scenario(args.scenario)
    elif args.preset:
        sf = load_preset(args.preset)
    else:
        raise UsageError("one of --scenario or --preset is required")
    sim = sf.sim
    overrides = {}
    if getattr(args, "paths", None) is not None:
        overrides["n_paths"] = args.paths
    if getattr(args, "dt", None) is not None:
        overrides["dt"] = args.dt
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if overrides:
        sim = replace(sim, **overrides)
    eq = getattr(args, "lambda_equation", None) or sf.lambda_equation
    return replace(sf, sim=sim, lambda_equation=eq)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _calibrated(sf: ScenarioFile):
    return calibrate(sf.scenario, lambda_equation=sf.lambda_equation)


def cmd_calibrate(args) -> dict:
    sf = _scenario_from(args)
    sol = _calibrated(sf)
    result = {"scenario": sf.name or args.scenario, **sol.to_dict(), "thresholds": vars(sol.thresholds)}
    if args.out:
        _write_json(_out_dir(args) / "calibration.json", result)
    return result


def cmd_curve(args) -> dict:
    sf = _scenario_from(args)
    sol = _calibrated(sf)
    p, th, m = sf.scenario.params, sol.thresholds, sol.multipliers
    xi_max = args.xi_max if args.xi_max is not None else 2.0 * th.xi_bar
    xi = np.linspace(xi_max / args.points, xi_max, args.points)
    x = optimal_terminal_wealth(p, th, m, xi)
    f = insurer_terminal_payoff(p, th, m, xi)
    path = write_table(
        _out_dir(args) / "curve.csv",
        "optimal terminal wealth and insurer payoff against terminal density value",
        ["xi", "terminal_wealth", "insurer_payoff"],
        zip(xi, x, f),
        args.format,
    )
    return {"file": str(path), "xi_star": th.xi_star, "y": sol.y, "lambda": sol.lam}


def cmd_strategy_surface(args) -> dict:
    sf = _scenario_from(args)
    sc = sf.scenario
    sol = _calibrated(sf)
    th, m = sol.thresholds, sol.multipliers
    xi_max = args.xi_max if args.xi_max is not None else 2.0 * th.xi_bar
    xis = np.linspace(xi_max / args.points, xi_max, args.points)
    times = np.linspace(0.0, sc.T, args.times + 1)[:-1]
    d = sc.curves.dimension
    rows = []
    for t in times:
        int_r, int_k2 = integrate_coefficients(sc.curves, t, sc.T)
        _, _, sigma, kappa = sc.curves.coefficients_at(t)
        if int_k2 < GUARD_VARIANCE:
            wealth = degenerate_wealth(sc.params, th, m, xis, int_r)
            hedge = np.zeros_like(xis)
            frac = np.zeros((xis.size, d))
        else:
            wealth, hedge = wealth_and_hedge(sc.params, th, m, xis, int_r, int_k2)
            frac = fraction_from_hedge(sigma, kappa, hedge, wealth)
        for i in range(xis.size):
            rows.append([t, xis[i], wealth[i], hedge[i], *frac[i]])
    path = write_table(
        _out_dir(args) / "strategy_surface.csv",
        "interim optimal wealth, hedge numerator v and risky fractions on a (t, xi) grid",
        ["t", "xi", "wealth", "v"] + [f"fraction_{k + 1}" for k in range(d)],
        rows,
        args.format,
    )
    return {"file": str(path), "rows": len(rows)}


def _simulate(sf: ScenarioFile, sol):
    ens = simulate_ensemble(sf.scenario, sol, sf.sim)
    summ = summarize(ens)
    return ens, summ


def cmd_simulate(args) -> dict:
    sf = _scenario_from(args)
    sol = _calibrated(sf)
    ens, summ = _simulate(sf, sol)
    out = _out_dir(args)
    d = sf.scenario.curves.dimension
    rows = []
    for i in range(ens.wealth_paths.shape[0]):
        for j, t in enumerate(ens.times):
            rows.append([i, t, ens.xi_paths[i, j], ens.wealth_paths[i, j], *ens.fraction_paths[i, j]])
    frac_cols = [f"fraction_{k + 1}" for k in range(d)]
    paths = write_table(
        out / "paths.csv",
        "recorded trajectories: density, closed-form wealth and risky fractions (fractions undefined at T)",
        ["path_id", "t", "xi", "wealth"] + frac_cols,
        rows,
        args.format,
    )
    wealth_curve = weighted_average_strategy(ens, "wealth")
    amount_curve = weighted_average_strategy(ens, "amount")
    avg = write_table(
        out / "avg_strategy.csv",
        "mean wealth and average risky fraction over all paths; 'wealth' weights by X, 'amount' by |u X|",
        ["t", "mean_wealth"] + [f"avg_{c}" for c in frac_cols] + [f"avg_amount_{c}" for c in frac_cols],
        ([t, ens.mean_wealth[j], *wealth_curve[j], *amount_curve[j]] for j, t in enumerate(ens.times)),
        args.format,
    )
    digest = {
        "scenario": sf.name or args.scenario,
        "y": sol.y,
        "lambda": sol.lam,
        "n_paths": sf.sim.n_paths,
        "dt": sf.sim.dt,
        "seed": sf.sim.seed,
        **summ.to_dict(),
    }
    _write_json(out / "summary.json", digest)
    return {**digest, "files": [str(paths), str(avg), str(out / "summary.json")]}


def cmd_replicate(args) -> dict:
    sf = _scenario_from(args)
    sol = _calibrated(sf)
    rep = replication_diagnostics(sf.scenario, sol, sf.sim, REPLICATION_LADDER)
    path = write_table(
        _out_dir(args) / "replication.csv",
        "Euler-hedged terminal wealth against closed-form terminal wealth; paths reaching zero wealth are excluded",
        ["dt", "rmse", "relative_rmse", "n_used", "n_excluded"],
        ([lv.dt, lv.rmse, lv.relative_rmse, lv.n_used, lv.n_excluded] for lv in rep.levels),
        args.format,
    )
    return {
        "file": str(path),
        "rmse": [lv.rmse for lv in rep.levels],
        "decay_ratios": rep.decay_ratios(),
        "monotone": rep.is_monotone(),
    }


def cmd_compare(args) -> dict:
    names = list(args.preset or [])
    files = list(args.scenario or [])
    if not names and not files:
        names = list(COMPARE_DEFAULT)
    entries = [(n, load_preset(n)) for n in names] + [(f, load_scenario(f)) for f in files]
    if len(entries) < 2:
        raise UsageError("compare needs at least two scenarios")
    results = []
    for label, sf in entries:
        sim = sf.sim
        if args.paths is not None:
            sim = replace(sim, n_paths=args.paths)
        if args.dt is not None:
            sim = replace(sim, dt=args.dt)
        if args.seed is not None:
            sim = replace(sim, seed=args.seed)
        sf = replace(sf, sim=sim)
        sol = _calibrated(sf)
        ens, summ = _simulate(sf, sol)
        results.append((label, sf, sol, ens, summ))
    times = results[0][3].times
    for label, _, _, ens, _ in results[1:]:
        if ens.times.shape != times.shape or not np.allclose(ens.times, times):
            raise UsageError(f"scenario {label} uses a different time grid; align T and dt")
    out = _out_dir(args)
    summary_rows = []
    for label, sf, sol, _, summ in results:
        s = summ.to_dict()
        summary_rows.append(
            [
                label,
                sf.scenario.x0,
                sol.y,
                sol.lam,
                s["mean_terminal_wealth"],
                s["mean_insurer"] if s["mean_insurer"] is not None else math.nan,
                s["mean_policyholder"] if s["mean_policyholder"] is not None else math.nan,
                s["J_estimate"],
                s["weighted_fraction_start"][0],
                s["weighted_fraction_end"][0],
            ]
        )
    table = write_table(
        out / "compare_summary.csv",
        "per-scenario calibration and ensemble statistics (first risky asset for the fraction columns)",
        [
            "scenario",
            "x0",
            "y",
            "lambda",
            "mean_terminal_wealth",
            "mean_insurer",
            "mean_policyholder",
            "J_estimate",
            "fraction_start",
            "fraction_end",
        ],
        summary_rows,
        args.format,
    )
    header = ["t"]
    for label, *_ in results:
        header += [f"{label}_mean_wealth", f"{label}_avg_fraction"]
    curve_rows = []
    for j, t in enumerate(times):
        row = [t]
        for _, _, _, ens, _ in results:
            row += [ens.mean_wealth[j], weighted_average_strategy(ens)[j, 0]]
        curve_rows.append(row)
    curves = write_table(
        out / "compare_curves.csv",
        "mean wealth and wealth-weighted average risky fraction per scenario on a common time grid",
        header,
        curve_rows,
        args.format,
    )
    return {
        "files": [str(table), str(curves)],
        "scenarios": [dict(zip(["scenario", "x0", "y", "lambda", "mean_terminal_wealth"], r[:5])) for r in summary_rows],
    }


COMMANDS = {
    "calibrate": cmd_calibrate,
    "curve": cmd_curve,
    "strategy-surface": cmd_strategy_surface,
    "simulate": cmd_simulate,
    "replicate": cmd_replicate,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pli-mv", description="Mean-variance optimal investment for participating contracts.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, multi=False):
        if multi:
            p.add_argument("--scenario", action="append", help="scenario JSON file (repeatable)")
            p.add_argument("--preset", action="append", choices=sorted(PRESETS), help="bundled preset (repeatable)")
        else:
            p.add_argument("--scenario", help="scenario JSON file")
            p.add_argument("--preset", choices=sorted(PRESETS), help="bundled preset")
        p.add_argument("--lambda-equation", choices=["undiscounted", "exact"], default=None)
        p.add_argument("--format", choices=["csv", "json"], default="csv")

    p = sub.add_parser("calibrate", help="solve for (y, lambda)")
    common(p)
    p.add_argument("--out", default=None)

    for name, helptext in (("curve", "terminal wealth against xi"), ("strategy-surface", "wealth and fractions on a (t, xi) grid")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--out", default=".")
        p.add_argument("--xi-max", type=float, default=None)
        p.add_argument("--points", type=int, default=2000 if name == "curve" else 50)
        if name == "strategy-surface":
            p.add_argument("--times", type=int, default=20, help="number of time slices in [0, T)")

    for name, helptext in (("simulate", "Monte Carlo ensemble"), ("replicate", "Euler replication ladder"), ("compare", "several scenarios side by side")):
        p = sub.add_parser(name, help=helptext)
        common(p, multi=name == "compare")
        p.add_argument("--out", default=".")
        p.add_argument("--paths", type=int, default=None)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--seed", type=int, default=None)
    return parser


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError(f"a subcommand is required: {', '.join(COMMANDS)}")
        if getattr(args, "points", 2) is not None and getattr(args, "points", 2) < 2:
            raise UsageError("--points must be at least 2")
        result = COMMANDS[args.command](args)
    except UsageError as exc:
        _error("usage", str(exc))
        return EXIT_USAGE
    except CalibrationError as exc:
        _error("calibration", str(exc), exc.diagnostics)
        return EXIT_FAILURE
    except (ScenarioError, ValueError, OSError) as exc:
        _error(type(exc).__name__, str(exc), {"field": getattr(exc, "field", "")} if isinstance(exc, ScenarioError) else None)
        return EXIT_FAILURE
    print(json.dumps(_jsonable(result), indent=2))
    return 0


def _error(kind: str, message: str, diagnostics=None):
    payload = {"error": kind, "message": message}
    if diagnostics:
        payload["diagnostics"] = diagnostics
    print(json.dumps(_jsonable(payload)), file=sys.stderr)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
