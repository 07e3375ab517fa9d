import csv
import json

import numpy as np
import pytest

from pli_mv.cli import run
from pli_mv.contract import NON_PROTECTED_S4
from pli_mv.scenario import PRESETS, ScenarioError, load_preset, load_scenario, parse_scenario, serialize


def write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_presets_load():
    sf = load_preset("non_protected_s4")
    assert sf.scenario.params == NON_PROTECTED_S4
    assert (sf.scenario.x0, sf.scenario.T) == (4.0, 10.0)
    assert sf.scenario.curves.kappa[0, 0] == pytest.approx(0.3, abs=1e-15)
    assert load_preset("no_participation_s4").scenario.x0 == 4.665
    assert load_preset("protected_s4_matched").scenario.x0 == 4.692
    assert load_preset("protected_s4").scenario.params.k0 == 2.5


def test_missing_field_reported(tmp_path):
    doc = json.loads(json.dumps(PRESETS["non_protected_s4"]))
    del doc["contract"]["k2"]
    with pytest.raises(ScenarioError) as info:
        load_scenario(write(tmp_path, doc))
    assert info.value.field == "contract" and "k2" in str(info.value)


def test_unknown_key_rejected(tmp_path):
    doc = json.loads(json.dumps(PRESETS["non_protected_s4"]))
    doc["market"]["vol"] = 0.3
    with pytest.raises(ScenarioError, match="market"):
        load_scenario(write(tmp_path, doc))


def test_invariant_violation_names_rule(tmp_path):
    doc = json.loads(json.dumps(PRESETS["non_protected_s4"]))
    doc["contract"]["alpha2"] = 1.5
    with pytest.raises(ScenarioError, match="alpha2 < alpha"):
        load_scenario(write(tmp_path, doc))


def test_parse_error_has_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "x0": 4,\n  oops\n}')
    with pytest.raises(ScenarioError, match="line 3"):
        load_scenario(p)


def test_round_trip(tmp_path):
    for name in PRESETS:
        sf = load_preset(name)
        again = load_scenario(write(tmp_path, serialize(sf)))
        assert again == sf
        assert serialize(again) == serialize(sf)


def test_piecewise_market_round_trip(tmp_path):
    doc = {
        "contract": {"k0": 1.0, "k1": 1.0, "k2": 6.0, "alpha": 0.9, "alpha2": 0.3, "gamma": 0.2},
        "market": {
            "breakpoints": [0, 3, 8],
            "r": [0.01, 0.03],
            "mu": [[0.06, 0.07], [0.05, 0.08]],
            "sigma": [[[0.2, 0.0], [0.0, 0.3]], [[0.25, 0.0], [0.05, 0.2]]],
        },
        "x0": 3.5,
        "T": 8,
    }
    sf = parse_scenario(doc)
    assert sf.scenario.curves.dimension == 2
    assert parse_scenario(serialize(sf)) == sf


def test_cli_calibrate(capsys):
    assert run(["calibrate", "--preset", "non_protected_s4"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["y"] == pytest.approx(0.860, abs=5e-3)
    assert out["lambda"] == pytest.approx(3.423, abs=5e-3)
    assert {"C", "residual_f1", "residual_f2", "iterations"} <= set(out)


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ")
    return list(csv.DictReader(lines[1:]))


def test_cli_curve_single_jump(tmp_path, capsys):
    args = ["curve", "--preset", "non_protected_s4", "--xi-max", "5", "--points", "2000", "--out", str(tmp_path)]
    assert run(args) == 0
    rows = read_csv(tmp_path / "curve.csv")
    x = np.array([float(r["terminal_wealth"]) for r in rows])
    assert len(rows) == 2000
    steps = np.diff(x)
    assert np.all(steps <= 1e-12)
    # the largest drop is the cutoff jump; every other drop is a grid-sized slope step
    big = np.sort(-steps)[::-1]
    assert big[0] > 5.0 and big[1] < 0.05


def test_cli_outputs_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["simulate", "--preset", "protected_s4", "--paths", "200", "--dt", "0.1", "--seed", "7", "--out", str(out)]) == 0
    for name in ("paths.csv", "avg_strategy.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    summary = json.loads((a / "summary.json").read_text())
    assert summary["seed"] == 7 and summary["n_paths"] == 200


def test_cli_strategy_surface_and_json(tmp_path, capsys):
    assert run(["strategy-surface", "--preset", "protected_s4", "--points", "5", "--times", "4", "--format", "json", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "strategy_surface.json").read_text())
    assert data["columns"][:4] == ["t", "xi", "wealth", "v"] and len(data["rows"]) == 20


def test_cli_replicate(tmp_path, capsys):
    assert run(["replicate", "--preset", "protected_s4", "--paths", "100", "--out", str(tmp_path)]) == 0
    assert len(read_csv(tmp_path / "replication.csv")) == 4


def test_cli_compare(tmp_path, capsys):
    args = ["compare", "--paths", "200", "--dt", "0.1", "--out", str(tmp_path)]
    assert run(args) == 0
    rows = read_csv(tmp_path / "compare_summary.csv")
    assert [r["scenario"] for r in rows] == ["non_protected_s4", "protected_s4_matched", "no_participation_s4"]
    header = (tmp_path / "compare_curves.csv").read_text().splitlines()[1].split(",")
    assert len(header) == 7


def test_cli_errors(tmp_path, capsys):
    assert run(["frobnicate"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "usage"
    doc = json.loads(json.dumps(PRESETS["non_protected_s4"]))
    del doc["x0"]
    assert run(["calibrate", "--scenario", str(write(tmp_path, doc))]) == 1
    err = json.loads(capsys.readouterr().err)
    assert "x0" in err["message"]
    assert run(["calibrate"]) == 2
