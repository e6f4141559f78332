import copy
import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from hetcache import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def fig2_raw():
    return json.loads((CONFIGS / "fig2.json").read_text())


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO("".join(l for l in text.splitlines(True) if not l.startswith("#")))))


def dump(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return p


def test_analyze_grid_and_metadata(capsys):
    code, out, _ = run(["analyze", CONFIGS / "fig2.json"], capsys)
    assert code == 0
    assert out.startswith("# config: ")
    r = rows(out)
    assert len(r) == 4 * 3 * 2
    assert {x["scheme"] for x in r} == {"scheme1", "scheme2"}
    assert all(0 < float(x["psi"]) < 1 for x in r)
    assert "\r" not in out


def test_mpc_same_for_both_schemes(capsys):
    code, out, _ = run(["analyze", CONFIGS / "fig2.json", "--policy", "MPC"], capsys)
    assert code == 0
    r = rows(out)
    for tau in {x["tau_mbps"] for x in r}:
        for K in "123":
            v = [float(x["psi"]) for x in r if x["tau_mbps"] == tau and x["K"] == K]
            assert len(v) == 2 and abs(v[0] - v[1]) <= 1e-6


def test_missing_field_exit2(tmp_path, capsys):
    raw = fig2_raw()
    del raw["sbs"]["density"]
    code, _, err = run(["analyze", dump(tmp_path, raw)], capsys)
    assert code == 2
    assert "sbs.density" in err


def test_bad_json_reports_position(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"sbs": {,}}')
    code, _, err = run(["analyze", p], capsys)
    assert code == 2 and "bad.json:1:" in err


def test_cache_larger_than_library_exit2(tmp_path, capsys):
    raw = fig2_raw()
    raw["cache_size"] = 11
    code, _, err = run(["analyze", dump(tmp_path, raw)], capsys)
    assert code == 2 and "cache_size" in err


def test_unknown_field_exit2(tmp_path, capsys):
    raw = fig2_raw()
    raw["quadrature"] = {"nodes": 4}
    code, _, err = run(["analyze", dump(tmp_path, raw)], capsys)
    assert code == 2 and "quadrature.nodes" in err


def test_region_violation_exit3(tmp_path, capsys):
    raw = fig2_raw()
    raw["mbs"]["bandwidth_mhz"] = 200
    raw["mbs"]["density"] = {"one_over_pi_r_squared": 50}
    raw["target_rate_mbps"] = 1
    raw["coop_size"] = 1
    code, _, err = run(["analyze", dump(tmp_path, raw), "--scheme", "1", "--policy", "optimal"], capsys)
    assert code == 3
    assert "psi_m" in err


def test_optimize_scheme2_K1_linear_greedy(tmp_path, capsys):
    raw = fig2_raw()
    raw["coop_size"] = 1
    raw["target_rate_mbps"] = 1
    code, out, _ = run(["optimize", dump(tmp_path, raw), "--scheme", "2"], capsys)
    assert code == 0
    r = rows(out)
    assert len(r) == 10
    assert {x["solver_path"] for x in r} == {"linear_greedy"}
    assert [float(x["T_star"]) for x in r] == [1, 1] + [0] * 8


def test_optimize_scheme1_reports_structure(tmp_path, capsys):
    raw = fig2_raw()
    raw["coop_size"] = 2
    raw["target_rate_mbps"] = 1
    code, out, _ = run(["optimize", dump(tmp_path, raw), "--scheme", "1"], capsys)
    assert code == 0
    r = rows(out)
    T = [float(x["T_star"]) for x in r]
    assert abs(sum(T) - 2) < 1e-6
    assert all(x["checks_ok"] == "true" for x in r)
    assert T == sorted(T, reverse=True)


def _sim(tmp_path, capsys, seed, workers, R=150):
    raw = fig2_raw()
    raw["target_rate_mbps"] = [1, 2]
    code, out, _ = run(["simulate", dump(tmp_path, raw), "--seed", seed,
                        "--realizations", R, "--workers", workers], capsys)
    assert code == 0
    return out


def test_simulate_deterministic_across_workers(tmp_path, capsys):
    a = _sim(tmp_path, capsys, 7, 1)
    b = _sim(tmp_path, capsys, 7, 3)
    c = _sim(tmp_path, capsys, 8, 1)
    assert a == b
    assert a != c
    assert "workers" not in a.splitlines()[0]


def test_simulate_rejects_optimal(tmp_path, capsys):
    raw = fig2_raw()
    raw["caching"] = "optimal"
    code, _, err = run(["simulate", dump(tmp_path, raw), "--realizations", 10], capsys)
    assert code == 2 and "optimal" in err


def test_sweep_writes_csvs(tmp_path, capsys):
    base = json.loads((CONFIGS / "default.json").read_text())
    base["popularity"]["N"] = 20
    base["cache_size"] = 4
    spec = {"sweeps": [
        {"name": "k", "base": base, "variable": "K", "grid": [1, 2]},
        {"name": "g", "base": base, "variable": "gamma", "grid": [0.4, 1.2], "schemes": ["scheme2"]},
    ]}
    p = dump(tmp_path, spec, "sweep.json")
    code, _, _ = run(["sweep", p, "--out", tmp_path / "o1"], capsys)
    assert code == 0
    k = rows((tmp_path / "o1" / "k.csv").read_text())
    assert len(k) == 2 * 2 * 4
    g = rows((tmp_path / "o1" / "g.csv").read_text())
    assert {x["scheme"] for x in g} == {"scheme2"}
    for v in ("0.4", "1.2"):
        opt = [float(x["psi"]) for x in g if x["value"] == v and x["policy"] == "optimal"][0]
        assert all(opt >= float(x["psi"]) - 1e-9 for x in g if x["value"] == v)
    code, _, _ = run(["sweep", p, "--out", tmp_path / "o2", "--workers", "2"], capsys)
    assert code == 0
    assert (tmp_path / "o1" / "k.csv").read_bytes() == (tmp_path / "o2" / "k.csv").read_bytes()


def test_sweep_rejects_unsorted_grid(tmp_path, capsys):
    spec = {"base": "default.json", "variable": "M", "grid": [10, 5]}
    p = tmp_path / "s.json"
    p.write_text(json.dumps(spec))
    (tmp_path / "default.json").write_text((CONFIGS / "default.json").read_text())
    code, _, err = run(["sweep", p, "--out", tmp_path / "o"], capsys)
    assert code == 2 and "sorted" in err


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "hetcache.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
