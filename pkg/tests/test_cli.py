import json
import subprocess
import sys

import pytest

from effhyp import cli

FAST_ENERGY = {"solutions": 2, "states": 20, "t_samples": 101, "lambdas": [8, 64], "deficit_xi": [8, 16, 32]}
FAST_FREQ = {"models": {"effective": {"model": "demo-scaled", "role": "effective"},
                        "hyperbolic": {"model": "hyperbolic", "role": "control"}},
             "xi": [8, 16, 32, 64, 128, 256], "c_grid": [0.0, 5.0]}


def run(tmp_path, command, cfg=None, *extra):
    args = [command, "--out", str(tmp_path / "out")]
    if cfg is not None:
        path = tmp_path / "cfg.json"
        path.write_text(cfg if isinstance(cfg, str) else json.dumps(cfg))
        args += ["--config", str(path)]
    code = cli.main(args + list(extra))
    summary = tmp_path / "out" / "summary.json"
    return code, (json.loads(summary.read_text()) if summary.exists() else None)


def test_analyze_demo_passes(tmp_path):
    code, s = run(tmp_path, "analyze")
    assert code == cli.EXIT_OK and s["status"] == "pass"
    ham = s["sections"]["analyze"]["hamilton"]
    assert ham["Pi"] == pytest.approx(7 / 6) and ham["N"] == 12 and ham["effective"]


def test_non_hyperbolic_exits_one(tmp_path):
    code, s = run(tmp_path, "analyze", {"operator": "non-hyperbolic"})
    assert code == cli.EXIT_VIOLATION
    assert "h0_violations.csv" in s["files"]
    assert (tmp_path / "out" / "h0_violations.csv").read_text().startswith("t,x,xi,delta")


@pytest.mark.parametrize("cfg", [
    {"operator": {"q1": "0", "q2": "xi^^2", "q3": "0"}},
    {"operator": "no-such-model"},
    "[1, 2]",
    "{not json",
    {"tolerances": {"cubic_roots": -1}},
])
def test_invalid_input_exits_two(tmp_path, cfg):
    code, _ = run(tmp_path, "analyze", cfg)
    assert code == cli.EXIT_INPUT


def test_bad_jobs_exits_two(tmp_path):
    assert run(tmp_path, "analyze", None, "--jobs", "0")[0] == cli.EXIT_INPUT


def test_energy_bad_grid_exits_two(tmp_path):
    assert run(tmp_path, "energy-verify", dict(FAST_ENERGY, n=48))[0] == cli.EXIT_INPUT
    assert run(tmp_path, "energy-verify", dict(FAST_ENERGY, T=2.0))[0] == cli.EXIT_INPUT


def test_energy_verify(tmp_path):
    code, s = run(tmp_path, "energy-verify", FAST_ENERGY)
    sec = s["sections"]["energy"]
    assert sec["N"] == 12 and sec["s_k"]["max_rel_gap"] < 1e-10
    assert set(sec["apriori"]) == {"backward", "forward"}
    assert "energy_backward.csv" in s["files"]
    assert code == (cli.EXIT_VIOLATION if s["violations"] else cli.EXIT_OK)


def test_freq_sweep(tmp_path):
    code, s = run(tmp_path, "freq-sweep", FAST_FREQ)
    sec = s["sections"]["freqlab"]
    assert sec["hyperbolic"]["kappa_in_band"]
    assert sec["effective"]["bounds"]["M"] == 6.0
    assert code == cli.EXIT_OK


def test_factorize(tmp_path):
    code, s = run(tmp_path, "factorize", {"m_max": 8})
    sec = s["sections"]["factorization"]
    assert sec["factorizable"]["smooth_root"]["ok"]
    assert sec["factorizable"]["probe"]["regime"] == "factorizable regime"
    assert sec["demo"]["probe"]["regime"] == "non-factorizable"
    assert code == cli.EXIT_OK


def test_selftest(tmp_path):
    code, s = run(tmp_path, "selftest", {"cubics": 2000, "cube_points": 5000})
    assert code == cli.EXIT_OK
    assert s["sections"]["selftest"]["cubics"]["classification_agreement"] == 1.0


def test_summary_is_deterministic(tmp_path):
    cfg = {"cubics": 500, "cube_points": 1000}
    blobs = []
    for i in range(2):
        d = tmp_path / str(i)
        d.mkdir()
        run(d, "selftest", cfg, "--seed", "7")
        blobs.append((d / "out" / "summary.json").read_bytes())
    assert blobs[0] == blobs[1]
    assert cli.config_hash(cfg, 7) != cli.config_hash(cfg, 8)


def test_module_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "effhyp.cli", "analyze", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert p.returncode == 0 and "analyze: pass" in p.stdout
