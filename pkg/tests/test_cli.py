import csv
import io
import os
import subprocess
import sys

import numpy as np
import pytest

from deconv_ht.cli import load_config, main, read_records, read_summary_csv, simulate_configs, summary_rows_csv
from deconv_ht.deconvolve import FitConfig, fit
from deconv_ht.estimators import PopulationFrame, bootstrap_mse_term
from deconv_ht.kernels import Grid, ShiftedBinomial, build_kernel_matrix, default_grid
from deconv_ht.mixture import CountVector
from deconv_ht.simulate import PairSpec, ScenarioConfig, run_scenario
from oracles import grid_search_ls

BINOMIAL = """
[kernel]
variant = shifted_binomial
n = 3
"""


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def estimates(path):
    out = {}
    for rec, group, key, value in read_csv(path)[1:]:
        out[(rec, group, key)] = value
    return out


# kernel ---------------------------------------------------------------------

def test_kernel_dump_binomial(tmp_path):
    cfg = write(tmp_path / "k.ini", BINOMIAL)
    out = tmp_path / "k.csv"
    assert main(["kernel", "--config", cfg, "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows[0]) == 92 and len(rows) == 6  # header, j = 1..4, sums
    sums = np.array(rows[-1][1:], float)
    np.testing.assert_allclose(sums, 1.0, atol=1e-12)
    assert rows[-1][0] == "sum"


def test_kernel_dump_two_point(tmp_path):
    cfg = write(tmp_path / "k.ini", "[kernel]\nm0 = 2\ngrid_start = 0.5\ngrid_step = 0.5\ngrid_end = 1.0\n")
    out = tmp_path / "k.csv"
    assert main(["kernel", "--config", cfg, "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["j", "0.5", "1"]
    np.testing.assert_allclose(np.array([r[1:] for r in rows[1:3]], float), [[2 / 3, 1], [1 / 3, 0]], atol=1e-15)


def test_kernel_bad_grid(tmp_path, capsys):
    cfg = write(tmp_path / "k.ini", "[kernel]\ngrid_start = 0.9\ngrid_step = 0.1\ngrid_end = 0.5\n")
    assert main(["kernel", "--config", cfg]) == 2
    assert "line 2" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert main(["kernel", "--config", str(tmp_path / "nope.ini")]) == 2


# simulate --------------------------------------------------------------------

SMOKE = """
[simulate]
family = 2points
alpha = 0.3
m0 = 5
I = 2000
reps = 1
seed = 3
"""


def test_simulate_malformed_key(tmp_path, capsys):
    cfg = write(tmp_path / "s.ini", SMOKE + "colour = blue\n")
    out = tmp_path / "s.csv"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 2
    assert not out.exists() and not (tmp_path / "s.txt").exists()
    assert "colour" in capsys.readouterr().err


def test_simulate_bad_family(tmp_path):
    cfg = write(tmp_path / "s.ini", SMOKE.replace("2points", "cauchy"))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "s.csv")]) == 2


def test_simulate_smoke_round_trip(tmp_path):
    cfg = write(tmp_path / "s.ini", SMOKE)
    out = tmp_path / "s.csv"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    text = out.read_text()
    assert text.splitlines()[0] == "G0,M0,alpha,M-NV,M-MHT,S-NV,S-MHT,S-OR,M-m1,M-m0"
    rows = read_summary_csv(text)
    assert len(rows) == 1
    assert (tmp_path / "s.txt").exists()
    # full-precision round trip against the in-memory row
    (config,) = simulate_configs(load_config(cfg))
    row = run_scenario(config)
    for key, value in rows[0].items():
        assert value == getattr(row, key)
    assert summary_rows_csv([row]) == text


def test_simulate_overrides(tmp_path):
    cfg = write(tmp_path / "s.ini", SMOKE)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--config", cfg, "--out", str(a), "--seed", "99", "--reps", "2"]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b)]) == 0
    assert a.read_text() != b.read_text()
    assert main(["simulate", "--config", cfg, "--reps", "0"]) == 2


def test_summary_round_trip_precision():
    row = run_scenario(ScenarioConfig(PairSpec("unif", 0.2), 4, 700, seed=1, reps=2))
    (back,) = read_summary_csv(summary_rows_csv([row]))
    for key, value in back.items():
        assert value == getattr(row, key)


# estimate -------------------------------------------------------------------

def test_estimate_full_response(tmp_path):
    cfg = write(tmp_path / "e.ini", BINOMIAL + "[population]\nN = 25\nI = 25\n[fit]\njoint = true\n")
    data = write(tmp_path / "d.csv", "group,y\n" + "1,4\n" * 10 + "0,4\n" * 15)
    out = tmp_path / "e.csv"
    assert main(["estimate", "--config", cfg, "--data", data, "--out", str(out)]) == 0
    est = estimates(out)
    assert float(est[("estimate", "1", "mht")]) == pytest.approx(float(est[("estimate", "1", "naive")]),
                                                                   abs=1e-12)
    assert float(est[("estimate", "1", "naive")]) == 0.4
    assert float(est[("group", "0", "expected_inverse")]) == pytest.approx(1.0, abs=1e-12)


def _direction_fixture(tmp_path):
    rng = np.random.default_rng(12)
    lines = ["group,y"]
    # group 1 answers rarely (p* around 0.3), group 0 almost always (p* around 0.9)
    for label, p, n in (("1", 0.3, 300), ("0", 0.9, 500)):
        lines += [f"{label},{1 + w}" for w in rng.binomial(3, p, size=n)]
    return write(tmp_path / "d.csv", "\n".join(lines) + "\n")


def test_estimate_direction(tmp_path):
    cfg = write(tmp_path / "e.ini", BINOMIAL + "grid_start = 0.2\ngrid_step = 0.4\ngrid_end = 1.0\n")
    data = _direction_fixture(tmp_path)
    out = tmp_path / "e.csv"
    assert main(["estimate", "--config", cfg, "--data", data, "--out", str(out)]) == 0
    est = estimates(out)
    naive, mht = float(est[("estimate", "1", "naive")]), float(est[("estimate", "1", "mht")])
    assert naive == 300 / 800
    assert mht > naive
    # hand fit on the 3-point grid via lattice search
    P = build_kernel_matrix(Grid([0.2, 0.6, 1.0]), ShiftedBinomial(3)).matrix
    inflated = {}
    for rec in read_records(data, 4):
        inflated.setdefault(rec.group, []).append(rec.y)
    infl = {}
    for label, ys in inflated.items():
        f = np.bincount(np.array(ys) - 1, minlength=4) / len(ys)
        _, g = grid_search_ls(P, f, step=0.001)
        infl[label] = len(ys) * np.sum(g / np.array([0.2, 0.6, 1.0]))
    hand = infl["1"] / (infl["1"] + infl["0"])
    assert mht == pytest.approx(hand, abs=5e-3)


def test_estimate_history_split(tmp_path):
    cfg = write(tmp_path / "e.ini", BINOMIAL)
    data = write(tmp_path / "d.csv", "group,y,history\n1,2,0\n1,1,1\n1,1,1\n0,4,0\n0,4,0\n")
    out = tmp_path / "e.csv"
    assert main(["estimate", "--config", cfg, "--data", data, "--out", str(out)]) == 0
    est = estimates(out)
    assert est[("estimate", "1", "m")] == "1" and est[("group", "1", "n_fit")] == "3"
    assert float(est[("estimate", "1", "naive")]) == pytest.approx(1 / 3)


def test_estimate_calibration(tmp_path):
    cfg = write(tmp_path / "e.ini", BINOMIAL + "[population]\nI = 1400\n[calibration]\nF = 0.55\n")
    rng = np.random.default_rng(4)
    lines = ["group,y,covariate"]
    for label, cov, p, n in (("1", "F", 0.5, 200), ("1", "M", 0.6, 150), ("0", "F", 0.8, 350), ("0", "M", 0.9, 300)):
        lines += [f"{label},{1 + w},{cov}" for w in rng.binomial(3, p, size=n)]
    data = write(tmp_path / "d.csv", "\n".join(lines) + "\n")
    out = tmp_path / "e.csv"
    assert main(["estimate", "--config", cfg, "--data", data, "--out", str(out)]) == 0
    est = estimates(out)
    res = [float(v) for (rec, _, _), v in est.items() if rec == "constraint"]
    assert res and max(abs(r) for r in res) <= 1e-6 * 1400
    total_f = sum(float(est[("group", k, "m")]) * float(est[("group", k, "expected_inverse")])
                  for k in ("1|F", "0|F"))
    assert total_f == pytest.approx(0.55 * 1400, rel=1e-6)


def test_estimate_infeasible_calibration(tmp_path, capsys):
    cfg = write(tmp_path / "e.ini", BINOMIAL + "[population]\nI = 100\n[calibration]\nF = 0.01\n")
    data = write(tmp_path / "d.csv", "group,y,covariate\n1,2,F\n1,3,F\n0,4,M\n")
    # two F responders cannot inflate to a single person
    assert main(["estimate", "--config", cfg, "--data", data]) == 1
    assert "calibration[0]" in capsys.readouterr().err


@pytest.mark.parametrize("content, fragment", [
    ("", "empty"),
    ("group,y\n1,7\n", "line 2"),
    ("group,y\n1,2\n1,x\n", "line 3"),
    ("group,size\n1,2\n", "missing column"),
    ("group,y,history\n1,2,maybe\n", "history"),
])
def test_estimate_bad_data(tmp_path, capsys, content, fragment):
    cfg = write(tmp_path / "e.ini", BINOMIAL)
    data = write(tmp_path / "d.csv", content)
    assert main(["estimate", "--config", cfg, "--data", data]) == 2
    assert fragment in capsys.readouterr().err


# bootstrap ------------------------------------------------------------------

def test_bootstrap_degenerate(tmp_path):
    cfg = write(tmp_path / "b.ini", BINOMIAL + "[bootstrap]\nK = 10\nseed = 2\n")
    data = write(tmp_path / "d.csv", "group,y\n" + "1,4\n" * 30)
    out = tmp_path / "b.csv"
    assert main(["bootstrap", "--config", cfg, "--data", data, "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["group", "m", "K", "seed", "failures", "mse", "rmse"]
    assert float(rows[1][5]) == 0.0


def test_bootstrap_k_zero(tmp_path):
    cfg = write(tmp_path / "b.ini", BINOMIAL + "[bootstrap]\nK = 0\n")
    data = write(tmp_path / "d.csv", "group,y\n1,4\n")
    assert main(["bootstrap", "--config", cfg, "--data", data]) == 2


def test_bootstrap_matches_library(tmp_path):
    cfg = write(tmp_path / "b.ini", BINOMIAL + "[population]\nN = 5000\nI = 1000\n[bootstrap]\nK = 15\nseed = 5\n")
    data = _direction_fixture(tmp_path)
    out = tmp_path / "b.csv"
    assert main(["bootstrap", "--config", cfg, "--data", data, "--out", str(out)]) == 0
    rows = {r[0]: r for r in read_csv(out)[1:]}
    kernel = ShiftedBinomial(3)
    P = build_kernel_matrix(default_grid(kernel), kernel)
    ys = [r.y for r in read_records(data, 4) if r.group == "1"]
    g = fit(CountVector.from_observations(ys, 4), P, FitConfig())
    res = bootstrap_mse_term(g, len(ys), PopulationFrame(5000, 1000), P, 15, 5)
    assert rows["1"][5] == f"{res.mse:.17g}"


# determinism ----------------------------------------------------------------

def _run_all(tmp_path, tag, threads):
    env_cmd = [sys.executable, "-m", "deconv_ht"]
    cfg = write(tmp_path / "det.ini", BINOMIAL + "[population]\nN = 5000\nI = 1000\n[bootstrap]\nK = 8\nseed = 1\n"
                + SMOKE.replace("reps = 1", "reps = 4"))
    data = _direction_fixture(tmp_path)
    outputs = {}
    env = dict(os.environ, DECONV_HT_THREADS=str(threads))
    for cmd in ("kernel", "simulate", "estimate", "bootstrap"):
        out = tmp_path / f"{cmd}-{tag}.csv"
        args = env_cmd + [cmd, "--config", cfg, "--out", str(out)]
        if cmd in ("estimate", "bootstrap"):
            args += ["--data", data]
        subprocess.run(args, check=True, env=env)
        outputs[cmd] = out.read_bytes()
    return outputs


@pytest.mark.slow
def test_commands_deterministic_across_threads(tmp_path):
    a = _run_all(tmp_path, "a", 1)
    b = _run_all(tmp_path, "b", 4)
    c = _run_all(tmp_path, "c", 1)
    assert a == b == c


def test_text_format(tmp_path):
    cfg = write(tmp_path / "k.ini", "[kernel]\nm0 = 2\ngrid_start = 0.5\ngrid_step = 0.5\ngrid_end = 1.0\n")
    out = tmp_path / "k.txt"
    assert main(["kernel", "--config", cfg, "--out", str(out), "--format", "text"]) == 0
    assert out.read_text().split()[0] == "j"


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path / "k.ini", BINOMIAL)
    res = subprocess.run([sys.executable, "-m", "deconv_ht", "kernel", "--config", cfg],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert len(list(csv.reader(io.StringIO(res.stdout)))) == 6
