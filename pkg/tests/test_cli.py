import csv
import json

import pytest

from cwscaler.cli import main


def run(argv, capsys=None):
    code = main([str(a) for a in argv])
    out = capsys.readouterr() if capsys else None
    return code, out


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_solve_stdout(capsys):
    code, out = run(["solve", "--beta", 1, "--h", 0], capsys)
    assert code == 0
    assert '"m0": 0.0' in out.out
    code, out = run(["solve", "--beta", 1.5, "--h", 0.2, "--format", "json"], capsys)
    solved = json.loads(out.out.split("# solve.json\n")[1])
    assert solved["m0"] == pytest.approx(0.936, abs=1e-3) and solved["phase"] == "subcritical"


def test_solve_tie(tmp_path):
    assert run(["solve", "--beta", 2, "--h", 0, "--out", tmp_path])[0] == 0
    solved = json.loads((tmp_path / "solve.json").read_text())
    assert len(solved["roots"]) == 3 and solved["symmetricTie"]
    rows = read_csv(tmp_path / "roots.csv")
    assert [r["isMinimizer"] for r in rows] == ["True", "False", "True"]


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--beta", -1, "--h", 0],
        ["solve", "--h", 0],
        ["exact-dist", "--beta", 1, "--h", 0],
        ["exact-dist", "--beta", 1, "--h", 0, "--n", 10**8],
        ["diffusion", "--beta", 0.8, "--h", 0.2],
        ["check-moments", "--beta", 1.5, "--h", 0],
        ["check-concentration", "--beta", 1.5, "--h", 0.2, "--n-schedule", "100,10"],
        ["simulate", "--beta", 1.5, "--h", 0.2, "--engine", "spin"],
        ["simulate", "--beta", 1.5, "--h", 0.2, "--n", 10, "--start", "warm"],
        ["nonsense"],
        ["solve", "--beta", "abc", "--h", 0],
    ],
)
def test_usage_and_domain_errors_exit_2(argv, capsys):
    code, _ = run(argv, capsys)
    assert code == 2


def test_phase_message(capsys):
    code, out = run(["diffusion", "--beta", 0.8, "--h", 0.2], capsys)
    assert code == 2 and "supercritical" in out.err


def test_exact_dist(tmp_path):
    assert run(["exact-dist", "--beta", 1, "--h", 0, "--n", 2, "--out", tmp_path])[0] == 0
    rows = read_csv(tmp_path / "exact_dist.csv")
    assert [r["k"] for r in rows] == ["0", "1", "2"]
    assert float(rows[0]["prob"]) == pytest.approx(0.3655, abs=1e-4)
    assert list(rows[0]) == ["k", "m", "eta", "prob"]


def test_exact_dist_cache(tmp_path, monkeypatch):
    cache = tmp_path / "cache"
    monkeypatch.setenv("CW_SCALER_CACHE", str(cache))
    for name in ("a", "b"):
        assert run(["exact-dist", "--beta", 1.5, "--h", 0.2, "--n", 500, "--out", tmp_path / name])[0] == 0
    assert len(list(cache.glob("*.npz"))) == 1
    assert (tmp_path / "a" / "exact_dist.csv").read_bytes() == (tmp_path / "b" / "exact_dist.csv").read_bytes()


@pytest.mark.parametrize(
    "engine, extra",
    [
        ("spin", ["--n", 10, "--steps", 2000]),
        ("lumped", ["--n", 50, "--steps", 2000, "--record-every", 10]),
        ("ctmc", ["--n", 100, "--horizon", 2]),
        ("ou", ["--horizon", 5, "--dt", 0.1]),
    ],
)
def test_simulate_engines_are_deterministic(tmp_path, engine, extra):
    base = ["simulate", "--beta", 1.5, "--h", 0.2, "--engine", engine, "--seed", 7] + extra
    assert run(base + ["--out", tmp_path / "a"])[0] == 0
    assert run(base + ["--out", tmp_path / "b"])[0] == 0
    a = (tmp_path / "a" / "path.csv").read_bytes()
    assert a == (tmp_path / "b" / "path.csv").read_bytes()
    assert a.startswith(b"t,value\n")
    assert run(base[:-len(extra) - 2] + ["--seed", 8] + extra + ["--out", tmp_path / "c"])[0] == 0
    assert a != (tmp_path / "c" / "path.csv").read_bytes()


def test_simulate_ensemble(tmp_path):
    argv = ["simulate", "--beta", 1.5, "--h", 0.2, "--engine", "ou", "--horizon", 3, "--dt", 0.1,
            "--paths", 3, "--seed", 1, "--out", tmp_path]
    assert run(argv + ["--threads", 1])[0] == 0
    first = (tmp_path / "ensemble.json").read_text()
    assert run(argv + ["--threads", 3])[0] == 0
    assert (tmp_path / "ensemble.json").read_text() == first
    summary = json.loads(first)
    assert summary["seed"] == 1 and [p["streamId"] for p in summary["paths"]] == [0, 1, 2]
    assert sorted(p.name for p in tmp_path.glob("path_*.csv")) == ["path_0000.csv", "path_0001.csv", "path_0002.csv"]


def test_check_concentration(tmp_path):
    argv = ["check-concentration", "--beta", 1.5, "--h", 0.2, "--n-schedule", "10,100,1000",
            "--t-grid", "0:6:0.5", "--out", tmp_path]
    assert run(argv)[0] == 0
    rows = read_csv(tmp_path / "concentration.csv")
    assert len(rows) == 3 * 13 and all(r["ok"] == "True" for r in rows)
    interval = json.loads((tmp_path / "interval.json").read_text())
    assert {"iota0", "M1", "M2", "margin"} <= set(interval)
    tail = json.loads((tmp_path / "tail.json").read_text())
    assert tail["nSchedule"] == [10, 100, 1000]


def test_check_concentration_negative_field_and_other_phase(tmp_path):
    argv = ["check-concentration", "--beta", 2, "--h", -0.1, "--n-schedule", "10,100", "--t-grid", "0,1,2"]
    assert run(argv + ["--out", tmp_path / "neg"])[0] == 0
    assert json.loads((tmp_path / "neg" / "interval.json").read_text())["mirrored"] is True
    argv = ["check-concentration", "--beta", 0.5, "--h", 0.0, "--n-schedule", "10,100", "--t-grid", "0,1"]
    assert run(argv + ["--out", tmp_path / "sup"])[0] == 0
    assert not (tmp_path / "sup" / "interval.json").exists()


def test_check_moments(tmp_path):
    argv = ["check-moments", "--beta", 1.5, "--h", 0.2, "--n-schedule", "100,1000,10000", "--out", tmp_path]
    assert run(argv)[0] == 0
    summary = json.loads((tmp_path / "moments.json").read_text())
    assert summary["secondMomentDecreasing"] and summary["driftFixedWindowDecreasing"]
    assert all(c["thirdMomentIdentityErr"] <= 1e-14 for c in summary["perN"])
    assert read_csv(tmp_path / "kernel_n100.csv")[0].keys() == {
        "k", "eta", "pUp", "pDown", "pStay", "drift", "secondMoment"
    }


def test_diffusion_is_deterministic(tmp_path):
    argv = ["diffusion", "--beta", 1.5, "--h", 0.2, "--n-schedule", "100,1000", "--n", 500,
            "--horizon", 60, "--seed", 3, "--threads", 2]
    codes = [run(argv + ["--out", tmp_path / d])[0] for d in ("a", "b")]
    assert codes[0] == codes[1] and codes[0] in (0, 1)
    for name in ("report.json", "perN.csv", "autocov.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert {"params", "m0", "ouParams", "perN", "autocov"} <= set(report)
    assert [c["n"] for c in report["perN"]] == [100, 1000]


def test_report_grid(tmp_path):
    argv = ["report", "--beta", "1.5,2", "--h", "0.2", "--n-schedule", "100,1000", "--out", tmp_path]
    assert run(argv)[0] == 0
    assert len(json.loads((tmp_path / "report.json").read_text())) == 2
    assert len(read_csv(tmp_path / "summary.csv")) == 4


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("beta = 1.5\nh = 0.2\nn = 3\n")
    assert run(["exact-dist", "--config", cfg, "--out", tmp_path / "a"])[0] == 0
    assert len(read_csv(tmp_path / "a" / "exact_dist.csv")) == 4
    assert run(["exact-dist", "--config", cfg, "--n", 5, "--out", tmp_path / "b"])[0] == 0
    assert len(read_csv(tmp_path / "b" / "exact_dist.csv")) == 6
    bad = tmp_path / "bad.cfg"
    bad.write_text("beta = 1.5\ncolour = red\n")
    assert run(["exact-dist", "--config", bad])[0] == 2


def test_json_format_for_tables(tmp_path):
    assert run(["exact-dist", "--beta", 1, "--h", 0, "--n", 2, "--format", "json", "--out", tmp_path])[0] == 0
    rows = json.loads((tmp_path / "exact_dist.json").read_text())
    assert rows[1]["k"] == 1 and set(rows[1]) == {"k", "m", "eta", "prob"}
