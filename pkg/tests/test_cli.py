import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cellwave.boundary import cube_faces, read_bundle, write_bundle
from cellwave.cli import LEVELS, NUMBER, SCHEMA, main
from cellwave.gfn import read_gfn, write_gfn
from cellwave.grid import GridFunction

UNIT2 = ([0.0, 0.0], [1.0, 1.0])


@pytest.fixture
def grids(tmp_path):
    write_gfn(GridFunction.zeros([0.0], [1.0], 8), tmp_path / "zero.gfn")
    write_gfn(GridFunction.from_function(
        lambda x, y: np.exp(-((x - 0.5) ** 2 + (y + 0.1) ** 2) / 0.04), *UNIT2, 9), tmp_path / "bump.gfn")
    write_gfn(GridFunction.from_function(lambda x, y: np.ones_like(x), *UNIT2, 10), tmp_path / "one.gfn")
    return tmp_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


# --- parsing ----------------------------------------------------------------------


@given(st.integers(-5, 20), st.integers(0, 10))
def test_level_ranges(a, width):
    assert LEVELS.convert(f"{a}..{a + width}", None, None) == list(range(a, a + width + 1))
    assert LEVELS.convert(str(a), None, None) == [a]


@given(st.fractions(max_denominator=50))
def test_numbers_are_exact(x):
    assert NUMBER.convert(str(x), None, None) == x
    assert NUMBER.convert("0.4", None, None) == Fraction(2, 5)


# --- exit codes ----------------------------------------------------------------------


def test_zero_norm_prints_zero(grids, capsys):
    code, out, _ = run(capsys, "norm", "--grid", grids / "zero.gfn", "--method", "haar",
                       "--s", "0.4", "--p", "2", "--q", "2")
    assert code == 0 and out.strip() == "0"


def test_validation_errors_exit_two(grids, capsys):
    assert run(capsys, "norm", "--grid", grids / "zero.gfn", "--bogus")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "norm", "--grid", grids / "missing.gfn", "--s", "0.4", "--p", "2", "--q", "2")[0] == 2
    code, _, err = run(capsys, "norm", "--grid", grids / "bump.gfn", "--method", "haar",
                       "--s", "1", "--p", "2", "--q", "2")
    assert code == 2 and "wavelet order too low" in err
    assert run(capsys, "norm", "--grid", grids / "bump.gfn", "--s", "abc", "--p", "2", "--q", "2")[0] == 2
    assert run(capsys, "hardy", "--mode", "critical", "--J", "8..3")[0] == 2


def test_threads_flag_and_environment(grids, capsys, monkeypatch):
    args = ["norm", "--grid", grids / "zero.gfn", "--s", "0.4", "--p", "2", "--q", "2"]
    assert run(capsys, "--threads", "1", *args)[0] == 0
    assert run(capsys, "--threads", "0", *args)[0] == 2
    monkeypatch.setenv("CELLWAVE_THREADS", "2")
    assert run(capsys, *args)[0] == 0
    monkeypatch.setenv("CELLWAVE_THREADS", "none")
    assert run(capsys, *args)[0] == 2


def test_hardy_assert_and_report_files(tmp_path, capsys):
    out = tmp_path / "h" / "report.json"
    code, _, err = run(capsys, "hardy", "--mode", "critical", "--kappa", "log", "--J", "3..8",
                       "--assert", "grows:1.5", "--out", out)
    assert code == 0 and "PASS" in err
    doc = json.loads(out.read_text())
    assert doc["schema"] == SCHEMA and doc["command"] == "hardy"
    assert [r["J"] for r in doc["result"]["series"]] == list(range(3, 9))
    assert out.with_suffix(".csv").read_text().splitlines()[0] == "J,weighted,norm,ratio"
    assert (out.parent / "report_ratio.png").stat().st_size > 0
    code, _, err = run(capsys, "hardy", "--mode", "critical", "--kappa", "log", "--J", "3..8",
                       "--assert", "grows:100")
    assert code == 3 and "FAIL" in err
    assert run(capsys, "hardy", "--mode", "critical", "--J", "3..4", "--assert", "shrinks:2")[0] == 2


def test_reports_are_byte_identical(tmp_path, capsys):
    for name in ("a.json", "b.json"):
        assert run(capsys, "hardy", "--mode", "subcritical", "--J", "3..6", "--out", tmp_path / name)[0] == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


# --- commands ----------------------------------------------------------------------------


def test_whitney_report(tmp_path, capsys):
    out = tmp_path / "w.json"
    assert run(capsys, "whitney", "--domain", "cube", "--n", "2", "--max-level", "6", "--out", out)[0] == 0
    res = json.loads(out.read_text())["result"]
    assert res["violations"] == {"overlap": 0, "uncovered": 0, "level_jumps": 0, "sandwich": 0}
    assert res["count"] == len(res["cubes"]) == sum(res["levels"].values())
    assert (tmp_path / "w_levels.png").exists()
    assert run(capsys, "whitney", "--domain", "polyhedron", "--n", "2", "--max-level", "3")[0] == 2


def test_haar_analyze_synthesize_round_trip(grids, capsys):
    c = grids / "c.json"
    assert run(capsys, "analyze", "--grid", grids / "bump.gfn", "--u", "0", "--out", c,
               "--save-system", grids / "sys.json")[0] == 0
    assert run(capsys, "synthesize", "--coeffs", c, "--system", grids / "sys.json", "--out", grids / "back.gfn")[0] == 0
    f, back = read_gfn(grids / "bump.gfn"), read_gfn(grids / "back.gfn")
    assert np.abs(back.values - f.values).max() <= 1e-10
    code, out, _ = run(capsys, "seqnorm", "--coeffs", c, "--p", "2", "--q", "2", "--s", "0")
    assert code == 0 and float(out) > 0


def test_trace_extend_trace(grids, capsys):
    b = grids / "b.json"
    assert run(capsys, "trace", "--grid", grids / "bump.gfn", "--face", "1,0", "--r", "0", "--out", b)[0] == 0
    assert run(capsys, "extend", "--bundle", b, "--u", "2", "--out", grids / "g.gfn")[0] == 0
    assert run(capsys, "trace", "--grid", grids / "g.gfn", "--face", "1,0", "--r", "0", "--out", grids / "b2.json")[0] == 0
    first, second = read_bundle(b), read_bundle(grids / "b2.json")
    g0, g1 = first.data[(0, 0)], second.data[(0, 0)]
    assert np.abs(g0.values - g1.values).max() <= 5 * 2.0**-9 * g0.sup()
    # the trace window is enforced when s and p are given
    assert run(capsys, "trace", "--grid", grids / "bump.gfn", "--face", "1,0", "--r", "1",
               "--s", "1", "--p", "2", "--out", grids / "b3.json")[0] == 2


def test_writers_are_byte_stable(grids):
    f = read_gfn(grids / "bump.gfn")
    write_gfn(f, grids / "again.gfn")
    assert (grids / "again.f64").read_bytes() == (grids / "bump.f64").read_bytes()
    from cellwave.boundary import trace
    write_bundle(trace(f, cube_faces(2, 1)[1], 1), grids / "t1.json")
    write_bundle(read_bundle(grids / "t1.json"), grids / "t2.json")
    assert (grids / "t1.json").read_text() == (grids / "t2.json").read_text().replace("t2.", "t1.")


def test_reinforce_verdicts(grids, capsys):
    args = ["reinforce", "--grid", grids / "one.gfn", "--face", "1,0", "--r", "0", "--p", "2"]
    assert run(capsys, *args, "--assert", "fail", "--out", grids / "rf")[0] == 0
    assert run(capsys, *args, "--assert", "pass")[0] == 3
    doc = json.loads((grids / "rf" / "report.json").read_text())
    assert doc["result"]["entries"][0]["growth"] == "log-growth"
    assert run(capsys, *args[:4], "--face", "1,9")[0] == 2


def test_decompose_command(grids, capsys):
    out = grids / "dec"
    assert run(capsys, "decompose", "--grid", grids / "bump.gfn", "--s", "1", "--p", "2", "--q", "2",
               "--u", "2", "--assert", "--out", out)[0] == 0
    for name in ("plan.json", "remainder.gfn", "report.json", "report.csv", "report_remainder.png"):
        assert (out / name).exists()
    plan = json.loads((out / "plan.json").read_text())
    assert plan["l0"] == 1
    assert run(capsys, "decompose", "--grid", grids / "bump.gfn", "--s", "1", "--p", "2", "--q", "2",
               "--u", "1", "--out", grids / "bad")[0] == 2


def test_atom_and_operator_commands(tmp_path, capsys):
    J = 9
    haar = GridFunction.from_function(
        lambda x: np.where((x >= -0.5) & (x < 0), 1.0, 0.0) - np.where((x >= 0) & (x < 0.5), 1.0, 0.0), [-1.5], [1.5], J)
    write_gfn(haar, tmp_path / "a.gfn")
    code, out, _ = run(capsys, "atom", "check", "--grid", tmp_path / "a.gfn", "--nu", "0", "--m", "0",
                       "--s", "1/2", "--p", "2", "--K", "0", "--L", "1", "--C", "100", "--assert")
    assert code == 0 and json.loads(out)["result"]["verdict"] is True
    f = GridFunction.from_function(lambda x: np.sin(6 * x) * x * (1 - x), [0.0], [1.0], 8)
    write_gfn(f, tmp_path / "f.gfn")
    write_gfn(f.with_values(np.ones(f.dims)), tmp_path / "one.gfn")
    write_gfn(GridFunction.from_function(lambda x: x, [0.0], [1.0], 8), tmp_path / "id.gfn")
    assert run(capsys, "op", "multiply", "--grid", tmp_path / "f.gfn", "--phi", tmp_path / "one.gfn",
               "--s", "1/2", "--p", "2", "--q", "2", "--rho", "1.5", "--out", tmp_path / "m.gfn")[0] == 0
    assert np.array_equal(read_gfn(tmp_path / "m.gfn").values, f.values)
    assert run(capsys, "op", "diffeo", "--grid", tmp_path / "f.gfn", "--map", tmp_path / "id.gfn",
               "--s", "1/2", "--p", "2", "--q", "2", "--rho", "1.5", "--out", tmp_path / "d.gfn",
               "--report", tmp_path / "d.json")[0] == 0
    assert json.loads((tmp_path / "d.json").read_text())["result"]["ratio"] == 1.0


def test_w21_preset_is_deterministic(tmp_path, capsys):
    for name in ("r1", "r2"):
        code, _, err = run(capsys, "preset", "w21-cube", "--J", "8", "--out", tmp_path / name, "--assert")
        assert code == 0 and "PASS" in err
    assert (tmp_path / "r1/report.json").read_bytes() == (tmp_path / "r2/report.json").read_bytes()
    doc = json.loads((tmp_path / "r1/report.json").read_text())
    assert doc["result"]["plan"]["l0"] == 1 and doc["result"]["plan"]["critical_set"] == [0]
    assert (tmp_path / "r1/report_corpus.png").exists()
    assert (tmp_path / "r1/constant/verify.json").exists()
