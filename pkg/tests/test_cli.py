import io
import json
import subprocess
import sys

import pytest

from bcqueue import cli

B1 = ["--arrival-rate", "0.3", "--build-rate", "1", "--generate-rate", "1", "--block-size", "1"]
B2 = ["--arrival-rate", "0.3", "--build-rate", "1", "--generate-rate", "2", "--block-size", "2"]


def run(argv):
    out = io.StringIO()
    try:
        code = cli.main(argv, out=out)
    except SystemExit as exc:
        code = exc.code
    return code, out.getvalue()


def test_solve_b1_point():
    code, text = run(["solve"] + B1)
    assert code == 0
    d = json.loads(text)
    assert d["mean_confirmation_closed"] == pytest.approx(4.25, abs=1e-9)
    assert d["mean_queue"] == pytest.approx(0.975, abs=1e-9)
    assert d["is_stable"] is True


def test_solve_unstable_exit_code():
    code, text = run(["solve", "--arrival-rate", "1.0", "--build-rate", "1",
                      "--generate-rate", "1", "--block-size", "1"])
    assert code == 2
    d = json.loads(text)
    assert d["is_stable"] is False
    assert d["stability"]["drift_down"] == pytest.approx(0.5)


@pytest.mark.parametrize("argv", [
    [],
    ["solve", "--arrival-rate", "0.3"],
    ["solve"] + B1 + ["--bogus"],
    ["solve", "--arrival-rate", "-1", "--build-rate", "1", "--generate-rate", "1",
     "--block-size", "1"],
    ["sweep"] + B1 + ["--sweep", "build-rate", "--values", "1,0.5"],
])
def test_usage_errors_exit_64(argv, capsys):
    code, _ = run(argv)
    assert code == 64


@pytest.mark.parametrize("text,expected", [
    ("0.05:0.2:0.05", [0.05, 0.1, 0.15, 0.2]),
    ("1,2,5", [1.0, 2.0, 5.0]),
    ("3", [3.0]),
])
def test_parse_values(text, expected):
    assert cli.parse_values(text) == pytest.approx(expected)


def test_parse_values_integer_range():
    assert cli.parse_values("40:44:2", integer=True) == [40, 42, 44]


def test_fmt_uses_twelve_significant_digits():
    assert cli.fmt(1 / 3) == "0.333333333333"
    assert cli.fmt(None) == ""
    assert cli.fmt(True) == "true"
    assert cli.fmt(40) == "40"


def _sweep(tmp_path, extra=()):
    out = tmp_path / "out.csv"
    code, _ = run(["sweep", "--arrival-rate", "0.3", "--generate-rate", "2", "--block-size", "3",
                   "--sweep", "build-rate", "--values", "0.2:1.0:0.2", "--output", str(out),
                   *extra])
    return code, out.read_bytes()


def test_sweep_csv_byte_stable(tmp_path):
    code1, first = _sweep(tmp_path)
    code2, second = _sweep(tmp_path, ["--jobs", "3"])
    assert code1 == code2 == 0
    assert first == second
    lines = first.decode().split("\n")
    assert lines[0] == cli.CSV_HEADER
    assert b"\r" not in first
    assert len(lines) == 1 + 5 + 1 and lines[-1] == ""


def test_sweep_rows_and_little(tmp_path):
    _, data = _sweep(tmp_path)
    header, *rows = data.decode().strip().split("\n")
    names = header.split(",")
    et = []
    for line in rows:
        row = dict(zip(names, line.split(",")))
        assert row["error"] == ""
        assert float(row["littles_residual"]) < 1e-8
        et.append(float(row["ET_closed"]))
    assert all(b < a for a, b in zip(et, et[1:]))


def test_sweep_reports_unstable_points():
    code, text = run(["sweep", "--arrival-rate", "0.6", "--generate-rate", "1", "--block-size", "1",
                      "--sweep", "build-rate", "--values", "1,2,4"])
    assert code == 0
    header, *rows = text.strip().split("\n")
    names = header.split(",")
    parsed = [dict(zip(names, r.split(","))) for r in rows]
    assert [r["is_stable"] for r in parsed] == ["false", "true", "true"]
    assert parsed[0]["error"] == "unstable" and parsed[0]["ET_closed"] == ""


def test_single_point_sweep_equals_solve():
    _, solved = run(["solve"] + B2)
    _, swept = run(["sweep", "--arrival-rate", "0.3", "--build-rate", "1", "--block-size", "2",
                    "--sweep", "generate-rate", "--values", "2"])
    header, row = swept.strip().split("\n")
    row = dict(zip(header.split(","), row.split(",")))
    d = json.loads(solved)
    assert row["ET_closed"] == cli.fmt(d["mean_confirmation_closed"])
    assert row["EJ"] == cli.fmt(d["mean_queue"])


def test_config_file_and_flag_override(tmp_path):
    conf = tmp_path / "point.conf"
    conf.write_text("# b = 1 point\narrival-rate = 0.3\nbuild-rate = 1\ngenerate-rate = 1\n"
                    "block-size = 1\n")
    code, text = run(["solve", "--config", str(conf)])
    assert code == 0
    assert json.loads(text)["mean_confirmation_closed"] == pytest.approx(4.25, abs=1e-9)
    code, text = run(["solve", "--config", str(conf), "--generate-rate", "2"])
    assert json.loads(text)["params"]["generate_rate"] == 2.0


def test_simulate_deterministic():
    argv = ["simulate"] + B1 + ["--seed", "9", "--horizon", "20000"]
    code1, a = run(argv)
    code2, b = run(argv)
    assert code1 == code2 == 0
    assert a == b
    d = json.loads(a)
    assert d["seed_used"] == 9


def test_simulate_replications():
    code, text = run(["simulate"] + B1 + ["--seed", "2", "--horizon", "5000",
                                          "--replications", "3"])
    assert code == 0
    reps = json.loads(text)["replications"]
    assert len({r["seed_used"] for r in reps}) == 3


def test_validate_b1_all_routes_agree():
    code, text = run(["validate"] + B1)
    assert code == 0
    table = {row["measure"]: row for row in json.loads(text)["table"]}
    for label, value in (("EJ", 0.975), ("EI", 0.3), ("ET", 4.25)):
        row = table[label]
        assert row["ok"]
        for col in ("analytic", "truncated", "oracle_b1"):
            assert row[col] == pytest.approx(value, abs=1e-6)
        assert abs(row["simulated"] - value) <= 3 * row["simulated_half_width"]


def test_validate_b2_analytic_vs_truncated():
    code, text = run(["validate"] + B2 + ["--no-sim"])
    assert code == 0
    for row in json.loads(text)["table"]:
        assert abs(row["analytic"] - row["truncated"]) <= 1e-6


def test_validate_literal_exponent_fails():
    code, text = run(["validate"] + B1 + ["--no-sim", "--paper-literal-r"])
    assert code == 3
    d = json.loads(text)
    assert d["rate_matrix"]["spectral_radius"] == pytest.approx(1.0, abs=1e-9)
    assert d["rate_matrix"]["stochastic"] is True
    assert d["ok"] is False


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "bcqueue", "solve"] + B1,
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["mean_block"] == pytest.approx(0.3, abs=1e-9)
