import csv
import json

import pytest

from gexpect.cli import main


def test_expect_both_backends(capsys):
    rc = main(["expect", "--phi", "x1^2", "--t", "1.0", "--n-steps", "50"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "lattice:" in out and "pde:" in out and "diff:" in out
    lat = float(out.split("lattice:")[1].splitlines()[0])
    assert lat == pytest.approx(1.0, abs=1e-10)


def test_expect_lattice_only_multi_anchor(capsys):
    rc = main(["expect", "--phi", "x1 * x2", "--backend", "lattice",
               "--times", "10,20", "--n-steps", "20"])
    assert rc == 0
    assert "lattice:" in capsys.readouterr().out


def test_expect_csv_output(tmp_path, capsys):
    out = tmp_path / "values.csv"
    rc = main(["expect", "--phi", "abs(x1)", "--n-steps", "50",
               "--csv", str(out)])
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["backend", "value"]
    assert {r[0] for r in rows[1:]} == {"lattice", "pde"}


def test_expect_pde_rejects_multivariate(capsys):
    rc = main(["expect", "--phi", "x1 + x2", "--backend", "pde",
               "--times", "5,10", "--n-steps", "10"])
    assert rc == 3


def test_bad_expression_is_usage_error(capsys):
    rc = main(["expect", "--phi", "x1 +"])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_division_by_zero_is_numeric_error(capsys):
    rc = main(["expect", "--phi", "x1 / 0", "--backend", "lattice",
               "--n-steps", "10"])
    assert rc == 3


def test_missing_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_conditional_writes_table(tmp_path, capsys):
    out = tmp_path / "cond.csv"
    rc = main(["conditional", "--phi", "x1^2", "--j", "0",
               "--n-steps", "20", "--csv", str(out)])
    assert rc == 0
    text = capsys.readouterr().out
    assert "value:" in text
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["node", "psi"]
    assert float(rows[1][1]) == pytest.approx(1.0, abs=1e-10)


def test_simulate_named_and_worst_policies(tmp_path, capsys):
    out = tmp_path / "paths.csv"
    rc = main(["simulate", "--policy", "const-max", "--n-steps", "10",
               "--n-paths", "5", "--seed", "1", "--csv", str(out)])
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + 5 * 11
    rc = main(["simulate", "--policy", "worst:x1^2", "--n-steps", "10",
               "--n-paths", "5", "--seed", "1", "--csv", str(out)])
    assert rc == 0
    rc = main(["simulate", "--policy", "no-such-policy", "--n-steps", "10",
               "--n-paths", "5", "--csv", str(out)])
    assert rc == 2


def test_verify_report_round_trip(tmp_path, capsys):
    report = tmp_path / "report.json"
    rc = main(["verify", "--only", "qv-band,transfer", "--no-timing",
               "--report", str(report)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "qv-band" in out and "transfer" in out and "ok" in out
    data = json.loads(report.read_text())
    assert {d["id"] for d in data} == {"qv-band", "transfer"}
    assert all(d["wall_ms"] == 0.0 for d in data)

    rc = main(["report", "--input", str(report)])
    assert rc == 0
    assert "qv-band" in capsys.readouterr().out


def test_verify_unknown_check_is_usage_error(tmp_path, capsys):
    rc = main(["verify", "--only", "bogus", "--report",
               str(tmp_path / "r.json")])
    assert rc == 2


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("n_steps = 10\nseed = 9\n")
    out = tmp_path / "paths.csv"
    # the flag overrides the file value for n_steps; the file sets the seed
    rc = main(["simulate", "--policy", "const-min", "--config", str(cfgfile),
               "--n-steps", "4", "--n-paths", "2", "--csv", str(out)])
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + 2 * 5  # 4 steps -> 5 grid points per path
