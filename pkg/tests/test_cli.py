import csv
import io

import pytest

from unilab import cli, harness
from unilab.metrics import CSV_HEADER

from test_harness import TINY

CONFIG = "".join(f"{k} = {v}\n" for k, v in {**TINY, "objective": "lovt_uni_gauss"}.items())


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_verify_passes(tmp_path, capsys):
    assert cli.main(["verify", "--out", str(tmp_path / "v.csv")]) == 0
    rows = _rows(capsys.readouterr().out)
    assert len({r["check"] for r in rows}) >= 8
    assert all(r["passed"] == "PASS" for r in rows)
    assert (tmp_path / "v.csv").read_text().splitlines()[0] == "check,trials,max_error,passed"


def test_verify_perturb_fails(capsys):
    assert cli.main(["verify", "--perturb", "1e-6"]) == 1
    out = capsys.readouterr()
    failed = {r["check"] for r in _rows(out.out) if r["passed"] == "FAIL"}
    assert failed == {"recompose_global", "recompose_local_image", "recompose_local_report"}
    assert "FAILED" in out.err


def test_train_then_metrics_round_trip(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CONFIG)
    assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 0
    capsys.readouterr()
    final = _rows((tmp_path / "run" / harness.METRICS_FILE).read_text())[-1]
    assert cli.main(["metrics", "--reps", str(tmp_path / "run" / harness.REPS_FILE), "--tau", "0.2"]) == 0
    header, values = capsys.readouterr().out.splitlines()
    for name, value in zip(header.split(","), values.split(",")):
        assert float(value) == float(final[name])


def test_train_twice_is_byte_identical(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CONFIG)
    for d in ("a", "b"):
        assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / harness.METRICS_FILE).read_bytes()
    assert a == (tmp_path / "b" / harness.METRICS_FILE).read_bytes()
    assert a.decode().startswith(CSV_HEADER)


def test_sweep_command(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CONFIG)
    grid = tmp_path / "grid.txt"
    grid.write_text("tau_prime = 0.2, 0.5\n")
    assert cli.main(["sweep", "--config", str(cfg), "--grid", str(grid), "--out", str(tmp_path / "s")]) == 0
    assert "2 cells, 0 failed" in capsys.readouterr().out
    assert len((tmp_path / "s" / harness.SWEEP_FILE).read_text().splitlines()) == 3


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense = 1\n")
    assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    assert "unknown config key" in capsys.readouterr().err
    assert cli.main(["train", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "x")]) == 2


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        cli.main([])
