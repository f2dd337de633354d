import subprocess
import sys
from pathlib import Path

from gridtune.cli import main

EXAMPLE = Path(__file__).resolve().parents[1] / "configs" / "two_servers.yaml"


def test_run_builtin(tmp_path, capsys):
    assert main(["run", "scenario1", "--out", str(tmp_path), "--no-figures"]) == 0
    out = capsys.readouterr().out
    assert "matadd: Done completion=55.0" in out
    assert "untouched" in out and (tmp_path / "comparison.csv").exists()


def test_run_spec_file(tmp_path, capsys):
    assert main(["run", str(EXAMPLE), "--out", str(tmp_path), "--t-end", "50", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "Promises" in out
    assert "seed: 3" in (tmp_path / "two-servers" / "spec.yaml").read_text()


def test_validate(capsys):
    assert main(["validate", str(EXAMPLE)]) == 0
    assert "ok" in capsys.readouterr().out


def test_validation_error_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(EXAMPLE.read_text().replace("serial_fraction: 0.05", "serial_fraction: 1.5"))
    assert main(["validate", str(bad)]) == 1
    assert "serial_fraction" in capsys.readouterr().err
    assert main(["run", "no-such-scenario"]) == 1


def test_runtime_error_exit_2(tmp_path, capsys):
    assert main(["run", "scenario1", "--out", str(tmp_path), "--no-figures"]) == 0
    assert main(["compare", str(tmp_path / "tuned"), "--job", "ghost"]) == 2
    assert "ghost" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.yaml")]) == 2


def test_compare(tmp_path, capsys):
    main(["run", "scenario1", "--out", str(tmp_path), "--no-figures"])
    capsys.readouterr()
    csv = tmp_path / "t.csv"
    assert main(["compare", str(tmp_path / "untouched"), str(tmp_path / "tuned"),
                 "--job", "matadd", "--out", str(csv)]) == 0
    out = capsys.readouterr().out
    assert "0.550" in out and "1.818" in out
    assert csv.read_text().startswith("title,job,run")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gridtune", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "compare" in proc.stdout
