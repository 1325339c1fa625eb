import json

import pytest

from bloch_hs.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, config_hash, run_command

COVER = ["covering", "--eps-max", "0.2", "--residual", "0.1", "--grid", "256", "--seed", "7"]


def test_covering_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_command(COVER + ["--out", str(a)]) == EXIT_OK
    assert run_command(COVER + ["--out", str(b)]) == EXIT_OK
    assert (a / "covering.json").read_bytes() == (b / "covering.json").read_bytes()
    doc = json.loads((a / "covering.json").read_text())
    manifest = json.loads((a / "covering.manifest.json").read_text())
    assert doc["config_hash"] == manifest["config_hash"]
    assert manifest["backend"] in ("compiled", "python") and "timestamp" in manifest
    assert doc["seed"] == 7


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"eps_max": 0.25, "residual": 0.2, "grid": 128}))
    assert run_command(["covering", "--config", str(cfg), "--residual", "0.15", "--out", str(tmp_path)]) == EXIT_OK
    m = json.loads((tmp_path / "covering.manifest.json").read_text())
    assert m["config"]["eps_max"] == 0.25 and m["config"]["residual"] == 0.15 and m["config"]["grid"] == 128


def test_hash_ignores_output_directory(tmp_path):
    run_command(COVER + ["--out", str(tmp_path / "x")])
    run_command(COVER + ["--out", str(tmp_path / "y")])
    hx = json.loads((tmp_path / "x" / "covering.manifest.json").read_text())["config_hash"]
    hy = json.loads((tmp_path / "y" / "covering.manifest.json").read_text())["config_hash"]
    assert hx == hy
    assert config_hash("covering", {"a": 1}) != config_hash("covering", {"a": 2})


def test_homogenize_prints_tensor(tmp_path, capsys):
    code = run_command(["homogenize", "--cell", "laminate", "--a", "0.5", "--h", "0.1", "--out", str(tmp_path)])
    assert code == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    m = doc["tensors"]["CellIntegral"]["entries"]
    assert m[0] == pytest.approx(4 / 3, rel=1e-10) and m[3] == pytest.approx(1.5, rel=1e-10)
    assert doc["analytic"]["relation"] == "laminate"


def test_cell_spectrum_csv(tmp_path):
    assert run_command(["cell-spectrum", "--cell", "laminate", "--h", "0.1", "--n-eta", "3",
                        "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "cell-spectrum.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1].startswith("eta_1,eta_2,lambda1")


def test_dispersion_csv(tmp_path):
    assert run_command(["dispersion", "--cell", "laminate", "--h", "0.1", "--directions", "4",
                        "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "dispersion.csv").read_text().splitlines()
    assert lines[1] == "angle,d,q4,gap" and len(lines) == 6


def test_usage_error_exit_code():
    assert run_command(["covering", "--no-such-flag"]) == EXIT_USAGE
    assert run_command([]) == EXIT_USAGE


def test_validation_error_exit_code(tmp_path, capsys):
    assert run_command(["covering", "--eps-max", "-1", "--out", str(tmp_path)]) == EXIT_VALIDATION
    assert run_command(["homogenize", "--R", "0.99", "--h", "0.1", "--out", str(tmp_path)]) == EXIT_VALIDATION
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"bogus": 1}))
    assert run_command(["covering", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_numeric_error_exit_code(tmp_path, monkeypatch):
    from bloch_hs import cli
    from bloch_hs.errors import NumericError

    def boom(cfg, tag):
        raise NumericError("did not converge", 1.0)

    monkeypatch.setitem(cli.COMMANDS, "covering", boom)
    assert run_command(["covering", "--out", str(tmp_path)]) == EXIT_NUMERIC


def test_verify_all_subset(tmp_path, capsys):
    assert run_command(["verify-all", "--fast", "--only", "2", "12", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 2 and all("PASS" in line for line in out)
    doc = json.loads((tmp_path / "verify-all.json").read_text())
    assert doc["passed"] and [c["number"] for c in doc["criteria"]] == [2, 12]
