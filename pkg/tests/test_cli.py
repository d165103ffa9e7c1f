import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from radialns.cli import main
from radialns.io import (
    PROFILE_COLUMNS,
    ConfigError,
    parse_config,
    read_profile,
    read_report,
    sha256_of,
    write_profile,
)

from conftest import REFERENCE


def write_config(path, params=None, **sections):
    doc = {"parameters": dict(REFERENCE if params is None else params)}
    doc.update(sections)
    path.write_text(yaml.safe_dump(doc))
    return path


@pytest.fixture
def ref_config(tmp_path):
    return write_config(tmp_path / "ref.yaml", grid={"N": 2048})


def run(*args):
    return main([str(a) for a in args])


def test_defaults_applied(tmp_path):
    spec = parse_config(write_config(tmp_path / "c.yaml"))
    assert (spec.R_max, spec.N, spec.tol, spec.max_iter) == (200.0, 4096, 1e-10, 200)
    echo = spec.echo()
    assert echo["grid"] == {"R_max": 200.0, "N": 4096}
    assert echo["parameters"]["theta_plus"] == 1.0


def test_yaml_exponent_strings(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("parameters: {n: 3, R: 1, c_V: 1.5, nu: 0.5, lambda: 0, kappa: 1, v_plus: 1, theta_plus: 1,"
                    " u_minus: 1e-3, eta_minus: 1e-3, chi_minus: 1e-3}\ncontrol: {tol: 1e-12}\n")
    spec = parse_config(path)
    assert spec.parameters.u_minus == 1e-3 and spec.tol == 1e-12


def test_missing_field_named(tmp_path):
    params = dict(REFERENCE)
    del params["theta_plus"]
    with pytest.raises(ConfigError, match="theta_plus"):
        parse_config(write_config(tmp_path / "c.yaml", params))


def test_far_field_velocity_rejected(tmp_path):
    with pytest.raises(ConfigError, match="u_plus = 0"):
        parse_config(write_config(tmp_path / "c.yaml", dict(REFERENCE, u_plus=0.1)))


def test_parse_error_names_line(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("parameters:\n  n: 3\n  nu: [0.5\n")
    with pytest.raises(ConfigError, match=r"c\.yaml:\d+"):
        parse_config(path)


@pytest.mark.parametrize(
    "section, match",
    [
        ({"grid": {"N": 10**8}}, "grid.N"),
        ({"control": {"tol": 1e-16}}, "control.tol"),
        ({"grid": {"N": 100.5}}, "grid.N"),
        ({"fit": {"window": [150, 50]}}, "fit.window"),
        ({"colour": 1}, "unknown section"),
    ],
)
def test_sane_bounds(tmp_path, section, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(write_config(tmp_path / "c.yaml", **section))


def test_profile_round_trip(tmp_path, inflow_profile):
    path = write_profile(inflow_profile, tmp_path / "p.dat")
    assert path.read_text().splitlines()[0] == "r eta chi zeta rho u theta p"
    table = read_profile(path)
    assert tuple(table) == PROFILE_COLUMNS
    np.testing.assert_array_equal(table["r"], inflow_profile.r)
    np.testing.assert_array_equal(table["zeta"], inflow_profile.zeta.values)
    np.testing.assert_array_equal(table["p"], inflow_profile.p.values)


def test_solve_verify_pass(tmp_path, ref_config):
    out = tmp_path / "out"
    assert run("solve", "--config", ref_config, "--out", out, "--quiet") == 0
    rows = (out / "profile.dat").read_text().splitlines()
    assert len(rows) == 2048 + 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["convergence"]["converged"] is True
    for name, meta in manifest["files"].items():
        assert sha256_of(out / name) == meta["sha256"]
    log = (out / "convergence.log").read_text().splitlines()
    assert log[1] == "iteration increment ratio"

    assert run("verify", "--config", ref_config, "--out", out, "--quiet") == 0
    report = read_report(out / "report.txt")
    for key in ("decay.eta.exponent", "decay.eta.r_squared", "decay.eta.window", "bounds.lemma31.holds"):
        assert key in report
    assert report["bounds.lemma31.holds"] == "true"
    assert report["verdict"] == "pass"
    assert float(report["decay.u.exponent"]) == pytest.approx(-2.0, abs=0.15)


def test_solve_is_deterministic(tmp_path, ref_config):
    for d in ("a", "b"):
        assert run("solve", "--config", ref_config, "--out", tmp_path / d, "--quiet") == 0
    assert sha256_of(tmp_path / "a" / "profile.dat") == sha256_of(tmp_path / "b" / "profile.dat")
    assert sha256_of(tmp_path / "a" / "convergence.log") == sha256_of(tmp_path / "b" / "convergence.log")


@pytest.mark.parametrize("column", ["eta", "rho", "chi"])
def test_verify_rejects_corrupted_profile(tmp_path, ref_config, column):
    out = tmp_path / "out"
    assert run("solve", "--config", ref_config, "--out", out, "--quiet") == 0
    lines = (out / "profile.dat").read_text().splitlines()
    j = PROFILE_COLUMNS.index(column)
    row = lines[600].split()
    row[j] = format(float(row[j]) * 1.01, ".17g")
    lines[600] = " ".join(row)
    bad = tmp_path / "bad.dat"
    bad.write_text("\n".join(lines) + "\n")
    assert run("verify", "--config", ref_config, "--out", out, "--profile", bad, "--quiet") == 3
    report = read_report(out / "report.txt")
    assert report["check.residual.passed"] == "false"
    assert report["verdict"] == "fail"


def test_verify_grid_mismatch_is_input_error(tmp_path, ref_config):
    out = tmp_path / "out"
    assert run("solve", "--config", ref_config, "--out", out, "--quiet") == 0
    other = write_config(tmp_path / "other.yaml", grid={"N": 1024})
    assert run("verify", "--config", other, "--out", out, "--quiet") == 1


def test_max_iter_exit_2_keeps_artifacts(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", grid={"N": 1024}, control={"max_iter": 1})
    out = tmp_path / "out"
    assert run("solve", "--config", cfg, "--out", out, "--quiet") == 2
    assert (out / "profile.dat").exists() and (out / "manifest.json").exists()
    assert json.loads((out / "manifest.json").read_text())["convergence"]["converged"] is False


def test_input_error_exit_1(tmp_path):
    params = dict(REFERENCE)
    del params["theta_plus"]
    assert run("solve", "--config", write_config(tmp_path / "c.yaml", params), "--out", tmp_path, "--quiet") == 1
    assert run("solve", "--config", tmp_path / "missing.yaml", "--out", tmp_path, "--quiet") == 1


def test_impermeable_closed_form(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", dict(REFERENCE, u_minus=0.0, chi_minus=0.2), grid={"N": 1024})
    out = tmp_path / "out"
    assert run("solve", "--config", cfg, "--out", out, "--quiet") == 0
    assert (out / "convergence.log").read_text().startswith("# closed-form")
    assert run("verify", "--config", cfg, "--out", out, "--quiet") == 0
    report = read_report(out / "report.txt")
    assert report["oracle.applicable"] == "false"
    assert run("compare", "--config", cfg, "--out", out, "--quiet") == 1


def test_sweep_exit_codes(tmp_path):
    out = tmp_path / "out"
    ok = write_config(tmp_path / "ok.yaml", grid={"N": 1024}, sweep={"axis": "mu", "values": [1, 0.5, 0.25, 0.1]})
    assert run("sweep", "--config", ok, "--out", out, "--quiet") == 0
    lines = (out / "sweep.tsv").read_text().splitlines()
    assert len(lines) == 5 and "C" in lines[0].split("\t")
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["convergence"]["rows"]) == 4

    empty = write_config(tmp_path / "empty.yaml", sweep={"axis": "mu", "values": []})
    assert run("sweep", "--config", empty, "--out", out, "--quiet") == 1
    failing = write_config(tmp_path / "fail.yaml", grid={"N": 1024}, sweep={"axis": "eta_minus", "values": [-2.0, -3.0]})
    assert run("sweep", "--config", failing, "--out", out, "--quiet") == 2


def test_layer_sweep_trend(tmp_path):
    params = dict(REFERENCE)
    for k in ("eta_minus", "chi_minus"):
        del params[k]
    params.update(rho_minus=1.01, theta_minus=1.001)
    cfg = write_config(tmp_path / "c.yaml", params, sweep={"axis": "u_minus", "values": [1e-2, 1e-3, 1e-4]})
    out = tmp_path / "out"
    assert run("sweep", "--config", cfg, "--out", out, "--quiet") == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["bounds"]["layer_amplitude_trend"] == "increasing"


def test_compare(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", dict(REFERENCE, u_minus=-1e-3), grid={"N": 2048})
    assert run("compare", "--config", cfg, "--out", tmp_path, "--quiet") == 0
    report = read_report(tmp_path / "compare.txt")
    assert float(report["eta_weighted"]) <= 1e-6
    assert report["verdict"] == "pass"


def test_console_script(tmp_path, ref_config):
    proc = subprocess.run(
        [sys.executable, "-m", "radialns.cli", "solve", "--config", str(ref_config), "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "converged" in proc.stderr
    proc = subprocess.run([sys.executable, "-m", "radialns.cli", "solve"], capture_output=True, text=True)
    assert proc.returncode == 1 and "--config" in proc.stderr
