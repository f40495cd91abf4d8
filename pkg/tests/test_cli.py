import json
import os

import pandas as pd
import pytest
from pydantic import ValidationError

from nlstools.cli.main import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, SUBCOMMANDS, main, run_subcommand
from nlstools.cli.presets import ERROR, FAIL, NOTE, PASS, PRESETS, QUANTITIES, Expectation, ScenarioPreset, get_preset, regress
from nlstools.core.config import RunConfig
from nlstools.core.exceptions import ConfigError
from nlstools.core.task import Pipeline, RunContext, Task
from nlstools.spectrum.overlaps import Regime

from .conftest import SMALL_CONFIG


def read_json(*parts):
    with open(os.path.join(*parts)) as f:
        return json.load(f)


def last_stdout_json(capsys) -> dict:
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def small_preset(name: str, command: str, expected=None, **sections) -> ScenarioPreset:
    config = RunConfig.parse_obj({**SMALL_CONFIG, **sections})
    return ScenarioPreset(name=name, command=command, config=config, expected=expected or [])


def test_spectrum_run(tmp_path, small_config_file):
    out = str(tmp_path / "out")
    assert run_subcommand("spectrum", config_path=small_config_file, output_dir=out) == EXIT_OK

    manifest = read_json(out, "manifest.json")
    assert manifest["artifacts"] == ["modes.csv", "spectrum.json"]
    assert manifest["command"] == "spectrum"
    assert manifest["seed"] == 0

    spectrum = read_json(out, "spectrum.json")
    assert 0 < spectrum["omega0"] < spectrum["omega1"]
    modes = pd.read_csv(os.path.join(out, "modes.csv"))
    assert list(modes.columns) == ["x", "u0", "u1", "phiL", "phiR"]


def test_seed_override_changes_the_hash(tmp_path, small_config_file):
    first, second = str(tmp_path / "a"), str(tmp_path / "b")
    assert run_subcommand("thermal", config_path=small_config_file, output_dir=first) == EXIT_OK
    assert run_subcommand("thermal", config_path=small_config_file, output_dir=second, seed=9) == EXIT_OK
    assert read_json(second, "manifest.json")["seed"] == 9
    assert read_json(first, "manifest.json")["config_hash"] != read_json(second, "manifest.json")["config_hash"]


def test_missing_config_is_a_config_error(tmp_path, capsys):
    out = tmp_path / "out"
    out.mkdir()
    code = run_subcommand("spectrum", config_path=str(tmp_path / "missing.json"), output_dir=str(out))
    assert code == EXIT_CONFIG

    error = last_stdout_json(capsys)
    assert error["error"] == "ConfigError"
    assert error["path"].endswith("missing.json")
    assert read_json(str(out), "error.json")["error"] == "ConfigError"


def test_invalid_config_lists_every_field(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"grid": {"spacing": -0.1}, "s": 3}))
    assert run_subcommand("spectrum", config_path=str(path), output_dir=str(tmp_path / "out")) == EXIT_CONFIG
    assert sorted(f["field"] for f in last_stdout_json(capsys)["fields"]) == ["grid.spacing", "s"]


@pytest.mark.parametrize("kwargs", [{"name": "bogus"}, {"name": "spectrum", "preset": "bogus"}, {"name": "regress"}])
def test_usage_errors(tmp_path, capsys, kwargs):
    assert run_subcommand(output_dir=str(tmp_path / "out"), **kwargs) == EXIT_CONFIG
    assert last_stdout_json(capsys)["error"] == "ConfigError"


def test_local_kernel_overlaps_fail(tmp_path, capsys):
    path = tmp_path / "local.json"
    path.write_text(json.dumps({**SMALL_CONFIG, "kernel": {"family": "delta", "sigma": None}}))
    assert run_subcommand("overlaps", config_path=str(path), output_dir=str(tmp_path / "out")) == EXIT_CONFIG


def test_main_thermal(tmp_path):
    out = str(tmp_path / "thermal")
    assert main(["thermal", "--out", out, "--log-level", "WARNING"]) == EXIT_OK
    assert read_json(out, "manifest.json")["artifacts"] == ["thermal.csv", "thermal.json"]
    assert read_json(out, "thermal.json")["max_difference"] < 1e-6


def test_main_overlaps(tmp_path):
    path = tmp_path / "overlaps.json"
    path.write_text(json.dumps({**SMALL_CONFIG, "overlaps": {"sigma_min": 0.5, "sigma_max": 12.0, "n_sigma": 6}}))
    out = str(tmp_path / "overlaps")
    assert main(["overlaps", "--config", str(path), "--out", out]) == EXIT_OK

    frame = pd.read_csv(os.path.join(out, "overlaps.csv"))
    assert len(frame) == 6
    assert "eta11" in frame.columns
    assert "overlaps.csv" in read_json(out, "manifest.json")["artifacts"]


def test_main_twomode(tmp_path):
    path = tmp_path / "twomode.json"
    data = {
        **SMALL_CONFIG,
        "overlaps": {"sigma_min": 0.5, "sigma_max": 12.0, "n_sigma": 6},
        "twomode": {"portrait_orbits": 4, "t_end": 50.0, "n_samples": 20},
    }
    path.write_text(json.dumps(data))
    out = str(tmp_path / "twomode")
    assert main(["twomode", "--config", str(path), "--out", out]) == EXIT_OK

    summary = read_json(out, "twomode.json")
    assert summary["regime"] in {regime.value for regime in Regime}
    assert summary["critical_norms"]["N2cr"] > 0
    assert "N2cr" in summary["bifurcation_mu"]
    artifacts = read_json(out, "manifest.json")["artifacts"]
    for name in ("fixed_points.csv", "branch_curves.csv", "critical_norms.csv", "phase_portrait.csv", "hamiltonian.csv"):
        assert name in artifacts


def test_continue_then_stability(tmp_path, small_config_file):
    out = str(tmp_path / "continue")
    argv = ["continue", "--config", small_config_file, "--out", out, "--family", "antisymmetric", "--profiles"]
    assert main(argv) == EXIT_OK

    artifacts = read_json(out, "manifest.json")["artifacts"]
    assert {"branch.csv", "events.json"} <= set(artifacts)
    profiles = sorted(a for a in artifacts if a.startswith("profiles"))
    branch = pd.read_csv(os.path.join(out, "branch.csv"))
    assert len(profiles) == len(branch)
    assert [e["type"] for e in read_json(out, "events.json")] == ["pitchfork"]

    stability_out = str(tmp_path / "stability")
    argv = ["stability", "--config", small_config_file, "--out", stability_out, "--input", os.path.join(out, "profiles"), "--spectra"]
    assert main(argv) == EXIT_OK
    frame = pd.read_csv(os.path.join(stability_out, "stability.csv"))
    assert len(frame) == len(branch)
    assert list(frame.columns) == ["symmetry", "mu", "N", "max_re_lambda", "unstable_count", "two_mode_rate"]
    assert list(frame["unstable_count"]) == list(branch["n_unstable"])
    assert len(read_json(stability_out, "spectra.json")) == len(branch)


def test_stability_with_missing_input(tmp_path, small_config_file, capsys):
    argv = ["stability", "--config", small_config_file, "--out", str(tmp_path / "s"), "--input", str(tmp_path / "none")]
    assert main(argv) == EXIT_CONFIG
    assert last_stdout_json(capsys)["error"] == "ConfigError"


def test_main_evolve(tmp_path):
    path = tmp_path / "evolve.json"
    data = {**SMALL_CONFIG, "dynamics": {"mu": 0.17, "t_end": 4.0, "dt": 0.05, "phase_every": 0.5, "snapshot_every": 1.0}}
    path.write_text(json.dumps(data))
    out = str(tmp_path / "evolve")
    assert main(["evolve", "--config", str(path), "--out", out]) == EXIT_OK

    summary = read_json(out, "dynamics.json")
    assert summary["mu"] == pytest.approx(0.17)
    assert summary["max_norm_drift"] <= 1e-8
    assert summary["onset_time"] is None
    phase = pd.read_csv(os.path.join(out, "phase_plane.csv"))
    assert {"t", "cL_re", "cL_im", "cR_re", "cR_im", "z", "theta", "energy"} <= set(phase.columns)
    assert len(phase) == 9
    assert pd.read_csv(os.path.join(out, "density.csv")).shape[0] == 5


def test_regress_thermal(tmp_path, capsys):
    out = str(tmp_path / "regress")
    assert run_subcommand("regress", preset="thermal", output_dir=out) == EXIT_OK
    assert "thermal: PASS" in capsys.readouterr().out

    manifest = read_json(out, "manifest.json")
    assert manifest["status"] == PASS
    assert manifest["preset"] == "thermal"
    assert {"regress.csv", "regress.json", "thermal.json"} <= set(manifest["artifacts"])
    rows = pd.read_csv(os.path.join(out, "regress.csv"))
    assert list(rows["status"]) == [PASS]


def test_regress_without_expectations_passes():
    report = regress(small_preset("empty", "thermal"))
    assert report.passed
    assert report.status == PASS
    assert "no expectations" in report.table()


def test_regress_reports_failures():
    expected = [
        Expectation(quantity="screened_poisson_difference", value=1.0, tolerance=1e-3, provenance="deliberately off"),
    ]
    report = regress(small_preset("off", "thermal", expected))
    assert not report.passed
    assert report.status == FAIL
    assert report.rows[0].measured < 1e-6


def test_report_only_misses_do_not_fail():
    expected = [
        Expectation(quantity="screened_poisson_difference", value=0.0, tolerance=1e-6, provenance="solver check"),
        Expectation(
            quantity="screened_poisson_difference", value=1.0, tolerance=1e-3, provenance="shown only", report_only=True
        ),
    ]
    report = regress(small_preset("noted", "thermal", expected))
    assert [row.status for row in report.rows] == [PASS, NOTE]
    assert report.passed
    assert report.status == PASS
    assert report.rows[1].measured is not None
    assert NOTE in report.table()


def test_regress_reports_unmeasured_quantities():
    expected = [Expectation(quantity="sigma_b", value=3.0, tolerance=0.1, provenance="not produced by spectrum")]
    report = regress(small_preset("unmeasured", "spectrum", expected))
    assert report.status == ERROR
    assert report.rows[0].measured is None


def test_regress_pipeline_error_marks_every_row():
    expected = [
        Expectation(quantity="sigma_b", value=3.0, tolerance=0.1, provenance="local kernel"),
        Expectation(quantity="sigma_c", value=9.0, tolerance=0.1, provenance="local kernel"),
    ]
    report = regress(small_preset("local", "overlaps", expected, kernel={"family": "delta", "sigma": None}))
    assert report.error is not None
    assert [row.status for row in report.rows] == [ERROR, ERROR]
    assert report.dataframe().shape == (2, 7)


def test_presets_are_consistent():
    assert len(PRESETS) >= 20
    for name, preset in PRESETS.items():
        assert preset.name == name
        assert preset.command in SUBCOMMANDS
        assert all(e.quantity in QUANTITIES for e in preset.expected)
        if preset.command == "continue":
            assert preset.families
    assert get_preset("sigma1").config.kernel.sigma == 1.0
    with pytest.raises(ConfigError):
        get_preset("bogus")


def test_expectation_validation():
    with pytest.raises(ValidationError):
        Expectation(quantity="bogus", value=1.0, tolerance=0.1, provenance="x")
    with pytest.raises(ValidationError):
        Expectation(quantity="omega0", value=1.0, tolerance=-0.1, provenance="x")
    with pytest.raises(ValidationError):
        Expectation(quantity="omega0", value=1.0, tolerance=0.1, provenance="  ")
    with pytest.raises(ValidationError):
        ScenarioPreset(name="x", command="regress", config=RunConfig())


def test_failed_pipeline_exit_code(tmp_path, capsys):
    path = tmp_path / "far.json"
    path.write_text(json.dumps({**SMALL_CONFIG, "dynamics": {"mu": 0.45}}))
    assert run_subcommand("evolve", config_path=str(path), output_dir=str(tmp_path / "out")) == EXIT_FAILED
    assert last_stdout_json(capsys)["error"] == "ContinuationError"


@pytest.mark.parametrize("content", ["{not json", '{"mu": 0.1}', "[]"])
def test_unreadable_state_file_is_a_config_error(tmp_path, small_config_file, capsys, content):
    state = tmp_path / "state.json"
    state.write_text(content)
    argv = ["stability", "--config", small_config_file, "--out", str(tmp_path / "s"), "--input", str(state)]
    assert main(argv) == EXIT_CONFIG
    error = last_stdout_json(capsys)
    assert error["error"] == "ConfigError"
    assert error["path"] == str(state)


def test_output_path_that_is_a_file(tmp_path, small_config_file, capsys):
    out = tmp_path / "taken"
    out.write_text("")
    assert run_subcommand("thermal", config_path=small_config_file, output_dir=str(out)) == EXIT_CONFIG
    assert last_stdout_json(capsys)["error"] == "ConfigError"


class ExplodingTask(Task):
    def run(self, context: RunContext, *args, **kwargs):
        raise RuntimeError("disk on fire")


def test_unexpected_errors_still_report_json(tmp_path, small_config_file, capsys, monkeypatch):
    monkeypatch.setattr("nlstools.cli.main.pipeline_for", lambda name, **kwargs: Pipeline([ExplodingTask()]))
    out = str(tmp_path / "out")
    assert run_subcommand("thermal", config_path=small_config_file, output_dir=out) == EXIT_FAILED
    assert last_stdout_json(capsys) == {"error": "RuntimeError", "message": "disk on fire"}
    assert read_json(out, "error.json")["error"] == "RuntimeError"
