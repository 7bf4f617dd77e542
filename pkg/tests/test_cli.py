import json
from pathlib import Path

import numpy as np
import polars
import pytest
import typer
from pytest_mock import MockerFixture
from typer.testing import CliRunner

from pynhse import Mode, Scheme
from pynhse.cli import _abort_with_message, _params_frame, _run_evolution, pynhse_cli
from pynhse.config_utils import EvolveConfig
from pynhse.exceptions import PostSelectionError
from pynhse.vqa import AnsatzSpec, OptimizationResult
from tests import SAMPLE_DATA_DIR
from tests.checks import is_col

RUNNER = CliRunner()


def test_abort_with_message(capsys: pytest.CaptureFixture) -> None:
    with pytest.raises(typer.Abort):
        _abort_with_message("Hello")

    captured = capsys.readouterr()
    assert captured.out == "Hello"


def test_run_evolution_ed_mode() -> None:
    cfg = EvolveConfig().with_overrides(mode=Mode.ED, steps=4)
    trace = _run_evolution(cfg)

    assert trace.mode == Mode.ED
    assert trace.densities.shape == (5, 6)


def test_params_frame() -> None:
    spec = AnsatzSpec(2, 1)
    df = _params_frame(spec, np.arange(spec.num_params, dtype=float))

    assert df.height == 4
    assert df.row(2, named=True) == {"column": 1, "qubit": 0, "theta": 6, "phi": 7, "lam": 8}


def test_evolve_exact(tmp_path: Path) -> None:
    result = RUNNER.invoke(pynhse_cli, ["evolve", "--steps", "3", "--out", str(tmp_path)])

    assert result.exit_code == 0
    assert "Outputs written to" in result.output
    for name in ("density.csv", "center_of_mass.csv", "summary.json", "run_config.txt"):
        assert (tmp_path / name).exists()

    df = polars.read_csv(tmp_path / "density.csv")
    is_col(df, "success_prob")
    assert df.height == 4 * 6

    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "evolve"
    assert "density.csv" in manifest["artifacts"]


def test_evolve_sampled_is_reproducible(tmp_path: Path) -> None:
    args = ["evolve", "--mode", "sample", "--seed", "5", "--shots", "500", "--steps", "2"]
    for name in ("a", "b"):
        result = RUNNER.invoke(pynhse_cli, [*args, "--out", str(tmp_path / name)])
        assert result.exit_code == 0

    for name in ("density.csv", "shots_0.csv", "shots_2.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_evolve_from_config_with_override(tmp_path: Path) -> None:
    result = RUNNER.invoke(
        pynhse_cli,
        [
            "evolve",
            "--config",
            str(SAMPLE_DATA_DIR / "config/EVOLVE_SAMPLE.TXT"),
            "--steps",
            "1",
            "--out",
            str(tmp_path),
        ],
    )
    assert result.exit_code == 0

    written = EvolveConfig.from_file(tmp_path / "run_config.txt")
    assert written.evolve_settings.steps == 1
    assert written.evolve_settings.seed == 42
    assert written.readout_settings.mitigate


def test_evolve_invalid_config_aborts(tmp_path: Path) -> None:
    args = ["evolve", "--model", "nhssh", "--scheme", "global", "--out", str(tmp_path)]
    result = RUNNER.invoke(pynhse_cli, args)

    assert result.exit_code != 0
    assert "requires the local scheme" in result.output
    assert not (tmp_path / "manifest.json").exists()


def test_evolve_nhssh_uses_local_scheme_by_default(tmp_path: Path) -> None:
    args = ["evolve", "--model", "nhssh", "--J", "2", "--gamma", "1.5", "--steps", "2"]
    result = RUNNER.invoke(pynhse_cli, [*args, "--out", str(tmp_path)])
    assert result.exit_code == 0

    written = EvolveConfig.from_file(tmp_path / "run_config.txt")
    assert written.evolve_settings.scheme is None
    assert written.scheme() == Scheme.LOCAL


def test_evolve_library_error_aborts(mocker: MockerFixture, tmp_path: Path) -> None:
    mocker.patch("pynhse.cli._run_evolution", side_effect=PostSelectionError("boom"))
    result = RUNNER.invoke(pynhse_cli, ["evolve", "--out", str(tmp_path)])

    assert result.exit_code != 0
    assert "Error: boom" in result.output


def test_evolve_prompts_for_output(mocker: MockerFixture, tmp_path: Path) -> None:
    mocked = mocker.patch("pynhse.cli.prompt_for_dir", return_value=tmp_path)
    result = RUNNER.invoke(pynhse_cli, ["evolve", "--mode", "ed", "--steps", "1"])

    assert result.exit_code == 0
    mocked.assert_called_once()
    assert (tmp_path / "density.csv").exists()


def test_fermi_skin(tmp_path: Path) -> None:
    result = RUNNER.invoke(
        pynhse_cli,
        [
            "fermi-skin",
            "--L",
            "6",
            "--N",
            "3",
            "--kappa",
            "0.5",
            "--check-oracle",
            "--out",
            str(tmp_path),
        ],
    )
    assert result.exit_code == 0
    assert "Max deviation from Slater oracle" in result.output

    density = polars.read_csv(tmp_path / "density.csv")
    for col in ("x", "n_x", "n_1", "n_3"):
        is_col(density, col)
    assert density["n_x"].sum() == pytest.approx(3)

    assert polars.read_csv(tmp_path / "spectrum.csv").height == 3

    report = json.loads((tmp_path / "fit.json").read_text())
    assert report["oracle_max_deviation"] < 1e-8
    assert report["kappa"] == 0.5


def test_fermi_skin_sweep(tmp_path: Path) -> None:
    args = ["fermi-skin", "--L", "8", "--N", "4", "--kappa", "4.0", "--out", str(tmp_path)]
    result = RUNNER.invoke(pynhse_cli, [*args, "--sweep", "5.0", "--sweep", "6.0"])
    assert result.exit_code == 0
    assert "slope" in result.output

    scaling = polars.read_csv(tmp_path / "scaling.csv")
    assert scaling["kappa"].to_list() == [4.0, 5.0, 6.0]
    assert "scaling.csv" in json.loads((tmp_path / "manifest.json").read_text())["artifacts"]


def test_fermi_skin_sweep_invalid_aborts(tmp_path: Path) -> None:
    args = ["fermi-skin", "--L", "6", "--N", "3", "--kappa", "0", "--out", str(tmp_path)]
    result = RUNNER.invoke(pynhse_cli, [*args, "--sweep", "1.0"])

    assert result.exit_code != 0
    assert "two positive" in result.output


def test_fermi_skin_invalid_filling_aborts(tmp_path: Path) -> None:
    args = ["fermi-skin", "--L", "4", "--N", "5", "--out", str(tmp_path)]
    result = RUNNER.invoke(pynhse_cli, args)

    assert result.exit_code != 0
    assert "Cannot occupy" in result.output


def test_vqa_train(tmp_path: Path) -> None:
    result = RUNNER.invoke(
        pynhse_cli,
        [
            "vqa",
            "train",
            "--length",
            "2",
            "--initial",
            "10",
            "--steps",
            "2",
            "--layers",
            "1",
            "--budget",
            "5",
            "--replay",
            "--out",
            str(tmp_path),
        ],
    )
    assert result.exit_code == 0
    assert "Final cost" in result.output

    report = json.loads((tmp_path / "training_report.json").read_text())
    assert report["iterations"] <= 5
    assert 0 <= report["final_cost"] <= 1
    assert report["raw_cost"] >= report["final_cost"] - 1e-12
    assert "replay_max_deviation" in report

    params = polars.read_csv(tmp_path / "params.csv")
    assert params.height == 2 * report["num_qubits"]
    assert (tmp_path / "replay.csv").exists()


def test_vqa_selftest() -> None:
    result = RUNNER.invoke(
        pynhse_cli, ["vqa", "selftest", "--qubits", "1", "--layers", "0", "--budget", "200"]
    )

    assert result.exit_code == 0
    assert "Final cost" in result.output


def test_vqa_selftest_failure(mocker: MockerFixture) -> None:
    mocker.patch(
        "pynhse.cli.optimize",
        return_value=OptimizationResult(params=np.zeros(3), cost=0.5, evaluations=1),
    )
    result = RUNNER.invoke(pynhse_cli, ["vqa", "selftest", "--qubits", "1", "--layers", "0"])

    assert result.exit_code != 0
    assert "Self-test failed" in result.output
