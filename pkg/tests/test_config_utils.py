import io
import json
import math
import typing as t
from dataclasses import dataclass
from pathlib import Path

import pytest

from pynhse import Mode, ModelKind, Scheme
from pynhse.config_params import RunSetting
from pynhse.config_utils import (
    EvolveConfig,
    FermiSkinConfig,
    VQAConfig,
    parse_config_params,
    parse_initial_state,
    write_manifest,
)
from pynhse.exceptions import InvalidConfigError
from tests import SAMPLE_DATA_DIR


@dataclass
class NoHeader(RunSetting):
    param: int = 13
    another_param: float = 2.5

    _header: str = "; Test header"


TRUTH_SETTING_STRING_DUMP = """\
param: 13
another_param: 2.5
"""


def test_setting_dump_to_buffer() -> None:
    buff = io.StringIO(newline="")
    NoHeader().to_buffer(buff)

    assert buff.getvalue() == TRUTH_SETTING_STRING_DUMP


TRUTH_DEFAULT_FERMI_SKIN_CONFIG = SAMPLE_DATA_DIR / "config/GENERATED_FERMI_SKIN_DEFAULT_CONFIG.TXT"


def test_default_settings_dump(tmp_path: Path) -> None:
    conf = tmp_path / "run_config.txt"
    FermiSkinConfig().to_file(conf)

    assert conf.read_text() == TRUTH_DEFAULT_FERMI_SKIN_CONFIG.read_text()


def test_config_file_round_trip(tmp_path: Path) -> None:
    cfg = EvolveConfig().with_overrides(
        model=ModelKind.NHSSH, scheme=Scheme.LOCAL, mode=Mode.SAMPLED, seed=7, mitigate=True
    )
    conf = tmp_path / "run_config.txt"
    cfg.to_file(conf)

    assert EvolveConfig.from_file(conf) == cfg


def test_config_json_round_trip(tmp_path: Path) -> None:
    cfg = VQAConfig().with_overrides(length=4, initial="1100", layers=2, replay=True)
    conf = tmp_path / "config.json"
    cfg.to_json(conf)

    assert VQAConfig.from_json(conf) == cfg


def test_from_json_unknown_group_raises(tmp_path: Path) -> None:
    conf = tmp_path / "config.json"
    conf.write_text(json.dumps({"vqa_settings": {}}))

    with pytest.raises(InvalidConfigError, match="not found"):
        EvolveConfig.from_json(conf)


SAMPLE_EVOLVE_CONFIG = SAMPLE_DATA_DIR / "config/EVOLVE_SAMPLE.TXT"


def test_sample_config_parse() -> None:
    cfg = EvolveConfig.from_file(SAMPLE_EVOLVE_CONFIG)
    cfg.validate()

    assert cfg.model_settings.model == ModelKind.NHSSH
    assert cfg.model_settings.gamma == 1.5
    assert cfg.evolve_settings.mode == Mode.SAMPLED
    assert cfg.evolve_settings.seed == 42
    assert cfg.readout_settings.mitigate
    # Untouched parameters keep their defaults
    assert cfg.evolve_settings.deferred is False


def test_from_params_coercion() -> None:
    cfg = EvolveConfig.from_params(
        {"length": "8", "J": "2", "seed": "None", "deferred": "on", "mode": "ed"}
    )

    assert cfg.model_settings.length == 8
    assert cfg.model_settings.J == 2.0
    assert cfg.evolve_settings.seed is None
    assert cfg.evolve_settings.deferred is True
    assert cfg.evolve_settings.mode == Mode.ED


FROM_PARAMS_ERROR_TEST_CASES = (
    ({"lenght": "6"}, "Unknown parameter"),
    ({"_header": "x"}, "Unknown parameter"),
    ({"length": "six"}, "Invalid value for 'length'"),
    ({"deferred": "maybe"}, "Invalid value for 'deferred'"),
    ({"model": "ssh"}, "Invalid value for 'model'"),
)


@pytest.mark.parametrize(("params", "match"), FROM_PARAMS_ERROR_TEST_CASES)
def test_from_params_invalid_raises(params: dict[str, str], match: str) -> None:
    with pytest.raises(InvalidConfigError, match=match):
        EvolveConfig.from_params(params)


def test_with_overrides() -> None:
    base = EvolveConfig()
    cfg = base.with_overrides(length=8, dt=None, initial="00010000")

    assert cfg.model_settings.length == 8
    assert cfg.evolve_settings.dt == base.evolve_settings.dt
    assert base.model_settings.length == 6


def test_with_overrides_unknown_raises() -> None:
    with pytest.raises(InvalidConfigError, match="'layers'"):
        EvolveConfig().with_overrides(layers=3)


def test_default_configs_validate() -> None:
    EvolveConfig().validate()
    FermiSkinConfig().validate()
    VQAConfig().validate()


EVOLVE_VALIDATE_TEST_CASES = (
    ({"dt": 0.0}, "Time step"),
    ({"steps": -1}, "non-negative"),
    ({"readout_p01": 0.5, "mode": Mode.SAMPLED, "seed": 1}, "readout_p01"),
    ({"mode": Mode.SAMPLED}, "seed is required"),
    ({"mode": Mode.SAMPLED, "seed": 1, "shots": 0}, "At least one shot"),
    ({"mitigate": True}, "require the sample mode"),
    ({"deferred": True, "mode": Mode.ED}, "require the sample mode"),
    ({"model": ModelKind.NHSSH, "scheme": Scheme.GLOBAL}, "requires the local scheme"),
    ({"model": ModelKind.HN_INT, "scheme": Scheme.LOCAL}, "requires the global scheme"),
    ({"length": 1}, "at least 2"),
    ({"gamma": 1.0}, r"\|gamma\| < J"),
    ({"initial": "0010"}, "addresses 4 sites"),
    ({"initial": "00x000"}, "Could not parse"),
)


@pytest.mark.parametrize(("overrides", "match"), EVOLVE_VALIDATE_TEST_CASES)
def test_evolve_validate_invalid_raises(overrides: dict[str, t.Any], match: str) -> None:
    with pytest.raises(InvalidConfigError, match=match):
        EvolveConfig().with_overrides(**overrides).validate()


def test_ed_mode_skips_scheme_check() -> None:
    cfg = EvolveConfig().with_overrides(model=ModelKind.NHSSH, scheme=Scheme.GLOBAL, mode=Mode.ED)
    cfg.validate()


DEFAULT_SCHEME_TEST_CASES = (
    ({"model": ModelKind.HN}, Scheme.GLOBAL),
    ({"model": ModelKind.NHSSH}, Scheme.LOCAL),
    ({"model": ModelKind.HN_INT}, Scheme.GLOBAL),
    ({"model": ModelKind.HN, "length": 12, "initial": "000001000000"}, Scheme.LOCAL),
    ({"model": ModelKind.HN, "scheme": Scheme.LOCAL}, Scheme.LOCAL),
)


@pytest.mark.parametrize(("overrides", "truth_scheme"), DEFAULT_SCHEME_TEST_CASES)
def test_scheme_defaults_to_model(overrides: dict[str, t.Any], truth_scheme: Scheme) -> None:
    cfg = EvolveConfig().with_overrides(**overrides)
    cfg.validate()

    assert cfg.scheme() == truth_scheme


def test_vqa_scheme_defaults_to_model() -> None:
    cfg = VQAConfig().with_overrides(model=ModelKind.NHSSH)

    assert cfg.evolve_settings.scheme is None
    assert cfg.scheme() == Scheme.LOCAL


def test_unset_scheme_survives_file_round_trip(tmp_path: Path) -> None:
    conf = tmp_path / "run_config.txt"
    EvolveConfig().to_file(conf)

    assert "scheme: None" in conf.read_text()
    assert EvolveConfig.from_file(conf).evolve_settings.scheme is None


FERMI_SKIN_VALIDATE_TEST_CASES = (
    ({"L": 0, "N": 0}, "At least one site"),
    ({"N": 9}, "Cannot occupy"),
    ({"kappa": -0.5}, "non-negative"),
)


@pytest.mark.parametrize(("overrides", "match"), FERMI_SKIN_VALIDATE_TEST_CASES)
def test_fermi_skin_validate_invalid_raises(overrides: dict[str, t.Any], match: str) -> None:
    with pytest.raises(InvalidConfigError, match=match):
        FermiSkinConfig().with_overrides(**overrides).validate()


VQA_VALIDATE_TEST_CASES = (
    ({"layers": -1}, "Layer count"),
    ({"budget": 0}, "budget"),
    ({"workers": 0}, "at least 1"),
    ({"length": 5, "model": ModelKind.NHSSH}, "even"),
)


@pytest.mark.parametrize(("overrides", "match"), VQA_VALIDATE_TEST_CASES)
def test_vqa_validate_invalid_raises(overrides: dict[str, t.Any], match: str) -> None:
    with pytest.raises(InvalidConfigError, match=match):
        VQAConfig().with_overrides(**overrides).validate()


def test_readout_model() -> None:
    assert EvolveConfig().readout_model(7) is None

    cfg = EvolveConfig().with_overrides(readout_p01=0.01, readout_p10=0.03)
    model = cfg.readout_model(7)
    assert model is not None
    assert model.num_qubits == 7
    assert model.p10[6] == 0.03


def test_parse_initial_state() -> None:
    state = parse_initial_state("001000 + 000100", 6)

    nonzero = {i: a for i, a in enumerate(state.amplitudes) if a != 0}
    assert set(nonzero) == {4, 8}
    assert all(a == pytest.approx(1 / math.sqrt(2)) for a in nonzero.values())


def test_parse_config_params(tmp_path: Path) -> None:
    conf = tmp_path / "run_config.txt"
    conf.write_text("; Header comment\n\nlength: 8 ; trailing comment\n  J:2.5\ninitial: 1+0\n")

    assert parse_config_params(conf) == {"length": "8", "J": "2.5", "initial": "1+0"}


def test_parse_config_params_malformed_raises(tmp_path: Path) -> None:
    conf = tmp_path / "run_config.txt"
    conf.write_text("length 8\n")

    with pytest.raises(InvalidConfigError, match="Malformed"):
        parse_config_params(conf)


def test_write_manifest(tmp_path: Path) -> None:
    manifest_path = tmp_path / "manifest.json"
    write_manifest(manifest_path, "fermi-skin", FermiSkinConfig(), ["fit.json", "density.csv"])

    manifest = json.loads(manifest_path.read_text())
    assert manifest["command"] == "fermi-skin"
    assert manifest["artifacts"] == ["density.csv", "fit.json"]
    assert manifest["config"]["fermi_skin_settings"]["N"] == 7
    assert "_header" not in manifest["config"]["fermi_skin_settings"]
    assert {"version", "timestamp"} <= manifest.keys()
