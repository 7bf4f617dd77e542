from __future__ import annotations

import datetime as dt
import io
import json
import types
import typing as t
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import metadata
from pathlib import Path

from pynhse import Mode, ModelKind, Scheme
from pynhse import config_params as cp
from pynhse.exceptions import InvalidConfigError, InvalidModelError
from pynhse.models import ModelSpec, default_scheme
from pynhse.noise import ReadoutModel
from pynhse.statevector import Bitstring, StateVector, superposition

_TRUTHY = frozenset(("true", "1", "yes", "on"))
_FALSY = frozenset(("false", "0", "no", "off"))


def _write_headers(buff: io.StringIO, settings: cp.RunSetting) -> None:  # noqa: D101
    buff.write(f"{settings._header}\n")
    if settings._header_text is not None:
        buff.write(settings._header_text)


def _coerce(raw: str, hint: t.Any) -> t.Any:
    """Convert a raw config string into the annotated field type."""
    if isinstance(hint, types.UnionType) or t.get_origin(hint) is t.Union:
        args = t.get_args(hint)
        if type(None) in args and raw.strip().lower() in ("none", ""):
            return None

        hint = next(a for a in args if a is not type(None))

    if hint is bool:
        val = raw.strip().lower()
        if val in _TRUTHY:
            return True
        if val in _FALSY:
            return False

        raise ValueError(f"Cannot interpret '{raw}' as a boolean.")

    return hint(raw.strip())


@dataclass
class RunConfig:  # noqa: D101
    def to_file(self, filepath: Path) -> None:  # noqa: D102
        buff = io.StringIO(newline="")
        buff.write(cp.FILE_HEADER)
        buff.write("\n")

        for setting_f in fields(self):
            setting: cp.RunSetting = getattr(self, setting_f.name)
            _write_headers(buff, setting)
            setting.to_buffer(buff)
            buff.write("\n")

        filepath.write_text(buff.getvalue().removesuffix("\n"))

    def to_dict(self) -> dict[str, t.Any]:
        """Nest each settings group's public parameters under its field name."""
        return {
            group: {name: val for name, val in params.items() if not name.startswith("_")}
            for group, params in asdict(self).items()
        }

    def to_json(self, filepath: Path) -> None:  # noqa: D102
        with filepath.open("w") as f:
            json.dump(self.to_dict(), f, indent=4)

    @classmethod
    def from_json(cls, filepath: Path) -> t.Self:
        """Create a new instance from a previously serialized configuration."""
        with filepath.open("r") as f:
            config_d = json.load(f)

        return cls(**_remap_fields(cls, config_d))

    @classmethod
    def from_params(cls, params: dict[str, str]) -> t.Self:
        """
        Build an instance from raw `param: value` pairs, coercing each to its field's type.

        Parameters not understood by any settings group raise `InvalidConfigError`.
        """
        config = cls()
        for name, raw in params.items():
            for setting_f in fields(config):
                group = getattr(config, setting_f.name)
                hints = t.get_type_hints(type(group))
                if name.startswith("_") or name not in hints:
                    continue

                try:
                    setattr(group, name, _coerce(raw, hints[name]))
                except ValueError as e:
                    raise InvalidConfigError(f"Invalid value for '{name}': {raw}") from e
                break
            else:
                raise InvalidConfigError(f"Unknown parameter for {cls.__name__}: '{name}'")

        return config

    @classmethod
    def from_file(cls, filepath: Path) -> t.Self:  # noqa: D102
        return cls.from_params(parse_config_params(filepath))

    def with_overrides(self, **overrides: t.Any) -> t.Self:
        """
        Return a copy with every non-`None` override applied to the group owning that parameter.

        Overrides naming an unknown parameter raise `InvalidConfigError`.
        """
        groups = {f.name: getattr(self, f.name) for f in fields(self)}
        updated = {name: replace(group) for name, group in groups.items()}
        for name, val in overrides.items():
            if val is None:
                continue

            owner = next(
                (g for g in updated.values() if name in t.get_type_hints(type(g))), None
            )
            if owner is None:
                raise InvalidConfigError(f"Unknown parameter for {type(self).__name__}: '{name}'")
            setattr(owner, name, val)

        return type(self)(**updated)

    def validate(self) -> None:
        """Raise `InvalidConfigError` if the resolved parameters cannot describe a run."""


def _remap_fields(parent_class: type[RunConfig], in_json: dict[str, t.Any]) -> dict[str, t.Any]:
    """Re-initialize nested config dataclasses from the provided raw json."""
    factory_map = {f.name: f.default_factory for f in fields(parent_class)}
    converted_fields = {}
    for k, v in in_json.items():
        if k not in factory_map:
            raise InvalidConfigError(f"Field '{k}' not found as field of {parent_class.__name__}")

        settings_cls = factory_map[k]
        hints = t.get_type_hints(settings_cls)
        converted_fields[k] = settings_cls(  # type: ignore[operator]
            **{
                name: _coerce(val, hints[name]) if isinstance(val, str) else val
                for name, val in v.items()
            }
        )

    return converted_fields


def _validate_model(settings: cp.ModelSettings) -> ModelSpec:
    try:
        return ModelSpec(
            kind=settings.model,
            L=settings.length,
            J=settings.J,
            gamma=settings.gamma,
            U_int=settings.U,
        )
    except InvalidModelError as e:
        raise InvalidConfigError(str(e)) from e


def _resolve_scheme(spec: ModelSpec, settings: cp.EvolveSettings) -> Scheme:
    return default_scheme(spec) if settings.scheme is None else settings.scheme


def parse_initial_state(initial: str, num_sites: int) -> StateVector:
    """
    Parse an initial state given as basis kets joined by `+`, e.g. `001000+000100`.

    Kets list site 0 first; the result is the normalized equal-weight superposition.
    """
    try:
        kets = [Bitstring.from_ket(k.strip()) for k in initial.split("+")]
    except ValueError as e:
        raise InvalidConfigError(f"Could not parse initial state '{initial}': {e}") from e

    for k in kets:
        if len(k) != num_sites:
            raise InvalidConfigError(
                f"Initial state '{k.to_ket()}' addresses {len(k)} sites, model has {num_sites}."
            )

    return superposition(kets)


@dataclass(slots=True)
class EvolveConfig(RunConfig):
    """Parameters of a single Trotter evolution run."""

    model_settings: cp.ModelSettings = field(default_factory=cp.ModelSettings)
    evolve_settings: cp.EvolveSettings = field(default_factory=cp.EvolveSettings)
    readout_settings: cp.ReadoutSettings = field(default_factory=cp.ReadoutSettings)

    def to_spec(self) -> ModelSpec:  # noqa: D102
        return _validate_model(self.model_settings)

    def initial_state(self) -> StateVector:  # noqa: D102
        return parse_initial_state(self.evolve_settings.initial, self.model_settings.length)

    def scheme(self) -> Scheme:
        """Requested ancilla scheme, or the model's default when none is set."""
        return _resolve_scheme(self.to_spec(), self.evolve_settings)

    def readout_model(self, num_qubits: int) -> ReadoutModel | None:
        """Build the uniform readout model over the register, `None` if noiseless."""
        rs = self.readout_settings
        if not rs.is_noisy:
            return None

        return ReadoutModel.uniform(num_qubits, rs.readout_p01, rs.readout_p10)

    def validate(self) -> None:  # noqa: D102
        self.to_spec()
        self.initial_state()

        es = self.evolve_settings
        if es.dt <= 0:
            raise InvalidConfigError(f"Time step must be positive, received {es.dt}.")
        if es.steps < 0:
            raise InvalidConfigError(f"Number of steps must be non-negative, received {es.steps}.")

        rs = self.readout_settings
        for name, p in (("readout_p01", rs.readout_p01), ("readout_p10", rs.readout_p10)):
            if not 0 <= p < 0.5:
                raise InvalidConfigError(f"{name} must lie in [0, 0.5), received {p}.")

        if es.mode == Mode.SAMPLED:
            if es.seed is None:
                raise InvalidConfigError("A seed is required for sampled evolution.")
            if es.shots < 1:
                raise InvalidConfigError(f"At least one shot is required, received {es.shots}.")
        elif rs.is_noisy or rs.mitigate or es.deferred:
            raise InvalidConfigError(
                "Readout noise, mitigation and deferred measurement require the sample mode."
            )

        if es.mode != Mode.ED:
            kind = self.model_settings.model
            scheme = self.scheme()
            if scheme == Scheme.GLOBAL and kind == ModelKind.NHSSH:
                raise InvalidConfigError("The nhssh model requires the local scheme.")
            if scheme == Scheme.LOCAL and kind == ModelKind.HN_INT:
                raise InvalidConfigError("The hn-int model requires the global scheme.")


@dataclass(slots=True)
class FermiSkinConfig(RunConfig):
    """Parameters of a Hatano-Nelson Fermi skin computation."""

    fermi_skin_settings: cp.FermiSkinSettings = field(default_factory=cp.FermiSkinSettings)

    def validate(self) -> None:  # noqa: D102
        fs = self.fermi_skin_settings
        if fs.L < 1:
            raise InvalidConfigError(f"At least one site is required, received L={fs.L}.")
        if not 1 <= fs.N <= fs.L:
            raise InvalidConfigError(f"Cannot occupy N={fs.N} states on L={fs.L} sites.")
        if fs.kappa < 0:
            raise InvalidConfigError(f"kappa must be non-negative, received {fs.kappa}.")


@dataclass(slots=True)
class VQAConfig(RunConfig):
    """Parameters of a variational recompilation run."""

    model_settings: cp.ModelSettings = field(default_factory=cp.ModelSettings)
    evolve_settings: cp.EvolveSettings = field(default_factory=cp.EvolveSettings)
    vqa_settings: cp.VQASettings = field(default_factory=cp.VQASettings)

    def to_spec(self) -> ModelSpec:  # noqa: D102
        return _validate_model(self.model_settings)

    def initial_state(self) -> StateVector:  # noqa: D102
        return parse_initial_state(self.evolve_settings.initial, self.model_settings.length)

    def scheme(self) -> Scheme:
        """Requested ancilla scheme, or the model's default when none is set."""
        return _resolve_scheme(self.to_spec(), self.evolve_settings)

    def validate(self) -> None:  # noqa: D102
        self.to_spec()
        self.initial_state()

        vs = self.vqa_settings
        if vs.layers < 0:
            raise InvalidConfigError(f"Layer count must be non-negative, received {vs.layers}.")
        if vs.budget < 1:
            raise InvalidConfigError(f"Evaluation budget must be at least 1, received {vs.budget}.")
        if vs.restarts < 1 or vs.workers < 1 or vs.ladder_repeats < 1:
            raise InvalidConfigError("restarts, workers and ladder_repeats must be at least 1.")


def parse_config_params(config_filepath: Path) -> dict[str, str]:
    """
    Parse raw configuration parameters from the provided file.

    Parameters are assumed to be `param: val` pairs & are returned in their raw form. `;` is
    treated as a comment character & any text following it in a line is ignored.
    """
    parsed_params = {}
    with config_filepath.open("r", encoding="utf-8") as f:
        for line in f:
            if not line.strip() or line.startswith(";"):
                continue

            kv_pair = line.split(";")[0].strip()
            if kv_pair:
                try:
                    param, val = kv_pair.split(":", maxsplit=1)
                except ValueError:
                    raise InvalidConfigError(f"Malformed config line: '{kv_pair}'") from None
                parsed_params[param.strip()] = val.strip()

    return parsed_params


def package_version() -> str:  # noqa: D103
    try:
        return metadata.version("pynhse")
    except metadata.PackageNotFoundError:  # pragma: no cover
        return "unknown"


def write_manifest(
    filepath: Path, command: str, config: RunConfig, artifacts: list[str] | None = None
) -> None:
    """
    Write a JSON run manifest: the command, resolved config, package version and UTC timestamp.

    The manifest is the only output carrying a timestamp.
    """
    manifest = {
        "command": command,
        "version": package_version(),
        "timestamp": dt.datetime.now(dt.UTC).isoformat(),
        "config": config.to_dict(),
        "artifacts": sorted(artifacts) if artifacts is not None else [],
    }
    with filepath.open("w") as f:
        json.dump(manifest, f, indent=4)
