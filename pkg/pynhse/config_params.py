from __future__ import annotations

import io
from dataclasses import dataclass, fields

from pynhse import Mode, ModelKind, Scheme

# NOTE: All dataclass field names should match the parameter names expected in a run config file


@dataclass(slots=True)
class RunSetting:
    _header: str = ""
    _header_text: str | None = None

    def to_buffer(self, buff: io.StringIO) -> None:
        """
        Dump the class' fields to the provided string buffer.

        NOTE: Fields with a leading underscore are ignored.
        """
        for param in fields(self):
            if param.name.startswith("_"):
                continue

            val = getattr(self, param.name)
            buff.write(f"{param.name}: {val}\n")


FILE_HEADER = """\
; pynhse run configuration
;
; NOTE: This file has been automatically generated. Parameters are given as
;       `name: value` pairs; `;` starts a comment. Missing parameters are
;       interpreted as their defaults and parameters passed on the command line
;       take precedence over values set here.
"""


# Model settings
MODEL_HEADER = """\
; NOTE: model is one of hn, nhssh, hn-int. The nhssh model requires an even
;       length. Hopping asymmetry must satisfy |gamma| < J.
"""


@dataclass(slots=True)
class ModelSettings(RunSetting):
    model: ModelKind = ModelKind.HN
    length: int = 6
    J: float = 1.0
    gamma: float = 0.5
    U: float = 0.0  # Only used by hn-int

    _header: str = "; Model settings"
    _header_text: str | None = MODEL_HEADER


# Evolution settings
EVOLVE_HEADER = """\
; NOTE: initial lists site 0 first; equal-weight superpositions are joined by
;       `+`, e.g. 001000+000100
;
; NOTE: scheme is one of local, global or None. None picks local for nhssh,
;       global for hn-int, and global for hn up to 10 sites (local above).
;
; NOTE: seed is required when mode is sample. Deferred ancilla measurement is
;       only valid for fresh-ancilla plans.
"""


@dataclass(slots=True)
class EvolveSettings(RunSetting):
    scheme: Scheme | None = None  # None picks the model default
    mode: Mode = Mode.EXACT
    dt: float = 0.1
    steps: int = 10
    initial: str = "001000+000100"
    shots: int = 10_000
    seed: int | None = None
    deferred: bool = False

    _header: str = "; Evolution settings"
    _header_text: str | None = EVOLVE_HEADER


# Readout settings
READOUT_HEADER = """\
; NOTE: Flip probabilities apply uniformly to every register qubit & must lie
;       in [0, 0.5). p01 is the probability of reading up given down.
"""


@dataclass(slots=True)
class ReadoutSettings(RunSetting):
    readout_p01: float = 0.0
    readout_p10: float = 0.0
    mitigate: bool = False

    _header: str = "; Readout settings"
    _header_text: str | None = READOUT_HEADER

    @property
    def is_noisy(self) -> bool:  # noqa: D102
        return self.readout_p01 > 0 or self.readout_p10 > 0


# Fermi skin settings
FERMI_SKIN_HEADER = """\
; NOTE: Sites are indexed 1..L. The brute-force oracle check is limited to
;       L <= 12.
"""


@dataclass(slots=True)
class FermiSkinSettings(RunSetting):
    L: int = 8
    N: int = 7
    kappa: float = 2.302585
    check_oracle: bool = False

    _header: str = "; Fermi skin settings"
    _header_text: str | None = FERMI_SKIN_HEADER


# Variational settings
VQA_HEADER = """\
; NOTE: budget counts objective evaluations across all restarts.
"""


@dataclass(slots=True)
class VQASettings(RunSetting):
    layers: int = 4
    ladder_repeats: int = 1
    budget: int = 2000
    train_seed: int = 0
    restarts: int = 1
    tolerance: float = 0.0
    workers: int = 1
    replay: bool = False

    _header: str = "; Variational settings"
    _header_text: str | None = VQA_HEADER

