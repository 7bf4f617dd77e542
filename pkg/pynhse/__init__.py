import typing as t
from enum import IntEnum, StrEnum

import numpy as np
import numpy.typing as npt

NUMERIC_T: t.TypeAlias = float | int
ComplexArray: t.TypeAlias = npt.NDArray[np.complex128]
RealArray: t.TypeAlias = npt.NDArray[np.float64]

# Largest physical register the dense Hamiltonian oracle will build
DENSE_QUBIT_CAP = 14

# Largest full register (physical + ancillas) the statevector engine will allocate
REGISTER_QUBIT_CAP = 22


class Spin(IntEnum):
    """Single-qubit computational values; up marks an occupied site."""

    DOWN = 0
    UP = 1


class ModelKind(StrEnum):
    """Enumerate the supported spin-chain models."""

    HN = "hn"
    NHSSH = "nhssh"
    HN_INT = "hn-int"


class Scheme(StrEnum):
    """Enumerate ancilla attachment schemes for non-unitary Trotter steps."""

    LOCAL = "local"
    GLOBAL = "global"


class Mode(StrEnum):
    """Enumerate evolution execution modes."""

    EXACT = "exact"
    SAMPLED = "sample"
    ED = "ed"
