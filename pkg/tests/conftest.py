import numpy as np
import pytest

from pynhse import ModelKind
from pynhse.models import ModelSpec
from pynhse.statevector import Bitstring, StateVector, init_basis, superposition


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def symmetric_initial() -> StateVector:
    """Particle shared equally between the two central sites of a 6-site chain."""
    return superposition([Bitstring.from_ket("001000"), Bitstring.from_ket("000100")])


@pytest.fixture
def hn_spec() -> ModelSpec:
    return ModelSpec(kind=ModelKind.HN, L=6, J=1.0, gamma=0.5)


@pytest.fixture
def half_filled_4() -> StateVector:
    return init_basis(Bitstring.from_ket("1100"))


def random_state(rng: np.random.Generator, num_qubits: int) -> StateVector:
    """Draw a normalized random complex state."""
    amps = rng.normal(size=1 << num_qubits) + 1j * rng.normal(size=1 << num_qubits)
    return StateVector(num_qubits, amps / np.linalg.norm(amps))
