import logging
import math

import numpy as np
import pytest
from pytest_mock import MockerFixture

from pynhse import noise
from pynhse.noise import (
    QuasiDistribution,
    ReadoutModel,
    calibration_circuit_count,
    corrupt,
    mitigate,
    reduced_confusion,
)
from pynhse.statevector import Bitstring, ShotTable
from tests.checks import is_close


def _table(counts: dict[int, int], num_qubits: int) -> ShotTable:
    return ShotTable.from_index_counts(counts.keys(), counts.values(), num_qubits)


def _as_vector(quasi: QuasiDistribution) -> np.ndarray:
    out = np.zeros(1 << quasi.num_qubits)
    for b, q in quasi.quasi.items():
        out[b.index] = q

    return out


def test_readout_model_uniform() -> None:
    model = ReadoutModel.uniform(3, 0.02, 0.05)

    assert model.num_qubits == 3
    is_close(model.confusion(1), [[0.98, 0.05], [0.02, 0.95]], atol=0)


READOUT_MODEL_ERROR_TEST_CASES = (
    ([0.5], [0.1], "p01"),
    ([0.1], [-0.01], "p10"),
    ([0.1, 0.1], [0.1], "equal length"),
)


@pytest.mark.parametrize(("p01", "p10", "match"), READOUT_MODEL_ERROR_TEST_CASES)
def test_readout_model_invalid_raises(p01: list[float], p10: list[float], match: str) -> None:
    with pytest.raises(ValueError, match=match):
        ReadoutModel(np.array(p01), np.array(p10))


def test_calibration_circuit_count() -> None:
    assert calibration_circuit_count(6) == 12


def test_corrupt_zero_noise_is_identity() -> None:
    table = _table({0b0101: 30, 0b1111: 70}, 4)

    assert corrupt(table, ReadoutModel.uniform(4, 0.0), seed=1) == table


def test_corrupt_flip_rate() -> None:
    shots = 100_000
    table = _table({1: shots}, 1)
    noisy = corrupt(table, ReadoutModel(np.array([0.0]), np.array([0.02])), seed=11)

    flips = noisy.counts.get(Bitstring.from_index(0, 1), 0)
    sigma = np.sqrt(shots * 0.02 * 0.98)
    assert abs(flips - shots * 0.02) < 5 * sigma
    assert noisy.total_shots == shots


def test_corrupt_deterministic() -> None:
    table = _table({0b011: 500, 0b100: 500}, 3)
    model = ReadoutModel.uniform(3, 0.1)

    assert corrupt(table, model, seed=5) == corrupt(table, model, seed=5)


def test_corrupt_keeps_total_shots() -> None:
    table = ShotTable.from_index_counts([2], [40], 2, total_shots=100)
    noisy = corrupt(table, ReadoutModel.uniform(2, 0.2), seed=0)

    assert noisy.total_shots == 100
    assert noisy.postselected_shots == 40


def test_corrupt_size_mismatch_raises() -> None:
    with pytest.raises(ValueError, match="covers 2 qubits"):
        corrupt(_table({0: 1}, 3), ReadoutModel.uniform(2, 0.1), seed=0)


def test_reduced_confusion_columns_normalized() -> None:
    labels = [Bitstring.from_index(i, 3) for i in (0, 3, 5)]
    a = reduced_confusion(labels, ReadoutModel.uniform(3, 0.1, 0.2))

    assert a.shape == (3, 3)
    is_close(a.sum(axis=0), np.ones(3), atol=1e-14)
    assert np.all(np.diag(a) > a.max(axis=0) - 1e-15)


def test_mitigate_zero_noise() -> None:
    table = _table({0b00: 10, 0b10: 30, 0b11: 60}, 2)
    quasi = mitigate(table, ReadoutModel.uniform(2, 0.0))

    is_close(_as_vector(quasi), [0.1, 0, 0.3, 0.6], atol=1e-12)
    assert not quasi.diagonal_fallback


def test_mitigate_single_qubit_closed_form() -> None:
    p01, p10 = 0.05, 0.1
    quasi = mitigate(_table({0: 700, 1: 300}, 1), ReadoutModel(np.array([p01]), np.array([p10])))

    truth_up = (0.3 - p01) / (1 - p01 - p10)
    is_close(_as_vector(quasi), [1 - truth_up, truth_up], atol=1e-12)


def test_mitigate_reduces_error() -> None:
    rng = np.random.default_rng(7)
    truth = rng.dirichlet(np.ones(16))
    shots = 100_000
    ideal = ShotTable.from_index_counts(range(16), rng.multinomial(shots, truth), 4)
    noisy = corrupt(ideal, ReadoutModel.uniform(4, 0.03, 0.05), seed=8)

    observed = np.zeros(16)
    for b, c in noisy.counts.items():
        observed[b.index] = c / shots

    quasi = mitigate(noisy, ReadoutModel.uniform(4, 0.03, 0.05))
    raw_error = np.abs(observed - truth).sum()
    mitigated_error = np.abs(_as_vector(quasi) - truth).sum()
    assert mitigated_error <= 0.5 * raw_error
    assert quasi.total == pytest.approx(1, abs=1e-6)


def test_mitigate_stays_in_observed_subspace() -> None:
    table = _table({0b0000: 800, 0b0001: 150, 0b1000: 50}, 4)
    quasi = mitigate(table, ReadoutModel.uniform(4, 0.05))

    assert set(quasi.quasi) == set(table.counts)
    assert quasi.total == pytest.approx(1, abs=1e-6)


def test_mitigate_diagonal_fallback(
    mocker: MockerFixture, caplog: pytest.LogCaptureFixture
) -> None:
    mocker.patch("pynhse.noise.MITIGATION_COND_CAP", 0.5)
    with caplog.at_level(logging.WARNING):
        quasi = mitigate(_table({0: 600, 1: 400}, 1), ReadoutModel.uniform(1, 0.1))

    assert quasi.diagonal_fallback
    assert "ill-conditioned" in caplog.text
    is_close(_as_vector(quasi), [0.6 / 0.9, 0.4 / 0.9], atol=1e-12)


def test_mitigate_empty_table_raises() -> None:
    empty = ShotTable.from_index_counts([], [], 2, total_shots=10)
    with pytest.raises(ValueError, match="empty shot table"):
        mitigate(empty, ReadoutModel.uniform(2, 0.1))


def test_mitigate_size_mismatch_raises() -> None:
    with pytest.raises(ValueError, match="covers 1 qubits"):
        mitigate(_table({0: 1}, 2), ReadoutModel.uniform(1, 0.1))


def test_quasi_postselect_and_densities() -> None:
    quasi = QuasiDistribution(
        num_qubits=2,
        quasi={
            Bitstring.from_index(0b00, 2): 0.1,
            Bitstring.from_index(0b10, 2): 0.5,
            Bitstring.from_index(0b11, 2): 0.45,
            Bitstring.from_index(0b01, 2): -0.05,
        },
        condition_number=1.0,
    )
    kept = quasi.postselect([1])

    assert set(b.index for b in kept.quasi) == {0b10, 0b11}
    is_close(kept.densities([0]), [0.45 / 0.95], atol=1e-12)


def test_quasi_empty_densities_are_nan() -> None:
    quasi = QuasiDistribution(num_qubits=2, quasi={}, condition_number=1.0)

    assert np.all(np.isnan(quasi.densities([0, 1])))


def test_mitigate_subspace_cap_skips_dense_matrix(
    mocker: MockerFixture, caplog: pytest.LogCaptureFixture
) -> None:
    table = _table({0: 500, 1: 200, 2: 200, 3: 100}, 2)
    model = ReadoutModel(np.array([0.05, 0.1]), np.array([0.02, 0.08]))
    mocker.patch("pynhse.noise.MITIGATION_COND_CAP", 0.5)
    dense = mitigate(table, model)

    mocker.patch("pynhse.noise.MITIGATION_SUBSPACE_CAP", 3)
    mocker.patch("pynhse.noise._DIAGONAL_CHUNK", 3)
    spy = mocker.spy(noise, "reduced_confusion")
    with caplog.at_level(logging.WARNING):
        capped = mitigate(table, model)

    spy.assert_not_called()
    assert "subspace cap" in caplog.text
    assert capped.diagonal_fallback
    assert math.isnan(capped.condition_number)
    is_close(_as_vector(capped), _as_vector(dense), atol=1e-12)
