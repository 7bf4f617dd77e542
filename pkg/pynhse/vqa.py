"""
Variational recompilation of post-selected Trotter evolution into a fixed-depth circuit.

The ansatz is a leading column of `U3` rotations followed by `num_layers` layers, each a `U3`
column then a controlled-flip ladder over the pairs `(0, 1), (2, 3), ...` and then
`(1, 2), (3, 4), ...`, with the lower qubit of each pair as control.
"""

from __future__ import annotations

import json
import logging
import math
import typing as t
from collections import abc
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.optimize

from pynhse import ComplexArray, RealArray, Spin
from pynhse.evolution import evolve_exact, strip_ancillas
from pynhse.exceptions import ParameterCountError, PostSelectionError
from pynhse.models import TrotterPlan
from pynhse.observables import DensityProfile, density
from pynhse.statevector import StateVector, apply, inner, project

logger = logging.getLogger(__name__)

# Local index bit 0 is the control, bit 1 the target
CX = np.array(
    [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]],
    dtype=np.complex128,
)


@dataclass(frozen=True, slots=True)
class AnsatzSpec:
    """
    Layered hardware-efficient ansatz over `num_qubits` qubits (physical + ancilla).

    `ladder_repeats` repeats the entangling ladder inside every layer.
    """

    num_qubits: int
    num_layers: int
    ladder_repeats: int = 1

    def __post_init__(self) -> None:
        if self.num_qubits < 1 or self.num_layers < 0 or self.ladder_repeats < 1:
            raise ValueError(
                "Ansatz needs at least one qubit, a non-negative layer count and at least one "
                "ladder repetition."
            )

    @property
    def num_params(self) -> int:  # noqa: D102
        return 3 * self.num_qubits * (self.num_layers + 1)

    @property
    def ladder_pairs(self) -> list[tuple[int, int]]:  # noqa: D102
        even = [(i, i + 1) for i in range(0, self.num_qubits - 1, 2)]
        odd = [(i, i + 1) for i in range(1, self.num_qubits - 1, 2)]
        return (even + odd) * self.ladder_repeats

    @property
    def entanglers_per_layer(self) -> int:  # noqa: D102
        return len(self.ladder_pairs)


def u3(theta: float, phi: float, lam: float) -> ComplexArray:
    """Build the general single-qubit rotation `U3(theta, phi, lambda)`."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [
            [c, -np.exp(1j * lam) * s],
            [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c],
        ],
        dtype=np.complex128,
    )


def _rotation_column(state: StateVector, angles: RealArray) -> StateVector:
    for q, (theta, phi, lam) in enumerate(angles):
        state = apply(state, u3(theta, phi, lam), [q])

    return state


def ansatz_apply(spec: AnsatzSpec, params: RealArray, psi0: StateVector) -> StateVector:
    """Run the ansatz circuit on `psi0`; `params` holds `(theta, phi, lambda)` per rotation."""
    params = np.asarray(params, dtype=float)
    if params.size != spec.num_params:
        raise ParameterCountError(
            f"Ansatz expects {spec.num_params} parameters, received {params.size}."
        )
    if psi0.num_qubits != spec.num_qubits:
        raise ValueError(f"Ansatz acts on {spec.num_qubits} qubits, state has {psi0.num_qubits}.")

    columns = params.reshape(spec.num_layers + 1, spec.num_qubits, 3)
    state = _rotation_column(psi0, columns[0])
    for angles in columns[1:]:
        state = _rotation_column(state, angles)
        for pair in spec.ladder_pairs:
            state = apply(state, CX, pair)

    return state


def target_apply(plan: TrotterPlan, psi0: StateVector, steps: int) -> tuple[StateVector, float]:
    """
    Return the normalized post-selected register after `steps` steps and its success amplitude.

    The register includes the plan's ancillas, left in the up state by the post-selection.
    """
    trace = evolve_exact(plan, psi0, steps)
    assert trace.final_state is not None
    return trace.final_state.normalized(), math.sqrt(trace.success_prob[-1])


def cost(spec: AnsatzSpec, params: RealArray, psi0: StateVector, target: StateVector) -> float:
    """Overlap cost `Q = 1 - |<ansatz(psi0)|target>|` against the normalized target."""
    prepared = ansatz_apply(spec, params, psi0)
    return min(1.0, max(0.0, 1.0 - abs(inner(prepared, target.normalized()))))


def raw_cost(
    spec: AnsatzSpec,
    params: RealArray,
    psi0: StateVector,
    target: StateVector,
    success_amplitude: float,
) -> float:
    """Overlap cost against the unnormalized target, bounded below by `1 - success_amplitude`."""
    prepared = ansatz_apply(spec, params, psi0)
    return 1.0 - success_amplitude * abs(inner(prepared, target.normalized()))


def finite_difference_gradient(
    f: abc.Callable[[RealArray], float], params: RealArray, h: float = 1e-5, workers: int = 1
) -> RealArray:
    """Central-difference gradient of `f`, fanned out over a thread pool if `workers > 1`."""
    params = np.asarray(params, dtype=float)

    def partial(i: int) -> float:
        shift = np.zeros_like(params)
        shift[i] = h
        return (f(params + shift) - f(params - shift)) / (2 * h)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.fromiter(pool.map(partial, range(params.size)), dtype=float)

    return np.array([partial(i) for i in range(params.size)])


@dataclass(slots=True)
class OptimizationResult:
    """
    Outcome of a variational training run.

    `history` holds the best-so-far cost after every objective evaluation.
    """

    params: RealArray
    cost: float
    history: list[float] = field(default_factory=list)
    evaluations: int = 0
    restarts_used: int = 0
    converged: bool = False
    seed: int | None = None

    @property
    def fidelity(self) -> float:  # noqa: D102
        return (1.0 - self.cost) ** 2

    def report(self, spec: AnsatzSpec) -> dict[str, t.Any]:
        """JSON-friendly training report."""
        return {
            "num_qubits": spec.num_qubits,
            "num_layers": spec.num_layers,
            "ladder_repeats": spec.ladder_repeats,
            "seed": self.seed,
            "iterations": self.evaluations,
            "restarts_used": self.restarts_used,
            "converged": self.converged,
            "final_cost": self.cost,
            "final_fidelity": self.fidelity,
            "history": self.history,
            "params": self.params.tolist(),
        }

    def to_json(self, filepath: Path, spec: AnsatzSpec) -> None:  # noqa: D102
        with filepath.open("w") as f:
            json.dump(self.report(spec), f, indent=4)


class _StopTraining(Exception): ...  # noqa: N818


def optimize(
    spec: AnsatzSpec,
    psi0: StateVector,
    target: StateVector,
    budget: int,
    seed: int,
    restarts: int = 1,
    tolerance: float = 0.0,
    workers: int = 1,
) -> OptimizationResult:
    """
    Minimize the overlap cost with L-BFGS-B driven by a central-difference gradient.

    Each restart draws initial angles uniformly from `[-pi, pi)`. `budget` caps the number of
    objective evaluations (each a cost value plus its gradient) across all restarts; training
    stops early once the best cost reaches `tolerance`. The best parameters seen are returned.
    """
    if budget < 1:
        raise ValueError("Evaluation budget must be at least 1.")

    target = target.normalized()
    rng = np.random.default_rng(seed)
    best = OptimizationResult(params=np.zeros(spec.num_params), cost=math.inf, seed=seed)

    def objective(x: RealArray) -> float:
        return cost(spec, x, psi0, target)

    def fun(x: RealArray) -> tuple[float, RealArray]:
        if best.evaluations >= budget:
            raise _StopTraining

        q = objective(x)
        grad = finite_difference_gradient(objective, x, workers=workers)
        best.evaluations += 1
        if q < best.cost:
            best.cost, best.params = q, x.copy()

        best.history.append(best.cost)
        if best.cost <= tolerance:
            best.converged = True
            raise _StopTraining

        return q, grad

    for attempt in range(restarts):
        best.restarts_used = attempt + 1
        x0 = rng.uniform(-np.pi, np.pi, spec.num_params)
        try:
            scipy.optimize.minimize(
                fun,
                x0,
                jac=True,
                method="L-BFGS-B",
                options={"maxfun": budget, "ftol": 1e-15, "gtol": 1e-10},
            )
        except _StopTraining:
            break

        logger.info("Restart %d finished with best cost %.6g", attempt + 1, best.cost)

    if best.evaluations >= budget and not best.converged:
        logger.warning("Evaluation budget (%d) exhausted, best cost %.6g", budget, best.cost)

    return best


def replay_density(
    spec: AnsatzSpec, params: RealArray, psi0: StateVector, num_physical: int
) -> DensityProfile:
    """Run the trained ansatz, post-select every ancilla onto up, report the physical density."""
    state = ansatz_apply(spec, params, psi0)
    for q in range(num_physical, state.num_qubits):
        state, p = project(state, q, Spin.UP)
        if p == 0:
            raise PostSelectionError(f"Ansatz output has no weight with ancilla {q} up.")

    return density(strip_ancillas(state, num_physical))
