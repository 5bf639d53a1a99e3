"""Dense statevector simulation for few-qubit circuits.

Conventions
-----------
* Little-endian: qubit ``q`` is bit ``q`` of the amplitude index, so for
  two qubits ``amplitudes[1]`` is the amplitude with qubit 0 set.
* ``RZ(t) = diag(exp(-i t/2), exp(+i t/2))``,
  ``RY(t) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]``,
  ``H = [[1, 1], [1, -1]] / sqrt(2)``.
* Global phase is kept as-is.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import cos, sin, sqrt
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError, InvalidCircuitError

_INV_SQRT2 = 1.0 / sqrt(2.0)
_ZERO_BRANCH = 1e-28
_PREPARE_TOL = 1e-12

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
H_MATRIX = np.array([[1, 1], [1, -1]], dtype=complex) * _INV_SQRT2
S_MATRIX = np.array([[1, 0], [0, 1j]], dtype=complex)

# |0> -> eigenstate of the named Pauli with the named sign
_PREPARE_UNITARY = {
    "Z+": PAULI["I"],
    "Z-": PAULI["X"],
    "X+": H_MATRIX,
    "X-": H_MATRIX @ PAULI["X"],
    "Y+": S_MATRIX @ H_MATRIX,
    "Y-": S_MATRIX @ H_MATRIX @ PAULI["X"],
}
PREPARE_STATES = tuple(_PREPARE_UNITARY)
UNITARY_KINDS = ("H", "RY", "RZ", "CNOT")


def ry_matrix(theta: float) -> np.ndarray:
    c, s = cos(theta / 2), sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_matrix(theta: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=complex)


@dataclass(frozen=True)
class Gate:
    """One circuit instruction.

    Build gates with the factory functions :func:`H`, :func:`RY`, :func:`RZ`,
    :func:`CNOT`, :func:`PrepareState` and :func:`MeasureCollapse` rather
    than calling the constructor directly.
    """

    kind: str
    qubits: tuple[int, ...]
    theta: float = 0.0
    basis: str | None = None
    outcome: int | None = None
    state: str | None = None

    @property
    def is_unitary(self) -> bool:
        return self.kind in UNITARY_KINDS

    def on(self, mapping) -> "Gate":
        """Copy of this gate with qubit indices sent through ``mapping``."""
        return Gate(self.kind, tuple(mapping[q] for q in self.qubits), self.theta,
                    self.basis, self.outcome, self.state)

    def __repr__(self) -> str:
        args = ", ".join(str(q) for q in self.qubits)
        if self.kind in ("RY", "RZ"):
            args += f", {self.theta:.6g}"
        elif self.kind == "PrepareState":
            args += f", {self.state}"
        elif self.kind == "MeasureCollapse":
            args += f", {self.basis}, {self.outcome:+d}"
        return f"{self.kind}({args})"


def H(q: int) -> Gate:
    return Gate("H", (q,))


def RY(q: int, theta: float) -> Gate:
    return Gate("RY", (q,), float(theta))


def RZ(q: int, theta: float) -> Gate:
    return Gate("RZ", (q,), float(theta))


def CNOT(control: int, target: int) -> Gate:
    if control == target:
        raise InvalidCircuitError(f"CNOT control and target coincide ({control})")
    return Gate("CNOT", (control, target))


def PrepareState(q: int, state: str) -> Gate:
    """Prepare a fresh qubit (which must be in |0>) in a Pauli eigenstate."""
    if state not in _PREPARE_UNITARY:
        raise InvalidCircuitError(f"unknown preparation {state!r}; expected one of {PREPARE_STATES}")
    return Gate("PrepareState", (q,), state=state)


def MeasureCollapse(q: int, basis: str, outcome: int) -> Gate:
    """Project qubit ``q`` onto the ``outcome`` eigenspace of ``basis``."""
    if basis not in ("X", "Y", "Z"):
        raise InvalidCircuitError(f"unknown measurement basis {basis!r}")
    if outcome not in (1, -1):
        raise InvalidCircuitError(f"measurement outcome must be +1 or -1, got {outcome!r}")
    return Gate("MeasureCollapse", (q,), basis=basis, outcome=int(outcome))


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_qubits < 1:
            raise InvalidCircuitError(f"n_qubits must be >= 1, got {self.n_qubits}")
        for i, g in enumerate(self.gates):
            _check_gate(g, self.n_qubits, where=f"gate {i}")

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise InvalidCircuitError("cannot concatenate circuits of different widths")
        return Circuit(self.n_qubits, self.gates + other.gates)


@dataclass(frozen=True, eq=False)
class Statevector:
    """Amplitudes of an ``n_qubits`` pure state.

    ``null`` marks the zero vector produced by a measurement branch of
    probability zero; such a state carries no physical meaning and every
    expectation on it is 0.
    """

    n_qubits: int
    amplitudes: np.ndarray
    null: bool = False

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if self.n_qubits < 1:
            raise InvalidArgumentError(f"n_qubits must be >= 1, got {self.n_qubits}")
        if amps.shape != (1 << self.n_qubits,):
            raise InvalidArgumentError(
                f"expected {1 << self.n_qubits} amplitudes for {self.n_qubits} qubits, got shape {amps.shape}"
            )
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, n_qubits: int) -> "Statevector":
        return cls.basis(n_qubits, 0)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "Statevector":
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "Statevector":
        """Basis state with ``bits[q]`` the value of qubit ``q``."""
        return cls.basis(len(bits), sum(int(b) << q for q, b in enumerate(bits)))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "Statevector":
        return Statevector(self.n_qubits, self.amplitudes.copy(), self.null)


def _check_gate(gate: Gate, n_qubits: int, where: str = "gate") -> None:
    for q in gate.qubits:
        if not (0 <= q < n_qubits):
            raise InvalidCircuitError(f"{where} {gate!r}: qubit {q} out of range for {n_qubits} qubits")
    if len(set(gate.qubits)) != len(gate.qubits):
        raise InvalidCircuitError(f"{where} {gate!r}: repeated qubit")


def apply_matrix(amps: np.ndarray, matrix: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    """Apply a 2x2 matrix to ``qubit`` of a flat little-endian amplitude array."""
    view = amps.reshape(1 << (n_qubits - qubit - 1), 2, 1 << qubit)
    return np.einsum("ij,ajb->aib", matrix, view).reshape(-1)


@lru_cache(maxsize=256)
def cnot_permutation(control: int, target: int, n_qubits: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits)
    flip = ((idx >> control) & 1).astype(bool)
    perm = idx.copy()
    perm[flip] ^= 1 << target
    perm.setflags(write=False)
    return perm


def _projector(basis: str, outcome: int) -> np.ndarray:
    return 0.5 * (PAULI["I"] + outcome * PAULI[basis])


def apply_gate(state: Statevector, gate: Gate) -> tuple[Statevector, float]:
    """Apply one gate; returns ``(new_state, branch_weight)``.

    Unitary gates have weight 1. ``MeasureCollapse`` returns the Born
    probability of its outcome and the renormalized state, or weight 0 and a
    null state when that outcome is impossible.
    """
    n = state.n_qubits
    _check_gate(gate, n)
    amps = state.amplitudes
    kind = gate.kind
    if state.null:
        return state, 0.0 if kind == "MeasureCollapse" else 1.0

    if kind == "H":
        out = apply_matrix(amps, H_MATRIX, gate.qubits[0], n)
    elif kind == "RY":
        out = apply_matrix(amps, ry_matrix(gate.theta), gate.qubits[0], n)
    elif kind == "RZ":
        out = apply_matrix(amps, rz_matrix(gate.theta), gate.qubits[0], n)
    elif kind == "CNOT":
        out = amps[cnot_permutation(gate.qubits[0], gate.qubits[1], n)]
    elif kind == "PrepareState":
        q = gate.qubits[0]
        p_one = float(np.sum(np.abs(amps.reshape(-1, 2, 1 << q)[:, 1, :]) ** 2))
        if p_one > _PREPARE_TOL:
            raise InvalidCircuitError(
                f"{gate!r} requires qubit {q} in |0>, found P(1) = {p_one:.3g}"
            )
        out = apply_matrix(amps, _PREPARE_UNITARY[gate.state], q, n)
    elif kind == "MeasureCollapse":
        projected = apply_matrix(amps, _projector(gate.basis, gate.outcome), gate.qubits[0], n)
        prob = float(np.vdot(projected, projected).real)
        if prob <= _ZERO_BRANCH:
            return Statevector(n, np.zeros_like(amps), null=True), 0.0
        return Statevector(n, projected / sqrt(prob)), min(prob, 1.0)
    else:
        raise InvalidCircuitError(f"unknown gate kind {kind!r}")
    return Statevector(n, out), 1.0


def run_circuit(circuit: Circuit, initial: Statevector | None = None) -> tuple[Statevector, float]:
    """Apply every gate in order, multiplying branch weights."""
    state = Statevector.zero(circuit.n_qubits) if initial is None else initial
    if state.n_qubits != circuit.n_qubits:
        raise InvalidCircuitError(
            f"circuit has {circuit.n_qubits} qubits but the initial state has {state.n_qubits}"
        )
    total = 1.0
    for gate in circuit.gates:
        state, w = apply_gate(state, gate)
        total *= w
    return state, total


@lru_cache(maxsize=64)
def z_signs(qubit: int, n_qubits: int) -> np.ndarray:
    """+1/-1 eigenvalue of Z on ``qubit`` for every basis index."""
    signs = 1.0 - 2.0 * ((np.arange(1 << n_qubits) >> qubit) & 1)
    signs.setflags(write=False)
    return signs


def expectation_z(state: Statevector, qubit: int) -> float:
    if not (0 <= qubit < state.n_qubits):
        raise InvalidArgumentError(f"qubit {qubit} out of range for {state.n_qubits} qubits")
    if state.null:
        return 0.0
    return float(np.dot(state.probabilities(), z_signs(qubit, state.n_qubits)))


def expectation_pauli_product(state: Statevector, factors: Iterable[tuple[int, str]]) -> float:
    """Expectation of a tensor product of single-qubit Paulis.

    ``factors`` lists ``(qubit, "X"|"Y"|"Z"|"I")`` pairs on distinct qubits;
    an empty list is the identity observable.
    """
    factors = list(factors)
    qubits = [q for q, _ in factors]
    if len(set(qubits)) != len(qubits):
        raise InvalidArgumentError(f"duplicate qubit in Pauli product {factors}")
    for q, p in factors:
        if not (0 <= q < state.n_qubits):
            raise InvalidArgumentError(f"qubit {q} out of range for {state.n_qubits} qubits")
        if p not in PAULI:
            raise InvalidArgumentError(f"unknown Pauli {p!r}")
    if state.null:
        return 0.0
    if all(p in ("Z", "I") for _, p in factors):
        signs = np.ones(1 << state.n_qubits)
        for q, p in factors:
            if p == "Z":
                signs = signs * z_signs(q, state.n_qubits)
        return float(np.dot(state.probabilities(), signs))
    out = state.amplitudes
    for q, p in factors:
        out = apply_matrix(out, PAULI[p], q, state.n_qubits)
    return float(np.vdot(state.amplitudes, out).real)
