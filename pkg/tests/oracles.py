"""Independent reference implementations used only by the tests.

Everything here is built from full 2^n x 2^n matrices assembled with
Kronecker products, so it shares no code path with the package's
reshaped-tensor kernels.
"""
from __future__ import annotations

from functools import reduce

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
HAD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


def ry(t):
    return np.array([[np.cos(t / 2), -np.sin(t / 2)], [np.sin(t / 2), np.cos(t / 2)]], dtype=complex)


def rz(t):
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def embed(op, q, n):
    """Full matrix of a one-qubit ``op`` on qubit ``q`` (qubit 0 = least significant bit)."""
    # kron builds big-endian, so list qubits from n-1 down to 0
    return reduce(np.kron, [op if k == q else I2 for k in reversed(range(n))])


def cnot(c, t, n):
    return embed(P0, c, n) + embed(P1, c, n) @ embed(X, t, n)


def gate_matrix(gate, n):
    if gate.kind == "H":
        return embed(HAD, gate.qubits[0], n)
    if gate.kind == "RY":
        return embed(ry(gate.theta), gate.qubits[0], n)
    if gate.kind == "RZ":
        return embed(rz(gate.theta), gate.qubits[0], n)
    if gate.kind == "CNOT":
        return cnot(*gate.qubits, n)
    raise ValueError(gate.kind)


def simulate(circuit, psi=None):
    n = circuit.n_qubits
    if psi is None:
        psi = np.zeros(2 ** n, dtype=complex)
        psi[0] = 1
    for g in circuit.gates:
        psi = gate_matrix(g, n) @ psi
    return psi


def pauli_expectation(psi, factors, n):
    op = reduce(lambda a, b: a @ b, [embed(PAULIS[p], q, n) for q, p in factors], np.eye(2 ** n))
    return float(np.real(np.vdot(psi, op @ psi)))


def ansatz_outputs(n, depth, first, angles, x):
    """<Z_q> of the embedding + brick-wall layers, built gate by gate from matrices."""
    psi = np.zeros(2 ** n, dtype=complex)
    psi[0] = 1
    for q in range(n):
        psi = embed(rz(x[q]) @ HAD, q, n) @ psi
    angles = np.asarray(angles).reshape(depth, n)
    for layer in range(depth):
        for c in range(layer % 2, n - 1, 2):
            psi = cnot(c, c + 1, n) @ psi
        use_y = (layer % 2 == 0) == (first == "Y")
        for q in range(n):
            psi = embed(ry(angles[layer, q]) if use_y else rz(angles[layer, q]), q, n) @ psi
    return np.array([pauli_expectation(psi, [(q, "Z")], n) for q in range(n)])


def hybrid_logits(Wp, bp, n, depth, first, angles, Wr, br, skip, x):
    p = Wp @ x + bp
    m = ansatz_outputs(n, depth, first, angles, p)
    h = m + p if skip else m
    return Wr @ h + br
