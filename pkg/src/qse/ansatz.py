"""Angle-embedding ansatz with brick-wall CNOT layers.

Circuit for ``n`` qubits and ``depth`` layers::

    per qubit q:      H(q), RZ(q, x[q])
    layer l (even):   CNOT(0,1), CNOT(2,3), ...   then one rotation per qubit
    layer l (odd):    CNOT(1,2), CNOT(3,4), ...   then one rotation per qubit

Rotations alternate between RY and RZ from layer to layer, starting with
``first_rotation``. No wrap-around CNOT between the last and first qubit.
The readout is ``<Z_q>`` for every qubit.

Two evaluation paths exist. :func:`forward` builds a :class:`Circuit` and
runs it gate by gate through :mod:`qse.statevector`. The batched engine
(:func:`expectations_batch`, :func:`parameter_shift_jacobian_batch`,
:func:`adjoint_vjp`) works layer-at-a-time on ``(batch, 2**n)`` arrays and
is what training uses.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidArgumentError
from .statevector import CNOT, H, RY, RZ, Circuit, expectation_z, run_circuit

HALF_PI = np.pi / 2


@dataclass(frozen=True)
class AnsatzSpec:
    n_qubits: int
    depth: int = 8
    first_rotation: str = "Y"

    def __post_init__(self):
        # n=1 is allowed: it has no CNOT pairs but is a valid closed-form instance
        if self.n_qubits < 1:
            raise InvalidArgumentError(f"ansatz needs n_qubits >= 1, got {self.n_qubits}")
        if self.depth < 1:
            raise InvalidArgumentError(f"ansatz depth must be >= 1, got {self.depth}")
        if self.first_rotation not in ("Y", "Z"):
            raise InvalidArgumentError(f"first_rotation must be 'Y' or 'Z', got {self.first_rotation!r}")

    @property
    def n_params(self) -> int:
        return self.depth * self.n_qubits

    def rotation(self, layer: int) -> str:
        if layer % 2 == 0:
            return self.first_rotation
        return "Z" if self.first_rotation == "Y" else "Y"

    def gate_count(self) -> int:
        return 2 * self.n_qubits + sum(len(cnot_pairs(self.n_qubits, l)) + self.n_qubits
                                       for l in range(self.depth))


def cnot_pairs(n_qubits: int, layer: int) -> list[tuple[int, int]]:
    start = layer % 2
    return [(q, q + 1) for q in range(start, n_qubits - 1, 2)]


def _as_params(spec: AnsatzSpec, params) -> np.ndarray:
    arr = np.asarray(params, dtype=float)
    if arr.size != spec.n_params:
        raise InvalidArgumentError(
            f"expected {spec.n_params} ansatz angles ({spec.depth} x {spec.n_qubits}), got {arr.size}"
        )
    return arr.reshape(spec.depth, spec.n_qubits)


def _as_inputs(spec: AnsatzSpec, x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (spec.n_qubits,):
        raise InvalidArgumentError(f"expected input of shape ({spec.n_qubits},), got {arr.shape}")
    return arr


def build_embedding(x) -> Circuit:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise InvalidArgumentError(f"embedding input must be a non-empty vector, got shape {x.shape}")
    gates = []
    for q, angle in enumerate(x):
        gates += [H(q), RZ(q, angle)]
    return Circuit(x.size, gates)


def build_layer(spec: AnsatzSpec, layer_index: int, layer_angles) -> Circuit:
    if not (0 <= layer_index < spec.depth):
        raise InvalidArgumentError(f"layer index {layer_index} out of range for depth {spec.depth}")
    angles = np.asarray(layer_angles, dtype=float)
    if angles.shape != (spec.n_qubits,):
        raise InvalidArgumentError(f"expected {spec.n_qubits} layer angles, got shape {angles.shape}")
    rot = RY if spec.rotation(layer_index) == "Y" else RZ
    gates = [CNOT(a, b) for a, b in cnot_pairs(spec.n_qubits, layer_index)]
    gates += [rot(q, angles[q]) for q in range(spec.n_qubits)]
    return Circuit(spec.n_qubits, gates)


def build_circuit(spec: AnsatzSpec, params, x) -> Circuit:
    theta = _as_params(spec, params)
    circuit = build_embedding(_as_inputs(spec, x))
    for layer in range(spec.depth):
        circuit = circuit + build_layer(spec, layer, theta[layer])
    return circuit


def forward(spec: AnsatzSpec, params, x) -> np.ndarray:
    """Measurement vector ``[<Z_0>, ..., <Z_{n-1}>]`` via the gate-level simulator."""
    state, _ = run_circuit(build_circuit(spec, params, x))
    return np.array([expectation_z(state, q) for q in range(spec.n_qubits)])


# --- batched layer engine -------------------------------------------------

@lru_cache(maxsize=32)
def _sign_matrix(n_qubits: int) -> np.ndarray:
    """(n, 2**n) matrix of Z eigenvalues, row q for qubit q."""
    idx = np.arange(1 << n_qubits)
    signs = 1.0 - 2.0 * ((idx[None, :] >> np.arange(n_qubits)[:, None]) & 1)
    signs.setflags(write=False)
    return signs


@lru_cache(maxsize=64)
def _layer_permutation(n_qubits: int, layer: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits)
    perm = idx.copy()
    for c, t in cnot_pairs(n_qubits, layer):
        flip = ((perm >> c) & 1).astype(bool)
        perm = np.where(flip, perm ^ (1 << t), perm)
    perm.setflags(write=False)
    return perm


def _embed(X: np.ndarray, n: int) -> np.ndarray:
    phase = -0.5 * (X @ _sign_matrix(n))
    return np.exp(1j * phase) * (2.0 ** (-n / 2))


def _rz_layer(psi, angles, n):
    return psi * np.exp(-0.5j * (angles @ _sign_matrix(n)))


def _ry_qubit(psi, angles_q, q, n):
    B = psi.shape[0]
    v = psi.reshape(B, 1 << (n - q - 1), 2, 1 << q)
    c = np.cos(angles_q / 2)[:, None, None]
    s = np.sin(angles_q / 2)[:, None, None]
    a0, a1 = v[:, :, 0, :], v[:, :, 1, :]
    out = np.empty_like(v)
    out[:, :, 0, :] = c * a0 - s * a1
    out[:, :, 1, :] = s * a0 + c * a1
    return out.reshape(B, -1)


def _y_qubit(psi, q, n):
    B = psi.shape[0]
    v = psi.reshape(B, 1 << (n - q - 1), 2, 1 << q)
    out = np.empty_like(v)
    out[:, :, 0, :] = -1j * v[:, :, 1, :]
    out[:, :, 1, :] = 1j * v[:, :, 0, :]
    return out.reshape(B, -1)


def _apply_layer(spec, psi, layer, angles):
    n = spec.n_qubits
    psi = psi[:, _layer_permutation(n, layer)]
    if spec.rotation(layer) == "Z":
        return _rz_layer(psi, angles, n)
    for q in range(n):
        psi = _ry_qubit(psi, angles[:, q], q, n)
    return psi


def _undo_layer(spec, psi, layer, angles):
    n = spec.n_qubits
    if spec.rotation(layer) == "Z":
        psi = _rz_layer(psi, -angles, n)
    else:
        for q in range(n):
            psi = _ry_qubit(psi, -angles[:, q], q, n)
    return psi[:, np.argsort(_layer_permutation(n, layer))]


def _final_states(spec, thetas, X):
    psi = _embed(X, spec.n_qubits)
    for layer in range(spec.depth):
        psi = _apply_layer(spec, psi, layer, thetas[:, layer, :])
    return psi


def expectations_batch(spec: AnsatzSpec, thetas, X) -> np.ndarray:
    """``<Z_q>`` for a batch of circuits.

    ``thetas`` is ``(B, depth, n)`` or a single ``(depth, n)`` shared by all
    rows; ``X`` is ``(B, n)``. Returns ``(B, n)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != spec.n_qubits:
        raise InvalidArgumentError(f"expected inputs with {spec.n_qubits} columns, got {X.shape}")
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim == 2 or thetas.ndim == 1:
        thetas = np.broadcast_to(_as_params(spec, thetas), (X.shape[0], spec.depth, spec.n_qubits))
    psi = _final_states(spec, thetas, X)
    return (np.abs(psi) ** 2) @ _sign_matrix(spec.n_qubits).T


def parameter_shift_jacobian_batch(spec: AnsatzSpec, params, X, *, _swap_shifts: bool = False) -> np.ndarray:
    """Shift-rule Jacobians for every row of ``X``.

    Returns ``(B, n_outputs, depth*n + n)``; columns are the circuit angles in
    (layer, qubit) row-major order followed by the input angles. Every
    generator is a Pauli rotation, so ``[f(a + pi/2) - f(a - pi/2)] / 2`` is
    exact.
    """
    theta = _as_params(spec, params)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    B, n = X.shape
    P = spec.n_params
    n_cols = P + n
    shifts = np.zeros((2 * n_cols, n_cols))
    eye = np.eye(n_cols) * HALF_PI
    shifts[0::2] = eye
    shifts[1::2] = -eye
    if _swap_shifts:
        shifts = -shifts

    theta_rows = theta.reshape(1, 1, P) + shifts[None, :, :P]        # (1, 2C, P)
    theta_rows = np.broadcast_to(theta_rows, (B, 2 * n_cols, P)).reshape(-1, spec.depth, n)
    x_rows = (X[:, None, :] + shifts[None, :, P:]).reshape(-1, n)
    values = expectations_batch(spec, theta_rows, x_rows).reshape(B, 2 * n_cols, n)
    jac = 0.5 * (values[:, 0::2, :] - values[:, 1::2, :])           # (B, C, n)
    return jac.transpose(0, 2, 1)


def parameter_shift_grad(spec: AnsatzSpec, params, x, *, _swap_shifts: bool = False) -> np.ndarray:
    """Jacobian ``d<Z_q>/d(angle)`` of shape ``(n, depth*n + n)`` for one input."""
    x = _as_inputs(spec, x)
    return parameter_shift_jacobian_batch(spec, params, x[None, :], _swap_shifts=_swap_shifts)[0]


def adjoint_vjp(spec: AnsatzSpec, params, X, upstream) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reverse-mode vector-Jacobian product through the ansatz.

    For ``upstream`` of shape ``(B, n)`` (d loss / d <Z_q>) returns
    ``(outputs (B, n), d loss / d angles (depth, n) summed over the batch,
    d loss / d inputs (B, n))``. Agrees with the shift rule to rounding error
    at a cost of a few forward passes, independent of the parameter count.
    """
    theta = _as_params(spec, params)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    upstream = np.atleast_2d(np.asarray(upstream, dtype=float))
    B, n = X.shape
    S = _sign_matrix(n)
    thetas = np.broadcast_to(theta, (B, spec.depth, n))

    psi = _final_states(spec, thetas, X)
    outputs = (np.abs(psi) ** 2) @ S.T
    lam = psi * (upstream @ S)

    grad_theta = np.zeros((spec.depth, n))
    for layer in reversed(range(spec.depth)):
        angles = thetas[:, layer, :]
        if spec.rotation(layer) == "Z":
            # Im <lam| Z_q |psi> for all q at once
            grad_theta[layer] = np.sum(np.imag(np.conj(lam) * psi) @ S.T, axis=0)
        else:
            for q in range(n):
                grad_theta[layer, q] = np.sum(np.imag(np.sum(np.conj(lam) * _y_qubit(psi, q, n), axis=1)))
        psi = _undo_layer(spec, psi, layer, angles)
        lam = _undo_layer(spec, lam, layer, angles)
    grad_x = np.imag(np.conj(lam) * psi) @ S.T
    return outputs, grad_theta, grad_x
