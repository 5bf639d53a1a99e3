"""Seeded verification suites: gradients against finite differences, cut
reconstruction against the uncut simulation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ansatz
from .ansatz import AnsatzSpec
from .cutting import CutPlan, enumerate_subcircuits, reconstruct, run_instances, uncut_expectation
from .cutting import combination_results, fragment_values
from .errors import InvalidArgumentError
from .model import flatten, get_flat, init_hybrid, loss_and_grad, predict_logits, with_flat, _log_softmax
from .statevector import CNOT, Circuit, H, RY, RZ

FAULTS = ("wrong_sign_shift",)


def _within(analytic: np.ndarray, reference: np.ndarray, tol_abs: float, tol_rel: float) -> bool:
    """Entrywise: absolute error below ``tol_abs`` or relative error below ``tol_rel``."""
    err = np.abs(analytic - reference)
    return bool(np.all((err < tol_abs) | (err < tol_rel * np.abs(reference))))


def _mean_loss(model, X, y) -> float:
    logp = _log_softmax(predict_logits(model, X))
    return float(-logp[np.arange(len(y)), y].mean())


def central_difference(f, x: np.ndarray, h: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(out, axis=-1)


@dataclass(frozen=True)
class GradcheckRecord:
    index: int
    n_qubits: int
    depth: int
    use_skip: bool
    max_abs_loss: float
    max_abs_jacobian: float
    passed: bool


@dataclass(frozen=True)
class GradcheckReport:
    records: tuple[GradcheckRecord, ...]
    closed_form_error: float
    passed: bool

    @property
    def max_abs(self) -> float:
        return max([r.max_abs_loss for r in self.records] + [r.max_abs_jacobian for r in self.records] + [0.0])


def closed_form_check(theta: float = 0.7, x: float = -0.4, fault: str | None = None) -> float:
    """Max deviation of the one-qubit shift-rule gradients from
    d<Z>/dtheta = -cos(theta)cos(x) and d<Z>/dx = sin(theta)sin(x)."""
    g = ansatz.parameter_shift_grad(AnsatzSpec(1, depth=1), np.array([theta]), np.array([x]),
                                    _swap_shifts=fault == "wrong_sign_shift")
    expected = np.array([-math.cos(theta) * math.cos(x), math.sin(theta) * math.sin(x)])
    return float(np.max(np.abs(g[0] - expected)))


def gradcheck_suite(n_instances: int = 50, seed: int = 0, qubits=(2, 4, 6), depths=(1, 2, 4),
                    batch: int = 3, feature_dim: int = 6, n_classes: int = 3, h: float = 1e-5,
                    tol_abs: float = 1e-7, tol_rel: float = 1e-5, jac_tol: float = 1e-6,
                    fault: str | None = None) -> GradcheckReport:
    """Random hybrid instances cycling through qubit counts, depths and both
    skip settings. Each checks the full loss gradient and the ansatz Jacobian
    against central differences."""
    if fault is not None and fault not in FAULTS:
        raise InvalidArgumentError(f"unknown fault {fault!r}; known: {FAULTS}")
    swap = fault == "wrong_sign_shift"
    rng = np.random.default_rng(seed)
    grid = [(n, d, s) for n in qubits for d in depths for s in (False, True)]
    records = []
    for i in range(n_instances):
        n, d, skip = grid[i % len(grid)]
        model = init_hybrid(max(feature_dim, n), n, n_classes, depth=d, use_skip=skip,
                            seed=int(rng.integers(2**31)))
        # larger angles than the training init so every rotation matters
        model = with_flat(model, get_flat(model) + rng.normal(0, 0.5, get_flat(model).size))
        X = rng.normal(size=(batch, model.feature_dim))
        y = rng.integers(0, n_classes, batch)
        _, grads = loss_and_grad(model, X, y, "parameter-shift", _swap_shifts=swap)
        analytic = flatten(grads)
        fd = central_difference(lambda v: _mean_loss(with_flat(model, v), X, y), get_flat(model), h)
        err_loss = float(np.max(np.abs(analytic - fd)))
        ok = _within(analytic, fd, tol_abs, tol_rel)

        spec = model.ansatz_spec
        theta = model.ansatz_params.ravel()
        p = X[0, :n] if X.shape[1] >= n else X[0]
        jac = ansatz.parameter_shift_grad(spec, theta, p, _swap_shifts=swap)
        both = np.concatenate([theta, p])
        fd_jac = central_difference(lambda v: ansatz.forward(spec, v[:theta.size], v[theta.size:]), both, h)
        err_jac = float(np.max(np.abs(jac - fd_jac)))
        ok = ok and err_jac < jac_tol
        records.append(GradcheckRecord(i, n, d, skip, err_loss, err_jac, ok))
    cf = closed_form_check(fault=fault)
    passed = all(r.passed for r in records) and cf < 1e-12
    return GradcheckReport(tuple(records), cf, passed)


# -- circuit cutting ---------------------------------------------------------

def random_circuit(rng: np.random.Generator, n_qubits: int, depth: int, *, require_cnot: bool = False) -> Circuit:
    """``depth`` layers of random one-qubit gates on every qubit followed by
    CNOTs on a random partial matching."""
    gates = []
    for _ in range(depth):
        for q in range(n_qubits):
            kind = rng.integers(3)
            if kind == 0:
                gates.append(H(q))
            elif kind == 1:
                gates.append(RY(q, float(rng.uniform(-math.pi, math.pi))))
            else:
                gates.append(RZ(q, float(rng.uniform(-math.pi, math.pi))))
        order = rng.permutation(n_qubits)
        for k in range(0, n_qubits - 1, 2):
            if rng.random() < 0.7:
                gates.append(CNOT(int(order[k]), int(order[k + 1])))
    if require_cnot and not any(g.kind == "CNOT" for g in gates):
        gates.append(CNOT(0, 1))
    return Circuit(n_qubits, tuple(gates))


def random_observable(rng: np.random.Generator, n_qubits: int):
    while True:
        obs = tuple((q, "IXYZ"[int(rng.integers(4))]) for q in range(n_qubits))
        if any(p != "I" for _, p in obs):
            return obs


@dataclass(frozen=True)
class CutRecord:
    index: int
    kind: str
    n_qubits: int
    depth: int
    n_wire: int
    n_gate: int
    combinations: int
    expected_combinations: int
    reconstructed: float
    uncut: float

    @property
    def deviation(self) -> float:
        return abs(self.reconstructed - self.uncut)


@dataclass(frozen=True)
class CutReport:
    records: tuple[CutRecord, ...]
    tolerance: float

    @property
    def max_deviation(self) -> float:
        return max((r.deviation for r in self.records), default=0.0)

    @property
    def counts_ok(self) -> bool:
        return all(r.combinations == r.expected_combinations for r in self.records)

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tolerance and self.counts_ok


def _cut_value(circuit, plan, obs, parallelism):
    exp = enumerate_subcircuits(circuit, plan, obs)
    raw = run_instances(exp, parallelism=parallelism)
    return reconstruct(exp, combination_results(exp, fragment_values(exp, raw))), exp.n_combinations


def cut_suite(wire_instances: int = 100, wire_gate_instances: int = 50, seed: int = 0, max_qubits: int = 6,
              max_depth: int = 4, tolerance: float = 1e-9, parallelism: int = 1) -> CutReport:
    rng = np.random.default_rng(seed)
    records = []
    for i in range(wire_instances + wire_gate_instances):
        with_gate = i >= wire_instances
        n = int(rng.integers(2, max_qubits + 1))
        d = int(rng.integers(1, max_depth + 1))
        circuit = random_circuit(rng, n, d, require_cnot=with_gate)
        g_idx = len(circuit.gates)
        wire = ((int(rng.integers(-1, g_idx)), int(rng.integers(n))),)
        gate = ()
        if with_gate:
            cnots = [k for k, g in enumerate(circuit.gates) if g.kind == "CNOT"]
            gate = (int(cnots[int(rng.integers(len(cnots)))]),)
        plan = CutPlan(wire_cuts=wire, gate_cuts=gate)
        obs = random_observable(rng, n)
        value, combos = _cut_value(circuit, plan, obs, parallelism)
        records.append(CutRecord(i, "wire+gate" if with_gate else "wire", n, d, len(wire), len(gate), combos,
                                 8 ** len(wire) * 6 ** len(gate), value, uncut_expectation(circuit, obs)))
    return CutReport(tuple(records), tolerance)


def bell_gate_cut() -> tuple[float, float]:
    """(reconstructed, uncut) <Z0 Z1> for H(0), CNOT(0,1) with the CNOT gate-cut."""
    circuit = Circuit(2, (H(0), CNOT(0, 1)))
    obs = ((0, "Z"), (1, "Z"))
    value, _ = _cut_value(circuit, CutPlan(gate_cuts=(1,)), obs, 1)
    return value, uncut_expectation(circuit, obs)


def empty_plan_case(seed: int = 0) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    while True:  # a non-trivial expectation makes exact equality meaningful
        circuit = random_circuit(rng, 4, 3)
        obs = random_observable(rng, 4)
        uncut = uncut_expectation(circuit, obs)
        if abs(uncut) > 1e-3:
            break
    value, _ = _cut_value(circuit, CutPlan(), obs, 1)
    return value, uncut
