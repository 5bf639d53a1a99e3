import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from qse.errors import InvalidArgumentError, InvalidCircuitError
from qse.statevector import (CNOT, Circuit, H, MeasureCollapse, PrepareState, RY, RZ, Statevector, apply_gate,
                             expectation_pauli_product, expectation_z, run_circuit)

S = 1 / math.sqrt(2)


def plus_state(n=1):
    return run_circuit(Circuit(n, (H(0),)))[0]


def bell():
    return run_circuit(Circuit(2, (H(0), CNOT(0, 1))))[0]


@st.composite
def unitary_circuits(draw, max_qubits=5, max_gates=40):
    n = draw(st.integers(1, max_qubits))
    angle = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)
    gates = []
    for _ in range(draw(st.integers(0, max_gates))):
        kind = draw(st.sampled_from(["H", "RY", "RZ", "CNOT"] if n > 1 else ["H", "RY", "RZ"]))
        q = draw(st.integers(0, n - 1))
        if kind == "H":
            gates.append(H(q))
        elif kind == "RY":
            gates.append(RY(q, draw(angle)))
        elif kind == "RZ":
            gates.append(RZ(q, draw(angle)))
        else:
            t = draw(st.integers(0, n - 1).filter(lambda t: t != q))
            gates.append(CNOT(q, t))
    return Circuit(n, tuple(gates))


class TestGates:
    def test_hadamard_on_zero(self):
        out, w = apply_gate(Statevector.zero(1), H(0))
        np.testing.assert_allclose(out.amplitudes, [S, S], atol=1e-15)
        assert w == 1.0

    def test_cnot_truth_table(self):
        # qubit 0 is the control and is set; little-endian index 1
        out, w = apply_gate(Statevector.from_bits([1, 0]), CNOT(0, 1))
        np.testing.assert_array_equal(out.amplitudes, Statevector.from_bits([1, 1]).amplitudes)
        assert w == 1.0

    def test_measure_collapse_born_rule(self):
        out, w = apply_gate(plus_state(), MeasureCollapse(0, "Z", +1))
        np.testing.assert_allclose(out.amplitudes, [1, 0], atol=1e-15)
        assert w == pytest.approx(0.5, abs=1e-15)

    def test_impossible_branch_gives_null_state(self):
        out, w = apply_gate(Statevector.zero(1), MeasureCollapse(0, "Z", -1))
        assert w == 0.0 and out.null
        assert not np.any(out.amplitudes)
        assert expectation_z(out, 0) == 0.0

    @pytest.mark.parametrize("gate", [H(2), RY(3, 0.1), CNOT(0, 5), MeasureCollapse(2, "X", 1)])
    def test_out_of_range_index(self, gate):
        with pytest.raises(InvalidCircuitError):
            apply_gate(Statevector.zero(2), gate)

    def test_cnot_requires_distinct_qubits(self):
        with pytest.raises((InvalidCircuitError, InvalidArgumentError)):
            CNOT(1, 1)

    def test_circuit_rejects_bad_index(self):
        with pytest.raises(InvalidCircuitError):
            Circuit(2, (H(0), CNOT(0, 2)))

    @pytest.mark.parametrize("state,expected", [
        ("Z+", [1, 0]), ("Z-", [0, 1]), ("X+", [S, S]), ("X-", [S, -S]), ("Y+", [S, 1j * S]), ("Y-", [S, -1j * S]),
    ])
    def test_prepare_state_eigenvectors(self, state, expected):
        out, w = apply_gate(Statevector.zero(1), PrepareState(0, state))
        # global phase is not canonicalized; compare up to phase
        overlap = abs(np.vdot(np.array(expected, dtype=complex), out.amplitudes))
        assert overlap == pytest.approx(1.0, abs=1e-14)
        assert w == 1.0

    def test_prepare_requires_fresh_qubit(self):
        with pytest.raises(InvalidCircuitError):
            apply_gate(plus_state(), PrepareState(0, "Z+"))


class TestRunCircuit:
    def test_empty_circuit_is_identity(self):
        init = Statevector.from_bits([0, 1])
        out, w = run_circuit(Circuit(2, ()), init)
        np.testing.assert_array_equal(out.amplitudes, init.amplitudes)
        assert w == 1.0

    def test_bell_preparation(self):
        out, w = run_circuit(Circuit(2, (H(0), CNOT(0, 1))))
        np.testing.assert_allclose(out.amplitudes, [S, 0, 0, S], atol=1e-15)
        assert w == 1.0

    def test_measure_then_hadamard_matches_brute_force(self):
        out, w = run_circuit(Circuit(2, (H(0), MeasureCollapse(0, "Z", -1), H(0))))
        # brute force on 4 amplitudes: H, project onto qubit-0 = 1, renormalize, H
        psi = np.array([1, 0, 0, 0], dtype=complex)
        psi = oracles.embed(oracles.HAD, 0, 2) @ psi
        proj = oracles.embed(oracles.P1, 0, 2) @ psi
        weight = float(np.vdot(proj, proj).real)
        psi = oracles.embed(oracles.HAD, 0, 2) @ (proj / math.sqrt(weight))
        np.testing.assert_allclose(out.amplitudes, psi, atol=1e-15)
        np.testing.assert_allclose(out.amplitudes, [S, -S, 0, 0], atol=1e-15)
        assert w == pytest.approx(weight) == pytest.approx(0.5)

    def test_initial_width_mismatch(self):
        with pytest.raises(InvalidCircuitError):
            run_circuit(Circuit(2, ()), Statevector.zero(3))

    def test_matches_kronecker_oracle(self):
        rng = np.random.default_rng(4)
        n = 4
        gates = []
        for _ in range(60):
            q = int(rng.integers(n))
            k = rng.integers(4)
            if k == 0:
                gates.append(H(q))
            elif k == 1:
                gates.append(RY(q, float(rng.normal())))
            elif k == 2:
                gates.append(RZ(q, float(rng.normal())))
            else:
                gates.append(CNOT(q, (q + 1 + int(rng.integers(n - 1))) % n))
        c = Circuit(n, tuple(gates))
        np.testing.assert_allclose(run_circuit(c)[0].amplitudes, oracles.simulate(c), atol=1e-13)


class TestExpectations:
    def test_z_on_zero(self):
        assert expectation_z(Statevector.zero(1), 0) == 1.0

    def test_z_on_plus(self):
        assert expectation_z(plus_state(), 0) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("theta", [0.3, 1.1, 2.7])
    def test_z_after_ry(self, theta):
        out, _ = run_circuit(Circuit(1, (RY(0, theta),)))
        assert expectation_z(out, 0) == pytest.approx(math.cos(theta), abs=1e-14)

    def test_z_bad_qubit(self):
        with pytest.raises(InvalidArgumentError):
            expectation_z(Statevector.zero(2), 2)

    @pytest.mark.parametrize("obs,expected", [
        ([(0, "Z"), (1, "Z")], 1.0), ([(0, "X"), (1, "X")], 1.0), ([(0, "Y"), (1, "Y")], -1.0),
    ])
    def test_bell_correlations(self, obs, expected):
        assert expectation_pauli_product(bell(), obs) == pytest.approx(expected, abs=1e-14)

    def test_separable_plus_zero(self):
        assert expectation_pauli_product(plus_state(2), [(0, "Z")]) == pytest.approx(0.0, abs=1e-15)

    def test_duplicate_qubit(self):
        with pytest.raises(InvalidArgumentError):
            expectation_pauli_product(bell(), [(0, "Z"), (0, "X")])

    def test_empty_product_is_identity(self):
        assert expectation_pauli_product(bell(), []) == pytest.approx(1.0)


class TestInvariants:
    @settings(max_examples=60, deadline=None)
    @given(unitary_circuits())
    def test_norm_preserved(self, circuit):
        out, w = run_circuit(circuit)
        assert abs(out.norm() - 1.0) < 1e-10
        assert w == 1.0

    @settings(max_examples=60, deadline=None)
    @given(unitary_circuits(), st.data())
    def test_gate_then_inverse_restores(self, circuit, data):
        state, _ = run_circuit(circuit)
        n = circuit.n_qubits
        q = data.draw(st.integers(0, n - 1))
        theta = data.draw(st.floats(-7, 7, allow_nan=False))
        pairs = [(H(q), H(q)), (RY(q, theta), RY(q, -theta)), (RZ(q, theta), RZ(q, -theta))]
        if n > 1:
            t = (q + 1) % n
            pairs.append((CNOT(q, t), CNOT(q, t)))
        for g, g_inv in pairs:
            back, _ = apply_gate(apply_gate(state, g)[0], g_inv)
            assert np.max(np.abs(back.amplitudes - state.amplitudes)) < 1e-12

    @settings(max_examples=60, deadline=None)
    @given(unitary_circuits(), st.data())
    def test_measurement_branches_sum_to_one(self, circuit, data):
        state, _ = run_circuit(circuit)
        q = data.draw(st.integers(0, circuit.n_qubits - 1))
        basis = data.draw(st.sampled_from("XYZ"))
        total = apply_gate(state, MeasureCollapse(q, basis, 1))[1] + apply_gate(state, MeasureCollapse(q, basis, -1))[1]
        assert abs(total - 1.0) < 1e-12

    @settings(max_examples=60, deadline=None)
    @given(unitary_circuits(), st.data())
    def test_z_expectation_agrees_exactly(self, circuit, data):
        state, _ = run_circuit(circuit)
        q = data.draw(st.integers(0, circuit.n_qubits - 1))
        assert expectation_z(state, q) == expectation_pauli_product(state, [(q, "Z")])

    @settings(max_examples=40, deadline=None)
    @given(unitary_circuits(max_qubits=4), st.data())
    def test_pauli_products_bounded_and_match_oracle(self, circuit, data):
        state, _ = run_circuit(circuit)
        n = circuit.n_qubits
        paulis = data.draw(st.lists(st.sampled_from("IXYZ"), min_size=n, max_size=n))
        obs = [(q, p) for q, p in enumerate(paulis)]
        value = expectation_pauli_product(state, obs)
        assert -1 - 1e-12 <= value <= 1 + 1e-12
        assert value == pytest.approx(oracles.pauli_expectation(oracles.simulate(circuit), obs, n), abs=1e-12)
