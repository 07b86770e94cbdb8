import math
from types import SimpleNamespace

import numpy as np
import pytest

from hqnn.errors import ConfigurationError, StructureError
from hqnn.statevec import (
    GateOp,
    Statevector,
    apply_circuit,
    apply_gate,
    init_zero,
    z_expectation,
    z_expectations,
)


def rotation_matrix(kind, theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    if kind == "rx":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "ry":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "rz":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]])
    raise ValueError(kind)


def embed_single(n, target, u2):
    # qubit 0 is the most significant factor, so it sits leftmost in the chain
    full = np.eye(1, dtype=complex)
    for q in range(n):
        full = np.kron(full, u2 if q == target else np.eye(2))
    return full


def controlled_permutation(n, kind, control, target, amps):
    out = np.array(amps, dtype=complex)
    cmask = 1 << (n - 1 - control)
    tmask = 1 << (n - 1 - target)
    for j in range(1 << n):
        if not j & cmask:
            continue
        if kind == "cx":
            out[j] = amps[j ^ tmask]
        else:
            out[j] = -amps[j] if j & tmask else amps[j]
    return out


def random_state(rng, n):
    amps = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    amps /= np.linalg.norm(amps)
    return Statevector(n, amps)


def circuit(n, gates, n_params):
    return SimpleNamespace(n_qubits=n, gates=tuple(gates), n_params=n_params)


class TestInitAndValidation:
    def test_zero_state(self):
        for n in range(1, 6):
            sv = init_zero(n)
            assert sv.n_qubits == n
            assert sv.amplitudes[0] == 1.0
            assert np.all(sv.amplitudes[1:] == 0)

    def test_qubit_count_bounds(self):
        with pytest.raises(ConfigurationError):
            init_zero(0)
        with pytest.raises(ConfigurationError):
            init_zero(25)

    def test_amplitude_length_checked(self):
        with pytest.raises(StructureError):
            Statevector(2, np.zeros(3, dtype=complex))

    def test_gate_slot_arity(self):
        with pytest.raises(StructureError):
            GateOp("ry", 0, param_slots=(0, 1))
        with pytest.raises(StructureError):
            GateOp("composite_u", 0, param_slots=(0,))
        with pytest.raises(StructureError):
            GateOp("cx", 0, control=1, param_slots=(0,))

    def test_controlled_gate_wiring(self):
        with pytest.raises(StructureError):
            GateOp("cx", 0, param_slots=())  # no control
        with pytest.raises(StructureError):
            GateOp("cz", 1, control=1, param_slots=())
        with pytest.raises(StructureError):
            GateOp("ry", 0, control=1, param_slots=(0,))

    def test_unknown_kind(self):
        with pytest.raises(StructureError):
            GateOp("hadamard", 0)

    def test_slot_out_of_range(self):
        sv = init_zero(1)
        with pytest.raises(StructureError):
            apply_gate(sv, GateOp("ry", 0, param_slots=(3,)), [0.1])


class TestSingleQubitGates:
    def test_ry_pi_flips(self):
        out = apply_gate(init_zero(1), GateOp("ry", 0, param_slots=(0,)), [math.pi])
        assert np.allclose(out.amplitudes, [0, 1], atol=1e-12)

    def test_ry_halfangle_components(self):
        theta = 0.7
        out = apply_gate(init_zero(1), GateOp("ry", 0, param_slots=(0,)), [theta])
        assert np.allclose(
            out.amplitudes, [math.cos(theta / 2), math.sin(theta / 2)], atol=1e-12
        )

    def test_rx_pi_flips_with_phase(self):
        out = apply_gate(init_zero(1), GateOp("rx", 0, param_slots=(0,)), [math.pi])
        assert np.allclose(out.amplitudes, [0, -1j], atol=1e-12)

    def test_rz_phases_only(self):
        plus = Statevector(1, np.array([1, 1]) / math.sqrt(2))
        theta = 1.3
        out = apply_gate(plus, GateOp("rz", 0, param_slots=(0,)), [theta])
        expect = np.array([np.exp(-1j * theta / 2), np.exp(1j * theta / 2)]) / math.sqrt(2)
        assert np.allclose(out.amplitudes, expect, atol=1e-12)

    def test_matches_kron_embedding(self):
        rng = np.random.default_rng(11)
        for _ in range(60):
            n = int(rng.integers(1, 5))
            target = int(rng.integers(0, n))
            kind = ("rx", "ry", "rz")[rng.integers(0, 3)]
            theta = float(rng.uniform(-2 * math.pi, 2 * math.pi))
            sv = random_state(rng, n)
            out = apply_gate(sv, GateOp(kind, target, param_slots=(0,)), [theta])
            expect = embed_single(n, target, rotation_matrix(kind, theta)) @ sv.amplitudes
            assert np.allclose(out.amplitudes, expect, atol=1e-12)


class TestBitOrdering:
    def test_qubit0_is_most_significant(self):
        out = apply_gate(init_zero(2), GateOp("ry", 0, param_slots=(0,)), [math.pi])
        assert np.allclose(out.amplitudes, [0, 0, 1, 0], atol=1e-12)

    def test_last_qubit_is_least_significant(self):
        out = apply_gate(init_zero(3), GateOp("ry", 2, param_slots=(0,)), [math.pi])
        expect = np.zeros(8)
        expect[1] = 1
        assert np.allclose(out.amplitudes, expect, atol=1e-12)


class TestControlledGates:
    def test_cx_low_control(self):
        # |10> --cx(0,1)--> |11>
        sv = apply_gate(init_zero(2), GateOp("ry", 0, param_slots=(0,)), [math.pi])
        out = apply_gate(sv, GateOp("cx", 1, control=0), [])
        assert np.allclose(out.amplitudes, [0, 0, 0, 1], atol=1e-12)

    def test_cx_high_control(self):
        # |01> --cx(control=1, target=0)--> |11>
        sv = apply_gate(init_zero(2), GateOp("ry", 1, param_slots=(0,)), [math.pi])
        out = apply_gate(sv, GateOp("cx", 0, control=1), [])
        assert np.allclose(out.amplitudes, [0, 0, 0, 1], atol=1e-12)

    def test_cx_ignores_clear_control(self):
        sv = init_zero(2)
        out = apply_gate(sv, GateOp("cx", 1, control=0), [])
        assert np.allclose(out.amplitudes, sv.amplitudes, atol=1e-12)

    def test_cz_signs_one_basis_state(self):
        amps = np.full(4, 0.5, dtype=complex)
        out = apply_gate(Statevector(2, amps), GateOp("cz", 1, control=0), [])
        assert np.allclose(out.amplitudes, [0.5, 0.5, 0.5, -0.5], atol=1e-12)

    def test_matches_permutation_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(60):
            n = int(rng.integers(2, 6))
            control, target = rng.choice(n, size=2, replace=False)
            kind = "cx" if rng.integers(0, 2) else "cz"
            sv = random_state(rng, n)
            out = apply_gate(sv, GateOp(kind, int(target), control=int(control)), [])
            expect = controlled_permutation(n, kind, int(control), int(target), sv.amplitudes)
            assert np.allclose(out.amplitudes, expect, atol=1e-12)


class TestCompositeGate:
    def test_zero_angles_identity(self):
        rng = np.random.default_rng(5)
        sv = random_state(rng, 3)
        out = apply_gate(sv, GateOp("composite_u", 1, param_slots=(0, 1, 2)), [0, 0, 0])
        assert np.allclose(out.amplitudes, sv.amplitudes, atol=1e-14)

    def test_expands_to_ry_rz_ry(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            n = int(rng.integers(1, 5))
            target = int(rng.integers(0, n))
            t1, t2, t3 = rng.uniform(-math.pi, math.pi, size=3)
            sv = random_state(rng, n)
            fused = apply_gate(
                sv, GateOp("composite_u", target, param_slots=(0, 1, 2)), [t1, t2, t3]
            )
            step = apply_gate(sv, GateOp("ry", target, param_slots=(0,)), [t1])
            step = apply_gate(step, GateOp("rz", target, param_slots=(0,)), [t2])
            step = apply_gate(step, GateOp("ry", target, param_slots=(0,)), [t3])
            assert np.allclose(fused.amplitudes, step.amplitudes, atol=1e-12)


def random_gate(rng, n, slot):
    kind = ("rx", "ry", "rz", "composite_u", "cx", "cz")[rng.integers(0, 6)]
    if kind in ("cx", "cz"):
        if n < 2:
            kind = "ry"
        else:
            control, target = rng.choice(n, size=2, replace=False)
            return GateOp(kind, int(target), control=int(control)), slot
    target = int(rng.integers(0, n))
    if kind == "composite_u":
        return GateOp(kind, target, param_slots=(slot, slot + 1, slot + 2)), slot + 3
    return GateOp(kind, target, param_slots=(slot,)), slot + 1


class TestCircuits:
    def test_param_length_enforced(self):
        tpl = circuit(1, [GateOp("ry", 0, param_slots=(0,))], 1)
        with pytest.raises(StructureError):
            apply_circuit(init_zero(1), tpl, [0.1, 0.2])

    def test_qubit_count_enforced(self):
        tpl = circuit(2, [GateOp("ry", 0, param_slots=(0,))], 1)
        with pytest.raises(StructureError):
            apply_circuit(init_zero(3), tpl, [0.1])

    def test_norm_preserved_random_circuits(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(1, 6))
            gates, slot = [], 0
            for _ in range(int(rng.integers(3, 12))):
                gate, slot = random_gate(rng, n, slot)
                gates.append(gate)
            params = rng.uniform(-2 * math.pi, 2 * math.pi, size=slot)
            out = apply_circuit(random_state(rng, n), circuit(n, gates, slot), params)
            assert abs(out.norm() - 1.0) < 1e-9

    def test_gate_inverse_round_trip(self):
        rng = np.random.default_rng(43)
        for _ in range(100):
            n = int(rng.integers(1, 5))
            sv = random_state(rng, n)
            gate, slot = random_gate(rng, n, 0)
            params = rng.uniform(-math.pi, math.pi, size=max(slot, 1))
            out = apply_gate(sv, gate, params)
            if gate.kind in ("cx", "cz"):
                back = apply_gate(out, gate, params)
            elif gate.kind == "composite_u":
                inv = GateOp("composite_u", gate.target, param_slots=(2, 1, 0))
                back = apply_gate(out, inv, -params)
            else:
                back = apply_gate(out, gate, -params)
            assert np.allclose(back.amplitudes, sv.amplitudes, atol=1e-10)


class TestExpectations:
    def test_spec_is_signed_probability_sum(self):
        sv = Statevector(1, np.array([0.6, 0.8], dtype=complex))
        assert z_expectation(sv, 0) == pytest.approx(-0.28, abs=1e-12)

    def test_basis_states(self):
        assert z_expectation(init_zero(3), 1) == pytest.approx(1.0)
        flipped = apply_gate(init_zero(3), GateOp("ry", 1, param_slots=(0,)), [math.pi])
        assert z_expectation(flipped, 1) == pytest.approx(-1.0)
        assert z_expectation(flipped, 0) == pytest.approx(1.0)

    def test_single_rotation_gives_cosine(self):
        rng = np.random.default_rng(3)
        for theta in rng.uniform(-math.pi, math.pi, size=20):
            out = apply_gate(init_zero(2), GateOp("ry", 1, param_slots=(0,)), [theta])
            assert z_expectation(out, 1) == pytest.approx(math.cos(theta), abs=1e-12)
            assert z_expectation(out, 0) == pytest.approx(1.0, abs=1e-12)

    def test_vector_form_matches_per_qubit(self):
        rng = np.random.default_rng(9)
        sv = random_state(rng, 4)
        vec = z_expectations(sv)
        for q in range(4):
            assert vec[q] == pytest.approx(z_expectation(sv, q), abs=1e-14)

    def test_qubit_index_range(self):
        with pytest.raises(StructureError):
            z_expectation(init_zero(2), 2)
