import math

import numpy as np
import pytest

from hqnn.errors import ConfigurationError, StructureError
from hqnn.pqc import (
    CircuitTemplate,
    build_baseline_pqc,
    build_composite_pqc,
    entangler_pairs,
    qnn_output,
)
from hqnn.statevec import GateOp, init_zero


class TestEntanglerPairs:
    def test_linear(self):
        assert entangler_pairs("linear", 4) == [(0, 1), (1, 2), (2, 3)]

    def test_cyclic_closes_the_ring(self):
        assert entangler_pairs("cyclic", 3) == [(0, 1), (1, 2), (2, 0)]

    def test_star_hubs_on_zero(self):
        assert entangler_pairs("star", 3) == [(0, 1), (0, 2)]

    def test_full_lexicographic(self):
        pairs = entangler_pairs("full", 4)
        assert len(pairs) == 6
        assert pairs == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]

    def test_pair_counts(self):
        for n in range(2, 9):
            assert len(entangler_pairs("linear", n)) == n - 1
            assert len(entangler_pairs("cyclic", n)) == n
            assert len(entangler_pairs("star", n)) == n - 1
            assert len(entangler_pairs("full", n)) == n * (n - 1) // 2

    def test_too_few_qubits(self):
        with pytest.raises(ConfigurationError):
            entangler_pairs("linear", 1)

    def test_unknown_strategy(self):
        with pytest.raises(ConfigurationError):
            entangler_pairs("ladder", 4)


class TestTemplateValidation:
    def test_slot_out_of_range(self):
        with pytest.raises(StructureError):
            CircuitTemplate(2, (GateOp("ry", 0, param_slots=(5,)),), 1)

    def test_unreferenced_slot(self):
        with pytest.raises(StructureError):
            CircuitTemplate(2, (GateOp("ry", 0, param_slots=(0,)),), 2)

    def test_qubit_out_of_range(self):
        with pytest.raises(StructureError):
            CircuitTemplate(2, (GateOp("ry", 2, param_slots=(0,)),), 1)


class TestBuilders:
    def test_baseline_param_counts(self):
        assert build_baseline_pqc(4, 1).n_params == 24
        assert build_baseline_pqc(8, 2).n_params == 72

    def test_param_count_formula(self):
        for n in range(2, 11):
            for layers in range(1, 5):
                for build in (build_baseline_pqc, build_composite_pqc):
                    assert build(n, layers).n_params == 3 * n * (layers + 1)

    def test_baseline_structure(self):
        tpl = build_baseline_pqc(3, 2)
        kinds = [g.kind for g in tpl.gates]
        # rotation block: rx,ry,rz per qubit; entangler: cyclic cx block
        block = ["rx", "ry", "rz"] * 3
        ent = ["cx"] * 3
        assert kinds == block + ent + block + ent + block

    def test_baseline_fresh_slots_in_order(self):
        tpl = build_baseline_pqc(2, 1)
        slots = [s for g in tpl.gates for s in g.param_slots]
        assert slots == list(range(tpl.n_params))

    def test_composite_structure(self):
        tpl = build_composite_pqc(4, 1)
        kinds = [g.kind for g in tpl.gates]
        assert kinds.count("composite_u") == 8
        assert kinds.count("cx") == 6
        assert kinds[-4:] == ["composite_u"] * 4

    def test_composite_two_qubit_entangler(self):
        tpl = build_composite_pqc(2, 1)
        cxs = [g for g in tpl.gates if g.kind == "cx"]
        assert len(cxs) == 1
        assert (cxs[0].control, cxs[0].target) == (0, 1)

    def test_cz_variant(self):
        tpl = build_baseline_pqc(3, 1, entangler_gate="cz")
        assert all(g.kind in ("rx", "ry", "rz", "cz") for g in tpl.gates)

    def test_preconditions(self):
        with pytest.raises(ConfigurationError):
            build_baseline_pqc(1, 1)
        with pytest.raises(ConfigurationError):
            build_composite_pqc(4, 0)
        with pytest.raises(ConfigurationError):
            build_baseline_pqc(3, 1, entangler_gate="swap")


class TestQnnOutput:
    def test_empty_template_all_ones(self):
        tpl = CircuitTemplate(3, (), 0)
        out = qnn_output(tpl, np.zeros(0), init_zero(3))
        assert np.allclose(out, [1, 1, 1], atol=1e-12)

    def test_zero_params_fix_ground_state(self):
        for build in (build_baseline_pqc, build_composite_pqc):
            tpl = build(4, 2)
            out = qnn_output(tpl, np.zeros(tpl.n_params), init_zero(4))
            assert np.allclose(out, np.ones(4), atol=1e-12)

    def test_outputs_bounded(self):
        rng = np.random.default_rng(55)
        for _ in range(20):
            n = int(rng.integers(2, 6))
            layers = int(rng.integers(1, 4))
            build = build_baseline_pqc if rng.integers(0, 2) else build_composite_pqc
            tpl = build(n, layers)
            params = rng.uniform(0, 2 * math.pi, size=tpl.n_params)
            out = qnn_output(tpl, params, init_zero(n))
            assert out.shape == (n,)
            assert np.all(np.abs(out) <= 1 + 1e-12)

    def test_single_ry_layer_cosine(self):
        # strip a template down to one referenced rotation to pin the readout
        tpl = CircuitTemplate(2, (GateOp("ry", 0, param_slots=(0,)),), 1)
        for theta in (0.0, 0.4, math.pi / 2, math.pi):
            out = qnn_output(tpl, [theta], init_zero(2))
            assert out[0] == pytest.approx(math.cos(theta), abs=1e-12)
            assert out[1] == pytest.approx(1.0, abs=1e-12)
