"""Parameterized circuit construction.

Two trainable ansatz families are provided, both organized as repeated
(rotation block, entangler block) layers with one extra rotation block
after the last layer, so n_params == 3 * n_qubits * (n_layers + 1):

  * baseline: per-qubit RX, RY, RZ rotations with a cyclic CX entangler;
  * composite: per-qubit fused RY/RZ/RY rotations (composite_u) with a
    fully connected CX entangler.

Entangler wiring is factored out as ``entangler_pairs`` with four
strategies; pair direction is control = lower index unless the strategy
dictates otherwise (the cyclic closure runs (n-1, 0)).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, StructureError
from .statevec import GateOp, Statevector, apply_circuit, z_expectations

LINEAR = "linear"
CYCLIC = "cyclic"
STAR = "star"
FULL = "full"
ENTANGLER_STRATEGIES = (LINEAR, CYCLIC, STAR, FULL)


@dataclass(frozen=True)
class CircuitTemplate:
    """Immutable gate sequence over a fixed parameter-slot space."""

    n_qubits: int
    gates: Tuple[GateOp, ...]
    n_params: int

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_qubits < 1:
            raise StructureError(f"n_qubits must be positive, got {self.n_qubits}")
        if self.n_params < 0:
            raise StructureError(f"n_params must be non-negative, got {self.n_params}")
        seen = set()
        for gate in self.gates:
            if gate.target >= self.n_qubits or (
                gate.control is not None and gate.control >= self.n_qubits
            ):
                raise StructureError(
                    f"gate {gate.kind} touches qubit outside 0..{self.n_qubits - 1}"
                )
            for slot in gate.param_slots:
                if not 0 <= slot < self.n_params:
                    raise StructureError(
                        f"parameter slot {slot} outside 0..{self.n_params - 1}"
                    )
                seen.add(slot)
        if len(seen) != self.n_params:
            missing = sorted(set(range(self.n_params)) - seen)
            raise StructureError(f"parameter slots never referenced: {missing}")


def entangler_pairs(strategy: str, n_qubits: int) -> List[Tuple[int, int]]:
    """Ordered (control, target) pairs for one entangler block."""
    if n_qubits < 2:
        raise ConfigurationError(f"entanglers need at least 2 qubits, got {n_qubits}")
    if strategy == LINEAR:
        return [(i, i + 1) for i in range(n_qubits - 1)]
    if strategy == CYCLIC:
        return [(i, i + 1) for i in range(n_qubits - 1)] + [(n_qubits - 1, 0)]
    if strategy == STAR:
        return [(0, i) for i in range(1, n_qubits)]
    if strategy == FULL:
        return [(i, j) for i in range(n_qubits) for j in range(i + 1, n_qubits)]
    raise ConfigurationError(f"unknown entangler strategy {strategy!r}")


def _layered_template(
    n_qubits: int,
    n_layers: int,
    rotation_kinds: Sequence[str],
    strategy: str,
    entangler_gate: str,
) -> CircuitTemplate:
    if n_qubits < 2:
        raise ConfigurationError(f"ansatz needs at least 2 qubits, got {n_qubits}")
    if n_layers < 1:
        raise ConfigurationError(f"ansatz needs at least 1 layer, got {n_layers}")
    if entangler_gate not in ("cx", "cz"):
        raise ConfigurationError(f"entangler gate must be cx or cz, got {entangler_gate!r}")
    gates: List[GateOp] = []
    slot = 0

    def rotation_block():
        nonlocal slot
        for q in range(n_qubits):
            if rotation_kinds == ("composite_u",):
                gates.append(
                    GateOp("composite_u", q, param_slots=(slot, slot + 1, slot + 2))
                )
                slot += 3
            else:
                for kind in rotation_kinds:
                    gates.append(GateOp(kind, q, param_slots=(slot,)))
                    slot += 1

    for _ in range(n_layers):
        rotation_block()
        for control, target in entangler_pairs(strategy, n_qubits):
            gates.append(GateOp(entangler_gate, target, control=control))
    rotation_block()
    return CircuitTemplate(n_qubits=n_qubits, gates=tuple(gates), n_params=slot)


def build_baseline_pqc(
    n_qubits: int, n_layers: int = 2, entangler_gate: str = "cx"
) -> CircuitTemplate:
    """Per-qubit RX/RY/RZ rotations with a cyclic entangler each layer."""
    return _layered_template(n_qubits, n_layers, ("rx", "ry", "rz"), CYCLIC, entangler_gate)


def build_composite_pqc(
    n_qubits: int, n_layers: int = 2, entangler_gate: str = "cx"
) -> CircuitTemplate:
    """Per-qubit fused RY/RZ/RY rotations with a full entangler each layer."""
    return _layered_template(n_qubits, n_layers, ("composite_u",), FULL, entangler_gate)


def qnn_output(template: CircuitTemplate, params, input_state: Statevector) -> np.ndarray:
    """Per-qubit <Z> readout of the circuit applied to ``input_state``."""
    return z_expectations(apply_circuit(input_state, template, params))
