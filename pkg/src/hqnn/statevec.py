"""Exact dense statevector simulation of multi-qubit systems.

Conventions, used everywhere in the package:
  * RX(t) = exp(-i t X / 2), RY(t) = exp(-i t Y / 2), RZ(t) = exp(-i t Z / 2),
    so RY(pi)|0> = |1>.
  * Qubit 0 is the most significant bit of the basis index (big-endian):
    on two qubits, basis index 2 is |10>, i.e. qubit 0 in state |1>.
  * The composite_u gate applies RY(t1), then RZ(t2), then RY(t3).

Expectation values are computed exactly from the amplitudes; there is no
shot sampling.

The private ``_batch_*`` kernels operate in place on arrays of shape
(batch, 2**n) and accept per-row angles; they are the hot path for the
gradient engine.  The public operations wrap them for single states and
return fresh ``Statevector`` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, StructureError

MAX_QUBITS = 24

ROTATION_KINDS = ("rx", "ry", "rz")
GATE_PARAM_COUNTS = {"rx": 1, "ry": 1, "rz": 1, "composite_u": 3, "cx": 0, "cz": 0}


@dataclass(frozen=True)
class Statevector:
    """Normalized complex amplitude vector over ``n_qubits`` qubits."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        object.__setattr__(self, "amplitudes", amps)
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ConfigurationError(
                f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}"
            )
        if amps.shape != (1 << self.n_qubits,):
            raise StructureError(
                f"amplitude vector has shape {amps.shape}, "
                f"expected ({1 << self.n_qubits},)"
            )

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class GateOp:
    """One gate in a circuit: a kind, target/control qubits, and parameter slots.

    ``param_slots`` holds indices into the circuit's parameter vector:
    1 slot for rx/ry/rz, 3 for composite_u, none for cx/cz.
    """

    kind: str
    target: int
    control: Optional[int] = None
    param_slots: tuple = ()

    def __post_init__(self):
        if self.kind not in GATE_PARAM_COUNTS:
            raise StructureError(f"unknown gate kind {self.kind!r}")
        want = GATE_PARAM_COUNTS[self.kind]
        if len(self.param_slots) != want:
            raise StructureError(
                f"{self.kind} takes {want} parameter slot(s), "
                f"got {len(self.param_slots)}"
            )
        if self.kind in ("cx", "cz"):
            if self.control is None:
                raise StructureError(f"{self.kind} requires a control qubit")
            if self.control == self.target:
                raise StructureError("control and target must differ")
        elif self.control is not None:
            raise StructureError(f"{self.kind} takes no control qubit")


def init_zero(n_qubits: int) -> Statevector:
    """All-zeros computational basis state |0...0>."""
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigurationError(
            f"n_qubits must be an integer in [1, {MAX_QUBITS}], got {n_qubits!r}"
        )
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return Statevector(int(n_qubits), amps)


# -- in-place batch kernels -------------------------------------------------
#
# amps has shape (batch, 2**n); angles may be a scalar or a length-batch
# array.  Views are arranged so qubit q splits the index as
# (lead=2**q, 2, trail=2**(n-1-q)), matching the big-endian convention.


def _angle_cols(theta, batch: int):
    half = np.multiply(theta, 0.5)
    if np.ndim(half) == 0:
        return np.cos(half), np.sin(half)
    half = np.asarray(half).reshape(batch, 1, 1)
    return np.cos(half), np.sin(half)


def _batch_apply_rotation(amps: np.ndarray, n: int, kind: str, target: int, theta) -> None:
    batch = amps.shape[0]
    view = amps.reshape(batch, 1 << target, 2, 1 << (n - 1 - target))
    a0 = view[:, :, 0, :]
    a1 = view[:, :, 1, :]
    c, s = _angle_cols(theta, batch)
    if kind == "ry":
        new0 = c * a0 - s * a1
        new1 = s * a0 + c * a1
    elif kind == "rx":
        isn = 1j * s
        new0 = c * a0 - isn * a1
        new1 = c * a1 - isn * a0
    elif kind == "rz":
        phase = c - 1j * s  # exp(-i theta/2)
        view[:, :, 0, :] = a0 * phase
        view[:, :, 1, :] = a1 * np.conj(phase)
        return
    else:
        raise StructureError(f"not a rotation kind: {kind!r}")
    view[:, :, 0, :] = new0
    view[:, :, 1, :] = new1


def _controlled_view(amps: np.ndarray, n: int, control: int, target: int):
    lo, hi = sorted((control, target))
    batch = amps.shape[0]
    return amps.reshape(
        batch, 1 << lo, 2, 1 << (hi - lo - 1), 2, 1 << (n - 1 - hi)
    )


def _batch_apply_cx(amps: np.ndarray, n: int, control: int, target: int) -> None:
    view = _controlled_view(amps, n, control, target)
    if control < target:
        block = view[:, :, 1]  # control bit set
        tmp = block[:, :, :, 0, :].copy()
        block[:, :, :, 0, :] = block[:, :, :, 1, :]
        block[:, :, :, 1, :] = tmp
    else:
        tmp = view[:, :, 0, :, 1, :].copy()
        view[:, :, 0, :, 1, :] = view[:, :, 1, :, 1, :]
        view[:, :, 1, :, 1, :] = tmp


def _batch_apply_cz(amps: np.ndarray, n: int, control: int, target: int) -> None:
    view = _controlled_view(amps, n, control, target)
    view[:, :, 1, :, 1, :] *= -1.0


def _batch_z_expectations(amps: np.ndarray, n: int) -> np.ndarray:
    """Per-row <Z_q> for every qubit; shape (batch, n)."""
    batch = amps.shape[0]
    probs = (amps.real * amps.real + amps.imag * amps.imag)
    out = np.empty((batch, n))
    for q in range(n):
        view = probs.reshape(batch, 1 << q, 2, 1 << (n - 1 - q))
        out[:, q] = view[:, :, 0, :].sum(axis=(1, 2)) - view[:, :, 1, :].sum(axis=(1, 2))
    return out


def _check_qubit(name: str, q, n: int) -> None:
    if not 0 <= q < n:
        raise StructureError(f"{name} qubit {q} out of range for {n} qubits")


def _batch_apply_gate(amps: np.ndarray, n: int, gate: GateOp, angles: Sequence[float]) -> None:
    """Apply one GateOp (composite gates expand to their factors) in place."""
    _check_qubit("target", gate.target, n)
    if gate.kind in ROTATION_KINDS:
        _batch_apply_rotation(amps, n, gate.kind, gate.target, angles[0])
    elif gate.kind == "composite_u":
        _batch_apply_rotation(amps, n, "ry", gate.target, angles[0])
        _batch_apply_rotation(amps, n, "rz", gate.target, angles[1])
        _batch_apply_rotation(amps, n, "ry", gate.target, angles[2])
    elif gate.kind == "cx":
        _check_qubit("control", gate.control, n)
        _batch_apply_cx(amps, n, gate.control, gate.target)
    elif gate.kind == "cz":
        _check_qubit("control", gate.control, n)
        _batch_apply_cz(amps, n, gate.control, gate.target)
    else:
        raise StructureError(f"unknown gate kind {gate.kind!r}")


# -- public single-state operations ----------------------------------------


def apply_gate(state: Statevector, gate: GateOp, params: Sequence[float]) -> Statevector:
    """Return the state after one gate; ``params`` is indexed by the gate's slots."""
    params = np.asarray(params, dtype=float)
    for slot in gate.param_slots:
        if not 0 <= slot < params.shape[0]:
            raise StructureError(
                f"gate references parameter slot {slot}, "
                f"but only {params.shape[0]} value(s) supplied"
            )
    angles = [float(params[slot]) for slot in gate.param_slots]
    amps = state.amplitudes[np.newaxis, :].copy()
    _batch_apply_gate(amps, state.n_qubits, gate, angles)
    return Statevector(state.n_qubits, amps[0])


def apply_circuit(state: Statevector, template, params: Sequence[float]) -> Statevector:
    """Apply every gate of ``template`` in order.

    ``template`` provides ``n_qubits``, ``gates`` and ``n_params``
    (see ``pqc.CircuitTemplate``).
    """
    params = np.asarray(params, dtype=float)
    if params.shape != (template.n_params,):
        raise StructureError(
            f"parameter vector has shape {params.shape}, "
            f"template expects ({template.n_params},)"
        )
    if template.n_qubits != state.n_qubits:
        raise StructureError(
            f"template is for {template.n_qubits} qubits, state has {state.n_qubits}"
        )
    amps = state.amplitudes[np.newaxis, :].copy()
    n = state.n_qubits
    for gate in template.gates:
        angles = [float(params[slot]) for slot in gate.param_slots]
        _batch_apply_gate(amps, n, gate, angles)
    out = Statevector(n, amps[0])
    drift = abs(out.norm() - 1.0)
    if drift > 1e-9:
        raise StructureError(f"circuit application drifted norm by {drift:.3e}")
    return out


def z_expectation(state: Statevector, qubit: int) -> float:
    """Exact <Z> on one qubit: sum of |a_j|^2 signed by the qubit's bit."""
    _check_qubit("measured", qubit, state.n_qubits)
    exps = _batch_z_expectations(state.amplitudes[np.newaxis, :], state.n_qubits)
    return float(exps[0, qubit])


def z_expectations(state: Statevector) -> np.ndarray:
    """Exact <Z> for every qubit, as a length-n vector."""
    return _batch_z_expectations(state.amplitudes[np.newaxis, :], state.n_qubits)[0]


def inverse_angle(kind: str, theta: float) -> float:
    """Angle that undoes a rotation of ``theta`` (all supported kinds negate)."""
    if kind not in ROTATION_KINDS:
        raise StructureError(f"not a rotation kind: {kind!r}")
    return -theta


COMPOSITE_FACTORS = ("ry", "rz", "ry")


def rotation_factors(gate: GateOp):
    """Yield (kind, target, slot) for each single-axis rotation inside a gate.

    composite_u expands to its RY/RZ/RY factors in application order;
    entangler gates yield nothing.
    """
    if gate.kind in ROTATION_KINDS:
        yield gate.kind, gate.target, gate.param_slots[0]
    elif gate.kind == "composite_u":
        for kind, slot in zip(COMPOSITE_FACTORS, gate.param_slots):
            yield kind, gate.target, slot


def require_normalized(amplitudes: np.ndarray, tol: float = 1e-10) -> None:
    nrm = np.linalg.norm(amplitudes)
    if abs(nrm - 1.0) > tol:
        raise StructureError(f"state norm {nrm} deviates from 1 by more than {tol}")
