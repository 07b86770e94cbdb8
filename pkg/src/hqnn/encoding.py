"""Classical-to-quantum feature loading.

Two routes are supported:
  * angle encoding: one feature per qubit, written as a single-qubit
    rotation angle (default RY), giving a product state;
  * amplitude encoding: a real vector written directly into the state
    amplitudes after zero-padding to the state dimension and L2
    normalization.

``scale_features`` is the companion affine map onto [0, pi] used before
angle encoding; its min/max statistics must come from training data only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import EncodingError, StructureError
from .statevec import GateOp, Statevector, apply_gate, init_zero

ANGLE = "angle"
AMPLITUDE = "amplitude"
_AXES = ("rx", "ry", "rz")


@dataclass(frozen=True)
class EncoderSpec:
    """How classical features become a quantum state."""

    kind: str
    n_qubits: int
    angle_axis: str = "ry"
    scale_range: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.kind not in (ANGLE, AMPLITUDE):
            raise StructureError(f"unknown encoder kind {self.kind!r}")
        if self.n_qubits < 1:
            raise StructureError(f"n_qubits must be positive, got {self.n_qubits}")
        if self.kind == ANGLE and self.angle_axis not in _AXES:
            raise StructureError(f"angle_axis must be one of {_AXES}, got {self.angle_axis!r}")


def angle_encode(features, spec: EncoderSpec) -> Statevector:
    """Product state with each feature as one qubit's rotation angle."""
    if spec.kind != ANGLE:
        raise EncodingError(f"angle_encode needs an {ANGLE!r} spec, got {spec.kind!r}")
    features = np.asarray(features, dtype=float).ravel()
    if features.shape[0] != spec.n_qubits:
        raise EncodingError(
            f"angle encoding on {spec.n_qubits} qubits needs {spec.n_qubits} "
            f"features, got {features.shape[0]}"
        )
    state = init_zero(spec.n_qubits)
    for q, theta in enumerate(features):
        state = apply_gate(state, GateOp(spec.angle_axis, q, param_slots=(0,)), [theta])
    return state


def scale_features(features, observed_min, observed_max) -> np.ndarray:
    """Affine map of each feature onto [0, pi], clamped.

    ``observed_min``/``observed_max`` are per-feature training statistics
    (scalars broadcast).  A feature whose observed range collapses to a
    point maps to pi/2 rather than dividing by zero.
    """
    x = np.asarray(features, dtype=float)
    lo = np.broadcast_to(np.asarray(observed_min, dtype=float), x.shape)
    hi = np.broadcast_to(np.asarray(observed_max, dtype=float), x.shape)
    if np.any(hi < lo):
        raise EncodingError("observed_max below observed_min")
    span = hi - lo
    degenerate = span == 0
    safe_span = np.where(degenerate, 1.0, span)
    scaled = (x - lo) / safe_span * np.pi
    scaled = np.where(degenerate, np.pi / 2, scaled)
    return np.clip(scaled, 0.0, np.pi)


def amplitude_encode(features, spec: EncoderSpec) -> Statevector:
    """Real features as normalized state amplitudes, zero-padded to 2**n."""
    if spec.kind != AMPLITUDE:
        raise EncodingError(f"amplitude_encode needs an {AMPLITUDE!r} spec, got {spec.kind!r}")
    features = np.asarray(features, dtype=float).ravel()
    dim = 1 << spec.n_qubits
    if features.shape[0] > dim:
        raise EncodingError(
            f"{features.shape[0]} features exceed the {dim}-dimensional "
            f"state of {spec.n_qubits} qubits"
        )
    nrm = np.linalg.norm(features)
    if nrm == 0.0:
        raise EncodingError("cannot amplitude-encode an all-zero vector")
    amps = np.zeros(dim, dtype=np.complex128)
    amps[: features.shape[0]] = features / nrm
    return Statevector(spec.n_qubits, amps)
