"""Gradients of circuit outputs.

Three differentiation routes live here:

  * parameter-shift rule for gate angles: each rotation occurrence is
    evaluated at theta +/- pi/2 and the halved difference of <Z>
    readouts is the exact derivative (generators with eigenvalues
    +/-1/2); occurrences sharing a slot sum their contributions;
  * an adjoint-mode gradient with respect to the input amplitudes, for
    backpropagating through amplitude encoding into classical layers;
  * central finite differences, kept only as an independent oracle for
    tests and debugging.

The shift evaluations are batched: one array holds the unshifted prefix
plus two forked rows per rotation occurrence, and every gate is applied
to all live rows at once, so a full jacobian costs one sweep over the
circuit instead of 2*n_params sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .errors import EncodingError, StructureError
from .pqc import CircuitTemplate
from .statevec import (
    Statevector,
    _batch_apply_cx,
    _batch_apply_cz,
    _batch_apply_rotation,
    _batch_z_expectations,
    rotation_factors,
)

SHIFT = math.pi / 2


@dataclass(frozen=True)
class QuantumJacobian:
    """Derivatives of the per-qubit <Z> readout vector."""

    d_expect_d_param: np.ndarray  # (n_qubits, n_params)
    d_expect_d_input: np.ndarray  # (n_qubits, 2**n_qubits)


def _occurrences(template: CircuitTemplate):
    out = []
    for gate in template.gates:
        for kind, target, slot in rotation_factors(gate):
            out.append((kind, target, slot))
    return out


def qnn_forward_and_jacobian(
    template: CircuitTemplate, params, input_state: Statevector
) -> Tuple[np.ndarray, np.ndarray]:
    """Readout vector and its (n_qubits, n_params) parameter jacobian.

    One batched sweep: row 0 carries the unshifted circuit (providing the
    forward value); rows (1+2i, 2+2i) carry occurrence i shifted by
    +/- pi/2.  Shifted rows fork from the prefix right before their
    occurrence, then receive every later gate along with row 0.
    """
    params = np.asarray(params, dtype=float)
    if params.shape != (template.n_params,):
        raise StructureError(
            f"parameter vector has shape {params.shape}, "
            f"template expects ({template.n_params},)"
        )
    n = template.n_qubits
    if n != input_state.n_qubits:
        raise StructureError(
            f"template is for {n} qubits, state has {input_state.n_qubits}"
        )
    occurrences = _occurrences(template)
    n_rows = 1 + 2 * len(occurrences)
    amps = np.empty((n_rows, 1 << n), dtype=np.complex128)
    amps[0] = input_state.amplitudes
    live = 1
    occ = 0
    for gate in template.gates:
        if gate.kind == "cx":
            _batch_apply_cx(amps[:live], n, gate.control, gate.target)
            continue
        if gate.kind == "cz":
            _batch_apply_cz(amps[:live], n, gate.control, gate.target)
            continue
        for kind, target, slot in rotation_factors(gate):
            plus, minus = 1 + 2 * occ, 2 + 2 * occ
            amps[plus] = amps[0]
            amps[minus] = amps[0]
            live += 2
            occ += 1
            # same-axis rotations compose additively, so the common R(theta)
            # plus a +/- pi/2 nudge equals R(theta +/- pi/2) on the forks
            _batch_apply_rotation(amps[:live], n, kind, target, float(params[slot]))
            _batch_apply_rotation(amps[plus : plus + 1], n, kind, target, SHIFT)
            _batch_apply_rotation(amps[minus : minus + 1], n, kind, target, -SHIFT)
    exps = _batch_z_expectations(amps, n)
    jac = np.zeros((n, template.n_params))
    for i, (_, _, slot) in enumerate(occurrences):
        jac[:, slot] += (exps[1 + 2 * i] - exps[2 + 2 * i]) / 2.0
    return exps[0].copy(), jac


def param_shift_jacobian(
    template: CircuitTemplate, params, input_state: Statevector
) -> np.ndarray:
    """Shift-rule jacobian of every <Z_k> with respect to every slot."""
    _, jac = qnn_forward_and_jacobian(template, params, input_state)
    return jac


def _apply_template_batch(amps: np.ndarray, template: CircuitTemplate, params) -> None:
    n = template.n_qubits
    for gate in template.gates:
        if gate.kind == "cx":
            _batch_apply_cx(amps, n, gate.control, gate.target)
        elif gate.kind == "cz":
            _batch_apply_cz(amps, n, gate.control, gate.target)
        else:
            for kind, target, slot in rotation_factors(gate):
                _batch_apply_rotation(amps, n, kind, target, float(params[slot]))


def _apply_template_adjoint_batch(amps: np.ndarray, template: CircuitTemplate, params) -> None:
    n = template.n_qubits
    for gate in reversed(template.gates):
        if gate.kind == "cx":
            _batch_apply_cx(amps, n, gate.control, gate.target)
        elif gate.kind == "cz":
            _batch_apply_cz(amps, n, gate.control, gate.target)
        else:
            factors = list(rotation_factors(gate))
            for kind, target, slot in reversed(factors):
                _batch_apply_rotation(amps, n, kind, target, -float(params[slot]))


def input_gradient(
    template: CircuitTemplate, params, input_state: Statevector
) -> np.ndarray:
    """d<Z_k>/d(psi_j) for real input amplitudes psi; shape (n_qubits, 2**n).

    With U the circuit unitary, <Z_k> = psi^T M_k psi for the Hermitian
    M_k = U^dag Z_k U, so the gradient row is 2 Re(U^dag (z_k * U psi)).
    Computed by one forward sweep, a diagonal weighting per qubit, and one
    adjoint sweep over the n_qubits weighted vectors; no matrices are
    materialized.
    """
    params = np.asarray(params, dtype=float)
    if params.shape != (template.n_params,):
        raise StructureError(
            f"parameter vector has shape {params.shape}, "
            f"template expects ({template.n_params},)"
        )
    n = template.n_qubits
    if n != input_state.n_qubits:
        raise StructureError(
            f"template is for {n} qubits, state has {input_state.n_qubits}"
        )
    psi = input_state.amplitudes
    if np.any(psi.imag != 0.0):
        raise StructureError("input_gradient requires real input amplitudes")
    forward = psi[np.newaxis, :].copy()
    _apply_template_batch(forward, template, params)
    dim = 1 << n
    idx = np.arange(dim)
    weighted = np.empty((n, dim), dtype=np.complex128)
    for q in range(n):
        signs = 1.0 - 2.0 * ((idx >> (n - 1 - q)) & 1)
        weighted[q] = forward[0] * signs
    _apply_template_adjoint_batch(weighted, template, params)
    return 2.0 * weighted.real


def quantum_jacobian(
    template: CircuitTemplate, params, input_state: Statevector
) -> QuantumJacobian:
    """Both jacobians bundled; entries of the parameter block lie in [-1, 1]."""
    return QuantumJacobian(
        d_expect_d_param=param_shift_jacobian(template, params, input_state),
        d_expect_d_input=input_gradient(template, params, input_state),
    )


def normalize_jacobian(raw_features) -> np.ndarray:
    """Jacobian of x -> x/||x||, i.e. (I - psi psi^T)/||x|| with psi = x/||x||."""
    x = np.asarray(raw_features, dtype=float).ravel()
    nrm = np.linalg.norm(x)
    if nrm == 0.0:
        raise EncodingError("normalization jacobian undefined at the zero vector")
    psi = x / nrm
    return (np.eye(x.shape[0]) - np.outer(psi, psi)) / nrm


def finite_difference(f: Callable[[np.ndarray], float], x, h: float) -> np.ndarray:
    """Central-difference gradient oracle; independent of the methods above."""
    if h <= 0:
        raise StructureError(f"step must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for j in range(x.shape[0]):
        bumped = x.copy()
        bumped[j] = x[j] + h
        up = f(bumped)
        bumped[j] = x[j] - h
        down = f(bumped)
        grad[j] = (up - down) / (2 * h)
    return grad
