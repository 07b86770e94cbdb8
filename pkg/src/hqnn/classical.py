"""Classical building blocks with hand-written backward passes.

Everything here operates on plain float64 numpy arrays and returns exact
gradients of its forward map; autodiff is deliberately absent.  Layers:

  * conv2d: valid cross-correlation, stride 1, square kernels;
  * maxpool2x2: non-overlapping 2x2 windows, argmax cached for backward,
    ties resolved toward the first cell in row-major window order;
  * relu, dense, softmax cross-entropy (max-subtraction stabilized);
  * PCA by exact eigendecomposition of the sample covariance;
  * Adam with standard bias correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, StructureError, TrainingError


# -- convolution ------------------------------------------------------------


def _check_conv_shapes(inp: np.ndarray, kernels: np.ndarray, bias: np.ndarray):
    if inp.ndim != 3:
        raise StructureError(f"conv input must be (C,H,W), got shape {inp.shape}")
    if kernels.ndim != 4 or kernels.shape[2] != kernels.shape[3]:
        raise StructureError(
            f"kernels must be (C_out,C_in,k,k) with square windows, got {kernels.shape}"
        )
    c_out, c_in, k, _ = kernels.shape
    if c_in != inp.shape[0]:
        raise StructureError(
            f"kernel expects {c_in} input channels, input has {inp.shape[0]}"
        )
    if bias.shape != (c_out,):
        raise StructureError(f"bias must be ({c_out},), got {bias.shape}")
    if k > inp.shape[1] or k > inp.shape[2]:
        raise StructureError(
            f"{k}x{k} kernel does not fit input {inp.shape[1]}x{inp.shape[2]}"
        )


def conv2d_forward(inp: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid stride-1 cross-correlation plus per-channel bias."""
    inp = np.asarray(inp, dtype=float)
    kernels = np.asarray(kernels, dtype=float)
    bias = np.asarray(bias, dtype=float)
    _check_conv_shapes(inp, kernels, bias)
    k = kernels.shape[2]
    windows = sliding_window_view(inp, (k, k), axis=(1, 2))  # (C_in, H', W', k, k)
    out = np.einsum("cijxy,ocxy->oij", windows, kernels, optimize=True)
    return out + bias[:, np.newaxis, np.newaxis]


def conv2d_backward(
    upstream: np.ndarray, inp: np.ndarray, kernels: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (input, kernels, bias) of conv2d_forward."""
    upstream = np.asarray(upstream, dtype=float)
    inp = np.asarray(inp, dtype=float)
    kernels = np.asarray(kernels, dtype=float)
    c_out, c_in, k, _ = kernels.shape
    h_out = inp.shape[1] - k + 1
    w_out = inp.shape[2] - k + 1
    if upstream.shape != (c_out, h_out, w_out):
        raise StructureError(
            f"upstream must be ({c_out},{h_out},{w_out}), got {upstream.shape}"
        )
    windows = sliding_window_view(inp, (k, k), axis=(1, 2))
    kernel_grad = np.einsum("oij,cijxy->ocxy", upstream, windows, optimize=True)
    bias_grad = upstream.sum(axis=(1, 2))
    # full correlation with spatially flipped kernels recovers the input grad
    padded = np.pad(upstream, ((0, 0), (k - 1, k - 1), (k - 1, k - 1)))
    pwin = sliding_window_view(padded, (k, k), axis=(1, 2))  # (C_out, H, W, k, k)
    flipped = kernels[:, :, ::-1, ::-1]
    input_grad = np.einsum("oabxy,ocxy->cab", pwin, flipped, optimize=True)
    return input_grad, kernel_grad, bias_grad


# -- pooling and activations ------------------------------------------------


def maxpool2x2_forward(inp: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Max over non-overlapping 2x2 windows; returns (output, argmax cache)."""
    inp = np.asarray(inp, dtype=float)
    if inp.ndim != 3:
        raise StructureError(f"pool input must be (C,H,W), got shape {inp.shape}")
    c, h, w = inp.shape
    if h % 2 or w % 2:
        raise StructureError(f"pool needs even spatial dims, got {h}x{w}")
    tiles = inp.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4)
    flat = tiles.reshape(c, h // 2, w // 2, 4)
    cache = flat.argmax(axis=-1)  # first max wins on ties (row-major window scan)
    out = np.take_along_axis(flat, cache[..., np.newaxis], axis=-1)[..., 0]
    return out, cache


def maxpool2x2_backward(upstream: np.ndarray, cache: np.ndarray) -> np.ndarray:
    """Scatter upstream gradient to each window's cached argmax cell."""
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != cache.shape:
        raise StructureError(
            f"upstream shape {upstream.shape} does not match cache {cache.shape}"
        )
    c, hh, hw = upstream.shape
    flat = np.zeros((c, hh, hw, 4))
    np.put_along_axis(flat, cache[..., np.newaxis], upstream[..., np.newaxis], axis=-1)
    return flat.reshape(c, hh, hw, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, 2 * hh, 2 * hw)


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=float), 0.0)


def relu_backward(upstream: np.ndarray, x: np.ndarray) -> np.ndarray:
    # gradient at exactly 0 is taken as 0
    return np.asarray(upstream, dtype=float) * (np.asarray(x) > 0)


# -- dense and loss ---------------------------------------------------------


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    weights = np.asarray(weights, dtype=float)
    bias = np.asarray(bias, dtype=float)
    if x.ndim != 1 or weights.ndim != 2 or weights.shape[1] != x.shape[0]:
        raise StructureError(
            f"dense shapes inconsistent: x {x.shape}, weights {weights.shape}"
        )
    if bias.shape != (weights.shape[0],):
        raise StructureError(f"bias must be ({weights.shape[0]},), got {bias.shape}")
    return weights @ x + bias


def dense_backward(
    upstream: np.ndarray, x: np.ndarray, weights: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != (weights.shape[0],):
        raise StructureError(
            f"upstream must be ({weights.shape[0]},), got {upstream.shape}"
        )
    return weights.T @ upstream, np.outer(upstream, x), upstream.copy()


def softmax_cross_entropy(logits: np.ndarray, label: int) -> Tuple[float, np.ndarray]:
    """Loss -log softmax(logits)[label] and its gradient softmax - onehot."""
    logits = np.asarray(logits, dtype=float)
    if not 0 <= label < logits.shape[0]:
        raise StructureError(
            f"label {label} out of range for {logits.shape[0]} classes"
        )
    shifted = logits - logits.max()
    exps = np.exp(shifted)
    total = exps.sum()
    probs = exps / total
    loss = float(np.log(total) - shifted[label])
    grad = probs.copy()
    grad[label] -= 1.0
    return loss, grad


# -- PCA --------------------------------------------------------------------


@dataclass(frozen=True)
class PcaModel:
    """Mean vector plus orthonormal component rows (k x d)."""

    mean: np.ndarray
    components: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]


def pca_fit(X: np.ndarray, k: int) -> PcaModel:
    """Top-k principal directions of the rows of X.

    Components are eigenvectors of the sample covariance (divisor m-1),
    sorted by descending eigenvalue, each signed so its largest-magnitude
    entry is positive.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise StructureError(f"pca_fit needs a (m,d) matrix, got shape {X.shape}")
    m, d = X.shape
    if k < 1 or k > min(m - 1, d):
        raise ConfigurationError(
            f"target dimension {k} not in [1, min(m-1={m - 1}, d={d})]"
        )
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (m - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    components = eigvecs[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean=mean, components=components)


def pca_transform(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Project onto the component rows: components @ (x - mean).

    Accepts a single vector (d,) or a batch (m, d).
    """
    x = np.asarray(x, dtype=float)
    d = model.mean.shape[0]
    if x.ndim == 1:
        if x.shape[0] != d:
            raise StructureError(f"expected {d} features, got {x.shape[0]}")
        return model.components @ (x - model.mean)
    if x.ndim == 2 and x.shape[1] == d:
        return (x - model.mean) @ model.components.T
    raise StructureError(f"cannot transform shape {x.shape} with d={d}")


# -- Adam -------------------------------------------------------------------


@dataclass
class AdamState:
    """Moment buffers and hyperparameters for one parameter group."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    learning_rate: float = 0.01


def adam_init(n_params: int, learning_rate: float = 0.01, **hyper) -> AdamState:
    return AdamState(
        first_moment=np.zeros(n_params),
        second_moment=np.zeros(n_params),
        learning_rate=learning_rate,
        **hyper,
    )


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState):
    """One bias-corrected Adam update; mutates and returns (params, state)."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise StructureError(
            f"parameter/gradient/state shapes disagree: {params.shape}, "
            f"{grads.shape}, {state.first_moment.shape}"
        )
    if not np.all(np.isfinite(grads)):
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise TrainingError(f"non-finite gradient at parameter index {bad}")
    state.step_count += 1
    t = state.step_count
    state.first_moment *= state.beta1
    state.first_moment += (1 - state.beta1) * grads
    state.second_moment *= state.beta2
    state.second_moment += (1 - state.beta2) * grads * grads
    m_hat = state.first_moment / (1 - state.beta1**t)
    v_hat = state.second_moment / (1 - state.beta2**t)
    params -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state
