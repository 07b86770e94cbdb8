"""Model assembly and training.

Three trainable architectures share the layer primitives:

  * PcaQnnModel: flatten -> PCA -> scale to [0, pi] -> angle encoding ->
    baseline circuit -> per-qubit <Z>; logits are either the first
    n_classes expectations (direct readout) or a trainable dense map;
  * CnnQnnModel: two (3x3 conv, ReLU, 2x2 max-pool) blocks -> dense
    bridge sized to 2**q -> ReLU -> amplitude encoding -> composite
    circuit -> per-qubit <Z> -> dense head;
  * CnnBaseline: the same conv stack and bridge with a purely classical
    head, used directly and as the pretraining stage for transfer mode.

Odd feature-map dimensions are cropped by one row/column before pooling;
maps smaller than 2x2 skip the pool.  Training is plain minibatch Adam;
gradients flow through the circuits via the parameter-shift rule and the
adjoint input-amplitude gradient.  All randomness comes from seeded
generators and accumulation order is fixed, so runs are reproducible.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .classical import (
    AdamState,
    PcaModel,
    adam_init,
    adam_step,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    maxpool2x2_backward,
    maxpool2x2_forward,
    pca_fit,
    pca_transform,
    relu_backward,
    relu_forward,
    softmax_cross_entropy,
)
from .data import Dataset
from .encoding import EncoderSpec, amplitude_encode, angle_encode, scale_features
from .errors import (
    ConfigurationError,
    DataError,
    EncodingError,
    StructureError,
    TrainingError,
)
from .pqc import CircuitTemplate, build_baseline_pqc, build_composite_pqc, qnn_output
from .qgrad import input_gradient, qnn_forward_and_jacobian
from .statevec import Statevector

DIRECT = "direct"
DENSE = "dense"
KERNEL = 3  # all conv kernels are 3x3


# -- configuration and metrics ----------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0
    train_subset: int = 0  # per-class counts; 0 means use the split as given
    test_subset: int = 0
    class_list: Tuple[int, ...] = tuple(range(10))

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be positive, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.train_subset < 0 or self.test_subset < 0:
            raise ConfigurationError("subset counts must be >= 0")
        if not self.class_list or len(set(self.class_list)) != len(self.class_list):
            raise ConfigurationError("class_list must be non-empty and distinct")


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_loss: float
    test_accuracy: float
    wall_seconds: float

    def __post_init__(self):
        if self.train_loss < 0 or self.test_loss < 0:
            raise TrainingError(f"negative loss in epoch {self.epoch}")
        for acc in (self.train_accuracy, self.test_accuracy):
            if not 0 <= acc <= 1:
                raise TrainingError(f"accuracy {acc} outside [0,1] in epoch {self.epoch}")


# -- initialization helpers -------------------------------------------------


def _uniform_weights(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _init_theta(rng: np.random.Generator, n_params: int) -> np.ndarray:
    return rng.uniform(0.0, 2.0 * np.pi, size=n_params)


# -- shared conv stack ------------------------------------------------------


def conv_stack_output_dim(image_hw: int, channels: Tuple[int, int]) -> int:
    """Flattened feature count after the two conv/pool blocks."""
    h = w = image_hw
    for _ in channels:
        h, w = h - (KERNEL - 1), w - (KERNEL - 1)
        if h < 1 or w < 1:
            raise ConfigurationError(
                f"{image_hw}x{image_hw} input too small for the conv stack"
            )
        if h >= 2 and w >= 2:
            h, w = (h - h % 2) // 2, (w - w % 2) // 2
    return channels[1] * h * w


def _pool_block_forward(x: np.ndarray):
    c, h, w = x.shape
    if h < 2 or w < 2:
        return x, ("skip",)
    h2, w2 = h - h % 2, w - w % 2
    cropped = x[:, :h2, :w2]
    out, argmax = maxpool2x2_forward(cropped)
    return out, ("pool", (c, h, w), argmax)


def _pool_block_backward(upstream: np.ndarray, cache) -> np.ndarray:
    if cache[0] == "skip":
        return upstream
    _, (c, h, w), argmax = cache
    grad = maxpool2x2_backward(upstream, argmax)
    if grad.shape != (c, h, w):
        full = np.zeros((c, h, w))
        full[:, : grad.shape[1], : grad.shape[2]] = grad
        return full
    return grad


def _conv_stack_forward(image: np.ndarray, params: Dict[str, np.ndarray]):
    c1 = conv2d_forward(image, params["conv1_k"], params["conv1_b"])
    r1 = relu_forward(c1)
    p1, pool1 = _pool_block_forward(r1)
    c2 = conv2d_forward(p1, params["conv2_k"], params["conv2_b"])
    r2 = relu_forward(c2)
    p2, pool2 = _pool_block_forward(r2)
    flat = p2.reshape(-1)
    cache = (image, c1, p1, pool1, c2, pool2, p2.shape)
    return flat, cache


def _conv_stack_backward(d_flat: np.ndarray, cache, params: Dict[str, np.ndarray]):
    image, c1, p1, pool1, c2, pool2, p2_shape = cache
    d_p2 = d_flat.reshape(p2_shape)
    d_r2 = _pool_block_backward(d_p2, pool2)
    d_c2 = relu_backward(d_r2, c2)
    d_p1, gk2, gb2 = conv2d_backward(d_c2, p1, params["conv2_k"])
    d_r1 = _pool_block_backward(d_p1, pool1)
    d_c1 = relu_backward(d_r1, c1)
    _, gk1, gb1 = conv2d_backward(d_c1, image, params["conv1_k"])
    return {"conv1_k": gk1, "conv1_b": gb1, "conv2_k": gk2, "conv2_b": gb2}


def _init_conv_stack(rng: np.random.Generator, channels: Tuple[int, int]):
    # biases share the weight draw: a zero bias stack can zero every ReLU
    # activation for dark inputs, which the amplitude encoder cannot accept
    c1, c2 = channels
    return {
        "conv1_k": _uniform_weights(rng, (c1, 1, KERNEL, KERNEL), KERNEL * KERNEL),
        "conv1_b": _uniform_weights(rng, (c1,), KERNEL * KERNEL),
        "conv2_k": _uniform_weights(rng, (c2, c1, KERNEL, KERNEL), c1 * KERNEL * KERNEL),
        "conv2_b": _uniform_weights(rng, (c2,), c1 * KERNEL * KERNEL),
    }


def _check_image(image: np.ndarray, hw: int) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.ndim == 2:
        image = image[np.newaxis, :, :]
    if image.shape != (1, hw, hw):
        raise StructureError(f"expected a 1x{hw}x{hw} image, got shape {image.shape}")
    return image


# -- PCA + QNN --------------------------------------------------------------


class PcaQnnModel:
    """Angle-encoded circuit classifier over PCA features."""

    kind = "pca_qnn"

    def __init__(
        self,
        pca: PcaModel,
        feature_min: np.ndarray,
        feature_max: np.ndarray,
        template: CircuitTemplate,
        theta: np.ndarray,
        n_classes: int,
        readout: str = DIRECT,
        readout_w: Optional[np.ndarray] = None,
        readout_b: Optional[np.ndarray] = None,
        n_layers: int = 2,
        entangler_gate: str = "cx",
    ):
        n_qubits = template.n_qubits
        if pca.k != n_qubits:
            raise StructureError(
                f"PCA dimension {pca.k} must equal qubit count {n_qubits}"
            )
        if readout not in (DIRECT, DENSE):
            raise ConfigurationError(f"readout must be direct or dense, got {readout!r}")
        if readout == DIRECT and n_classes > n_qubits:
            raise ConfigurationError(
                f"direct readout of {n_classes} classes needs >= {n_classes} qubits, "
                f"have {n_qubits}"
            )
        if readout == DENSE and (readout_w is None or readout_b is None):
            raise StructureError("dense readout requires weight and bias arrays")
        self.pca = pca
        self.feature_min = np.asarray(feature_min, dtype=float)
        self.feature_max = np.asarray(feature_max, dtype=float)
        self.encoder = EncoderSpec(kind="angle", n_qubits=n_qubits, angle_axis="ry")
        self.template = template
        self.theta = np.asarray(theta, dtype=float)
        self.n_classes = n_classes
        self.readout = readout
        self.readout_w = readout_w
        self.readout_b = readout_b
        self.n_layers = n_layers
        self.entangler_gate = entangler_gate

    @classmethod
    def initialize(
        cls,
        train_images: np.ndarray,
        n_qubits: int,
        n_classes: int,
        n_layers: int = 2,
        readout: str = DIRECT,
        entangler_gate: str = "cx",
        seed: int = 0,
    ) -> "PcaQnnModel":
        """Fit PCA and scaling on the training images, draw fresh parameters."""
        flat = np.asarray(train_images, dtype=float).reshape(train_images.shape[0], -1)
        pca = pca_fit(flat, n_qubits)
        feats = pca_transform(pca, flat)
        rng = np.random.default_rng(seed)
        template = build_baseline_pqc(n_qubits, n_layers, entangler_gate)
        theta = _init_theta(rng, template.n_params)
        readout_w = readout_b = None
        if readout == DENSE:
            readout_w = _uniform_weights(rng, (n_classes, n_qubits), n_qubits)
            readout_b = _uniform_weights(rng, (n_classes,), n_qubits)
        return cls(
            pca=pca,
            feature_min=feats.min(axis=0),
            feature_max=feats.max(axis=0),
            template=template,
            theta=theta,
            n_classes=n_classes,
            readout=readout,
            readout_w=readout_w,
            readout_b=readout_b,
            n_layers=n_layers,
            entangler_gate=entangler_gate,
        )

    @property
    def n_qubits(self) -> int:
        return self.template.n_qubits

    def encode(self, image: np.ndarray) -> Statevector:
        feats = pca_transform(self.pca, np.asarray(image, dtype=float).ravel())
        angles = scale_features(feats, self.feature_min, self.feature_max)
        return angle_encode(angles, self.encoder)

    def _logits_from_expectations(self, exps: np.ndarray) -> np.ndarray:
        if self.readout == DIRECT:
            return exps[: self.n_classes].copy()
        return dense_forward(exps, self.readout_w, self.readout_b)

    def forward(self, image: np.ndarray) -> np.ndarray:
        exps = qnn_output(self.template, self.theta, self.encode(image))
        return self._logits_from_expectations(exps)

    def trainable(self) -> Dict[str, np.ndarray]:
        groups = {"theta": self.theta}
        if self.readout == DENSE:
            groups["readout_w"] = self.readout_w
            groups["readout_b"] = self.readout_b
        return groups

    def sample_gradients(self, image: np.ndarray, label: int):
        state = self.encode(image)
        exps, jac = qnn_forward_and_jacobian(self.template, self.theta, state)
        logits = self._logits_from_expectations(exps)
        loss, d_logits = softmax_cross_entropy(logits, label)
        correct = int(np.argmax(logits)) == int(label)
        grads: Dict[str, np.ndarray] = {}
        if self.readout == DIRECT:
            d_exps = np.zeros(self.n_qubits)
            d_exps[: self.n_classes] = d_logits
        else:
            d_exps, gw, gb = dense_backward(d_logits, exps, self.readout_w)
            grads["readout_w"] = gw
            grads["readout_b"] = gb
        grads["theta"] = d_exps @ jac
        return loss, correct, grads


# -- CNN + QNN --------------------------------------------------------------


COMPOSITE_ANSATZ = "composite"
BASELINE_ANSATZ = "baseline"

_ANSATZ_BUILDERS = {
    COMPOSITE_ANSATZ: build_composite_pqc,
    BASELINE_ANSATZ: build_baseline_pqc,
}


class CnnQnnModel:
    """Conv features amplitude-encoded into a parameterized circuit.

    The circuit defaults to the composite-gate, fully connected ansatz;
    the plain rotation-layer ansatz is available for a like-for-like
    comparison with everything else held fixed.
    """

    kind = "cnn_qnn"

    def __init__(
        self,
        params: Dict[str, np.ndarray],
        template: CircuitTemplate,
        n_classes: int,
        image_hw: int = 28,
        conv_channels: Tuple[int, int] = (8, 16),
        n_layers: int = 2,
        entangler_gate: str = "cx",
        freeze_conv: bool = False,
        ansatz: str = COMPOSITE_ANSATZ,
    ):
        if ansatz not in _ANSATZ_BUILDERS:
            raise ConfigurationError(
                f"ansatz must be composite or baseline, got {ansatz!r}"
            )
        q = template.n_qubits
        flat_dim = conv_stack_output_dim(image_hw, conv_channels)
        if params["bridge_w"].shape != (1 << q, flat_dim):
            raise StructureError(
                f"bridge must map {flat_dim} -> {1 << q}, got shape "
                f"{params['bridge_w'].shape}"
            )
        if params["head_w"].shape != (n_classes, q):
            raise StructureError(
                f"head must map {q} -> {n_classes}, got shape {params['head_w'].shape}"
            )
        self.params = params
        self.template = template
        self.theta = params["theta"]
        self.n_classes = n_classes
        self.image_hw = image_hw
        self.conv_channels = tuple(conv_channels)
        self.n_layers = n_layers
        self.entangler_gate = entangler_gate
        self.freeze_conv = freeze_conv
        self.ansatz = ansatz
        self.encoder = EncoderSpec(kind="amplitude", n_qubits=q)

    @classmethod
    def initialize(
        cls,
        n_classes: int = 10,
        image_hw: int = 28,
        conv_channels: Tuple[int, int] = (8, 16),
        q: int = 8,
        n_layers: int = 2,
        entangler_gate: str = "cx",
        seed: int = 0,
        ansatz: str = COMPOSITE_ANSATZ,
    ) -> "CnnQnnModel":
        if ansatz not in _ANSATZ_BUILDERS:
            raise ConfigurationError(
                f"ansatz must be composite or baseline, got {ansatz!r}"
            )
        rng = np.random.default_rng(seed)
        params = _init_conv_stack(rng, conv_channels)
        flat_dim = conv_stack_output_dim(image_hw, conv_channels)
        params["bridge_w"] = _uniform_weights(rng, (1 << q, flat_dim), flat_dim)
        params["bridge_b"] = _uniform_weights(rng, (1 << q,), flat_dim)
        template = _ANSATZ_BUILDERS[ansatz](q, n_layers, entangler_gate)
        params["theta"] = _init_theta(rng, template.n_params)
        params["head_w"] = _uniform_weights(rng, (n_classes, q), q)
        params["head_b"] = _uniform_weights(rng, (n_classes,), q)
        return cls(
            params=params,
            template=template,
            n_classes=n_classes,
            image_hw=image_hw,
            conv_channels=conv_channels,
            n_layers=n_layers,
            entangler_gate=entangler_gate,
            ansatz=ansatz,
        )

    @property
    def q(self) -> int:
        return self.template.n_qubits

    def trainable(self) -> Dict[str, np.ndarray]:
        names = ["bridge_w", "bridge_b", "theta", "head_w", "head_b"]
        if not self.freeze_conv:
            names = ["conv1_k", "conv1_b", "conv2_k", "conv2_b"] + names
        return {name: self.params[name] for name in names}

    def _bridge_forward(self, image: np.ndarray):
        image = _check_image(image, self.image_hw)
        flat, stack_cache = _conv_stack_forward(image, self.params)
        pre = dense_forward(flat, self.params["bridge_w"], self.params["bridge_b"])
        z = relu_forward(pre)
        if not z.any():
            raise EncodingError("bridge output is all zero; cannot amplitude-encode")
        return z, (flat, stack_cache, pre)

    def forward(self, image: np.ndarray) -> np.ndarray:
        z, _ = self._bridge_forward(image)
        exps = qnn_output(self.template, self.theta, amplitude_encode(z, self.encoder))
        return dense_forward(exps, self.params["head_w"], self.params["head_b"])

    def sample_gradients(self, image: np.ndarray, label: int):
        z, (flat, stack_cache, pre) = self._bridge_forward(image)
        state = amplitude_encode(z, self.encoder)
        exps, jac = qnn_forward_and_jacobian(self.template, self.theta, state)
        logits = dense_forward(exps, self.params["head_w"], self.params["head_b"])
        loss, d_logits = softmax_cross_entropy(logits, label)
        correct = int(np.argmax(logits)) == int(label)
        d_exps, g_head_w, g_head_b = dense_backward(d_logits, exps, self.params["head_w"])
        grads = {"theta": d_exps @ jac, "head_w": g_head_w, "head_b": g_head_b}
        d_psi = d_exps @ input_gradient(self.template, self.theta, state)
        # chain through z -> z/||z||: (I - psi psi^T)/||z|| applied to d_psi
        nrm = float(np.linalg.norm(z))
        psi = z / nrm
        d_z = (d_psi - psi * float(psi @ d_psi)) / nrm
        d_pre = relu_backward(d_z, pre)
        d_flat, g_bridge_w, g_bridge_b = dense_backward(
            d_pre, flat, self.params["bridge_w"]
        )
        grads["bridge_w"] = g_bridge_w
        grads["bridge_b"] = g_bridge_b
        if not self.freeze_conv:
            grads.update(_conv_stack_backward(d_flat, stack_cache, self.params))
        return loss, correct, grads


# -- purely classical baseline ----------------------------------------------


class CnnBaseline:
    """The conv stack and bridge with a classical head; no circuit."""

    kind = "cnn_baseline"

    def __init__(
        self,
        params: Dict[str, np.ndarray],
        n_classes: int,
        image_hw: int = 28,
        conv_channels: Tuple[int, int] = (8, 16),
        bridge_dim: int = 256,
    ):
        self.params = params
        self.n_classes = n_classes
        self.image_hw = image_hw
        self.conv_channels = tuple(conv_channels)
        self.bridge_dim = bridge_dim

    @classmethod
    def initialize(
        cls,
        n_classes: int = 10,
        image_hw: int = 28,
        conv_channels: Tuple[int, int] = (8, 16),
        bridge_dim: int = 256,
        seed: int = 0,
    ) -> "CnnBaseline":
        rng = np.random.default_rng(seed)
        params = _init_conv_stack(rng, conv_channels)
        flat_dim = conv_stack_output_dim(image_hw, conv_channels)
        params["bridge_w"] = _uniform_weights(rng, (bridge_dim, flat_dim), flat_dim)
        params["bridge_b"] = _uniform_weights(rng, (bridge_dim,), flat_dim)
        params["head_w"] = _uniform_weights(rng, (n_classes, bridge_dim), bridge_dim)
        params["head_b"] = _uniform_weights(rng, (n_classes,), bridge_dim)
        return cls(params, n_classes, image_hw, conv_channels, bridge_dim)

    def trainable(self) -> Dict[str, np.ndarray]:
        return dict(self.params)

    def forward(self, image: np.ndarray) -> np.ndarray:
        image = _check_image(image, self.image_hw)
        flat, _ = _conv_stack_forward(image, self.params)
        pre = dense_forward(flat, self.params["bridge_w"], self.params["bridge_b"])
        z = relu_forward(pre)
        return dense_forward(z, self.params["head_w"], self.params["head_b"])

    def sample_gradients(self, image: np.ndarray, label: int):
        image = _check_image(image, self.image_hw)
        flat, stack_cache = _conv_stack_forward(image, self.params)
        pre = dense_forward(flat, self.params["bridge_w"], self.params["bridge_b"])
        z = relu_forward(pre)
        logits = dense_forward(z, self.params["head_w"], self.params["head_b"])
        loss, d_logits = softmax_cross_entropy(logits, label)
        correct = int(np.argmax(logits)) == int(label)
        d_z, g_head_w, g_head_b = dense_backward(d_logits, z, self.params["head_w"])
        d_pre = relu_backward(d_z, pre)
        d_flat, g_bridge_w, g_bridge_b = dense_backward(d_pre, flat, self.params["bridge_w"])
        grads = {
            "head_w": g_head_w,
            "head_b": g_head_b,
            "bridge_w": g_bridge_w,
            "bridge_b": g_bridge_b,
        }
        grads.update(_conv_stack_backward(d_flat, stack_cache, self.params))
        return loss, correct, grads


# -- training loop ----------------------------------------------------------


def backward_and_step(model, images, labels, adam_states: Dict[str, AdamState]):
    """Averaged batch gradients, one Adam step per group; returns (loss, correct)."""
    groups = model.trainable()
    sums = {name: np.zeros_like(arr) for name, arr in groups.items()}
    loss_sum = 0.0
    correct = 0
    for i in range(len(labels)):
        try:
            loss, hit, grads = model.sample_gradients(images[i], int(labels[i]))
        except EncodingError as exc:
            raise EncodingError(f"{exc} (batch sample {i})") from exc
        loss_sum += loss
        correct += int(hit)
        for name in sums:
            if name in grads:
                sums[name] += grads[name]
    batch = float(len(labels))
    mean_loss = loss_sum / batch
    if not np.isfinite(mean_loss):
        raise TrainingError(f"non-finite batch loss {mean_loss}")
    for name, arr in groups.items():
        adam_step(arr.reshape(-1), (sums[name] / batch).reshape(-1), adam_states[name])
    return mean_loss, correct


def init_adam_states(model, learning_rate: float) -> Dict[str, AdamState]:
    return {
        name: adam_init(arr.size, learning_rate=learning_rate)
        for name, arr in model.trainable().items()
    }


def evaluate(model, dataset: Dataset) -> Tuple[float, float]:
    """Mean cross-entropy and argmax accuracy over a dataset."""
    if len(dataset) == 0:
        raise ConfigurationError("cannot evaluate on an empty dataset")
    loss_sum = 0.0
    correct = 0
    for i in range(len(dataset)):
        logits = model.forward(dataset.images[i])
        loss, _ = softmax_cross_entropy(logits, int(dataset.labels[i]))
        loss_sum += loss
        correct += int(int(np.argmax(logits)) == int(dataset.labels[i]))
    return loss_sum / len(dataset), correct / len(dataset)


def train_model(
    model, train_ds: Dataset, test_ds: Dataset, config: TrainConfig
) -> Iterator[MetricsRecord]:
    """Yield one MetricsRecord per epoch; epoch shuffles are seeded."""
    adam_states = init_adam_states(model, config.learning_rate)
    n = len(train_ds)
    if config.epochs and n == 0:
        raise ConfigurationError("cannot train on an empty dataset")
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        order = np.random.default_rng((config.seed, epoch)).permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            try:
                batch_loss, batch_correct = backward_and_step(
                    model, train_ds.images[idx], train_ds.labels[idx], adam_states
                )
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}, batch at {start}: {exc}") from exc
            loss_sum += batch_loss * len(idx)
            correct += batch_correct
        test_loss, test_acc = evaluate(model, test_ds)
        yield MetricsRecord(
            epoch=epoch,
            train_loss=loss_sum / n,
            train_accuracy=correct / n,
            test_loss=test_loss,
            test_accuracy=test_acc,
            wall_seconds=time.perf_counter() - started,
        )


# -- transfer learning ------------------------------------------------------


def pretrain_and_transfer(
    baseline: CnnBaseline,
    q: int = 8,
    n_layers: int = 2,
    entangler_gate: str = "cx",
    seed: int = 0,
) -> CnnQnnModel:
    """Copy the trained conv stack into a frozen-conv CnnQnnModel.

    Bridge, circuit parameters, and head are freshly initialized; the
    copied conv arrays are excluded from the trainable groups.
    """
    rng = np.random.default_rng(seed)
    conv_channels = baseline.conv_channels
    expected = _init_conv_stack(np.random.default_rng(0), conv_channels)
    for name, arr in expected.items():
        if baseline.params[name].shape != arr.shape:
            raise StructureError(
                f"pretrained {name} has shape {baseline.params[name].shape}, "
                f"expected {arr.shape}"
            )
    params = {name: baseline.params[name].copy() for name in expected}
    flat_dim = conv_stack_output_dim(baseline.image_hw, conv_channels)
    params["bridge_w"] = _uniform_weights(rng, (1 << q, flat_dim), flat_dim)
    params["bridge_b"] = _uniform_weights(rng, (1 << q,), flat_dim)
    template = build_composite_pqc(q, n_layers, entangler_gate)
    params["theta"] = _init_theta(rng, template.n_params)
    params["head_w"] = _uniform_weights(rng, (baseline.n_classes, q), q)
    params["head_b"] = _uniform_weights(rng, (baseline.n_classes,), q)
    return CnnQnnModel(
        params=params,
        template=template,
        n_classes=baseline.n_classes,
        image_hw=baseline.image_hw,
        conv_channels=conv_channels,
        n_layers=n_layers,
        entangler_gate=entangler_gate,
        freeze_conv=True,
    )


# -- barren-plateau diagnostic ----------------------------------------------


def theta_layer_groups(template: CircuitTemplate, n_layers: int) -> Dict[str, np.ndarray]:
    """Slot indices of each rotation block: layer_0..layer_{L} (final block last)."""
    per_block = template.n_params // (n_layers + 1)
    return {
        f"layer_{b}": np.arange(b * per_block, (b + 1) * per_block)
        for b in range(n_layers + 1)
    }


def grad_variance_diagnostic(
    model, images, labels, n_inits: int, seed: int = 0
) -> List[Dict[str, float]]:
    """Variance of the minibatch loss gradient across circuit initializations.

    Redraws the model's circuit parameters n_inits times (uniform on
    [0, 2 pi)), computes the batch-mean gradient of the loss with respect
    to them each time, and summarizes per rotation block: the mean absolute
    gradient entry and the mean elementwise variance across draws.
    """
    if n_inits < 20:
        raise ConfigurationError(f"need at least 20 initializations, got {n_inits}")
    rng = np.random.default_rng(seed)
    theta = model.theta
    saved = theta.copy()
    n_params = theta.shape[0]
    grads = np.zeros((n_inits, n_params))
    try:
        for i in range(n_inits):
            theta[:] = _init_theta(rng, n_params)
            total = np.zeros(n_params)
            for j in range(len(labels)):
                _, _, sample = model.sample_gradients(images[j], int(labels[j]))
                total += sample["theta"]
            grads[i] = total / len(labels)
    finally:
        theta[:] = saved
    rows = []
    for name, slots in theta_layer_groups(model.template, model.n_layers).items():
        block = grads[:, slots]
        rows.append(
            {
                "group": name,
                "mean_abs_grad": float(np.abs(block).mean()),
                "variance": float(block.var(axis=0).mean()),
            }
        )
    return rows


# -- serialization ----------------------------------------------------------

_FORMAT_VERSION = 1


def save_model(path, model) -> None:
    """Write a model to one .npz file with a JSON metadata record."""
    meta = {
        "format": _FORMAT_VERSION,
        "kind": model.kind,
        "n_classes": model.n_classes,
    }
    arrays: Dict[str, np.ndarray] = {}
    if isinstance(model, PcaQnnModel):
        meta.update(
            n_qubits=model.n_qubits,
            n_layers=model.n_layers,
            readout=model.readout,
            entangler_gate=model.entangler_gate,
        )
        arrays.update(
            pca_mean=model.pca.mean,
            pca_components=model.pca.components,
            feature_min=model.feature_min,
            feature_max=model.feature_max,
            theta=model.theta,
        )
        if model.readout == DENSE:
            arrays.update(readout_w=model.readout_w, readout_b=model.readout_b)
    elif isinstance(model, CnnQnnModel):
        meta.update(
            q=model.q,
            n_layers=model.n_layers,
            image_hw=model.image_hw,
            conv_channels=list(model.conv_channels),
            entangler_gate=model.entangler_gate,
            freeze_conv=model.freeze_conv,
            ansatz=model.ansatz,
        )
        arrays.update(model.params)
    elif isinstance(model, CnnBaseline):
        meta.update(
            image_hw=model.image_hw,
            conv_channels=list(model.conv_channels),
            bridge_dim=model.bridge_dim,
        )
        arrays.update(model.params)
    else:
        raise StructureError(f"cannot serialize {type(model).__name__}")
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)


def load_model(path):
    """Rebuild a model saved by save_model; rejects unknown kinds/versions."""
    try:
        blob = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot load model file {path}: {exc}") from exc
    meta = json.loads(str(blob["meta"]))
    if meta.get("format") != _FORMAT_VERSION:
        raise StructureError(
            f"model file format {meta.get('format')} unsupported "
            f"(expected {_FORMAT_VERSION})"
        )
    kind = meta.get("kind")
    if kind == "pca_qnn":
        template = build_baseline_pqc(
            meta["n_qubits"], meta["n_layers"], meta["entangler_gate"]
        )
        return PcaQnnModel(
            pca=PcaModel(mean=blob["pca_mean"], components=blob["pca_components"]),
            feature_min=blob["feature_min"],
            feature_max=blob["feature_max"],
            template=template,
            theta=blob["theta"].copy(),
            n_classes=meta["n_classes"],
            readout=meta["readout"],
            readout_w=blob["readout_w"].copy() if "readout_w" in blob else None,
            readout_b=blob["readout_b"].copy() if "readout_b" in blob else None,
            n_layers=meta["n_layers"],
            entangler_gate=meta["entangler_gate"],
        )
    if kind == "cnn_qnn":
        ansatz = meta["ansatz"]
        if ansatz not in _ANSATZ_BUILDERS:
            raise StructureError(f"unknown ansatz {ansatz!r} in {path}")
        template = _ANSATZ_BUILDERS[ansatz](
            meta["q"], meta["n_layers"], meta["entangler_gate"]
        )
        params = {name: blob[name].copy() for name in blob.files if name != "meta"}
        return CnnQnnModel(
            params=params,
            template=template,
            n_classes=meta["n_classes"],
            image_hw=meta["image_hw"],
            conv_channels=tuple(meta["conv_channels"]),
            n_layers=meta["n_layers"],
            entangler_gate=meta["entangler_gate"],
            freeze_conv=meta["freeze_conv"],
            ansatz=ansatz,
        )
    if kind == "cnn_baseline":
        params = {name: blob[name].copy() for name in blob.files if name != "meta"}
        return CnnBaseline(
            params=params,
            n_classes=meta["n_classes"],
            image_hw=meta["image_hw"],
            conv_channels=tuple(meta["conv_channels"]),
            bridge_dim=meta["bridge_dim"],
        )
    raise StructureError(f"unknown model kind {kind!r} in {path}")
