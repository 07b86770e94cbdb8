"""Experiment configuration: key=value files, resolution, manifests.

Config files are plain text, one ``key = value`` pair per line, with
``#`` comments and blank lines ignored.  Unknown keys are hard errors so
a typo cannot silently change an experiment.  A training run writes a
manifest in the same format holding every resolved value plus two
informational keys (``relabel_map``, ``library_version``); manifests
re-parse as configs, which is how runs are reproduced.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

from .errors import ConfigurationError

MODEL_KINDS = ("pca_qnn", "cnn_qnn", "cnn_qnn_transfer", "cnn_baseline")
DATASETS = ("mnist", "fashion_mnist")
DATA_DIR_ENV = "HQNN_DATA_DIR"

# informational manifest keys: accepted on parse, never interpreted
INFO_KEYS = ("relabel_map", "library_version")


@dataclass(frozen=True)
class ExperimentConfig:
    model_kind: str
    dataset: str
    epochs: int
    output_dir: str = "."
    data_dir: Optional[str] = None
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0
    train_per_class: int = 0  # 0 = full split
    test_per_class: int = 0
    class_list: Tuple[int, ...] = tuple(range(10))
    n_layers: int = 2
    entangler: str = "cx"
    ansatz: str = "composite"
    pca_dim: int = 8
    readout: str = "direct"
    q: int = 8
    bridge_dim: int = 256
    pretrain_epochs: Optional[int] = None
    gradvar_class_lists: Tuple[Tuple[int, ...], ...] = ()
    info: Dict[str, str] = field(default_factory=dict, compare=False)

    @property
    def n_classes(self) -> int:
        return len(self.class_list)


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"{key}: expected an integer, got {raw!r}")


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigurationError(f"{key}: expected a number, got {raw!r}")


def _parse_class_list(key: str, raw: str) -> Tuple[int, ...]:
    try:
        values = tuple(int(tok) for tok in raw.split(",") if tok.strip() != "")
    except ValueError:
        raise ConfigurationError(f"{key}: expected comma-separated integers, got {raw!r}")
    if not values:
        raise ConfigurationError(f"{key}: empty class list")
    return values


def _parse_choice(key: str, raw: str, choices) -> str:
    if raw not in choices:
        raise ConfigurationError(f"{key}: must be one of {', '.join(choices)}, got {raw!r}")
    return raw


_KEY_PARSERS = {
    "model_kind": lambda raw: _parse_choice("model_kind", raw, MODEL_KINDS),
    "dataset": lambda raw: _parse_choice("dataset", raw, DATASETS),
    "epochs": lambda raw: _parse_int("epochs", raw),
    "output_dir": lambda raw: raw,
    "data_dir": lambda raw: raw,
    "learning_rate": lambda raw: _parse_float("learning_rate", raw),
    "batch_size": lambda raw: _parse_int("batch_size", raw),
    "seed": lambda raw: _parse_int("seed", raw),
    "train_per_class": lambda raw: _parse_int("train_per_class", raw),
    "test_per_class": lambda raw: _parse_int("test_per_class", raw),
    "class_list": lambda raw: _parse_class_list("class_list", raw),
    "n_layers": lambda raw: _parse_int("n_layers", raw),
    "entangler": lambda raw: _parse_choice("entangler", raw, ("cx", "cz")),
    "ansatz": lambda raw: _parse_choice("ansatz", raw, ("composite", "baseline")),
    "pca_dim": lambda raw: _parse_int("pca_dim", raw),
    "readout": lambda raw: _parse_choice("readout", raw, ("direct", "dense")),
    "q": lambda raw: _parse_int("q", raw),
    "bridge_dim": lambda raw: _parse_int("bridge_dim", raw),
    "pretrain_epochs": lambda raw: _parse_int("pretrain_epochs", raw),
    "gradvar_class_lists": lambda raw: tuple(
        _parse_class_list("gradvar_class_lists", part) for part in raw.split(";")
    ),
}

# keys whose non-default presence is only allowed for certain model kinds
_KIND_ONLY_KEYS = {
    "pca_dim": ("pca_qnn",),
    "readout": ("pca_qnn",),
    "gradvar_class_lists": ("pca_qnn",),
    "q": ("cnn_qnn", "cnn_qnn_transfer"),
    "ansatz": ("cnn_qnn",),
    "bridge_dim": ("cnn_baseline", "cnn_qnn_transfer"),
    "pretrain_epochs": ("cnn_qnn_transfer",),
}

_REQUIRED_KEYS = ("model_kind", "dataset", "epochs")


def parse_config_text(text: str, origin: str = "<config>") -> ExperimentConfig:
    values: Dict[str, object] = {}
    info: Dict[str, str] = {}
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(
                f"{origin}:{lineno}: expected key = value, got {stripped!r}"
            )
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key in seen:
            raise ConfigurationError(f"{origin}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        if key in INFO_KEYS:
            info[key] = raw
            continue
        if key not in _KEY_PARSERS:
            raise ConfigurationError(f"{origin}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _KEY_PARSERS[key](raw)
        except ConfigurationError as exc:
            raise ConfigurationError(f"{origin}:{lineno}: {exc}") from exc
    for key in _REQUIRED_KEYS:
        if key not in values:
            raise ConfigurationError(f"{origin}: missing required key {key!r}")
    kind = values["model_kind"]
    for key, kinds in _KIND_ONLY_KEYS.items():
        if key in values and kind not in kinds:
            raise ConfigurationError(
                f"{origin}: key {key!r} applies to {', '.join(kinds)}, not {kind}"
            )
    config = ExperimentConfig(info=info, **values)
    _validate(config, origin)
    return config


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, origin=str(path))


def _validate(config: ExperimentConfig, origin: str) -> None:
    def bad(msg):
        raise ConfigurationError(f"{origin}: {msg}")

    if config.epochs < 0:
        bad(f"epochs must be >= 0, got {config.epochs}")
    if config.batch_size < 1:
        bad(f"batch_size must be positive, got {config.batch_size}")
    if config.learning_rate < 0:
        bad(f"learning_rate must be >= 0, got {config.learning_rate}")
    if config.train_per_class < 0 or config.test_per_class < 0:
        bad("per-class subset counts must be >= 0")
    classes = config.class_list
    if len(set(classes)) != len(classes) or any(not 0 <= c <= 9 for c in classes):
        bad(f"class_list must be distinct values in [0, 9], got {list(classes)}")
    if config.n_layers < 1:
        bad(f"n_layers must be >= 1, got {config.n_layers}")
    if config.model_kind == "pca_qnn":
        if config.pca_dim < 2:
            bad(f"pca_dim must be >= 2, got {config.pca_dim}")
        if config.readout == "direct" and config.n_classes > config.pca_dim:
            bad(
                f"direct readout of {config.n_classes} classes needs "
                f"pca_dim >= {config.n_classes}, got {config.pca_dim}"
            )
        for setting in config.gradvar_class_lists:
            if len(set(setting)) != len(setting) or any(
                not 0 <= c <= 9 for c in setting
            ):
                bad(f"gradvar_class_lists entry invalid: {list(setting)}")
    if config.model_kind in ("cnn_qnn", "cnn_qnn_transfer") and not 2 <= config.q <= 10:
        bad(f"q must be in [2, 10], got {config.q}")
    if config.model_kind in ("cnn_baseline", "cnn_qnn_transfer") and config.bridge_dim < 1:
        bad(f"bridge_dim must be positive, got {config.bridge_dim}")
    if config.pretrain_epochs is not None and config.pretrain_epochs < 0:
        bad(f"pretrain_epochs must be >= 0, got {config.pretrain_epochs}")


def resolve_data_dir(config: ExperimentConfig, override: Optional[str] = None) -> Path:
    """CLI flag beats config key beats HQNN_DATA_DIR; all else is an error."""
    for candidate in (override, config.data_dir, os.environ.get(DATA_DIR_ENV)):
        if candidate:
            return Path(candidate)
    raise ConfigurationError(
        f"no dataset directory: pass --data-dir, set data_dir in the config, "
        f"or export {DATA_DIR_ENV}"
    )


def dataset_paths(data_dir: Path, dataset: str):
    """(train_images, train_labels, test_images, test_labels), .gz fallback."""
    base = data_dir / dataset
    names = (
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    )
    out = []
    for name in names:
        plain = base / name
        gz = base / (name + ".gz")
        out.append(plain if plain.exists() or not gz.exists() else gz)
    return tuple(out)


def fmt_float(value: float) -> str:
    """The one float formatter shared by metrics.csv and eval output."""
    return format(float(value), ".12g")


def manifest_text(config: ExperimentConfig, relabel_map: Dict[int, int], version: str) -> str:
    """Resolved config as a re-parseable key=value document."""
    lines = ["# resolved experiment manifest"]
    lines.append(f"model_kind = {config.model_kind}")
    lines.append(f"dataset = {config.dataset}")
    if config.data_dir:
        lines.append(f"data_dir = {config.data_dir}")
    lines.append(f"output_dir = {config.output_dir}")
    lines.append(f"epochs = {config.epochs}")
    lines.append(f"learning_rate = {fmt_float(config.learning_rate)}")
    lines.append(f"batch_size = {config.batch_size}")
    lines.append(f"seed = {config.seed}")
    lines.append(f"train_per_class = {config.train_per_class}")
    lines.append(f"test_per_class = {config.test_per_class}")
    lines.append(f"class_list = {','.join(map(str, config.class_list))}")
    lines.append(f"n_layers = {config.n_layers}")
    lines.append(f"entangler = {config.entangler}")
    if config.model_kind == "pca_qnn":
        lines.append(f"pca_dim = {config.pca_dim}")
        lines.append(f"readout = {config.readout}")
        if config.gradvar_class_lists:
            joined = ";".join(
                ",".join(map(str, setting)) for setting in config.gradvar_class_lists
            )
            lines.append(f"gradvar_class_lists = {joined}")
    if config.model_kind in ("cnn_qnn", "cnn_qnn_transfer"):
        lines.append(f"q = {config.q}")
    if config.model_kind == "cnn_qnn":
        lines.append(f"ansatz = {config.ansatz}")
    if config.model_kind in ("cnn_baseline", "cnn_qnn_transfer"):
        lines.append(f"bridge_dim = {config.bridge_dim}")
    if config.model_kind == "cnn_qnn_transfer" and config.pretrain_epochs is not None:
        lines.append(f"pretrain_epochs = {config.pretrain_epochs}")
    relabel = ",".join(f"{orig}:{new}" for orig, new in sorted(relabel_map.items()))
    lines.append(f"relabel_map = {relabel}")
    lines.append(f"library_version = {version}")
    return "\n".join(lines) + "\n"
