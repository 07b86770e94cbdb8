"""Command line interface: train, eval, gradvar, plot.

Exit codes: 0 success, 2 configuration problem, 3 dataset problem,
4 training abort.  Everything a run writes (metrics.csv, manifest.txt,
gradvar.csv, model files, SVG plots) is deterministic for a fixed config
except the wall_seconds column.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from . import __version__
from .config import (
    DATA_DIR_ENV,
    ExperimentConfig,
    dataset_paths,
    fmt_float,
    manifest_text,
    parse_config,
    resolve_data_dir,
)
from .data import Dataset, filter_classes, load_idx_pair, subset_balanced
from .errors import (
    ConfigurationError,
    DataError,
    EncodingError,
    StructureError,
    TrainingError,
)
from .models import (
    CnnBaseline,
    CnnQnnModel,
    PcaQnnModel,
    TrainConfig,
    evaluate,
    grad_variance_diagnostic,
    load_model,
    pretrain_and_transfer,
    save_model,
    train_model,
)

METRICS_HEADER = "epoch,train_loss,train_acc,test_loss,test_acc,wall_seconds"
GRADVAR_HEADER = "setting,group,mean_abs_grad,variance"
CONTROL_GROUP = "control_zero_readout"


# -- dataset plumbing --------------------------------------------------------


def _load_split(
    config: ExperimentConfig,
    data_dir: Path,
    class_list: Tuple[int, ...],
    want_train: bool = True,
) -> Tuple[Optional[Dataset], Dataset]:
    paths = dataset_paths(data_dir, config.dataset)
    train = None
    if want_train:
        train = load_idx_pair(paths[0], paths[1], source_name=f"{config.dataset}/train")
        train = filter_classes(train, class_list)
        if config.train_per_class:
            train = subset_balanced(train, config.train_per_class, seed=config.seed)
    test = load_idx_pair(paths[2], paths[3], source_name=f"{config.dataset}/test")
    test = filter_classes(test, class_list)
    if config.test_per_class:
        test = subset_balanced(test, config.test_per_class, seed=config.seed + 1)
    return train, test


def _train_config(config: ExperimentConfig, epochs: Optional[int] = None) -> TrainConfig:
    return TrainConfig(
        epochs=config.epochs if epochs is None else epochs,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        seed=config.seed,
        class_list=config.class_list,
    )


# -- model construction ------------------------------------------------------


def _image_hw(dataset: Dataset) -> int:
    return int(dataset.images.shape[2])


def _build_model(config: ExperimentConfig, train_ds: Dataset):
    """Build the configured model from a resolved config and its training split."""
    k = config.n_classes
    hw = _image_hw(train_ds)
    if config.model_kind == "pca_qnn":
        return PcaQnnModel.initialize(
            train_ds.images,
            n_qubits=config.pca_dim,
            n_classes=k,
            n_layers=config.n_layers,
            readout=config.readout,
            entangler_gate=config.entangler,
            seed=config.seed,
        )
    if config.model_kind == "cnn_qnn":
        return CnnQnnModel.initialize(
            n_classes=k,
            image_hw=hw,
            q=config.q,
            n_layers=config.n_layers,
            entangler_gate=config.entangler,
            seed=config.seed,
            ansatz=config.ansatz,
        )
    if config.model_kind == "cnn_baseline":
        return CnnBaseline.initialize(
            n_classes=k,
            image_hw=hw,
            bridge_dim=config.bridge_dim,
            seed=config.seed,
        )
    raise ConfigurationError(f"cannot build model kind {config.model_kind!r}")


# -- metrics files -----------------------------------------------------------


def _record_fields(record) -> str:
    return ",".join(
        [
            str(record.epoch),
            fmt_float(record.train_loss),
            fmt_float(record.train_accuracy),
            fmt_float(record.test_loss),
            fmt_float(record.test_accuracy),
            fmt_float(record.wall_seconds),
        ]
    )


def _run_training(model, train_ds, test_ds, tconf: TrainConfig, csv_path: Path) -> None:
    """Train while appending one metrics row per finished epoch."""
    with open(csv_path, "w") as fh:
        fh.write(METRICS_HEADER + "\n")
        fh.flush()
        for record in train_model(model, train_ds, test_ds, tconf):
            fh.write(_record_fields(record) + "\n")
            fh.flush()
            print(
                f"epoch {record.epoch}/{tconf.epochs} "
                f"train_loss={fmt_float(record.train_loss)} "
                f"test_acc={fmt_float(record.test_accuracy)}"
            )


def _read_metrics(path: Path) -> List[dict]:
    """Parse a metrics.csv, reporting the offending line on any mismatch."""
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not lines or lines[0] != METRICS_HEADER:
        raise DataError(f"{path}:1: expected header {METRICS_HEADER!r}")
    names = METRICS_HEADER.split(",")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(names):
            raise DataError(
                f"{path}:{lineno}: expected {len(names)} fields, got {len(parts)}"
            )
        try:
            rows.append({name: float(val) for name, val in zip(names, parts)})
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric field in {line!r}")
    return rows


# -- subcommands -------------------------------------------------------------


def cmd_train(args) -> int:
    config = parse_config(args.config)
    data_dir = resolve_data_dir(config, args.data_dir)
    config = dataclasses.replace(config, data_dir=str(data_dir))
    train_ds, test_ds = _load_split(config, data_dir, config.class_list)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    relabel = train_ds.relabel_map or {c: c for c in config.class_list}
    (out / "manifest.txt").write_text(manifest_text(config, relabel, __version__))

    if config.model_kind == "cnn_qnn_transfer":
        baseline = CnnBaseline.initialize(
            n_classes=config.n_classes,
            image_hw=_image_hw(train_ds),
            bridge_dim=config.bridge_dim,
            seed=config.seed,
        )
        pre_epochs = (
            config.epochs if config.pretrain_epochs is None else config.pretrain_epochs
        )
        print(f"pretraining classical baseline for {pre_epochs} epochs")
        _run_training(
            baseline,
            train_ds,
            test_ds,
            _train_config(config, epochs=pre_epochs),
            out / "pretrain_metrics.csv",
        )
        model = pretrain_and_transfer(
            baseline,
            q=config.q,
            n_layers=config.n_layers,
            entangler_gate=config.entangler,
            seed=config.seed + 1,
        )
    else:
        model = _build_model(config, train_ds)

    _run_training(model, train_ds, test_ds, _train_config(config), out / "metrics.csv")
    save_model(out / "final_model.npz", model)
    print(f"wrote {out / 'metrics.csv'}")
    return 0


def cmd_eval(args) -> int:
    config = parse_config(args.config)
    model = load_model(args.model)
    expected_kind = (
        "cnn_qnn" if config.model_kind == "cnn_qnn_transfer" else config.model_kind
    )
    if model.kind != expected_kind:
        raise ConfigurationError(
            f"model file holds a {model.kind} model but the config trains "
            f"{config.model_kind}"
        )
    if model.n_classes != config.n_classes:
        raise ConfigurationError(
            f"model predicts {model.n_classes} classes but the config lists "
            f"{config.n_classes}"
        )
    data_dir = resolve_data_dir(config, args.data_dir)
    _, test_ds = _load_split(config, data_dir, config.class_list, want_train=False)
    loss, acc = evaluate(model, test_ds)
    print(f"test_loss={fmt_float(loss)} test_accuracy={fmt_float(acc)}")
    return 0


def _zero_readout_control(model):
    """Clone with the readout weights nulled; circuit gradients must vanish."""
    if isinstance(model, PcaQnnModel):
        n_qubits = model.n_qubits
        return PcaQnnModel(
            pca=model.pca,
            feature_min=model.feature_min,
            feature_max=model.feature_max,
            template=model.template,
            theta=model.theta.copy(),
            n_classes=model.n_classes,
            readout="dense",
            readout_w=np.zeros((model.n_classes, n_qubits)),
            readout_b=np.zeros(model.n_classes),
            n_layers=model.n_layers,
            entangler_gate=model.entangler_gate,
        )
    params = {name: arr.copy() for name, arr in model.params.items()}
    params["head_w"][:] = 0.0
    params["head_b"][:] = 0.0
    return CnnQnnModel(
        params=params,
        template=model.template,
        n_classes=model.n_classes,
        image_hw=model.image_hw,
        conv_channels=model.conv_channels,
        n_layers=model.n_layers,
        entangler_gate=model.entangler_gate,
        freeze_conv=model.freeze_conv,
        ansatz=model.ansatz,
    )


def cmd_gradvar(args) -> int:
    config = parse_config(args.config)
    if config.model_kind not in ("pca_qnn", "cnn_qnn"):
        raise ConfigurationError(
            f"gradient variance diagnostic needs a circuit model, got "
            f"{config.model_kind}"
        )
    data_dir = resolve_data_dir(config, args.data_dir)
    settings = config.gradvar_class_lists or (config.class_list,)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [GRADVAR_HEADER]
    for class_list in settings:
        label = "-".join(map(str, class_list))
        setting_config = dataclasses.replace(
            config, class_list=class_list, gradvar_class_lists=()
        )
        train_ds, _ = _load_split(setting_config, data_dir, class_list)
        model = _build_model(setting_config, train_ds)
        take = min(config.batch_size, len(train_ds))
        images = train_ds.images[:take]
        labels = train_ds.labels[:take]
        rows = grad_variance_diagnostic(
            model, images, labels, n_inits=args.inits, seed=config.seed
        )
        control = grad_variance_diagnostic(
            _zero_readout_control(model), images, labels, n_inits=args.inits,
            seed=config.seed,
        )
        for row in rows:
            lines.append(
                f"{label},{row['group']},{fmt_float(row['mean_abs_grad'])},"
                f"{fmt_float(row['variance'])}"
            )
        # rotation blocks are equally sized, so the plain mean is the slot mean
        lines.append(
            f"{label},{CONTROL_GROUP},"
            f"{fmt_float(np.mean([r['mean_abs_grad'] for r in control]))},"
            f"{fmt_float(np.mean([r['variance'] for r in control]))}"
        )
        print(f"classes {label}: {len(rows)} parameter groups summarized")
    (out / "gradvar.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'gradvar.csv'}")
    return 0


def _plot_series(axis, rows, key_a, key_b, prefix):
    epochs = [row["epoch"] for row in rows]
    style = {} if prefix == "" else {"linestyle": "--"}
    axis.plot(epochs, [r[key_a] for r in rows], label=f"{prefix}train", **style)
    axis.plot(epochs, [r[key_b] for r in rows], label=f"{prefix}test", **style)


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "hqnn"
    import matplotlib.pyplot as plt

    path = Path(args.metrics)
    rows = _read_metrics(path)
    compare = _read_metrics(Path(args.compare)) if args.compare else None
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    _plot_series(ax_loss, rows, "train_loss", "test_loss", "")
    _plot_series(ax_acc, rows, "train_acc", "test_acc", "")
    if compare is not None:
        _plot_series(ax_loss, compare, "train_loss", "test_loss", "compare ")
        _plot_series(ax_acc, compare, "train_acc", "test_acc", "compare ")
    for axis, name in ((ax_loss, "loss"), (ax_acc, "accuracy")):
        axis.set_xlabel("epoch")
        axis.set_ylabel(name)
        axis.legend(loc="best")
    fig.tight_layout()
    out = path.with_suffix(".svg")
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    print(f"wrote {out}")
    return 0


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hqnn",
        description="Hybrid quantum-classical image classification experiments.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    data_dir_help = f"dataset root (fallback: config data_dir, then ${DATA_DIR_ENV})"

    p_train = sub.add_parser("train", help="train a model from a config file")
    p_train.add_argument("config", help="key=value config file")
    p_train.add_argument("--data-dir", default=None, help=data_dir_help)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a saved model on the test split")
    p_eval.add_argument("model", help="model .npz written by train")
    p_eval.add_argument("config", help="config naming dataset and classes")
    p_eval.add_argument("--data-dir", default=None, help=data_dir_help)
    p_eval.set_defaults(func=cmd_eval)

    p_gv = sub.add_parser(
        "gradvar", help="gradient variance across circuit initializations"
    )
    p_gv.add_argument("config", help="key=value config file")
    p_gv.add_argument("--inits", type=int, default=20, help="initializations (>= 20)")
    p_gv.add_argument("--data-dir", default=None, help=data_dir_help)
    p_gv.set_defaults(func=cmd_gradvar)

    p_plot = sub.add_parser("plot", help="render metrics.csv to a deterministic SVG")
    p_plot.add_argument("metrics", help="metrics.csv from a training run")
    p_plot.add_argument("--compare", default=None, help="second metrics.csv to overlay")
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, StructureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (TrainingError, EncodingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
