"""Image dataset ingestion: IDX files, class filtering, balanced subsets.

The IDX layout is a 4-byte big-endian magic (0x00000803 for unsigned-byte
image tensors, 0x00000801 for label vectors), big-endian dimension sizes,
then raw bytes.  Gzip-compressed files are detected by their leading magic
bytes and decompressed transparently.  Pixels are scaled to [0, 1].
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DataError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Images (m, 1, H, W) in [0,1] with integer class labels."""

    images: np.ndarray
    labels: np.ndarray
    source_name: str
    relabel_map: Optional[Dict[int, int]] = None

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[1] != 1:
            raise DataError(f"images must be (m,1,H,W), got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise DataError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise DataError("pixel values outside [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 9):
            raise DataError("labels outside [0, 9]")

    def __len__(self) -> int:
        return self.images.shape[0]


def _read_maybe_gzip(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if blob[:2] == b"\x1f\x8b":
        try:
            blob = gzip.decompress(blob)
        except OSError as exc:
            raise DataError(f"{path}: corrupt gzip stream") from exc
    return blob


def _parse_header(blob: bytes, path, want_magic: int, n_dims: int):
    header_len = 4 * (1 + n_dims)
    if len(blob) < header_len:
        raise DataError(f"{path}: truncated header ({len(blob)} bytes)")
    fields = struct.unpack(f">{1 + n_dims}I", blob[:header_len])
    if fields[0] != want_magic:
        raise DataError(
            f"{path}: magic field 0x{fields[0]:08x}, expected 0x{want_magic:08x}"
        )
    return fields[1:], blob[header_len:]


def load_idx_pair(images_path, labels_path, source_name: Optional[str] = None) -> Dataset:
    """Load an images/labels IDX file pair into one cross-checked Dataset."""
    img_blob = _read_maybe_gzip(images_path)
    (count, rows, cols), img_bytes = _parse_header(img_blob, images_path, IMAGE_MAGIC, 3)
    if len(img_bytes) != count * rows * cols:
        raise DataError(
            f"{images_path}: payload is {len(img_bytes)} bytes, header "
            f"declares {count}x{rows}x{cols}"
        )
    lab_blob = _read_maybe_gzip(labels_path)
    (lab_count,), lab_bytes = _parse_header(lab_blob, labels_path, LABEL_MAGIC, 1)
    if len(lab_bytes) != lab_count:
        raise DataError(
            f"{labels_path}: payload is {len(lab_bytes)} bytes, header declares {lab_count}"
        )
    if count != lab_count:
        raise DataError(
            f"{images_path} holds {count} images but {labels_path} holds "
            f"{lab_count} labels"
        )
    images = (
        np.frombuffer(img_bytes, dtype=np.uint8)
        .reshape(count, 1, rows, cols)
        .astype(np.float32)
        / np.float32(255.0)
    )
    labels = np.frombuffer(lab_bytes, dtype=np.uint8).astype(np.int64)
    return Dataset(
        images=images,
        labels=labels,
        source_name=source_name or str(images_path),
    )


def filter_classes(dataset: Dataset, class_list: Sequence[int]) -> Dataset:
    """Keep only the listed classes, relabeled to 0..k-1 by ascending original."""
    classes = sorted(set(int(c) for c in class_list))
    if len(classes) != len(class_list):
        raise ConfigurationError(f"class list has duplicates: {list(class_list)}")
    if not classes or classes[0] < 0 or classes[-1] > 9:
        raise ConfigurationError(f"classes must be distinct values in [0, 9], got {classes}")
    relabel = {orig: new for new, orig in enumerate(classes)}
    mask = np.isin(dataset.labels, classes)
    if not mask.any():
        raise ConfigurationError(
            f"no samples with classes {classes} in {dataset.source_name}"
        )
    new_labels = np.array([relabel[int(c)] for c in dataset.labels[mask]], dtype=np.int64)
    return Dataset(
        images=dataset.images[mask],
        labels=new_labels,
        source_name=dataset.source_name,
        relabel_map=relabel,
    )


def subset_balanced(dataset: Dataset, per_class: int, seed: int) -> Dataset:
    """Exactly per_class samples of each present class, by seeded shuffle."""
    if per_class < 1:
        raise ConfigurationError(f"per_class must be positive, got {per_class}")
    rng = np.random.default_rng(seed)
    picks = []
    for c in np.unique(dataset.labels):
        idx = np.flatnonzero(dataset.labels == c)
        if idx.shape[0] < per_class:
            raise ConfigurationError(
                f"class {int(c)} has only {idx.shape[0]} samples, need {per_class}"
            )
        picks.append(rng.permutation(idx)[:per_class])
    chosen = np.concatenate(picks)
    return Dataset(
        images=dataset.images[chosen],
        labels=dataset.labels[chosen],
        source_name=dataset.source_name,
        relabel_map=dataset.relabel_map,
    )
