"""On-disk formats: datasets, transition matrices, pair lists, IDX images.

Dataset text format::

    n dim C
    x_11 x_12 ... x_1dim label_1
    ...

Features are written with 17 significant digits, so values round-trip
exactly. Labels are 1-based.

Matrix text format: first line ``C``, then ``C`` whitespace-separated rows.
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import FormatError, InputError
from .noise import LabeledDataset, SimilarityPairBatch, check_transition

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
FLOAT_FMT = "%.17g"


def _require(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return path


def write_dataset(data: LabeledDataset, path) -> Path:
    path = Path(path)
    body = np.column_stack([data.X, data.y.astype(np.float64)])
    with open(path, "w") as fh:
        fh.write(f"{len(data)} {data.dim} {data.num_classes}\n")
        fmt = [FLOAT_FMT] * data.dim + ["%d"]
        np.savetxt(fh, body, fmt=fmt)
    return path


def read_dataset(path, split: str = "train") -> LabeledDataset:
    path = _require(path)
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise FormatError("header must be 'n dim C'", offset=0, path=path)
        try:
            n, dim, C = (int(v) for v in header)
        except ValueError as exc:
            raise FormatError("non-integer header", offset=0, path=path) from exc
        try:
            body = np.loadtxt(fh, ndmin=2)
        except ValueError as exc:
            raise FormatError(f"malformed row ({exc})", path=path) from exc
    if body.shape != (n, dim + 1):
        raise FormatError(f"expected {n} rows of {dim + 1} columns, got {body.shape}",
                          path=path)
    labels = body[:, -1]
    if np.any(labels != np.round(labels)):
        raise FormatError("labels must be integers", path=path)
    return LabeledDataset(body[:, :-1], labels.astype(np.int64), C, split)


def write_matrix(T, path) -> Path:
    T = np.asarray(T, dtype=np.float64)
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"{T.shape[0]}\n")
        np.savetxt(fh, T, fmt=FLOAT_FMT)
    return path


def read_matrix(path, check: bool = True) -> np.ndarray:
    path = _require(path)
    with open(path) as fh:
        first = fh.readline().strip()
        try:
            C = int(first)
        except ValueError as exc:
            raise FormatError("first line must be the class count", offset=0,
                              path=path) from exc
        T = np.loadtxt(fh, ndmin=2)
    if T.shape != (C, C):
        raise FormatError(f"expected a {C}x{C} matrix, got {T.shape}", path=path)
    return check_transition(T) if check else T


def write_heatmap_csv(T, path) -> Path:
    """Wide CSV: a header of column classes, then one row per class."""
    T = np.asarray(T)
    path = Path(path)
    C = T.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class"] + [str(j + 1) for j in range(C)])
        for i in range(C):
            w.writerow([str(i + 1)] + [repr(float(v)) for v in T[i]])
    return path


def write_pairs(pairs: SimilarityPairBatch, path) -> Path:
    """CSV with columns ``first,second,sim`` (0-based example indices)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["first", "second", "sim"])
        w.writerows(zip(pairs.first.tolist(), pairs.second.tolist(), pairs.sim.tolist()))
    return path


def read_pairs(path) -> SimilarityPairBatch:
    path = _require(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if head != ["first", "second", "sim"]:
            raise FormatError("pair file must start with 'first,second,sim'", offset=0,
                              path=path)
        rows = [tuple(int(v) for v in r) for r in reader if r]
    arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
    return SimilarityPairBatch(arr[:, 0], arr[:, 1], arr[:, 2], source=str(path))


def write_curves_csv(curves, path) -> Path:
    path = Path(path)
    cols = ["stage", "epoch", "train_loss", "val_loss", "val_pair_error", "lr"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in curves:
            w.writerow({k: (repr(row[k]) if isinstance(row[k], float) else row[k])
                        for k in cols})
    return path


def read_curves_csv(path):
    path = _require(path)
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append({"stage": row["stage"], "epoch": int(row["epoch"]),
                        "train_loss": float(row["train_loss"]),
                        "val_loss": float(row["val_loss"]),
                        "val_pair_error": float(row["val_pair_error"]),
                        "lr": float(row["lr"])})
    return out


# -- IDX ------------------------------------------------------------------------

def _read_idx(path, magic: int, ndim: int):
    path = _require(path)
    raw = path.read_bytes()
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise FormatError("truncated header", offset=len(raw), path=path)
    (found,) = struct.unpack(">i", raw[:4])
    if found != magic:
        raise FormatError(f"magic number 0x{found:08x}, expected 0x{magic:08x}",
                          offset=0, path=path)
    dims = struct.unpack(f">{ndim}i", raw[4:head])
    size = int(np.prod(dims))
    if len(raw) < head + size:
        raise FormatError(f"payload holds {len(raw) - head} bytes, header promises {size}",
                          offset=len(raw), path=path)
    data = np.frombuffer(raw, dtype=np.uint8, count=size, offset=head)
    return data.reshape(dims)


def load_idx_images(images_path, labels_path, limit: Optional[int] = None,
                    normalize: bool = True, num_classes: int = 10,
                    split: str = "train") -> LabeledDataset:
    """Read an IDX image/label file pair (e.g. MNIST) as a flat dataset.

    Pixels are flattened row-major and scaled to [0, 1] when ``normalize``.
    Labels are shifted from ``0..C-1`` to ``1..C``.
    """
    if limit is not None and limit < 1:
        raise InputError("limit must be a positive integer")
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels",
                          offset=4, path=labels_path)
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    X = images.reshape(images.shape[0], -1).astype(np.float64)
    if normalize:
        X /= 255.0
    return LabeledDataset(X, labels.astype(np.int64) + 1, num_classes, split)
