"""Transition matrices, class-label corruption and similarity-pair generation.

Class labels are 1-based throughout (``1..C``), matching the on-disk
dataset format. Transition matrices are plain ``(C, C)`` float arrays with
``T[i, j] = P(noisy = j+1 | clean = i+1)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import InputError

ROW_SUM_TOL = 1e-10
SPLITS = ("train", "validation", "test")


def check_transition(T, tol: float = ROW_SUM_TOL) -> np.ndarray:
    """Validate that ``T`` is square and row-stochastic; return it as float64."""
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] < 1:
        raise InputError(f"transition matrix must be square, got shape {T.shape}")
    if not np.all(np.isfinite(T)) or T.min() < 0.0 or T.max() > 1.0:
        raise InputError("transition matrix entries must lie in [0, 1]")
    if np.max(np.abs(T.sum(axis=1) - 1.0)) > tol:
        raise InputError("transition matrix rows must sum to 1")
    return T


def symmetric_transition(num_classes: int, rho: float) -> np.ndarray:
    """Noise-rho matrix: ``1 - rho`` on the diagonal, ``rho / (C - 1)`` elsewhere."""
    C = int(num_classes)
    if C < 2:
        raise InputError("symmetric noise needs at least two classes")
    if not 0.0 <= rho < 1.0:
        raise InputError(f"noise rate must lie in [0, 1), got {rho}")
    T = np.full((C, C), rho / (C - 1))
    np.fill_diagonal(T, 1.0 - rho)
    return T


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] < 1:
            raise InputError("dataset needs a non-empty 2-D feature matrix")
        if self.y.shape != (self.X.shape[0],):
            raise InputError("one label per feature row is required")
        if self.split not in SPLITS:
            raise InputError(f"unknown split tag {self.split!r}")
        if self.y.min() < 1 or self.y.max() > self.num_classes:
            raise InputError(f"labels must lie in 1..{self.num_classes}")
        if not np.all(np.isfinite(self.X)):
            raise InputError("features must be finite")

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx, split: Optional[str] = None) -> "LabeledDataset":
        return LabeledDataset(self.X[idx], self.y[idx], self.num_classes,
                              split or self.split)


@dataclass
class SimilarityPairBatch:
    """Unordered pairs ``(first[k], second[k])`` with noisy similarity ``sim[k]``.

    ``noisy_labels`` is kept for diagnostics only and never read by training.
    """
    first: np.ndarray
    second: np.ndarray
    sim: np.ndarray
    source: str = ""
    noisy_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.first = np.asarray(self.first, dtype=np.int64)
        self.second = np.asarray(self.second, dtype=np.int64)
        self.sim = np.asarray(self.sim, dtype=np.int8)
        if not (self.first.shape == self.second.shape == self.sim.shape) \
                or self.first.ndim != 1:
            raise InputError("pair arrays must be 1-D and of equal length")
        if np.any(self.first == self.second):
            raise InputError("a pair may not join an example with itself")
        if self.sim.size and (self.sim.min() < 0 or self.sim.max() > 1):
            raise InputError("similarity labels must be 0 or 1")
        if self.noisy_labels is not None:
            lab = np.asarray(self.noisy_labels)
            expect = lab[self.first] == lab[self.second]
            if np.any(expect != self.sim.astype(bool)):
                raise InputError("similarity labels disagree with retained labels")

    def __len__(self):
        return self.sim.size

    def positive_fraction(self) -> float:
        return float(self.sim.mean()) if len(self) else 0.0

    def without_labels(self) -> "SimilarityPairBatch":
        return SimilarityPairBatch(self.first, self.second, self.sim, self.source)


def corrupt_labels(y, T, seed) -> np.ndarray:
    """Draw each noisy label independently from row ``y_i`` of ``T``."""
    T = check_transition(T)
    y = np.asarray(y, dtype=np.int64)
    C = T.shape[0]
    if y.size and (y.min() < 1 or y.max() > C):
        raise InputError(f"labels must lie in 1..{C}")
    rng = np.random.default_rng(seed)
    u = rng.random(y.size)
    cdf = np.cumsum(T, axis=1)
    cdf[:, -1] = 1.0
    rows = cdf[y - 1]
    # first column whose cumulative mass exceeds u; zero-probability columns are never hit
    noisy = (u[:, None] >= rows).sum(axis=1)
    return noisy.astype(np.int64) + 1


def _decode_pairs(lin, n):
    """Map linear indices over the strict upper triangle (row-major) to (i, j)."""
    lin = np.asarray(lin, dtype=np.int64)
    rows = np.arange(n, dtype=np.int64)
    offsets = rows * n - rows * (rows + 1) // 2
    i = np.searchsorted(offsets, lin, side="right") - 1
    j = lin - offsets[i] + i + 1
    return i, j


def all_pairs(n: int):
    """Index arrays for all ``n(n-1)/2`` unordered pairs, ``i < j``."""
    i, j = np.triu_indices(n, k=1)
    return i.astype(np.int64), j.astype(np.int64)


def make_similarity_pairs(noisy_labels, strategy: str = "all_pairs_in_batch",
                          k: Optional[int] = None, seed=None,
                          keep_labels: bool = False,
                          source: str = "") -> SimilarityPairBatch:
    """Pair up examples and label each pair by equality of its noisy labels.

    ``strategy`` is ``"all_pairs_in_batch"`` or ``"sampled"``; the latter
    draws ``k`` distinct unordered pairs uniformly.
    """
    lab = np.asarray(noisy_labels)
    n = lab.size
    if n < 2:
        raise InputError("at least two examples are needed to form a pair")
    if strategy == "all_pairs_in_batch":
        i, j = all_pairs(n)
    elif strategy == "sampled":
        total = n * (n - 1) // 2
        if k is None or k < 1 or k > total:
            raise InputError(f"sampled pairing needs 1 <= k <= {total}, got {k}")
        rng = np.random.default_rng(seed)
        lin = np.sort(rng.choice(total, size=int(k), replace=False))
        i, j = _decode_pairs(lin, n)
    else:
        raise InputError(f"unknown pairing strategy {strategy!r}")
    sim = (lab[i] == lab[j]).astype(np.int8)
    return SimilarityPairBatch(i, j, sim, source=source,
                               noisy_labels=lab.copy() if keep_labels else None)


def simplex_means(num_classes: int, dim: int, separation: float) -> np.ndarray:
    """Vertices of a regular simplex with pairwise distance ``separation``.

    The vertices are centred at the origin and occupy the first ``C - 1``
    coordinates; the remaining coordinates are zero.
    """
    C = int(num_classes)
    if dim < C - 1:
        raise InputError(f"simplex placement of {C} classes needs dim >= {C - 1}")
    E = np.eye(C) - 1.0 / C
    # orthonormal basis of the (C-1)-dim centred subspace
    u, _, _ = np.linalg.svd(E)
    coords = E @ u[:, :C - 1]
    means = np.zeros((C, dim))
    means[:, :C - 1] = coords * (separation / np.sqrt(2.0))
    return means


def gaussian_blobs(num_classes: int, n_per_class: int, dim: int, separation: float,
                   spread: float, seed, split: str = "train") -> LabeledDataset:
    """Isotropic Gaussian clusters centred on a scaled regular simplex."""
    if num_classes < 1 or n_per_class < 1 or dim < 1:
        raise InputError("class count, class size and dimension must be positive")
    if separation <= 0 or spread < 0:
        raise InputError("separation must be positive and spread non-negative")
    means = simplex_means(num_classes, dim, separation)
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(1, num_classes + 1), n_per_class)
    X = means[y - 1] + spread * rng.standard_normal((y.size, dim))
    perm = rng.permutation(y.size)
    return LabeledDataset(X[perm], y[perm], num_classes, split)


def nearest_mean_predict(X, means) -> np.ndarray:
    """1-based index of the closest mean for each row of ``X``."""
    d2 = ((np.asarray(X)[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1) + 1
