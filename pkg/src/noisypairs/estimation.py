"""Transition-matrix estimation from a noisy-class posterior via anchor points.

At an anchor point of class ``i`` the clean posterior is one-hot, so the
noisy posterior equals row ``i`` of the transition matrix. Anchors are not
known; the examples with the highest estimated noisy posterior for each
class stand in for them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .exceptions import DegenerateClassError, InputError
from .nn import MlpModel, predict_proba
from .noise import SimilarityPairBatch
from .training import TrainConfig, TrainResult, train_on_pairs


@dataclass
class AnchorSelection:
    indices: List[np.ndarray]
    scores: List[np.ndarray]
    k: int

    @property
    def num_classes(self) -> int:
        return len(self.indices)


@dataclass
class EstimationReport:
    T_hat: np.ndarray
    anchors: AnchorSelection
    epsilon: Optional[float] = None


def train_noisy_posterior(X, pair_labels, X_val, val_pairs: SimilarityPairBatch,
                          num_classes: int, cfg: TrainConfig, seed,
                          init: Optional[MlpModel] = None) -> TrainResult:
    """Stage one: fit ``P(noisy label | x)`` with no transition layer.

    The checkpoint with the lowest validation pair loss is kept.
    """
    return train_on_pairs(X, pair_labels, X_val, val_pairs, num_classes, cfg, seed,
                          T=None, select="loss", init=init, stage="stage1")


def select_anchors(probs, k: int = 5, percentile: Optional[float] = None) -> AnchorSelection:
    """Pick up to ``k`` anchor candidates per class from posterior rows ``probs``.

    An example can only anchor its argmax class. Within a class, candidates
    are ranked by descending score with ties going to the lower index. With
    ``percentile`` set, candidates scoring above that percentile of the
    class-``i`` score over the whole pool are skipped first.
    """
    P = np.asarray(probs, dtype=np.float64)
    if P.ndim != 2:
        raise InputError("posterior matrix must be 2-D")
    n, C = P.shape
    if k < 1:
        raise InputError("need at least one anchor per class")
    if n < k * C:
        raise InputError(f"pool of {n} examples is smaller than k*C = {k * C}")
    if not np.all(np.isfinite(P)):
        raise InputError("posteriors must be finite")
    owner = np.argmax(P, axis=1)
    indices, scores, empty = [], [], []
    for c in range(C):
        cand = np.flatnonzero(owner == c)
        if cand.size == 0:
            empty.append(c + 1)
            indices.append(np.empty(0, dtype=np.int64))
            scores.append(np.empty(0))
            continue
        sc = P[cand, c]
        order = np.lexsort((cand, -sc))
        cand, sc = cand[order], sc[order]
        if percentile is not None:
            cut = np.percentile(P[:, c], percentile)
            keep = sc <= cut
            if keep.any():
                cand, sc = cand[keep], sc[keep]
        indices.append(cand[:k].astype(np.int64))
        scores.append(sc[:k])
    if empty:
        raise DegenerateClassError(empty)
    return AnchorSelection(indices, scores, k)


def estimate_transition(probs, anchors: AnchorSelection) -> np.ndarray:
    """Row ``i`` is the mean noisy posterior over the class-``i`` anchors."""
    P = np.asarray(probs, dtype=np.float64)
    if anchors.num_classes != P.shape[1]:
        raise InputError("anchor selection does not match posterior width")
    rows = []
    for c, idx in enumerate(anchors.indices):
        if idx.size == 0:
            raise InputError(f"class {c + 1} has no anchors")
        block = P[idx]
        if not np.all(np.isfinite(block)):
            raise InputError(f"non-finite posterior at anchors of class {c + 1}")
        row = block.mean(axis=0)
        rows.append(row / row.sum())
    return np.vstack(rows)


def estimate_from_model(model: MlpModel, X_pool, k: int = 5,
                        percentile: Optional[float] = None) -> EstimationReport:
    probs = predict_proba(model, X_pool)
    anchors = select_anchors(probs, k, percentile)
    return EstimationReport(estimate_transition(probs, anchors), anchors)


def estimation_error(T, T_hat) -> float:
    """Entrywise relative L1 error ``sum|T - T_hat| / sum|T|``."""
    T = np.asarray(T, dtype=np.float64)
    T_hat = np.asarray(T_hat, dtype=np.float64)
    if T.shape != T_hat.shape:
        raise InputError(f"shape mismatch {T.shape} vs {T_hat.shape}")
    return float(np.abs(T - T_hat).sum() / np.abs(T).sum())
