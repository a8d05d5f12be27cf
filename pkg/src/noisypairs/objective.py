"""Pairwise likelihood losses on predicted similarity.

For a pair of clean-class posteriors ``g_a, g_b`` and a fixed transition
matrix ``T`` the noisy posteriors are ``f = T^T g`` and the predicted noisy
similarity is ``s_hat = f_a . f_b``. The loss is binary cross-entropy of
``s_hat`` against the observed similarity bit. Without ``T`` the same loss
on ``g_a . g_b`` is the meta-classification (MCL) baseline.

Gradients are returned with respect to the logits feeding the softmax.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import InputError
from .nn import MlpModel, backward, forward_with_cache, predict_proba, softmax
from .noise import SimilarityPairBatch, check_transition

CLAMP = 1e-7


@dataclass
class PairLossOutput:
    loss: float
    s_hat: float
    grad_first: np.ndarray
    grad_second: np.ndarray


def corrected_posterior(g, T) -> np.ndarray:
    """``f = T^T g`` for a single posterior or a batch of row posteriors."""
    g = np.asarray(g, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 2 or g.shape[-1] != T.shape[0]:
        raise InputError(f"posterior width {g.shape[-1]} does not match T {T.shape}")
    return g @ T


def predicted_similarity(f_a, f_b) -> float:
    f_a = np.asarray(f_a, dtype=np.float64)
    f_b = np.asarray(f_b, dtype=np.float64)
    if f_a.shape != f_b.shape or f_a.ndim != 1:
        raise InputError("similarity needs two vectors of equal length")
    if f_a.min() < 0 or f_b.min() < 0:
        raise InputError("posteriors must be non-negative")
    return float(f_a @ f_b)


def _check_sim(s):
    s = np.asarray(s)
    if not np.all((s == 0) | (s == 1)):
        raise InputError("similarity labels must be 0 or 1")
    return s.astype(np.float64)


def pair_terms(G_a, G_b, s, T=None, pos_weight: float = 1.0, clamp: float = CLAMP):
    """Vectorised per-pair loss and logit gradients.

    ``G_a`` and ``G_b`` are ``(m, C)`` posteriors (softmax outputs). Returns
    ``(loss, s_hat, dH_a, dH_b)`` where ``s_hat`` is the unclamped inner
    product and the gradients are per pair (not averaged).
    """
    s = _check_sim(s)
    if T is None:
        F_a, F_b = G_a, G_b
    else:
        F_a, F_b = G_a @ T, G_b @ T
    s_hat = np.einsum("ij,ij->i", F_a, F_b)
    sc = np.clip(s_hat, clamp, 1.0 - clamp)
    loss = -(pos_weight * s * np.log(sc) + (1.0 - s) * np.log1p(-sc))
    inside = (s_hat > clamp) & (s_hat < 1.0 - clamp)
    dl_ds = np.where(inside, -pos_weight * s / sc + (1.0 - s) / (1.0 - sc), 0.0)
    dF_a = dl_ds[:, None] * F_b
    dF_b = dl_ds[:, None] * F_a
    if T is None:
        dG_a, dG_b = dF_a, dF_b
    else:
        dG_a, dG_b = dF_a @ T.T, dF_b @ T.T
    dH_a = G_a * (dG_a - np.einsum("ij,ij->i", dG_a, G_a)[:, None])
    dH_b = G_b * (dG_b - np.einsum("ij,ij->i", dG_b, G_b)[:, None])
    return loss, s_hat, dH_a, dH_b


def _single(g_a, g_b, s, T, pos_weight, clamp):
    g_a = np.asarray(g_a, dtype=np.float64)
    g_b = np.asarray(g_b, dtype=np.float64)
    if g_a.shape != g_b.shape or g_a.ndim != 1:
        raise InputError("posteriors must be vectors of equal length")
    if T is not None:
        T = check_transition(T)
        if T.shape[0] != g_a.size:
            raise InputError(f"posterior width {g_a.size} does not match T {T.shape}")
    loss, s_hat, dA, dB = pair_terms(g_a[None], g_b[None], np.atleast_1d(s), T,
                                     pos_weight, clamp)
    return PairLossOutput(float(loss[0]), float(s_hat[0]), dA[0], dB[0])


def mcl_loss(g_a, g_b, s, pos_weight: float = 1.0, clamp: float = CLAMP) -> PairLossOutput:
    """Binary cross-entropy of ``g_a . g_b`` against ``s``."""
    return _single(g_a, g_b, s, None, pos_weight, clamp)


def mns_loss(g_a, g_b, T, s, pos_weight: float = 1.0, clamp: float = CLAMP) -> PairLossOutput:
    """Binary cross-entropy of ``(T^T g_a) . (T^T g_b)`` against ``s``."""
    return _single(g_a, g_b, s, T, pos_weight, clamp)


def batch_pair_loss(model: MlpModel, X, pairs: SimilarityPairBatch, T=None,
                    pos_weight: float = 1.0, clamp: float = CLAMP):
    """Mean pair loss over ``pairs`` (indices into ``X``) and its parameter gradient.

    Returns ``(loss, GradientBundle)``; the bundle's ``logits`` field holds
    d(mean loss)/d(logits) per example.
    """
    if len(pairs) == 0:
        raise InputError("empty pair list")
    X = np.asarray(X, dtype=np.float64)
    if pairs.first.max() >= X.shape[0] or pairs.second.max() >= X.shape[0] \
            or min(pairs.first.min(), pairs.second.min()) < 0:
        raise InputError("pair index outside the batch")
    if T is not None:
        T = check_transition(T)
    logits, cache = forward_with_cache(model, X)
    G = softmax(logits)
    loss, _, dA, dB = pair_terms(G[pairs.first], G[pairs.second], pairs.sim, T,
                                 pos_weight, clamp)
    m = len(pairs)
    dH = np.zeros_like(G)
    np.add.at(dH, pairs.first, dA)
    np.add.at(dH, pairs.second, dB)
    dH /= m
    grads = backward(model, cache, dH)
    return float(loss.mean()), grads


def pair_predictions(model: MlpModel, X, pairs: SimilarityPairBatch, T=None) -> np.ndarray:
    """Predicted similarity ``s_hat`` for every pair."""
    P = predict_proba(model, X)
    if T is not None:
        P = P @ T
    return np.einsum("ij,ij->i", P[pairs.first], P[pairs.second])


def pair_metrics(model: MlpModel, X, pairs: SimilarityPairBatch, T=None,
                 threshold: Optional[float] = None, clamp: float = CLAMP):
    """Mean BCE and thresholded error of predicted similarity on ``pairs``.

    The decision rule predicts ``1`` when ``s_hat > threshold``;
    ``threshold`` defaults to ``1 / C``.
    """
    s_hat = pair_predictions(model, X, pairs, T)
    if threshold is None:
        threshold = 1.0 / model.num_classes
    s = pairs.sim.astype(np.float64)
    sc = np.clip(s_hat, clamp, 1.0 - clamp)
    bce = float(np.mean(-(s * np.log(sc) + (1.0 - s) * np.log1p(-sc))))
    err = float(np.mean((s_hat > threshold) != pairs.sim.astype(bool)))
    return bce, err
