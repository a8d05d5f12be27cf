"""Minibatch training on similarity pairs with per-epoch model selection."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import InputError, TrainingError
from .nn import AdamState, MlpModel, adam_step, init_mlp, step_decay
from .noise import SimilarityPairBatch, make_similarity_pairs
from .objective import batch_pair_loss, pair_metrics

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    hidden: Tuple[int, ...] = (64, 64)
    activation: str = "relu"
    bias: bool = True
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    decay_every: int = 10
    decay_factor: float = 0.1
    batch_size: int = 128
    epochs: int = 30
    pairing: str = "all_pairs_in_batch"
    pairs_per_batch: Optional[int] = None
    pos_weight: float = 1.0
    weight_decay: float = 0.0
    tau: Optional[float] = None


@dataclass
class TrainResult:
    model: MlpModel
    initial_model: MlpModel
    selected_epoch: int
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    val_error: List[float] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    pairs_seen: int = 0


def _batch_pairs(labels, cfg: TrainConfig, rng) -> SimilarityPairBatch:
    if cfg.pairing == "all_pairs_in_batch":
        return make_similarity_pairs(labels)
    n = labels.size
    k = min(cfg.pairs_per_batch or n, n * (n - 1) // 2)
    return make_similarity_pairs(labels, "sampled", k=k, seed=rng)


def _add_weight_decay(model: MlpModel, grads, wd: float):
    # L2 on weight matrices only; biases are the odd entries when present
    step = 2 if model.has_bias else 1
    for k, w in enumerate(model.weights):
        grads.params[k * step] = grads.params[k * step] + wd * w


def train_on_pairs(X, pair_labels, X_val, val_pairs: SimilarityPairBatch,
                   num_classes: int, cfg: TrainConfig, seed, T=None,
                   select: str = "error", init: Optional[MlpModel] = None,
                   stage: str = "") -> TrainResult:
    """Fit a classifier from similarity supervision.

    Minibatches are drawn from ``X``; each minibatch is expanded into pairs
    whose similarity bit is ``pair_labels[i] == pair_labels[j]`` (the labels
    themselves never reach the loss). ``T`` enables the transition layer.
    The returned model is the epoch with the lowest validation ``"error"``
    (thresholded pair error) or ``"loss"`` (pair BCE); ties keep the earliest.
    """
    X = np.asarray(X, dtype=np.float64)
    pair_labels = np.asarray(pair_labels)
    if X.shape[0] < 2 or len(val_pairs) == 0:
        raise InputError("training needs at least two examples and some validation pairs")
    if select not in ("error", "loss"):
        raise InputError(f"unknown selection criterion {select!r}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init_seed, shuffle_seed = ss.spawn(2)
    if init is None:
        model = init_mlp(X.shape[1], cfg.hidden, num_classes,
                         np.random.default_rng(init_seed), cfg.activation, cfg.bias)
    else:
        model = init.copy()
    initial = model.copy()
    rng = np.random.default_rng(shuffle_seed)
    state = AdamState.for_model(model, lr=cfg.lr, beta1=cfg.beta1,
                                beta2=cfg.beta2, eps=cfg.adam_eps)
    res = TrainResult(model=model, initial_model=initial, selected_epoch=-1)
    best = np.inf
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        lr = step_decay(cfg.lr, epoch, cfg.decay_every, cfg.decay_factor)
        perm = rng.permutation(n)
        losses, weights = [], []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            if idx.size < 2:
                continue
            pairs = _batch_pairs(pair_labels[idx], cfg, rng)
            loss, grads = batch_pair_loss(model, X[idx], pairs, T, cfg.pos_weight)
            if not np.isfinite(loss):
                raise TrainingError("non-finite training loss", epoch=epoch, stage=stage)
            if cfg.weight_decay:
                _add_weight_decay(model, grads, cfg.weight_decay)
            model, state = adam_step(model, grads, state, lr=lr)
            losses.append(loss)
            weights.append(len(pairs))
            res.pairs_seen += len(pairs) if epoch == 0 else 0
        val_loss, val_err = pair_metrics(model, X_val, val_pairs, T, cfg.tau)
        if not np.isfinite(val_loss):
            raise TrainingError("non-finite validation loss", epoch=epoch, stage=stage)
        res.train_loss.append(float(np.average(losses, weights=weights)))
        res.val_loss.append(val_loss)
        res.val_error.append(val_err)
        res.lr.append(lr)
        crit = val_err if select == "error" else val_loss
        if crit < best:
            best = crit
            res.model = model.copy()
            res.selected_epoch = epoch
        log.debug("%s epoch %d: train %.4f val %.4f err %.4f", stage, epoch,
                  res.train_loss[-1], val_loss, val_err)
    if cfg.epochs == 0:
        res.model = model
    return res
