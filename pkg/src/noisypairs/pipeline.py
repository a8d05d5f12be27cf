"""Two-stage learning from noisy similarity pairs, evaluation and the risk bound.

:func:`run_experiment` wires everything together:

1. corrupt the clean training labels with a symmetric transition matrix and
   hold out a validation fraction; only pairwise similarity bits derived
   from the corrupted labels are used for learning,
2. (``mns_estimated_T``) fit a noisy posterior without a transition layer
   and estimate ``T_hat`` from anchor points,
3. train a fresh classifier through the fixed transition layer, keeping the
   epoch with the lowest thresholded validation pair error,
4. score the clean-posterior argmax on clean test labels.
"""
from __future__ import annotations

import configparser
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .estimation import estimate_from_model, estimation_error, train_noisy_posterior
from .exceptions import InputError, TrainingError
from .nn import MlpModel, predict_proba
from .noise import (LabeledDataset, corrupt_labels, gaussian_blobs,
                    make_similarity_pairs, symmetric_transition)
from .objective import CLAMP
from .training import TrainConfig, TrainResult, train_on_pairs

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METHODS = ("mcl", "mns_estimated_T", "mns_true_T")
DATASETS = ("blobs", "file", "idx")


@dataclass
class ExperimentConfig:
    # data
    dataset: str = "blobs"
    data_path: Optional[str] = None
    test_path: Optional[str] = None
    idx_images: Optional[str] = None
    idx_labels: Optional[str] = None
    idx_test_images: Optional[str] = None
    idx_test_labels: Optional[str] = None
    limit: Optional[int] = None
    test_limit: Optional[int] = None
    normalize: bool = True
    num_classes: int = 3
    n: int = 3000
    n_test: int = 3000
    dim: int = 8
    separation: float = 4.0
    spread: float = 1.0
    # noise
    rho: float = 0.3
    # model
    hidden: Tuple[int, ...] = (64, 64)
    activation: str = "relu"
    bias: bool = True
    # optimiser
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    decay_every: int = 10
    decay_factor: float = 0.1
    weight_decay: float = 0.0
    # training
    batch_size: int = 128
    epochs: int = 30
    pairing: str = "all_pairs_in_batch"
    pairs_per_batch: Optional[int] = None
    pos_weight: float = 1.0
    tau: Optional[float] = None
    val_fraction: float = 0.1
    val_max_pairs: int = 50000
    warm_start: bool = False
    # estimation
    anchors_k: int = 5
    anchor_percentile: Optional[float] = None
    # experiment
    method: str = "mns_estimated_T"
    seed: int = 0
    delta: float = 0.05

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self):
        if self.method not in METHODS:
            raise InputError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.dataset not in DATASETS:
            raise InputError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        if not 0.0 < self.val_fraction < 1.0:
            raise InputError("validation fraction must lie in (0, 1)")
        if not 0.0 <= self.rho < 1.0:
            raise InputError("noise rate must lie in [0, 1)")
        if self.num_classes < 2:
            raise InputError("at least two classes are required")
        if not 0.0 < self.delta < 1.0:
            raise InputError("delta must lie in (0, 1)")
        if self.batch_size < 2 or self.epochs < 0:
            raise InputError("batch size must be >= 2 and epochs >= 0")

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in asdict(self).items() if k in names})

    def replace(self, **changes) -> "ExperimentConfig":
        d = asdict(self)
        d.update(changes)
        return ExperimentConfig(**d)


@dataclass
class BoundInputs:
    B: float
    num_classes: int
    depth: int
    frobenius: Sequence[float]
    M: float
    delta: float
    n: int

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise InputError(f"delta must lie in (0, 1), got {self.delta}")
        if self.depth < 1 or len(self.frobenius) != self.depth:
            raise InputError("need one Frobenius bound per layer")
        vals = [self.B, self.num_classes, self.M, self.n, *self.frobenius]
        if any(not (v > 0) for v in vals):
            raise InputError("bound inputs must be positive")


@dataclass
class ClassifierEvaluation:
    accuracy: float
    confusion: np.ndarray
    mapping: np.ndarray
    raw_accuracy: float


@dataclass
class ExperimentReport:
    config: dict
    status: str = "ok"
    failed_stage: Optional[str] = None
    error: Optional[str] = None
    curves: List[dict] = field(default_factory=list)
    selected_epoch: Optional[int] = None
    stage1_selected_epoch: Optional[int] = None
    test_accuracy: Optional[float] = None
    test_accuracy_unaligned: Optional[float] = None
    confusion: Optional[list] = None
    class_mapping: Optional[list] = None
    T_true: Optional[list] = None
    T_used: Optional[list] = None
    T_hat: Optional[list] = None
    epsilon: Optional[float] = None
    bound: Optional[dict] = None
    warnings: List[str] = field(default_factory=list)
    wall_clock_seconds: float = 0.0
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, include_wall_clock: bool = True) -> str:
        d = self.to_dict()
        if not include_wall_clock:
            d.pop("wall_clock_seconds")
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise InputError(f"unsupported report schema {d.get('schema_version')}")
        return cls(**d)


# -- evaluation -----------------------------------------------------------------

def align_clusters(confusion: np.ndarray) -> np.ndarray:
    """Output-index -> class-index map maximising agreement (Hungarian).

    Similarity supervision identifies classes only up to a relabelling, so
    predictions are matched to classes before counting accuracy.
    """
    rows, cols = linear_sum_assignment(-np.asarray(confusion))
    mapping = np.empty(confusion.shape[1], dtype=np.int64)
    mapping[cols] = rows
    return mapping


def evaluate_classifier(model: MlpModel, data: LabeledDataset,
                        align: bool = True) -> ClassifierEvaluation:
    """Accuracy of ``argmax g(x)`` on clean labels.

    The confusion matrix has true classes on rows and (mapped) predictions on
    columns.
    """
    if len(data) == 0:
        raise InputError("empty test set")
    probs = predict_proba(model, data.X)
    return evaluate_predictions(probs, data.y, data.num_classes, align)


def evaluate_predictions(probs, y, num_classes: int, align: bool = True) -> ClassifierEvaluation:
    probs = np.asarray(probs)
    y = np.asarray(y) - 1
    if y.size == 0:
        raise InputError("empty test set")
    pred = np.argmax(probs, axis=1)
    C = num_classes
    raw = np.zeros((C, C), dtype=np.int64)
    np.add.at(raw, (y, pred), 1)
    mapping = align_clusters(raw) if align else np.arange(C)
    mapped = mapping[pred]
    conf = np.zeros((C, C), dtype=np.int64)
    np.add.at(conf, (y, mapped), 1)
    return ClassifierEvaluation(float(np.trace(conf)) / y.size, conf, mapping,
                                float(np.mean(pred == y)))


# -- generalisation bound -------------------------------------------------------

def frobenius_norms(model: MlpModel) -> List[float]:
    """Per-layer Frobenius norms of the weight matrices (biases excluded)."""
    return [float(np.linalg.norm(w, "fro")) for w in model.weights]


def generalization_bound(inp: BoundInputs) -> float:
    """Upper bound on expected minus empirical pair risk, holding w.p. 1 - delta.

    ``2 B C (sqrt(2 d log 2) + 1) prod(M_i) / sqrt(n) + M sqrt(log(1/delta) / (2 n))``
    """
    prod = math.prod(float(m) for m in inp.frobenius)
    complexity = (2.0 * inp.B * inp.num_classes
                  * (math.sqrt(2.0 * inp.depth * math.log(2.0)) + 1.0) * prod
                  / math.sqrt(inp.n))
    confidence = inp.M * math.sqrt(math.log(1.0 / inp.delta) / (2.0 * inp.n))
    return complexity + confidence


def bound_for_model(model: MlpModel, X, n_pairs: int, delta: float,
                    clamp: float = CLAMP) -> dict:
    """Evaluate the bound with measured input radius and weight norms."""
    B = float(np.max(np.linalg.norm(np.asarray(X), axis=1)))
    norms = frobenius_norms(model)
    inp = BoundInputs(B=B, num_classes=model.num_classes, depth=model.depth,
                      frobenius=norms, M=-math.log(clamp), delta=delta, n=n_pairs)
    return {"B": B, "frobenius": norms, "M": inp.M, "delta": delta, "n": n_pairs,
            "depth": model.depth, "value": generalization_bound(inp),
            "ignores_biases": model.has_bias}


# -- data -----------------------------------------------------------------------

def load_datasets(cfg: ExperimentConfig, seeds) -> Tuple[LabeledDataset, LabeledDataset]:
    """(training pool, clean test set) for ``cfg``."""
    from . import io as nio

    if cfg.dataset == "blobs":
        per = max(1, cfg.n // cfg.num_classes)
        per_test = max(1, cfg.n_test // cfg.num_classes)
        train = gaussian_blobs(cfg.num_classes, per, cfg.dim, cfg.separation,
                               cfg.spread, seeds[0])
        test = gaussian_blobs(cfg.num_classes, per_test, cfg.dim, cfg.separation,
                              cfg.spread, seeds[1], split="test")
        return train, test
    if cfg.dataset == "file":
        if not cfg.data_path or not cfg.test_path:
            raise InputError("file datasets need data_path and test_path")
        train = nio.read_dataset(cfg.data_path)
        test = nio.read_dataset(cfg.test_path, split="test")
        return train, test
    train = nio.load_idx_images(cfg.idx_images, cfg.idx_labels, cfg.limit, cfg.normalize)
    test = nio.load_idx_images(cfg.idx_test_images, cfg.idx_test_labels,
                               cfg.test_limit, cfg.normalize, split="test")
    return train, test


def _curves(stage: str, res: TrainResult) -> List[dict]:
    return [{"stage": stage, "epoch": e, "train_loss": res.train_loss[e],
             "val_loss": res.val_loss[e], "val_pair_error": res.val_error[e],
             "lr": res.lr[e]} for e in range(len(res.train_loss))]


def run_experiment(cfg: ExperimentConfig, T_hat=None,
                   return_model: bool = False):
    """Run one experiment and return its :class:`ExperimentReport`.

    ``T_hat`` (``mns_estimated_T`` only) skips stage one and uses the given
    matrix in its place. With ``return_model`` the stage-two model (or
    ``None`` on failure) is returned alongside the report.
    """
    cfg.validate()
    started = time.perf_counter()
    report = ExperimentReport(config=_config_echo(cfg))
    seeds = np.random.SeedSequence(cfg.seed).spawn(7)
    train, test = load_datasets(cfg, seeds)
    C = cfg.num_classes
    if train.num_classes != C:
        raise InputError(f"dataset has {train.num_classes} classes, config says {C}")
    T = symmetric_transition(C, cfg.rho)
    report.T_true = T.tolist()
    noisy = corrupt_labels(train.y, T, seeds[2])
    order = np.random.default_rng(seeds[3]).permutation(len(train))
    n_val = max(2, int(round(cfg.val_fraction * len(train))))
    val_idx, tr_idx = order[:n_val], order[n_val:]
    X_tr, X_val = train.X[tr_idx], train.X[val_idx]
    y_tr = noisy[tr_idx]
    if n_val * (n_val - 1) // 2 <= cfg.val_max_pairs:
        val_pairs = make_similarity_pairs(noisy[val_idx], source="validation")
    else:
        val_pairs = make_similarity_pairs(noisy[val_idx], "sampled", k=cfg.val_max_pairs,
                                          seed=seeds[6], source="validation")
    tcfg = cfg.train_config()

    stage = "stage1"
    model = None
    try:
        init = None
        if cfg.method == "mcl":
            T_used = None
        elif cfg.method == "mns_true_T":
            T_used = T
        elif T_hat is not None:
            T_used = np.asarray(T_hat, dtype=np.float64)
            report.T_hat = T_used.tolist()
            report.epsilon = estimation_error(T, T_used)
        else:
            s1 = train_noisy_posterior(X_tr, y_tr, X_val, val_pairs, C, tcfg, seeds[4])
            report.curves += _curves("stage1", s1)
            report.stage1_selected_epoch = s1.selected_epoch
            est = estimate_from_model(s1.model, X_tr, cfg.anchors_k, cfg.anchor_percentile)
            T_used = est.T_hat
            report.T_hat = T_used.tolist()
            report.epsilon = estimation_error(T, T_used)
            if np.any(T_used.max(axis=1) < 1.0 / C + 1e-6):
                report.warnings.append("degenerate T_hat: some row is near uniform")
            if cfg.warm_start:
                init = s1.model
        stage = "stage2"
        s2 = train_on_pairs(X_tr, y_tr, X_val, val_pairs, C, tcfg, seeds[5], T=T_used,
                            select="error", init=init, stage="stage2")
    except TrainingError as exc:
        report.status = "failed"
        report.failed_stage = exc.stage or stage
        report.error = str(exc)
        report.wall_clock_seconds = time.perf_counter() - started
        return (report, None) if return_model else report
    model = s2.model
    report.curves += _curves("stage2", s2)
    report.selected_epoch = s2.selected_epoch
    report.T_used = None if T_used is None else np.asarray(T_used).tolist()
    ev = evaluate_classifier(model, test)
    report.test_accuracy = ev.accuracy
    report.test_accuracy_unaligned = ev.raw_accuracy
    report.confusion = ev.confusion.tolist()
    report.class_mapping = ev.mapping.tolist()
    report.bound = bound_for_model(model, X_tr, s2.pairs_seen, cfg.delta)
    report.wall_clock_seconds = time.perf_counter() - started
    return (report, model) if return_model else report


def _config_echo(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    return d


# -- config files ---------------------------------------------------------------

SECTIONS = {
    "data": ("dataset", "data_path", "test_path", "idx_images", "idx_labels",
             "idx_test_images", "idx_test_labels", "limit", "test_limit", "normalize",
             "num_classes", "n", "n_test", "dim", "separation", "spread"),
    "noise": ("rho",),
    "model": ("hidden", "activation", "bias"),
    "optim": ("lr", "beta1", "beta2", "adam_eps", "decay_every", "decay_factor",
              "weight_decay"),
    "train": ("batch_size", "epochs", "pairing", "pairs_per_batch", "pos_weight", "tau",
              "val_fraction", "val_max_pairs", "warm_start"),
    "estimation": ("anchors_k", "anchor_percentile"),
    "experiment": ("method", "seed", "delta"),
}
_DEFAULTS = ExperimentConfig.__dataclass_fields__


def parse_value(key: str, text: str):
    """Convert a config string to the type of ``ExperimentConfig.<key>``."""
    if key not in _DEFAULTS:
        raise InputError(f"unknown config key {key!r}")
    text = text.strip()
    default = _DEFAULTS[key].default
    if text.lower() in ("", "none") and (default is None or key in _OPTIONAL):
        return None
    try:
        if key == "hidden":
            return tuple(int(v) for v in text.replace(",", " ").split())
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if key in _INT_KEYS:
            return int(text)
        if key in _FLOAT_KEYS:
            return float(text)
    except ValueError as exc:
        raise InputError(f"bad value for {key}: {text!r}") from exc
    return text


_OPTIONAL = {"data_path", "test_path", "idx_images", "idx_labels", "idx_test_images",
             "idx_test_labels", "limit", "test_limit", "pairs_per_batch", "tau",
             "anchor_percentile"}
_INT_KEYS = {"limit", "test_limit", "num_classes", "n", "n_test", "dim", "decay_every",
             "batch_size", "epochs", "pairs_per_batch", "val_max_pairs", "anchors_k", "seed"}
_FLOAT_KEYS = {"separation", "spread", "rho", "lr", "beta1", "beta2", "adam_eps",
               "decay_factor", "weight_decay", "pos_weight", "tau", "val_fraction",
               "anchor_percentile", "delta"}


def config_from_mapping(values: dict, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    parsed = {k: (parse_value(k, v) if isinstance(v, str) else v) for k, v in values.items()}
    for k in parsed:
        if k not in _DEFAULTS:
            raise InputError(f"unknown config key {k!r}")
    return base.replace(**parsed)


def load_config(path) -> ExperimentConfig:
    """Read an INI-style file whose sections group ``ExperimentConfig`` fields."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";",))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise InputError(f"malformed config {path}: {exc}") from exc
    values = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise InputError(f"unknown config section [{section}]")
        for key, text in cp.items(section):
            if key not in SECTIONS[section]:
                raise InputError(f"key {key!r} does not belong in [{section}]")
            values[key] = text
    return config_from_mapping(values)


def dump_config(cfg: ExperimentConfig, path) -> None:
    lines = []
    for section, keys in SECTIONS.items():
        lines.append(f"[{section}]")
        for k in keys:
            v = getattr(cfg, k)
            if v is None:
                v = "none"
            elif k == "hidden":
                v = " ".join(str(h) for h in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
