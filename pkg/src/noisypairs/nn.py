"""Dense feed-forward network with a softmax head, written directly in numpy.

Everything is float64. The network computes

    h(x) = W_d act(W_{d-1} act(... act(W_1 x + b_1) ...) + b_{d-1}) + b_d

with biases optional. Gradients are obtained with an explicit backward pass;
:func:`finite_diff_gradient` provides an independent numerical check.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from .exceptions import FormatError, InputError

ACTIVATIONS = ("relu", "identity")
CHECKPOINT_VERSION = 1


@dataclass
class MlpModel:
    weights: List[np.ndarray]
    biases: Optional[List[np.ndarray]] = None
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise InputError(f"unknown activation {self.activation!r}")
        if not self.weights:
            raise InputError("model needs at least one layer")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if a.ndim != 2 or b.ndim != 2 or b.shape[1] != a.shape[0]:
                raise InputError(
                    f"incompatible layer shapes {a.shape} -> {b.shape}")
        if self.biases is not None:
            self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
            if len(self.biases) != len(self.weights):
                raise InputError("one bias vector per layer is required")
            for w, b in zip(self.weights, self.biases):
                if b.shape != (w.shape[0],):
                    raise InputError(
                        f"bias shape {b.shape} does not match layer {w.shape}")
        if not all(np.all(np.isfinite(p)) for p in self.parameters()):
            raise InputError("model parameters must be finite")

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def has_bias(self) -> bool:
        return self.biases is not None

    def parameters(self) -> List[np.ndarray]:
        """Parameters in a fixed order: W_1, b_1, W_2, b_2, ... (biases if present)."""
        if self.biases is None:
            return list(self.weights)
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_parameters(self, params: Sequence[np.ndarray]) -> "MlpModel":
        params = list(params)
        if self.biases is None:
            return MlpModel(params, None, self.activation)
        return MlpModel(params[0::2], params[1::2], self.activation)

    def copy(self) -> "MlpModel":
        return self.with_parameters([p.copy() for p in self.parameters()])


@dataclass
class GradientBundle:
    params: List[np.ndarray]
    logits: Optional[np.ndarray] = None

    def flat(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.params])


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_model(cls, model: MlpModel, **hyper) -> "AdamState":
        params = model.parameters()
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], **hyper)


def init_mlp(input_dim: int, hidden: Sequence[int], num_classes: int,
             rng: np.random.Generator, activation: str = "relu",
             bias: bool = True) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    widths = [int(input_dim), *[int(h) for h in hidden], int(num_classes)]
    if any(w <= 0 for w in widths):
        raise InputError(f"layer widths must be positive, got {widths}")
    weights = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
    biases = [np.zeros(w.shape[0]) for w in weights] if bias else None
    return MlpModel(weights, biases, activation)


def _check_input(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise InputError(
            f"expected inputs of width {model.input_dim}, got shape {X.shape}")
    return X


def _act(z, name):
    return np.maximum(z, 0.0) if name == "relu" else z


def forward_logits(model: MlpModel, X) -> np.ndarray:
    """Logits h(X), one row per example."""
    return _forward(model, _check_input(model, X))[0]


def _forward(model, X):
    # cache holds the input to every layer
    cache = [X]
    a = X
    last = model.depth - 1
    for k, w in enumerate(model.weights):
        z = a @ w.T
        if model.biases is not None:
            z = z + model.biases[k]
        if k < last:
            a = _act(z, model.activation)
            cache.append(a)
        else:
            a = z
    return a, cache


def forward_with_cache(model: MlpModel, X):
    return _forward(model, _check_input(model, X))


def backward(model: MlpModel, cache, dlogits: np.ndarray) -> GradientBundle:
    """Backpropagate d(loss)/d(logits) to every parameter."""
    delta = np.asarray(dlogits, dtype=np.float64)
    grads_w = [None] * model.depth
    grads_b = [None] * model.depth
    for k in range(model.depth - 1, -1, -1):
        a_in = cache[k]
        grads_w[k] = delta.T @ a_in
        grads_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = delta @ model.weights[k]
            if model.activation == "relu":
                delta = delta * (a_in > 0)
    if model.biases is None:
        params = grads_w
    else:
        params = [g for pair in zip(grads_w, grads_b) for g in pair]
    return GradientBundle(params=params, logits=np.array(dlogits, dtype=np.float64))


def softmax(logits) -> np.ndarray:
    """Row-wise softmax with max-shift stabilisation.

    Accepts a single logit vector or a 2-D batch.
    """
    h = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(h)):
        raise InputError("softmax received non-finite logits")
    z = h - h.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(model: MlpModel, X) -> np.ndarray:
    return softmax(forward_logits(model, X))


def adam_step(model: MlpModel, grads: GradientBundle, state: AdamState,
              lr: Optional[float] = None):
    """One bias-corrected Adam update. Returns ``(new_model, new_state)``.

    ``lr`` overrides ``state.lr`` for this step (used by learning-rate schedules).
    """
    params = model.parameters()
    if len(grads.params) != len(params) or len(state.m) != len(params):
        raise InputError("gradient/state structure does not match the model")
    for p, g, m in zip(params, grads.params, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise InputError(f"shape mismatch {p.shape} vs {g.shape} vs {m.shape}")
    lr = state.lr if lr is None else lr
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads.params, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(lr=state.lr, beta1=b1, beta2=b2, eps=state.eps,
                          step=t, m=new_m, v=new_v)
    return model.with_parameters(new_params), new_state


def step_decay(base_lr: float, epoch: int, every: int = 10, factor: float = 0.1) -> float:
    """Learning rate for a zero-based ``epoch`` under step decay."""
    if every <= 0:
        return base_lr
    return base_lr * factor ** (epoch // every)


def finite_diff_gradient(loss_fn: Callable[[MlpModel], float], model: MlpModel,
                         h: float = 1e-5, relative: bool = False) -> GradientBundle:
    """Central-difference gradient of ``loss_fn`` at ``model``.

    With ``relative=True`` the step for parameter ``w`` is ``h * max(1, |w|)``.
    """
    if not h > 0:
        raise InputError("finite-difference step must be positive")
    params = [p.copy() for p in model.parameters()]
    grads = []
    for t, p in enumerate(params):
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            step = h * max(1.0, abs(orig)) if relative else h
            flat[idx] = orig + step
            up = float(loss_fn(model.with_parameters(params)))
            flat[idx] = orig - step
            down = float(loss_fn(model.with_parameters(params)))
            flat[idx] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise InputError(
                    f"non-finite loss while probing parameter tensor {t}, index {idx}")
            gflat[idx] = (up - down) / (2.0 * step)
        grads.append(g)
    return GradientBundle(params=grads)


def relative_error(a, b) -> float:
    """Norm-wise relative discrepancy ||a - b|| / max(||a||, ||b||)."""
    a = np.ravel(a)
    b = np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(model: MlpModel, path) -> Path:
    """Write ``model`` as an uncompressed ``.npz`` archive.

    Entries: ``meta`` (JSON text with version, activation, bias flag and
    layer shapes), then ``W0, W1, ...`` and, if present, ``b0, b1, ...``
    stored as little-endian float64 in C (row-major) order.
    """
    path = Path(path)
    meta = {
        "format": "noisypairs-mlp",
        "version": CHECKPOINT_VERSION,
        "activation": model.activation,
        "bias": model.has_bias,
        "shapes": [list(w.shape) for w in model.weights],
    }
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    for k, w in enumerate(model.weights):
        arrays[f"W{k}"] = np.ascontiguousarray(w, dtype="<f8")
    if model.biases is not None:
        for k, b in enumerate(model.biases):
            arrays[f"b{k}"] = np.ascontiguousarray(b, dtype="<f8")
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> MlpModel:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("format") != "noisypairs-mlp":
                raise FormatError("not a model checkpoint", path=path)
            n = len(meta["shapes"])
            weights = [data[f"W{k}"].astype(np.float64) for k in range(n)]
            biases = ([data[f"b{k}"].astype(np.float64) for k in range(n)]
                      if meta["bias"] else None)
    except (KeyError, ValueError, OSError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"unreadable checkpoint ({exc})", path=path) from exc
    for w, shape in zip(weights, meta["shapes"]):
        if list(w.shape) != shape:
            raise FormatError(f"layer shape {w.shape} disagrees with header {shape}",
                              path=path)
    return MlpModel(weights, biases, meta["activation"])
