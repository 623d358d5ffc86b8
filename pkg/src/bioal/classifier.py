"""The two committee members and their supporting pieces.

* A per-segment multi-label MLP (ReLU hidden layers, sigmoid outputs)
  trained from scratch with Adam and a reduce-on-plateau learning-rate
  schedule, early-stopped on validation mAP.
* A nearest-neighbour classifier that propagates the pooled label of the
  closest labeled sample in cosine distance.
* A validation-grid threshold search that binarizes MLP scores.

All training math runs in float64; training is deterministic given the
seeds in the configs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import evaluation
from .distance import cosine_distance_matrix

# Pre-activations are clipped here so sigmoid outputs stay strictly inside
# (0, 1) in float64; the backward pass zeroes gradients in the clipped zone.
SIGMOID_CLIP = 36.0

BCE_EPS = 1e-7


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    n_classes: int
    hidden_dims: tuple[int, ...] = (256,)
    init_seed: int = 0

    def validate(self) -> None:
        dims = (self.input_dim, self.n_classes, *self.hidden_dims)
        if any(int(d) < 1 for d in dims):
            raise ValueError(f"all layer dims must be >= 1, got {dims}")


@dataclass
class MlpModel:
    weights: list[np.ndarray]  # [in, out] per layer
    biases: list[np.ndarray]  # [out] per layer
    config: MlpConfig

    def copy(self) -> "MlpModel":
        return MlpModel(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            config=self.config,
        )


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 5e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    plateau_patience_epochs: int = 5
    lr_halving_factor: float = 0.5
    min_lr: float = 5e-6
    max_epochs: int = 120
    early_stop_patience_epochs: int = 15
    train_seed: int = 0

    def validate(self) -> None:
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.learning_rate <= 0 or self.min_lr <= 0 or self.min_lr > self.learning_rate:
            raise ValueError("need 0 < min_lr <= learning_rate")
        if not 0.0 < self.lr_halving_factor < 1.0:
            raise ValueError("lr_halving_factor must lie in (0, 1)")
        if self.plateau_patience_epochs < 1 or self.early_stop_patience_epochs < 1:
            raise ValueError("patience values must be >= 1")


@dataclass(frozen=True)
class ThresholdPolicy:
    grid_start: float = 0.01
    grid_end: float = 0.99
    grid_step: float = 0.01
    objective: str = "macro_f1"

    def grid(self) -> np.ndarray:
        if self.objective != "macro_f1":
            raise ValueError(f"unknown threshold objective {self.objective!r}")
        n = int(np.floor((self.grid_end - self.grid_start) / self.grid_step + 0.5)) + 1
        if n < 1:
            raise ValueError("empty threshold grid")
        return np.round(self.grid_start + self.grid_step * np.arange(n), 10)


def init_mlp(cfg: MlpConfig) -> MlpModel:
    """Fan-scaled uniform init (bound sqrt(6 / (fan_in + fan_out))), zero biases."""
    cfg.validate()
    rng = np.random.default_rng(cfg.init_seed)
    dims = (cfg.input_dim, *cfg.hidden_dims, cfg.n_classes)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights=weights, biases=biases, config=cfg)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -SIGMOID_CLIP, SIGMOID_CLIP)))


def _forward_batch(model: MlpModel, x: np.ndarray, keep_cache: bool = False):
    """Probabilities for a [M, D] batch; optionally the per-layer cache."""
    a = np.asarray(x, dtype=np.float64)
    activations = [a]
    zs = []
    n_layers = len(model.weights)
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        zs.append(z)
        a = _sigmoid(z) if layer == n_layers - 1 else np.maximum(z, 0.0)
        activations.append(a)
    if keep_cache:
        return a, activations, zs
    return a


def forward_mlp(model: MlpModel, x) -> np.ndarray:
    """Per-segment probabilities for one sample's [T, D] embedding matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a [T, D] input")
    return _forward_batch(model, x)


def bce_loss(pred, target) -> float:
    """Mean binary cross-entropy; predictions clamped to [1e-7, 1 - 1e-7]."""
    p = np.clip(np.asarray(pred, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(target, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def bce_gradients(model: MlpModel, x, y) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Analytic gradients of bce_loss(forward(x), y) wrt weights and biases."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    probs, activations, zs = _forward_batch(model, x, keep_cache=True)
    scale = 1.0 / probs.size
    delta = (probs - y) * scale
    delta[np.abs(zs[-1]) >= SIGMOID_CLIP] = 0.0  # flat zone of the clipped sigmoid
    grad_w = [np.empty(0)] * len(model.weights)
    grad_b = [np.empty(0)] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        grad_w[layer] = activations[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (zs[layer - 1] > 0.0)
    return grad_w, grad_b


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    t: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; pure (inputs are left untouched)."""
    if t < 1:
        raise ValueError("step counter t must be >= 1")
    new_params, new_m, new_v = [], [], []
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if weight_decay:
            g = g + weight_decay * p
        m_t = beta1 * m + (1.0 - beta1) * g
        v_t = beta2 * v + (1.0 - beta2) * (g * g)
        step = lr * (m_t / bc1) / (np.sqrt(v_t / bc2) + eps)
        new_params.append(p - step)
        new_m.append(m_t)
        new_v.append(v_t)
    return new_params, AdamState(m=new_m, v=new_v)


def _pack(model: MlpModel) -> list[np.ndarray]:
    params = []
    for w, b in zip(model.weights, model.biases):
        params.extend((w, b))
    return params


def _unpack(params: list[np.ndarray], cfg: MlpConfig) -> MlpModel:
    weights = [params[i] for i in range(0, len(params), 2)]
    biases = [params[i] for i in range(1, len(params), 2)]
    return MlpModel(weights=weights, biases=biases, config=cfg)


def _safe_val_map(probs: np.ndarray, truth: np.ndarray) -> float:
    # All-negative validation truth leaves mAP undefined; treat as no signal.
    try:
        val_map, _ = evaluation.mean_average_precision(probs, truth)
    except ValueError:
        return 0.0
    return val_map


def train_mlp(ds, labeled, val, tcfg: TrainConfig, mcfg: MlpConfig) -> MlpModel:
    """Train a fresh MLP on the segments of the labeled samples.

    Mini-batches are seeded shuffles of all labeled segments; after each
    epoch the validation segment-level mAP decides plateau LR halving,
    early stopping, and which parameter snapshot is returned.
    """
    tcfg.validate()
    labeled = list(labeled)
    val = list(val)
    if not labeled:
        raise ValueError("labeled set is empty")
    if not val:
        raise ValueError("validation set is empty")

    d = ds.embeddings.shape[2]
    c = ds.labels.shape[2]
    lab_idx = np.asarray(labeled, dtype=np.intp)
    val_idx = np.asarray(val, dtype=np.intp)
    x_train = ds.embeddings[lab_idx].reshape(-1, d).astype(np.float64)
    y_train = ds.labels[lab_idx].reshape(-1, c).astype(np.float64)
    x_val = ds.embeddings[val_idx].reshape(-1, d).astype(np.float64)
    y_val = ds.labels[val_idx].reshape(-1, c)

    model = init_mlp(mcfg)
    params = _pack(model)
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng(tcfg.train_seed)

    lr = tcfg.learning_rate
    t = 0
    best_map = -np.inf
    best_params = [p.copy() for p in params]
    plateau_counter = 0
    stall_counter = 0
    n_rows = x_train.shape[0]

    for _ in range(tcfg.max_epochs):
        perm = rng.permutation(n_rows)
        for start in range(0, n_rows, tcfg.batch_size):
            batch = perm[start : start + tcfg.batch_size]
            current = _unpack(params, mcfg)
            grad_w, grad_b = bce_gradients(current, x_train[batch], y_train[batch])
            grads = []
            for gw, gb in zip(grad_w, grad_b):
                grads.extend((gw, gb))
            t += 1
            params, state = adam_step(
                params,
                grads,
                state,
                t,
                lr,
                beta1=tcfg.adam_beta1,
                beta2=tcfg.adam_beta2,
                eps=tcfg.adam_eps,
                weight_decay=tcfg.weight_decay,
            )

        val_probs = _forward_batch(_unpack(params, mcfg), x_val)
        val_map = _safe_val_map(val_probs, y_val)
        if val_map > best_map:
            best_map = val_map
            best_params = [p.copy() for p in params]
            plateau_counter = 0
            stall_counter = 0
        else:
            plateau_counter += 1
            stall_counter += 1
            if plateau_counter >= tcfg.plateau_patience_epochs:
                lr = max(lr * tcfg.lr_halving_factor, tcfg.min_lr)
                plateau_counter = 0
            if stall_counter >= tcfg.early_stop_patience_epochs:
                break

    return _unpack(best_params, mcfg)


def nn_predict_batch(ref_embeddings, ref_labels, queries) -> np.ndarray:
    """Pooled label of each query's nearest reference (cosine distance).

    References must be passed in ascending-index order: distance ties pick
    the first reference, which is then the lowest index.
    """
    ref_embeddings = np.asarray(ref_embeddings, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    if ref_embeddings.shape[0] == 0:
        raise ValueError("labeled reference set is empty")
    dists = cosine_distance_matrix(queries, ref_embeddings)
    nearest = np.argmin(dists, axis=1)  # first minimum -> lowest reference index
    return np.asarray(ref_labels)[nearest]


def predict_nn(ds, labeled, query_pooled) -> np.ndarray:
    """Label propagation from the nearest labeled sample; ties -> lowest index."""
    labeled = sorted(int(i) for i in labeled)
    if not labeled:
        raise ValueError("labeled set is empty")
    idx = np.asarray(labeled, dtype=np.intp)
    query = np.asarray(query_pooled, dtype=np.float64).reshape(1, -1)
    return nn_predict_batch(ds.pooled_embeddings[idx], ds.pooled_labels[idx], query)[0]


def predict_segment_scores(model: MlpModel, segments) -> np.ndarray:
    """Per-segment probabilities for a [M, T, D] batch, shaped [M, T, C]."""
    segments = np.asarray(segments, dtype=np.float64)
    m, t, d = segments.shape
    probs = _forward_batch(model, segments.reshape(m * t, d))
    return probs.reshape(m, t, -1)


def max_pooled_scores(model: MlpModel, segments) -> np.ndarray:
    """Temporal max of per-segment probabilities for a [M, T, D] batch."""
    return predict_segment_scores(model, segments).max(axis=1)


def binarize_pooled_mlp(model: MlpModel, x, threshold: float) -> np.ndarray:
    """Max-pool the forward probabilities over T, then apply `>= threshold`."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    pooled = forward_mlp(model, x).max(axis=0)
    return (pooled >= threshold).astype(np.uint8)


def select_threshold(model: MlpModel, ds, val, policy: ThresholdPolicy) -> float:
    """Smallest grid threshold maximizing segment-level macro F1 on `val`.

    All-negative validation truth scores 0 everywhere, so the grid start
    wins by the smallest-value tie rule.
    """
    val = list(val)
    if not val:
        raise ValueError("validation set is empty")
    d = ds.embeddings.shape[2]
    val_idx = np.asarray(val, dtype=np.intp)
    x_val = ds.embeddings[val_idx].reshape(-1, d).astype(np.float64)
    truth = ds.labels[val_idx].reshape(-1, ds.labels.shape[2])
    probs = _forward_batch(model, x_val)

    best_t = None
    best_f1 = -1.0
    for t in policy.grid():
        try:
            f1 = evaluation.f1_macro(probs >= t, truth)
        except ValueError:
            f1 = 0.0
        if f1 > best_f1:
            best_f1 = f1
            best_t = float(t)
    return best_t
