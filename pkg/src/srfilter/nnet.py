"""Minimal feedforward binary classifier in numpy.

Forward pass, exact backpropagation, adaptive-moment minibatch SGD with
early stopping, and a line-oriented text model format. Double precision
throughout; this is the shared estimation engine for representations and
density ratios.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

# clamp applied inside the loss (and only there); stored parameters and raw
# forward outputs are never clamped to this interval
LOSS_CLAMP = 1e-12

# forward outputs are kept strictly inside (0, 1) even when the sigmoid
# saturates in double precision
_P_LO = np.nextafter(0.0, 1.0)
_P_HI = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class MLPSpec:
    """Layer sizes (input, hidden..., 1); hidden ReLU, logistic output."""

    layer_sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ValueError("need at least one hidden layer")
        if sizes[-1] != 1:
            raise ValueError("output layer size must be 1")
        if any(s <= 0 for s in sizes):
            raise ValueError("layer sizes must be positive")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def repr_dim(self) -> int:
        return self.layer_sizes[-2]


@dataclass
class MLPParams:
    """Per-layer weight matrices (fan_in, fan_out) and bias vectors."""

    weights: list
    biases: list

    def copy(self) -> "MLPParams":
        return MLPParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @property
    def layer_sizes(self) -> tuple:
        return tuple([self.weights[0].shape[0]] + [w.shape[1] for w in self.weights])

    def validate(self) -> None:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: bias shape {b.shape} mismatches weights {w.shape}")
            if i > 0 and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i}: input dim mismatches previous layer")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameter values")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 10
    validation_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stability: float = 1e-8
    seed: int | None = None

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.max_epochs <= 0:
            raise ValueError("learning_rate, batch_size, max_epochs must be positive")
        if self.patience <= 0:
            raise ValueError("patience must be positive")
        if not (0 < self.validation_fraction < 1):
            raise ValueError("validation_fraction must lie in (0, 1)")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1


def init_params(spec: MLPSpec, seed) -> MLPParams:
    """He-scaled Gaussian weights (variance 2/fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return MLPParams(weights, biases)


def _check_input(params: MLPParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    X = x[None, :] if squeeze else x
    if X.shape[1] != params.weights[0].shape[0]:
        raise ValueError(
            f"input dimension {X.shape[1]} mismatches network input {params.weights[0].shape[0]}")
    return X, squeeze


def forward_activations(params: MLPParams, x) -> list:
    """All post-activation layer outputs, input first, output probability last."""
    X, _ = _check_input(params, x)
    acts = [X]
    a = X
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        if i < last:
            a = np.maximum(z, 0.0)
        else:
            a = np.clip(expit(z), _P_LO, _P_HI)
        acts.append(a)
    return acts


def forward(params: MLPParams, x) -> np.ndarray:
    """Output probability in (0, 1); vector input gives a scalar."""
    X, squeeze = _check_input(params, x)
    p = forward_activations(params, X)[-1][:, 0]
    return float(p[0]) if squeeze else p


def loss_and_grad(params: MLPParams, X, y):
    """Mean binary cross-entropy and its exact gradients.

    Probabilities are clamped to [1e-12, 1-1e-12] inside the loss only; the
    gradient is exactly zero where the clamp is active.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("batch must be nonempty")

    acts = forward_activations(params, X)
    p = acts[-1][:, 0]
    p_c = np.clip(p, LOSS_CLAMP, 1.0 - LOSS_CLAMP)
    loss = float(np.mean(-y * np.log(p_c) - (1.0 - y) * np.log1p(-p_c)))

    n = X.shape[0]
    active = (p > LOSS_CLAMP) & (p < 1.0 - LOSS_CLAMP)
    delta = np.where(active, p - y, 0.0)[:, None] / n

    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.biases)
    for i in range(len(params.weights) - 1, -1, -1):
        a_prev = acts[i]
        grad_w[i] = a_prev.T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (acts[i] > 0)
    return loss, grad_w, grad_b


def params_to_vector(params: MLPParams) -> np.ndarray:
    return np.concatenate([a.ravel() for pair in zip(params.weights, params.biases) for a in pair])


def vector_to_params(vec: np.ndarray, spec: MLPSpec) -> MLPParams:
    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        weights.append(vec[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        pos += fan_in * fan_out
        biases.append(vec[pos : pos + fan_out].copy())
        pos += fan_out
    if pos != len(vec):
        raise ValueError("vector length mismatches spec")
    return MLPParams(weights, biases)


def _dataset_loss(params, X, y, batch=8192):
    total = 0.0
    for start in range(0, len(X), batch):
        sl = slice(start, min(start + batch, len(X)))
        loss, _, _ = loss_and_grad(params, X[sl], y[sl])
        total += loss * (sl.stop - sl.start)
    return total / len(X)


def train(spec: MLPSpec, config: TrainConfig, X, y, seed=None,
          epoch_transform=None) -> tuple[MLPParams, TrainHistory]:
    """Adaptive-moment minibatch training with early stopping.

    Returns the parameters from the best validation epoch. Fully
    deterministic given (spec, config, data, seed). `epoch_transform`, if
    given, maps (rng, X_train) to the inputs used for that epoch; it exists
    for noise-redraw experiments and defaults to the identity.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if seed is None:
        seed = config.seed
    if seed is None:
        raise ValueError("a seed is required (argument or config.seed)")
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("training data must contain both labels; the ratio is undefined otherwise")

    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_init, s_split, s_shuffle, s_transform = ss.spawn(4)
    params = init_params(spec, s_init)

    n = len(X)
    n_val = max(1, int(config.validation_fraction * n))
    perm = np.random.default_rng(s_split).permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    X_val, y_val = X[val_idx], y[val_idx]
    X_tr, y_tr = X[train_idx], y[train_idx]
    if len(np.unique(y_tr)) < 2:
        raise ValueError("training split lost one class; provide more data")

    m_w = [np.zeros_like(w) for w in params.weights]
    v_w = [np.zeros_like(w) for w in params.weights]
    m_b = [np.zeros_like(b) for b in params.biases]
    v_b = [np.zeros_like(b) for b in params.biases]
    t = 0
    lr, b1, b2, eps = config.learning_rate, config.beta1, config.beta2, config.eps_stability

    rng_shuffle = np.random.default_rng(s_shuffle)
    rng_transform = np.random.default_rng(s_transform)
    history = TrainHistory()
    best_val = np.inf
    best_params = params.copy()
    since_improve = 0

    for epoch in range(config.max_epochs):
        X_ep = epoch_transform(rng_transform, X_tr) if epoch_transform is not None else X_tr
        order = rng_shuffle.permutation(len(X_ep))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, gw, gb = loss_and_grad(params, X_ep[idx], y_tr[idx])
            epoch_loss += loss * len(idx)
            t += 1
            c1 = 1.0 - b1**t
            c2 = 1.0 - b2**t
            for i in range(len(params.weights)):
                m_w[i] = b1 * m_w[i] + (1 - b1) * gw[i]
                v_w[i] = b2 * v_w[i] + (1 - b2) * gw[i] ** 2
                params.weights[i] -= lr * (m_w[i] / c1) / (np.sqrt(v_w[i] / c2) + eps)
                m_b[i] = b1 * m_b[i] + (1 - b1) * gb[i]
                v_b[i] = b2 * v_b[i] + (1 - b2) * gb[i] ** 2
                params.biases[i] -= lr * (m_b[i] / c1) / (np.sqrt(v_b[i] / c2) + eps)
        history.train_loss.append(epoch_loss / len(order))
        val_loss = _dataset_loss(params, X_val, y_val)
        history.val_loss.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
            history.best_epoch = epoch
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= config.patience:
                break
    return best_params, history


# ---------------------------------------------------------------------------
# Model file format: line 1 "mlp v1", line 2 layer sizes, then one line per
# weight matrix row and one per bias vector, 17-significant-digit decimals.
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_mlp(fh_or_path, params: MLPParams) -> None:
    if hasattr(fh_or_path, "write"):
        _write_mlp(fh_or_path, params)
    else:
        with open(fh_or_path, "w", encoding="utf-8", newline="\n") as fh:
            _write_mlp(fh, params)


def _write_mlp(fh, params: MLPParams) -> None:
    fh.write("mlp v1\n")
    fh.write(" ".join(str(s) for s in params.layer_sizes) + "\n")
    for w, b in zip(params.weights, params.biases):
        for row in w:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")
        fh.write(" ".join(_fmt(v) for v in b) + "\n")


def read_mlp(fh_or_path) -> tuple[MLPSpec, MLPParams]:
    if hasattr(fh_or_path, "readline"):
        return _read_mlp(fh_or_path)
    with open(fh_or_path, "r", encoding="utf-8") as fh:
        return _read_mlp(fh)


def _read_mlp(fh) -> tuple[MLPSpec, MLPParams]:
    magic = fh.readline().strip()
    if magic != "mlp v1":
        raise ValueError(f"not an mlp v1 model (got {magic!r})")
    sizes = tuple(int(s) for s in fh.readline().split())
    spec = MLPSpec(sizes)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        rows = []
        for _ in range(fan_in):
            rows.append([float(v) for v in fh.readline().split()])
        w = np.array(rows)
        b = np.array([float(v) for v in fh.readline().split()])
        if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
            raise ValueError("model file truncated or malformed")
        weights.append(w)
        biases.append(b)
    params = MLPParams(weights, biases)
    params.validate()
    return spec, params
