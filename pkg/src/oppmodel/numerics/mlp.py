"""Two-hidden-layer ReLU classifier with hand-written backprop and Adam."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass
class MlpParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    @property
    def n_inputs(self) -> int:
        return self.W1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.W3.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in PARAM_NAMES]

    def astype(self, dtype) -> "MlpParams":
        return MlpParams(*(a.astype(dtype) for a in self.arrays()))

    def copy(self) -> "MlpParams":
        return MlpParams(*(a.copy() for a in self.arrays()))

    @classmethod
    def zeros_like(cls, other: "MlpParams") -> "MlpParams":
        return cls(*(np.zeros_like(a) for a in other.arrays()))


def init_params(n_inputs: int = 22, n_classes: int = 4, hidden: int = 128,
                rng: np.random.Generator | None = None, dtype=np.float32) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    rng = rng if rng is not None else np.random.default_rng(0)

    def layer(fan_out, fan_in):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(dtype)

    return MlpParams(
        layer(hidden, n_inputs), np.zeros(hidden, dtype),
        layer(hidden, hidden), np.zeros(hidden, dtype),
        layer(n_classes, hidden), np.zeros(n_classes, dtype),
    )


def relu(x):
    return np.maximum(x, 0)


def mlp_forward(params: MlpParams, x):
    """Return (logits, h1, h2) for one input vector or a batch of rows."""
    x = np.asarray(x)
    if x.shape[-1] != params.n_inputs:
        raise ValueError(f"expected {params.n_inputs} features, got {x.shape[-1]}")
    h1 = relu(x @ params.W1.T + params.b1)
    h2 = relu(h1 @ params.W2.T + params.b2)
    logits = h2 @ params.W3.T + params.b3
    return logits, h1, h2


def softmax(logits):
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, label):
    """Cross-entropy and its gradient w.r.t. the logits.

    Works on a single logit vector with an int label, or a batch with an
    int array; for a batch the loss is the mean and the gradient is scaled
    accordingly.
    """
    logits = np.asarray(logits)
    z = logits - np.max(logits, axis=-1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - logsumexp
    probs = np.exp(logp)
    if logits.ndim == 1:
        label = int(label)
        grad = probs.copy()
        grad[label] -= 1
        return float(-logp[label]), grad
    label = np.asarray(label)
    n = logits.shape[0]
    rows = np.arange(n)
    loss = float(-logp[rows, label].mean())
    grad = probs.copy()
    grad[rows, label] -= 1
    return loss, grad / n


def mlp_backward(params: MlpParams, x, label):
    """Loss and exact gradients of softmax cross-entropy through both ReLU layers."""
    x = np.asarray(x)
    single = x.ndim == 1
    if single:
        x = x[None, :]
        label = np.array([label])
    logits, h1, h2 = mlp_forward(params, x)
    loss, d_logits = softmax_xent(logits, label)

    dW3 = d_logits.T @ h2
    db3 = d_logits.sum(axis=0)
    d_h2 = (d_logits @ params.W3) * (h2 > 0)
    dW2 = d_h2.T @ h1
    db2 = d_h2.sum(axis=0)
    d_h1 = (d_h2 @ params.W2) * (h1 > 0)
    dW1 = d_h1.T @ x
    db1 = d_h1.sum(axis=0)
    return loss, MlpParams(dW1, db1, dW2, db2, dW3, db3)


def mlp_loss(params: MlpParams, x, label) -> float:
    x = np.asarray(x)
    if x.ndim == 1:
        x, label = x[None, :], np.array([label])
    logits, _, _ = mlp_forward(params, x)
    return softmax_xent(logits, label)[0]


def predict(params: MlpParams, x) -> np.ndarray:
    logits, _, _ = mlp_forward(params, x)
    return np.argmax(logits, axis=-1)


@dataclass
class AdamState:
    m: MlpParams
    v: MlpParams
    t: int = 0
    lr: float = 4e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, **kwargs) -> "AdamState":
        return cls(MlpParams.zeros_like(params), MlpParams.zeros_like(params), **kwargs)


def adam_update(theta, grad, m, v, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam step on a single array. Returns (theta, m, v)."""
    m = beta1 * m + (1 - beta1) * grad
    v = beta2 * v + (1 - beta2) * np.square(grad)
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    return theta - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


def adam_step(state: AdamState, params: MlpParams, grads: MlpParams) -> tuple[AdamState, MlpParams]:
    t = state.t + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()):
        p2, m2, v2 = adam_update(p, g, m, v, t, state.lr, state.beta1, state.beta2, state.eps)
        new_p.append(p2.astype(p.dtype, copy=False))
        new_m.append(m2.astype(m.dtype, copy=False))
        new_v.append(v2.astype(v.dtype, copy=False))
    state = AdamState(MlpParams(*new_m), MlpParams(*new_v), t,
                      state.lr, state.beta1, state.beta2, state.eps)
    return state, MlpParams(*new_p)


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 64
    lr: float = 4e-4
    hidden: int = 128
    # keep the weights from the epoch with the best validation accuracy
    select_on_val: bool = True


@dataclass
class TrainResult:
    params: MlpParams
    best_epoch: int
    history: list[dict] = field(default_factory=list)


def accuracy_of(params: MlpParams, x, y) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(predict(params, x) == y))


def train_classifier(x_train, y_train, x_val=None, y_val=None, *, n_classes: int = 4,
                     cfg: TrainConfig | None = None, seed: int = 0) -> TrainResult:
    """Minibatch Adam on softmax cross-entropy, single precision."""
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(seed)
    x_train = np.asarray(x_train, dtype=np.float32)
    y_train = np.asarray(y_train, dtype=np.int64)
    has_val = x_val is not None and len(y_val) > 0
    if has_val:
        x_val = np.asarray(x_val, dtype=np.float32)
        y_val = np.asarray(y_val, dtype=np.int64)

    params = init_params(x_train.shape[1], n_classes, cfg.hidden, rng)
    state = AdamState.for_params(params, lr=cfg.lr)
    best, best_epoch, best_score = params.copy(), 0, -1.0
    history = []
    n = len(y_train)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = mlp_backward(params, x_train[idx], y_train[idx])
            state, params = adam_step(state, params, grads)
            total += loss * len(idx)
        row = {"epoch": epoch, "train_loss": total / n}
        if has_val:
            logits, _, _ = mlp_forward(params, x_val)
            row["val_loss"] = softmax_xent(logits, y_val)[0]
            row["val_accuracy"] = float(np.mean(np.argmax(logits, axis=1) == y_val))
            score = row["val_accuracy"]
        else:
            score = -row["train_loss"]
        history.append(row)
        if not cfg.select_on_val or score > best_score:
            best, best_epoch, best_score = params.copy(), epoch, score
    return TrainResult(best, best_epoch, history)


def save_params(params: MlpParams, path) -> None:
    """Flat text format: a `name rows cols` header line, then one CSV row of values."""
    with open(path, "w") as fh:
        for name, arr in zip(PARAM_NAMES, params.arrays()):
            shape = arr.shape if arr.ndim == 2 else (arr.shape[0], 1)
            fh.write(f"{name} {shape[0]} {shape[1]} {arr.dtype}\n")
            fh.write(",".join(repr(float(v)) for v in arr.ravel()) + "\n")


def load_params(path) -> MlpParams:
    with open(path) as fh:
        lines = fh.read().splitlines()
    arrays = {}
    for header, body in zip(lines[0::2], lines[1::2]):
        name, rows, cols, dtype = header.split()
        arr = np.array([float(v) for v in body.split(",")], dtype=dtype)
        arr = arr.reshape(int(rows), int(cols))
        arrays[name] = arr[:, 0] if name.startswith("b") else arr
    missing = set(PARAM_NAMES) - set(arrays)
    if missing:
        raise ValueError(f"model file {path} lacks {sorted(missing)}")
    return MlpParams(*(arrays[n] for n in PARAM_NAMES))
