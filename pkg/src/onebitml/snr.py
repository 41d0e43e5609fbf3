"""Neural SNR estimation from one-bit training statistics.

A plain numpy multilayer perceptron maps the per-antenna ``+1`` frequencies of
one training block to an SNR in dB:

    x_0 = features,  x_l = act(W_l x_{l-1} + b_l),  gamma_hat = w_L^T x_{L-1} + b_L

Training is mini-batch Adam on mean squared error with the best-validation
parameters kept. The estimate feeds the de-noising step as
``N0_hat = rho / 10**(gamma_hat / 10)``.

Features are the ``+1`` frequencies over the first sub-block of a training
block, which iDL leaves un-dithered (later sub-blocks are dithered and carry
almost no SNR information once the dither dominates). Before entering the
network they are folded to ``|2f - 1|`` and sorted, since the SNR does not
depend on the sign or the antenna order; see :func:`snr_features`.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from .core import db_to_linear, draw_rayleigh_channel, enumerate_symbol_book
from .exceptions import ContractError, TrainingError
from .learning import observe_training

__all__ = [
    "ACTIVATIONS",
    "MlpParams",
    "SnrSample",
    "snr_features",
    "fit_snr_estimator",
    "init_mlp",
    "mlp_forward",
    "mlp_loss_and_grads",
    "mlp_train",
    "generate_snr_dataset",
    "dataset_arrays",
    "estimate_snr_db",
    "estimate_noise_power",
    "save_mlp",
    "load_mlp",
]

log = logging.getLogger(__name__)


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(x):
    return (x > 0).astype(float)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _sigmoid_grad(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "sigmoid": (_sigmoid, _sigmoid_grad),
    "tanh": (np.tanh, lambda x: 1.0 - np.tanh(x) ** 2),
}


@dataclass
class MlpParams:
    """Weights ``W_l`` are ``(n_out, n_in)``; the last layer has one output row."""

    weights: list
    biases: list
    activation: str = "relu"
    history: list = field(default_factory=list, repr=False)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ContractError("need one bias vector per weight matrix")
        for w_prev, w in zip(self.weights, self.weights[1:]):
            if w.shape[1] != w_prev.shape[0]:
                raise ContractError("layer dimensions do not chain")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[0],):
                raise ContractError("bias length must equal the layer's output count")
        if self.weights[-1].shape[0] != 1:
            raise ContractError("output layer must be scalar")

    @property
    def depth(self):
        return len(self.weights)

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    @property
    def sizes(self):
        return [self.input_dim] + [w.shape[0] for w in self.weights]

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                         self.activation, meta=dict(self.meta))

    def flat(self):
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


@dataclass(frozen=True)
class SnrSample:
    features: np.ndarray
    label: float


def init_mlp(sizes, rng, activation="relu"):
    """He-initialised weights, zero biases. ``sizes = [in, hidden..., 1]``."""
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.standard_normal((n_out, n_in)) * np.sqrt(2.0 / n_in))
        biases.append(np.zeros(n_out))
    return MlpParams(weights, biases, activation)


def _forward_cache(params, X):
    act, _ = ACTIVATIONS[params.activation]
    pre, post = [], [X]
    x = X
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = x @ w.T + b
        x = act(z)
        pre.append(z)
        post.append(x)
    out = x @ params.weights[-1].T + params.biases[-1]
    return out[:, 0], pre, post


def mlp_forward(params, features):
    """SNR estimate in dB; a 2-D ``features`` gives one estimate per row."""
    X = np.asarray(features, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params.input_dim:
        raise ContractError(f"expected {params.input_dim} features, got {X.shape[1]}")
    out, _, _ = _forward_cache(params, X)
    return float(out[0]) if single else out


def mlp_loss_and_grads(params, X, y):
    """Mean squared error over the batch and its gradient for every layer.

    Returns ``(loss, grad_weights, grad_biases)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    _, act_grad = ACTIVATIONS[params.activation]
    out, pre, post = _forward_cache(params, X)
    err = out - y
    loss = float(np.mean(err**2))
    delta = (2.0 / len(y)) * err[:, None]
    grad_w = [None] * params.depth
    grad_b = [None] * params.depth
    for layer in range(params.depth - 1, -1, -1):
        grad_w[layer] = delta.T @ post[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer:
            delta = (delta @ params.weights[layer]) * act_grad(pre[layer - 1])
    return loss, grad_w, grad_b


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        arrays = params.weights + params.biases
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, params, grad_w, grad_b):
        self.t += 1
        arrays = params.weights + params.biases
        grads = grad_w + grad_b
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def dataset_arrays(samples):
    if not samples:
        raise ContractError("empty dataset")
    X = np.stack([s.features for s in samples])
    y = np.array([s.label for s in samples], dtype=float)
    return X, y


def mlp_train(dataset, hidden=(64, 64), epochs=200, batch_size=64, learning_rate=1e-3,
              validation_fraction=0.1, seed=0, activation="relu", patience=None):
    """Fit an MLP regressor with mini-batch Adam.

    ``dataset`` is a list of :class:`SnrSample` or an ``(X, y)`` pair. A
    ``validation_fraction`` of the rows (at least one) is held out and the
    parameters with the lowest validation MSE are returned; ``history`` on the
    result holds ``(epoch, train_mse, val_mse)`` with epoch 0 the untrained
    network. The output bias starts at the mean label.
    """
    if isinstance(dataset, tuple):
        X, y = (np.asarray(a, dtype=float) for a in dataset)
    else:
        X, y = dataset_arrays(dataset)
    if len(y) == 0:
        raise ContractError("empty dataset")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(y))
    n_val = max(1, int(round(validation_fraction * len(y)))) if len(y) > 1 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(train_idx) == 0:
        train_idx = val_idx
    if n_val == 0:
        val_idx = train_idx
    X_tr, y_tr, X_val, y_val = X[train_idx], y[train_idx], X[val_idx], y[val_idx]

    params = init_mlp([X.shape[1], *hidden, 1], rng, activation)
    params.biases[-1][:] = y_tr.mean()
    opt = _Adam(params, learning_rate)

    def val_mse(p):
        with np.errstate(over="ignore", invalid="ignore"):
            return float(np.mean((mlp_forward(p, X_val) - y_val) ** 2))

    best = params.copy()
    best_val = val_mse(params)
    with np.errstate(over="ignore"):
        history = [(0, float(np.mean((mlp_forward(params, X_tr) - y_tr) ** 2)), best_val)]
    stale = 0
    for epoch in range(1, epochs + 1):
        perm = rng.permutation(len(y_tr))
        total = 0.0
        for start in range(0, len(perm), batch_size):
            batch = perm[start:start + batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, gw, gb = mlp_loss_and_grads(params, X_tr[batch], y_tr[batch])
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch offset {start}; "
                    f"last validation MSE {history[-1][2]:.4g}, learning rate {learning_rate}"
                )
            opt.step(params, gw, gb)
            total += loss * len(batch)
        current = val_mse(params)
        history.append((epoch, total / len(perm), current))
        if current < best_val:
            best, best_val, stale = params.copy(), current, 0
        else:
            stale += 1
        if patience is not None and stale >= patience:
            break
    log.debug("mlp_train: best validation MSE %.4g after %d epochs", best_val, len(history) - 1)
    best.history = history
    return best


def snr_features(frequencies):
    """Fold ``+1`` frequencies to ``|2f - 1|`` and sort each row ascending."""
    f = np.asarray(frequencies, dtype=float)
    return np.sort(np.abs(2.0 * f - 1.0), axis=-1)


def generate_snr_dataset(config, train, snr_grid_db, samples_per_point, rng):
    """Labelled training blocks for the SNR regressor.

    Each sample draws a fresh Rayleigh channel and a uniformly random symbol
    vector, runs the training dither schedule of ``train`` and records the
    per-antenna ``+1`` frequency over the first sub-block. Labels are the grid
    SNRs in dB.
    """
    if len(snr_grid_db) == 0:
        raise ContractError("empty SNR grid")
    book = enumerate_symbol_book(config)
    samples = []
    for snr_db in snr_grid_db:
        cfg = config.with_snr_db(snr_db)
        for _ in range(samples_per_point):
            H = draw_rayleigh_channel(cfg, rng)
            k = rng.integers(book.count)
            record = observe_training(book.vectors_real[k:k + 1], H, cfg, train, rng)
            freq = record.plus_counts(0)[0] / train.subblock_length
            samples.append(SnrSample(freq, float(snr_db)))
    return samples


def fit_snr_estimator(samples, block_length, **train_kwargs):
    """:func:`mlp_train` on :func:`snr_features` of the samples.

    ``block_length`` (observations per feature vector) is stored in
    ``params.meta`` so callers can cut matching blocks later.
    """
    X, y = dataset_arrays(samples)
    params = mlp_train((snr_features(X), y), **train_kwargs)
    params.meta["features"] = "folded-sorted"
    params.meta["block_length"] = int(block_length)
    return params


def estimate_snr_db(params, frequencies):
    """SNR estimate in dB from raw ``+1`` frequencies.

    Several rows (e.g. one per training symbol) are averaged in dB.
    """
    return float(np.mean(mlp_forward(params, snr_features(np.atleast_2d(frequencies)))))


def estimate_noise_power(params, features, transmit_power=1.0):
    return transmit_power / float(db_to_linear(estimate_snr_db(params, features)))


def save_mlp(params, path, comment=None):
    """Text format: magic line, activation, layer sizes, then per layer the
    weight rows (one line each, row-major) followed by one bias line."""
    with open(path, "w", newline="\n") as fh:
        fh.write("onebitml-mlp 1\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"# {line}\n")
        for key, value in sorted(params.meta.items()):
            fh.write(f"meta {key} {value}\n")
        fh.write(f"activation {params.activation}\n")
        fh.write("sizes " + " ".join(str(s) for s in params.sizes) + "\n")
        for w, b in zip(params.weights, params.biases):
            for row in w:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
            fh.write(" ".join(repr(float(v)) for v in b) + "\n")


def load_mlp(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0] != "onebitml-mlp 1":
        raise ContractError(f"{path}: not an onebitml MLP file")
    meta = {}
    pos = 1
    while lines[pos].startswith("meta "):
        _, key, value = lines[pos].split(maxsplit=2)
        meta[key] = int(value) if value.lstrip("-").isdigit() else value
        pos += 1
    activation = lines[pos].split(maxsplit=1)[1]
    sizes = [int(v) for v in lines[pos + 1].split()[1:]]
    rows = iter(lines[pos + 2:])
    weights, biases = [], []
    try:
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            w = np.array([[float(v) for v in next(rows).split()] for _ in range(n_out)])
            b = np.array([float(v) for v in next(rows).split()])
            if w.shape != (n_out, n_in) or b.shape != (n_out,):
                raise ContractError(f"{path}: layer shape does not match header")
            weights.append(w)
            biases.append(b)
    except StopIteration:
        raise ContractError(f"{path}: truncated weight data") from None
    return MlpParams(weights, biases, activation, meta=meta)
