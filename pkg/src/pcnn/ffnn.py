"""Feedforward networks with explicit parameters and hand-written backprop.

Two training regimes are supported:

* ``gradient``: mini-batch Adam on the configured loss.
* ``random_readout``: hidden layers are drawn at random and frozen, and only
  the affine readout is fit by ridge regression.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y
from threadpoolctl import threadpool_limits

from .numerics import make_rng, ridge_solve, sigmoid

ACTIVATIONS = ("relu", "sigmoid", "tanh", "identity")
LOSSES = ("mae", "mse", "binary_cross_entropy")
MODES = ("gradient", "random_readout")

BCE_EPS = 1e-12
# Logit targets used when a classifier readout is fit by least squares.
LOGIT_TARGET = 4.0

FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss) or could not start."""


def _activate(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return sigmoid(z)
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _activate_grad(name, z, a):
    # a is _activate(name, z), passed in to avoid recomputation
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass
class Mlp:
    """Affine layers with a shared hidden activation and an affine readout.

    ``weights[j]`` has shape ``(layer_dims[j], layer_dims[j + 1])``.
    """

    layer_dims: tuple
    weights: list
    biases: list
    activation: str = "relu"

    def __post_init__(self):
        self.layer_dims = tuple(int(v) for v in self.layer_dims)
        if len(self.layer_dims) < 2:
            raise ValueError("an Mlp needs at least input and output dimensions")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias vector per layer is required")
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[j], self.layer_dims[j + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise ValueError(f"layer {j}: expected weight {shape}, got {w.shape} / bias {b.shape}")

    @property
    def n_inputs(self):
        return self.layer_dims[0]

    @property
    def n_outputs(self):
        return self.layer_dims[-1]

    @property
    def hidden_dims(self):
        return self.layer_dims[1:-1]

    def parameter_count(self) -> int:
        dims = self.layer_dims
        return sum(dims[j] * dims[j + 1] + dims[j + 1] for j in range(len(dims) - 1))

    def forward(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise ValueError(f"expected inputs with {self.n_inputs} columns, got shape {X.shape}")
        a = X
        last = len(self.weights) - 1
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if j == last else _activate(self.activation, z)
        return a

    def hidden_features(self, X) -> np.ndarray:
        """Activations of the last hidden layer (the readout's input)."""
        a = np.asarray(X, dtype=float)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = _activate(self.activation, a @ w + b)
        return a

    def copy(self) -> "Mlp":
        return Mlp(
            self.layer_dims,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for wb in zip(self.weights, self.biases) for p in wb])

    def hidden_digest(self) -> str:
        """SHA-256 over the hidden layers' parameters."""
        h = hashlib.sha256()
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h.update(np.ascontiguousarray(w).tobytes())
            h.update(np.ascontiguousarray(b).tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "format": "pcnn.mlp",
            "version": FORMAT_VERSION,
            "layer_dims": list(self.layer_dims),
            "activation": self.activation,
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Mlp":
        if payload.get("format") != "pcnn.mlp":
            raise ValueError("not a serialized Mlp")
        if payload.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported Mlp format version {payload.get('version')}")
        dims = [int(v) for v in payload["layer_dims"]]
        weights = [
            np.asarray(w, dtype=float).reshape(dims[j], dims[j + 1])
            for j, w in enumerate(payload["weights"])
        ]
        biases = [np.asarray(b, dtype=float) for b in payload["biases"]]
        return cls(tuple(dims), weights, biases, payload["activation"])


def parameter_count(model: Mlp) -> int:
    return model.parameter_count()


def init_mlp(dims, activation="relu", rng=None, scheme="gradient") -> Mlp:
    """Draw initial parameters.

    ``scheme="gradient"``: He-scaled Gaussian weights for relu, 1/sqrt(fan_in)
    otherwise, zero biases. ``scheme="random"``: hidden weights Gaussian with
    std 1/sqrt(fan_in) and biases uniform on [-1, 1], so frozen random features
    land in the activation's nonlinear range.
    """
    rng = make_rng(None) if rng is None else rng
    dims = [int(v) for v in dims]
    weights, biases = [], []
    n_layers = len(dims) - 1
    for j in range(n_layers):
        fan_in, fan_out = dims[j], dims[j + 1]
        readout = j == n_layers - 1
        if scheme == "random" and not readout:
            w = rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in)
            b = rng.uniform(-1.0, 1.0, fan_out)
        else:
            gain = 2.0 if (activation == "relu" and not readout) else 1.0
            w = rng.standard_normal((fan_in, fan_out)) * math.sqrt(gain / fan_in)
            b = np.zeros(fan_out)
        weights.append(w)
        biases.append(b)
    return Mlp(tuple(dims), weights, biases, activation)


def binary_cross_entropy(pred, label):
    """``-[l ln p + (1 - l) ln(1 - p)]`` with p clamped into [1e-12, 1 - 1e-12]."""
    p = np.clip(np.asarray(pred, dtype=float), BCE_EPS, 1.0 - BCE_EPS)
    label = np.asarray(label, dtype=float)
    out = -(label * np.log(p) + (1.0 - label) * np.log1p(-p))
    return out if out.ndim else float(out)


def loss_value(loss, out, Y) -> float:
    """Mean loss over all entries. For binary_cross_entropy ``out`` holds logits."""
    if loss == "mse":
        return float(np.mean((out - Y) ** 2))
    if loss == "mae":
        return float(np.mean(np.abs(out - Y)))
    if loss == "binary_cross_entropy":
        # softplus(z) - l z equals BCE(sigmoid(z), l) without the clamp
        return float(np.mean(np.logaddexp(0.0, out) - Y * out))
    raise ValueError(f"unknown loss {loss!r}")


def loss_grad(loss, out, Y) -> np.ndarray:
    scale = 1.0 / out.size
    if loss == "mse":
        return 2.0 * (out - Y) * scale
    if loss == "mae":
        # sign subgradient, 0 at an exact zero residual
        return np.sign(out - Y) * scale
    if loss == "binary_cross_entropy":
        return (sigmoid(out) - Y) * scale
    raise ValueError(f"unknown loss {loss!r}")


def per_sample_loss(loss, out, Y) -> np.ndarray:
    """Per-row loss, averaged over output columns."""
    if loss == "mse":
        return np.mean((out - Y) ** 2, axis=1)
    if loss == "mae":
        return np.mean(np.abs(out - Y), axis=1)
    if loss == "binary_cross_entropy":
        return np.mean(np.logaddexp(0.0, out) - Y * out, axis=1)
    raise ValueError(f"unknown loss {loss!r}")


def backprop(model: Mlp, X, Y, loss):
    """Loss and its gradients with respect to every weight and bias."""
    acts = [X]
    pres = []
    last = len(model.weights) - 1
    a = X
    for j, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pres.append(z)
        a = z if j == last else _activate(model.activation, z)
        acts.append(a)
    out = acts[-1]
    value = loss_value(loss, out, Y)
    dz = loss_grad(loss, out, Y)
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.weights)
    for j in range(last, -1, -1):
        grads_w[j] = acts[j].T @ dz
        grads_b[j] = dz.sum(axis=0)
        if j > 0:
            da = dz @ model.weights[j].T
            dz = da * _activate_grad(model.activation, pres[j - 1], acts[j])
    return value, grads_w, grads_b


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "gradient"
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    ridge_lambda: float = 1e-6
    seed: int = 0
    loss: str = "mae"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.mode == "gradient" and not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive in gradient mode")
        if self.mode == "random_readout" and self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be nonnegative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def with_seed(self, seed) -> "TrainConfig":
        return replace(self, seed=int(seed))


@dataclass
class TrainResult:
    model: Mlp
    loss_curve: list = field(default_factory=list)

    @property
    def final_loss(self):
        return self.loss_curve[-1] if self.loss_curve else float("nan")


def _as_2d_targets(y):
    y = np.asarray(y, dtype=float)
    return y[:, None] if y.ndim == 1 else y


def train_ffnn(X, y, dims, config: TrainConfig, activation="relu") -> TrainResult:
    """Train a network with layer sizes ``dims`` on ``(X, y)``.

    ``dims[0]`` must equal the input width and ``dims[-1]`` the target width.
    BLAS is pinned to one thread so results do not depend on where the call
    runs (main process or a worker).
    """
    X = np.asarray(X, dtype=float)
    Y = _as_2d_targets(y)
    if X.shape[0] == 0:
        raise TrainingError("cannot train on an empty dataset")
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and y have different row counts")
    dims = [int(v) for v in dims]
    if dims[0] != X.shape[1] or dims[-1] != Y.shape[1]:
        raise ValueError(f"dims {dims} do not match data shapes {X.shape} -> {Y.shape}")
    # divergence is detected and raised below, so numpy's overflow warnings are noise
    with threadpool_limits(limits=1), np.errstate(over="ignore", invalid="ignore"):
        if config.mode == "random_readout":
            return _fit_random_readout(X, Y, dims, config, activation)
        return _fit_adam(X, Y, dims, config, activation)


def _fit_random_readout(X, Y, dims, config, activation):
    rng = make_rng(config.seed)
    model = init_mlp(dims, activation, rng, scheme="random")
    H = model.hidden_features(X)
    T = Y
    if config.loss == "binary_cross_entropy":
        T = LOGIT_TARGET * (2.0 * Y - 1.0)
    # intercept is left unpenalized by centering
    h_mean = H.mean(axis=0)
    t_mean = T.mean(axis=0)
    W = ridge_solve(H - h_mean, T - t_mean, config.ridge_lambda)
    model.weights[-1] = W
    model.biases[-1] = t_mean - h_mean @ W
    value = loss_value(config.loss, model.forward(X), Y)
    if not np.isfinite(value):
        raise TrainingError("non-finite training loss after readout fit")
    return TrainResult(model, [value])


def _fit_adam(X, Y, dims, config, activation):
    rng = make_rng(config.seed)
    model = init_mlp(dims, activation, rng, scheme="gradient")
    params = [p for wb in zip(model.weights, model.biases) for p in wb]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, eps, lr = config.adam_beta1, config.adam_beta2, config.adam_eps, config.learning_rate
    n = X.shape[0]
    batch = min(config.batch_size, n)
    step = 0
    curve = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            value, gw, gb = backprop(model, X[idx], Y[idx], config.loss)
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}")
            total += value * len(idx)
            step += 1
            grads = [g for pair in zip(gw, gb) for g in pair]
            c1 = 1.0 - b1 ** step
            c2 = 1.0 - b2 ** step
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= b1
                mi += (1.0 - b1) * g
                vi *= b2
                vi += (1.0 - b2) * g * g
                p -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)
        curve.append(total / n)
    return TrainResult(model, curve)


def gradient_check(model: Mlp, X, Y, loss, step=1e-5, floor=1e-6) -> float:
    """Largest relative gap between backprop and central finite differences.

    The relative error of one parameter is ``|a - f| / max(|a|, |f|, floor)``
    so that parameters with vanishing gradient are compared absolutely.
    """
    X = np.asarray(X, dtype=float)
    Y = _as_2d_targets(Y)
    probe = model.copy()
    _, gw, gb = backprop(probe, X, Y, loss)
    analytic = [g for pair in zip(gw, gb) for g in pair]
    tensors = [p for pair in zip(probe.weights, probe.biases) for p in pair]
    worst = 0.0
    for tensor, grad in zip(tensors, analytic):
        flat = tensor.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_value(loss, probe.forward(X), Y)
            flat[i] = orig - step
            down = loss_value(loss, probe.forward(X), Y)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(gflat[i]), abs(numeric), floor)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst


class FFNNRegressor(BaseEstimator, RegressorMixin):
    """Single feedforward network behind the scikit-learn estimator API.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int
        Widths of the hidden layers.
    activation : {'relu', 'sigmoid', 'tanh', 'identity'}
    mode : {'gradient', 'random_readout'}
        Adam on every layer, or frozen random hidden layers plus a ridge readout.
    loss : {'mae', 'mse'}
    epochs, batch_size, learning_rate : Adam settings (gradient mode).
    ridge_lambda : float
        Readout penalty (random_readout mode).
    random_state : int
    """

    def __init__(self, hidden_layer_sizes=(64,), activation="relu", mode="gradient",
                 loss="mae", epochs=200, batch_size=64, learning_rate=1e-3,
                 ridge_lambda=1e-6, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.mode = mode
        self.loss = loss
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.ridge_lambda = ridge_lambda
        self.random_state = random_state

    def _config(self):
        return TrainConfig(
            mode=self.mode, epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, ridge_lambda=self.ridge_lambda,
            seed=0 if self.random_state is None else int(self.random_state), loss=self.loss,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._y_1d = np.asarray(y).ndim == 1
        Y = _as_2d_targets(y)
        dims = [X.shape[1], *self.hidden_layer_sizes, Y.shape[1]]
        result = train_ffnn(X, Y, dims, self._config(), self.activation)
        self.model_ = result.model
        self.loss_curve_ = result.loss_curve
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        out = self.model_.forward(X)
        return out[:, 0] if self._y_1d else out

    @property
    def n_parameters_(self):
        check_is_fitted(self, "model_")
        return self.model_.parameter_count()
