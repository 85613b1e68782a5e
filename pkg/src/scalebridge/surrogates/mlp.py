"""Small fully connected network trained with explicit backpropagation.

Hidden layers use tanh, the output layer is linear.  Inputs and targets are
standardized with statistics frozen at fit time; the loss is the mean squared
error in standardized target units.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..core import Domain, ScaleBridgeError, normalize

log = logging.getLogger(__name__)


class TrainingDiverged(ScaleBridgeError):
    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    learning_rate: float = 1e-2
    momentum: float = 0.9
    init_scale: float = 1.0
    seed: int = 0
    patience: int = 200
    min_delta: float = 0.0
    hidden: tuple[int, ...] = (32, 32)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass(eq=False)
class MlpSurrogate:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: np.ndarray
    y_scale: np.ndarray
    domain: Domain | None = None
    log_targets: bool = False
    loss_history: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(W.shape[1] for W in self.weights)

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[1]

    # -- parameter vector helpers ------------------------------------------

    def get_params(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def set_params(self, theta: np.ndarray) -> None:
        k = 0
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = theta[k:k + W.size].reshape(W.shape).copy()
            k += W.size
            self.biases[i] = theta[k:k + b.size].reshape(b.shape).copy()
            k += b.size

    # -- forward / backward ------------------------------------------------

    def forward(self, Z: np.ndarray):
        """Standardized inputs -> standardized outputs, with cached activations."""
        acts = [Z]
        h = Z
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def backward(self, acts, grad_out: np.ndarray):
        """Gradients w.r.t. weights, biases and the standardized input."""
        gW = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            if i < len(self.weights) - 1:
                g = g * (1.0 - acts[i + 1] ** 2)
            gW[i] = acts[i].T @ g
            gb[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return gW, gb, g

    def loss_and_grad(self, Z: np.ndarray, T: np.ndarray):
        out, acts = self.forward(Z)
        diff = out - T
        loss = float(np.mean(diff * diff))
        gW, gb, _ = self.backward(acts, 2.0 * diff / diff.size)
        flat = np.concatenate([a.ravel() for pair in zip(gW, gb) for a in pair])
        return loss, flat

    # -- raw-unit interface ------------------------------------------------

    def standardize_inputs(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.domain is not None:
            X = normalize(self.domain, X, extrapolate=True)
        return (X - self.x_mean) / self.x_scale

    def predict(self, X) -> np.ndarray:
        out, _ = self.forward(self.standardize_inputs(X))
        y = out * self.y_scale + self.y_mean
        return 10.0 ** y if self.log_targets else y

    def predict_with_input_grad(self, X, grad_y: np.ndarray):
        """Predictions and the gradient of ``sum(grad_y * y)`` w.r.t. raw inputs.

        Only valid without a domain or log-target transform (used by the
        upscaler, which composes networks in plain units).
        """
        if self.domain is not None or self.log_targets:
            raise ValueError("input gradients need a plain-unit network")
        Z = self.standardize_inputs(X)
        out, acts = self.forward(Z)
        y = out * self.y_scale + self.y_mean
        _, _, gz = self.backward(acts, grad_y * self.y_scale)
        return y, gz / self.x_scale


def init_mlp(layer_sizes, rng: np.random.Generator, init_scale: float = 1.0) -> tuple[list, list]:
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(init_scale * rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _scale(a: np.ndarray) -> np.ndarray:
    s = a.std(axis=0)
    return np.where(s > 0, s, 1.0)


def mlp_train(X, Y, cfg: TrainConfig = TrainConfig(), domain: Domain | None = None,
              log_targets: bool = False) -> MlpSurrogate:
    """Full-batch gradient descent with momentum; keeps the best parameters seen.

    Training stops early when the loss has not improved by ``min_delta`` for
    ``patience`` epochs.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] < 10:
        raise ValueError("at least 10 training points are required")
    if X.shape[0] != Y.shape[0]:
        raise ValueError("inputs and targets differ in length")
    if domain is not None:
        X = normalize(domain, X, extrapolate=True)
    if log_targets:
        if np.any(Y <= 0):
            raise ValueError("log targets must be positive")
        Y = np.log10(Y)
    rng = np.random.default_rng(cfg.seed)
    sizes = (X.shape[1],) + tuple(cfg.hidden) + (Y.shape[1],)
    weights, biases = init_mlp(sizes, rng, cfg.init_scale)
    weights[-1][:, np.ptp(Y, axis=0) == 0] = 0.0     # constant targets are fit exactly from the start
    net = MlpSurrogate(
        weights=weights, biases=biases,
        x_mean=X.mean(axis=0), x_scale=_scale(X),
        y_mean=Y.mean(axis=0), y_scale=_scale(Y),
        domain=domain, log_targets=log_targets,
    )
    Z = (X - net.x_mean) / net.x_scale
    T = (Y - net.y_mean) / net.y_scale
    fit_network(net, Z, T, cfg)
    return net


def fit_network(net: MlpSurrogate, Z: np.ndarray, T: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    """Train ``net`` in place on standardized data; returns the loss history."""
    theta = net.get_params()
    velocity = np.zeros_like(theta)
    best_loss, best_theta, since_best = np.inf, theta.copy(), 0
    history = []
    for epoch in range(cfg.epochs):
        net.set_params(theta)
        loss, grad = net.loss_and_grad(Z, T)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss became non-finite at epoch {epoch}", epoch)
        history.append(loss)
        if loss < best_loss - cfg.min_delta:
            best_loss, best_theta, since_best = loss, theta.copy(), 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                log.debug("early stop at epoch %d", epoch)
                break
        velocity = cfg.momentum * velocity - cfg.learning_rate * grad
        theta = theta + velocity
    net.set_params(best_theta)
    net.loss_history = np.array(history)
    return net.loss_history
