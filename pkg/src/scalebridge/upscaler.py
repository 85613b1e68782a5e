"""Indirect scale bridging through frozen emulators.

A fine-scale emulator ``E_f`` maps fine inputs to an observable vector and a
coarse-scale emulator ``E_c`` maps coarse parameters to the same observable.
The upscaler ``U`` is trained so that ``E_c(U(x))`` reproduces ``E_f(x)``;
fine inputs never need to be matched to coarse inputs explicitly.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import Domain, ScaleBridgeError, split_indices
from .samplers.designs import latin_hypercube
from .surrogates.metrics import r_squared
from .surrogates.mlp import MlpSurrogate, TrainConfig, TrainingDiverged, _scale, init_mlp, mlp_train


class EmulatorQualityError(ScaleBridgeError):
    def __init__(self, message: str, scores: dict):
        super().__init__(message)
        self.scores = scores


def _fingerprint(net: MlpSurrogate) -> str:
    h = hashlib.sha256()
    for a in [*net.weights, *net.biases, net.x_mean, net.x_scale, net.y_mean, net.y_scale]:
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()


@dataclass(frozen=True, eq=False)
class EmulatorPair:
    fine: MlpSurrogate
    coarse: MlpSurrogate
    scores: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fine.n_outputs != self.coarse.n_outputs:
            raise ValueError("fine and coarse emulators must share the observable dimension")
        if self.fine.domain is not None or self.coarse.domain is not None or self.fine.log_targets or self.coarse.log_targets:
            raise ValueError("emulators must work in plain units")

    def fingerprints(self) -> tuple[str, str]:
        return _fingerprint(self.fine), _fingerprint(self.coarse)


def emulator_score(y_true, y_pred) -> float:
    """Smallest per-observable R^2.

    A constant observable has no R^2; it scores 1 when predicted to within 1%
    of its magnitude and 0 otherwise.
    """
    y_true = np.asarray(y_true, dtype=float).reshape(len(y_true), -1)
    y_pred = np.asarray(y_pred, dtype=float).reshape(y_true.shape)
    scores = []
    for j in range(y_true.shape[1]):
        t, p = y_true[:, j], y_pred[:, j]
        if np.ptp(t) == 0:
            scores.append(1.0 if np.max(np.abs(p - t)) <= 0.01 * max(1.0, abs(t[0])) else 0.0)
        else:
            scores.append(r_squared(t, p))
    return float(min(scores))


def _fit_scored(X, Y, cfg: TrainConfig, seed: int) -> tuple[MlpSurrogate, float]:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).reshape(len(X), -1)
    train, held = split_indices(len(X), 0.2, seed)
    net = mlp_train(X[train], Y[train], cfg)
    return net, emulator_score(Y[held], net.predict(X[held]))


def train_emulators(fine_data, coarse_data, cfg: TrainConfig = TrainConfig(), seed: int = 0,
                    r2_threshold: float = 0.9) -> EmulatorPair:
    """Fit both emulators, each scored on a held-out 20% split.

    ``fine_data`` and ``coarse_data`` are ``(inputs, observables)`` pairs.
    """
    Xf, Yf = (np.asarray(a, dtype=float) for a in fine_data)
    Xc, Yc = (np.asarray(a, dtype=float) for a in coarse_data)
    if not len(Xf) or not len(Xc):
        raise ValueError("both datasets must be nonempty")
    Yf = Yf.reshape(len(Xf), -1)
    Yc = Yc.reshape(len(Xc), -1)
    if Yf.shape[1] != Yc.shape[1]:
        raise ValueError(f"observable dimensions differ: fine {Yf.shape[1]}, coarse {Yc.shape[1]}")
    fine, sf = _fit_scored(Xf, Yf, cfg, seed)
    coarse, sc = _fit_scored(Xc, Yc, cfg, seed + 1)
    scores = {"fine_r2": sf, "coarse_r2": sc}
    if min(sf, sc) < r2_threshold:
        raise EmulatorQualityError(f"emulator held-out R^2 below {r2_threshold}: {scores}", scores)
    return EmulatorPair(fine, coarse, scores)


@dataclass(eq=False)
class Upscaler:
    net: MlpSurrogate
    loss_history: np.ndarray
    composite_rmse: float = float("nan")

    @property
    def n_params(self) -> int:
        return self.net.n_outputs

    def __call__(self, X) -> np.ndarray:
        return self.net.predict(X)


def composite_loss_and_grad(net: MlpSurrogate, coarse: MlpSurrogate, X, targets):
    """Mean squared observable mismatch and its gradient w.r.t. ``net``'s parameters.

    The gradient flows through ``coarse`` without touching its parameters.
    """
    X = np.atleast_2d(X)
    out, acts = net.forward(net.standardize_inputs(X))
    p = out * net.y_scale + net.y_mean
    diff = coarse.predict(p) - targets
    loss = float(np.mean(np.sum(diff * diff, axis=1)))
    _, gp = coarse.predict_with_input_grad(p, 2.0 * diff / len(X))
    gW, gb, _ = net.backward(acts, gp * net.y_scale)
    return loss, np.concatenate([a.ravel() for pair in zip(gW, gb) for a in pair])


def _composite_rmse(net, pair: EmulatorPair, X) -> float:
    diff = pair.coarse.predict(net.predict(X)) - pair.fine.predict(X)
    return float(np.sqrt(np.mean(diff * diff)))


def init_upscaler(pair: EmulatorPair, fine_inputs, cfg: TrainConfig) -> MlpSurrogate:
    X = np.atleast_2d(np.asarray(fine_inputs, dtype=float))
    n_params = pair.coarse.layer_sizes[0]
    rng = np.random.default_rng(cfg.seed)
    weights, biases = init_mlp((X.shape[1],) + tuple(cfg.hidden) + (n_params,), rng, cfg.init_scale)
    # outputs start in the coarse emulator's standardized parameter range
    return MlpSurrogate(weights, biases, X.mean(axis=0), _scale(X),
                        pair.coarse.x_mean.copy(), pair.coarse.x_scale.copy())


def train_upscaler(pair: EmulatorPair, fine_inputs, cfg: TrainConfig = TrainConfig(epochs=3000)) -> Upscaler:
    """Gradient descent with momentum on the composite loss; keeps the best parameters."""
    X = np.atleast_2d(np.asarray(fine_inputs, dtype=float))
    targets = pair.fine.predict(X)
    net = init_upscaler(pair, X, cfg)
    theta = net.get_params()
    velocity = np.zeros_like(theta)
    best, best_theta, since = np.inf, theta.copy(), 0
    history = []
    for epoch in range(cfg.epochs):
        net.set_params(theta)
        loss, grad = composite_loss_and_grad(net, pair.coarse, X, targets)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"composite loss became non-finite at epoch {epoch}", epoch)
        history.append(loss)
        if loss < best - cfg.min_delta:
            best, best_theta, since = loss, theta.copy(), 0
        else:
            since += 1
            if since >= cfg.patience:
                break
        velocity = cfg.momentum * velocity - cfg.learning_rate * grad
        theta = theta + velocity
    net.set_params(best_theta)
    return Upscaler(net, np.array(history), _composite_rmse(net, pair, X))


def best_constant_rmse(pair: EmulatorPair, fine_inputs, lower, upper, n_grid: int = 2001) -> tuple[np.ndarray, float]:
    """Best single coarse parameter for all fine inputs, by exhaustive search."""
    targets = pair.fine.predict(fine_inputs)
    P = _grid(lower, upper, n_grid)
    best_p, best_err = None, np.inf
    for p in P:
        diff = pair.coarse.predict(p[None, :]) - targets
        err = float(np.sqrt(np.mean(diff * diff)))
        if err < best_err:
            best_p, best_err = p, err
    return best_p, best_err


def _grid(lower, upper, n: int) -> np.ndarray:
    lower, upper = np.atleast_1d(lower).astype(float), np.atleast_1d(upper).astype(float)
    if lower.size == 1:
        return np.linspace(lower[0], upper[0], n)[:, None]
    return latin_hypercube(Domain(tuple(zip(lower, upper))), n, 0)


def direct_coupling(pair: EmulatorPair, fine_inputs, lower, upper, cfg: TrainConfig = TrainConfig(),
                    n_grid: int = 2001) -> tuple[MlpSurrogate, float]:
    """Baseline: match each fine input to its best coarse parameter, then regress."""
    X = np.atleast_2d(np.asarray(fine_inputs, dtype=float))
    targets = pair.fine.predict(X)
    P = _grid(lower, upper, n_grid)
    obs = pair.coarse.predict(P)
    matched = np.array([P[np.argmin(np.sum((obs - t) ** 2, axis=1))] for t in targets])
    net = mlp_train(X, matched, cfg)
    return net, _composite_rmse(net, pair, X)


# -- synthetic adsorption ----------------------------------------------------

PROFILE_Z = np.linspace(0.0, 1.0, 8)
WALL_DECAY = 0.2


def wall_shape(z=PROFILE_Z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.exp(-z / WALL_DECAY) + np.exp(-(1.0 - z) / WALL_DECAY)


def adsorption(T, w, rho, c1: float = 2.0, w0: float = 5.0):
    """Wall-peak density ``rho (1 + c1 exp(-w/w0) / sqrt(T))``."""
    return rho * (1.0 + c1 * np.exp(-np.asarray(w) / w0) / np.sqrt(T))


def fine_profile(X, c1: float = 2.0, w0: float = 5.0) -> np.ndarray:
    """Density profile across the pore relative to the bulk, at :data:`PROFILE_Z`."""
    X = np.atleast_2d(X)
    T, w, rho = X[:, 0], X[:, 1], X[:, 2]
    ratio = adsorption(T, w, rho, c1, w0) / rho
    return 1.0 + (ratio[:, None] - 1.0) * wall_shape()[None, :]


def coarse_profile(P) -> np.ndarray:
    """Coarse model: one wall/bulk ratio parameter shapes the whole profile."""
    beta = np.atleast_2d(P)[:, 0]
    return 1.0 + (beta[:, None] - 1.0) * wall_shape()[None, :]


@dataclass(frozen=True)
class AdsorptionConfig:
    c1: float = 2.0
    w0: float = 5.0
    T_range: tuple[float, float] = (0.7, 1.5)
    w_range: tuple[float, float] = (2.0, 20.0)
    rho_range: tuple[float, float] = (0.1, 0.8)
    beta_range: tuple[float, float] = (0.5, 3.0)
    n_fine: int = 400
    n_coarse: int = 200
    emulator_epochs: int = 3000
    upscaler_epochs: int = 3000
    hidden: tuple[int, ...] = (16, 16)
    seed: int = 0


@dataclass
class AdsorptionReport:
    config: AdsorptionConfig
    emulator_scores: dict
    composite_rmse: float
    observable_range: float
    constant_rmse: float
    direct_rmse: float
    rows: np.ndarray            # x (3), U(x), E_f(x) (8), E_c(U(x)) (8)
    upscaler: Upscaler

    @property
    def relative_rmse(self) -> float:
        return self.composite_rmse / self.observable_range if self.observable_range > 0 else 0.0

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "emulator_scores": self.emulator_scores,
            "composite_rmse": self.composite_rmse,
            "observable_range": self.observable_range,
            "relative_rmse": self.relative_rmse,
            "constant_baseline_rmse": self.constant_rmse,
            "direct_coupling_rmse": self.direct_rmse,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_csv(self, path=None) -> str:
        k = len(PROFILE_Z)
        header = ["T", "w", "rho", "U"] + [f"Ef{i}" for i in range(k)] + [f"Ec{i}" for i in range(k)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows([[repr(float(v)) for v in row] for row in self.rows])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def synthetic_adsorption_demo(cfg: AdsorptionConfig = AdsorptionConfig()) -> AdsorptionReport:
    fine_dom = Domain((cfg.T_range, cfg.w_range, cfg.rho_range))
    Xf = latin_hypercube(fine_dom, cfg.n_fine, cfg.seed)
    Yf = fine_profile(Xf, cfg.c1, cfg.w0)
    Pc = latin_hypercube(Domain((cfg.beta_range,)), cfg.n_coarse, cfg.seed + 1)
    Yc = coarse_profile(Pc)
    tc = TrainConfig(epochs=cfg.emulator_epochs, hidden=cfg.hidden, seed=cfg.seed)
    pair = train_emulators((Xf, Yf), (Pc, Yc), tc, seed=cfg.seed)
    up = train_upscaler(pair, Xf, TrainConfig(epochs=cfg.upscaler_epochs, hidden=cfg.hidden, seed=cfg.seed))
    _, const_rmse = best_constant_rmse(pair, Xf, cfg.beta_range[0], cfg.beta_range[1])
    _, direct_rmse = direct_coupling(pair, Xf, cfg.beta_range[0], cfg.beta_range[1], tc)
    U = up(Xf)
    rows = np.hstack([Xf, U, pair.fine.predict(Xf), pair.coarse.predict(U)])
    return AdsorptionReport(cfg, dict(pair.scores), up.composite_rmse, float(np.ptp(Yf)),
                            const_rmse, direct_rmse, rows, up)
