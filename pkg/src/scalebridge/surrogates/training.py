"""Trainer callables and the small hyperparameter grid search.

A trainer is any callable ``trainer(X, Y, seed) -> surrogate`` where the
surrogate exposes ``predict(X) -> (n, k)`` in raw units.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..core import Domain, split_indices
from .mlp import MlpSurrogate, TrainConfig, mlp_train
from .rbf import RbfFitError, RbfSurrogate, rbf_fit

RBF_LAMBDA_GRID = (1e-10, 1e-8, 1e-6, 1e-4)
MLP_LR_GRID = (1e-3, 3e-3, 1e-2)


def _as_2d(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def dedupe(X, Y):
    """Collapse exactly repeated inputs, averaging their targets."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = _as_2d(Y)
    uniq, inverse = np.unique(X, axis=0, return_inverse=True)
    if len(uniq) == len(X):
        return X, Y
    inverse = inverse.ravel()
    sums = np.zeros((len(uniq), Y.shape[1]))
    np.add.at(sums, inverse, Y)
    counts = np.bincount(inverse, minlength=len(uniq))[:, None]
    # keep first-occurrence order for determinism
    first = np.array([np.flatnonzero(inverse == k)[0] for k in range(len(uniq))])
    order = np.argsort(first)
    return uniq[order], (sums / counts)[order]


@dataclass(frozen=True)
class RbfTrainer:
    lam: float = 1e-8
    domain: Domain | None = None

    def __call__(self, X, Y, seed: int = 0) -> RbfSurrogate:
        X, Y = dedupe(X, Y)
        return rbf_fit(X, Y, self.lam, domain=self.domain)

    def tuned(self, X, Y, seed: int = 0, grid=RBF_LAMBDA_GRID, val_fraction: float = 0.1):
        return tune_rbf(X, Y, grid=grid, val_fraction=val_fraction, seed=seed, domain=self.domain)


@dataclass(frozen=True)
class MlpTrainer:
    cfg: TrainConfig = TrainConfig()
    domain: Domain | None = None
    log_targets: bool = False

    def __call__(self, X, Y, seed: int = 0) -> MlpSurrogate:
        cfg = dataclasses.replace(self.cfg, seed=int(seed))
        return mlp_train(X, Y, cfg, domain=self.domain, log_targets=self.log_targets)

    def tuned(self, X, Y, seed: int = 0, grid=MLP_LR_GRID, val_fraction: float = 0.1):
        return tune_mlp(X, Y, self, grid=grid, val_fraction=val_fraction, seed=seed)


def _val_error(model, X, Y) -> float:
    return float(np.mean(np.abs(model.predict(X) - Y)))


def tune_rbf(X, Y, grid=RBF_LAMBDA_GRID, val_fraction: float = 0.1, seed: int = 0,
             domain: Domain | None = None):
    """Pick the regularization with the lowest validation error, then refit on everything.

    Returns ``(surrogate, best_lambda, {lambda: validation error})``.
    """
    X, Y = dedupe(X, Y)
    train, val = split_indices(len(X), val_fraction, seed)
    scores = {}
    for lam in grid:
        try:
            model = rbf_fit(X[train], Y[train], lam, domain=domain)
        except RbfFitError:
            continue
        scores[lam] = _val_error(model, X[val], Y[val]) if len(val) else 0.0
    if not scores:
        raise RbfFitError("no regularization value in the grid produced a solvable system")
    best = min(scores, key=lambda k: (scores[k], k))
    return rbf_fit(X, Y, best, domain=domain), best, scores


def tune_mlp(X, Y, trainer: MlpTrainer, grid=MLP_LR_GRID, val_fraction: float = 0.1, seed: int = 0):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = _as_2d(Y)
    train, val = split_indices(len(X), val_fraction, seed)
    scores = {}
    for lr in grid:
        t = dataclasses.replace(trainer, cfg=dataclasses.replace(trainer.cfg, learning_rate=lr))
        scores[lr] = _val_error(t(X[train], Y[train], seed), X[val], Y[val])
    best = min(scores, key=lambda k: (scores[k], k))
    t = dataclasses.replace(trainer, cfg=dataclasses.replace(trainer.cfg, learning_rate=best))
    return t(X, Y, seed), best, scores
