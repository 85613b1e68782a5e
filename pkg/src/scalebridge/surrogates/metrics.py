"""Scoring metrics for surrogates."""
from __future__ import annotations

import numpy as np

from ..core import ScaleBridgeError


class DegenerateMetric(ScaleBridgeError):
    """The metric is undefined for the supplied data (e.g. zero target variance)."""


def r_squared(y_true, y_pred) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    if y_true.size < 2:
        raise ValueError("need at least two values")
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise DegenerateMetric("target variance is zero; R^2 is undefined")
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    return 1.0 - ss_res / ss_tot


def r_squared_columns(Y_true, Y_pred) -> np.ndarray:
    Y_true = np.asarray(Y_true, dtype=float)
    Y_pred = np.asarray(Y_pred, dtype=float)
    if Y_true.ndim == 1:
        return np.array([r_squared(Y_true, Y_pred)])
    return np.array([r_squared(Y_true[:, j], Y_pred[:, j]) for j in range(Y_true.shape[1])])


def average_model_error(surrogate, truth, test_points, y_true=None) -> float:
    """Mean absolute surrogate error over ``test_points``.

    ``truth`` may be a TruthModel or ``None`` when ``y_true`` is supplied
    (saves re-running the truth model on a fixed test set).
    """
    X = np.atleast_2d(np.asarray(test_points, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("test set is empty")
    if y_true is None:
        y_true = truth.evaluate_many(X)
    y_true = np.asarray(y_true, dtype=float).reshape(X.shape[0], -1)
    pred = np.asarray(surrogate.predict(X), dtype=float).reshape(y_true.shape)
    return float(np.mean(np.abs(pred - y_true)))


def rmse(y_true, y_pred) -> float:
    d = np.asarray(y_true, dtype=float) - np.asarray(y_pred, dtype=float)
    return float(np.sqrt(np.mean(d * d)))
