"""Thin-plate radial basis function regression with a linear polynomial tail."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Domain, ScaleBridgeError, normalize


class RbfFitError(ScaleBridgeError):
    """The augmented interpolation system could not be solved."""


def thin_plate(r: np.ndarray) -> np.ndarray:
    """phi(r) = r^2 log r, with phi(0) = 0."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = r[pos] ** 2 * np.log(r[pos])
    return out


def _distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d2 = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * A @ B.T
    return np.sqrt(np.maximum(d2, 0.0))


def _poly(U: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((U.shape[0], 1)), U])


@dataclass(frozen=True, eq=False)
class RbfSurrogate:
    """Fitted thin-plate RBF; ``weights`` and ``poly`` hold one column per output.

    When ``domain`` is set, :meth:`predict` takes raw inputs and normalizes
    them (with extrapolation allowed); otherwise inputs are already in the
    unit cube.
    """

    centers: np.ndarray
    weights: np.ndarray
    poly: np.ndarray
    lam: float
    domain: Domain | None = None
    residual: float = 0.0

    @property
    def n_outputs(self) -> int:
        return self.weights.shape[1]

    def _unit(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.domain is not None:
            return normalize(self.domain, X, extrapolate=True)
        return X

    def predict_unit(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, dtype=float))
        out = np.empty((U.shape[0], self.n_outputs))
        # chunked to bound the kernel matrix size
        for s in range(0, U.shape[0], 2048):
            block = U[s:s + 2048]
            out[s:s + 2048] = thin_plate(_distances(block, self.centers)) @ self.weights + _poly(block) @ self.poly
        return out

    def predict(self, X) -> np.ndarray:
        return self.predict_unit(self._unit(X))

    def far_from_data(self, X) -> np.ndarray:
        """True where the nearest center is farther than the unit-cube diameter."""
        U = self._unit(X)
        diameter = np.sqrt(self.centers.shape[1])
        return _distances(U, self.centers).min(axis=1) > diameter


def rbf_fit(U, y, lam: float = 0.0, domain: Domain | None = None) -> RbfSurrogate:
    """Solve ``[[Phi + lam I, P], [P^T, 0]] [w; c] = [y; 0]``.

    ``U`` holds unit-cube inputs unless ``domain`` is given, in which case
    raw inputs are normalized first.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if domain is not None:
        U = normalize(domain, U, extrapolate=True)
    y = np.asarray(y, dtype=float)
    Y = y[:, None] if y.ndim == 1 else y
    n, d = U.shape
    if Y.shape[0] != n:
        raise ValueError("inputs and targets differ in length")
    if lam < 0:
        raise ValueError("regularization must be non-negative")
    if n < d + 2:
        raise RbfFitError(f"need at least {d + 2} points for a {d}-dimensional fit, got {n}")
    if lam == 0 and len(np.unique(U, axis=0)) < n:
        raise RbfFitError("duplicate centers make the system singular; use lam > 0 or deduplicate")
    P = _poly(U)
    A = np.zeros((n + d + 1, n + d + 1))
    A[:n, :n] = thin_plate(_distances(U, U)) + lam * np.eye(n)
    A[:n, n:] = P
    A[n:, :n] = P.T
    rhs = np.vstack([Y, np.zeros((d + 1, Y.shape[1]))])
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise RbfFitError(f"singular RBF system ({exc}); use lam > 0 or deduplicate") from exc
    resid = np.linalg.norm(A @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if not np.all(np.isfinite(sol)) or resid > 1e-8:
        raise RbfFitError(f"RBF system poorly conditioned (residual {resid:.3g}); use lam > 0")
    return RbfSurrogate(centers=U, weights=sol[:n], poly=sol[n:], lam=float(lam), domain=domain, residual=float(resid))


def rbf_predict(s: RbfSurrogate, x) -> np.ndarray | float:
    """Prediction at one point (scalar for single-output fits) or many."""
    x = np.asarray(x, dtype=float)
    out = s.predict(x)
    if x.ndim == 1:
        out = out[0]
        return float(out[0]) if out.size == 1 else out
    return out
