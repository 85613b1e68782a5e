"""Explicit finite-volume interdiffusion of two species on a 1-D grid."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..core import ScaleBridgeError


class CflViolation(ScaleBridgeError):
    """The requested time step exceeds the explicit stability margin."""


CFL_MARGIN = 0.4


@dataclass(frozen=True, eq=False)
class MixingState:
    n1: np.ndarray
    n2: np.ndarray
    T: np.ndarray
    dx: float
    t: float = 0.0
    step: int = 0

    def __post_init__(self):
        for name in ("n1", "n2", "T"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.n1.shape != self.n2.shape or self.n1.shape != self.T.shape or self.n1.ndim != 1:
            raise ValueError("n1, n2 and T must be 1-D arrays of equal length")
        if self.n1.size < 8:
            raise ValueError("need at least 8 cells")
        if np.any(self.n1 < 0) or np.any(self.n2 < 0):
            raise ValueError("densities must be non-negative")

    @property
    def n_cells(self) -> int:
        return self.n1.size

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    def mass(self) -> tuple[float, float]:
        return float(np.sum(self.n1) * self.dx), float(np.sum(self.n2) * self.dx)


def max_stable_dt(D_field, dx: float) -> float:
    dmax = float(np.max(D_field))
    return math.inf if dmax <= 0 else CFL_MARGIN * dx * dx / dmax


def _diffuse(n: np.ndarray, D_face: np.ndarray, dt: float, dx: float) -> np.ndarray:
    flux = np.zeros(n.size + 1)      # no-flux walls at both ends
    flux[1:-1] = -D_face * (n[1:] - n[:-1]) / dx
    return n - dt / dx * (flux[1:] - flux[:-1])


def coarse_step(state: MixingState, D_field, dt: float) -> MixingState:
    """Advance both species by ``dt`` with face-averaged diffusivity."""
    D = np.asarray(D_field, dtype=float)
    if D.shape != state.n1.shape:
        raise ValueError("D_field must have one value per cell")
    if np.any(D < 0) or not np.all(np.isfinite(D)):
        raise ValueError("diffusivities must be finite and non-negative")
    if dt > max_stable_dt(D, state.dx):
        raise CflViolation(f"dt={dt:.4g} exceeds {CFL_MARGIN} dx^2 / max(D) = {max_stable_dt(D, state.dx):.4g}")
    D_face = 0.5 * (D[1:] + D[:-1])
    n1 = _diffuse(state.n1, D_face, dt, state.dx)
    n2 = _diffuse(state.n2, D_face, dt, state.dx)
    return replace(state, n1=np.maximum(n1, 0.0), n2=np.maximum(n2, 0.0), t=state.t + dt, step=state.step + 1)


def erf_profile(x, x0: float, left: float, right: float, D: float, t: float) -> np.ndarray:
    """Infinite-domain diffusion of a step from ``left`` to ``right`` at ``x0``."""
    from math import erf

    x = np.asarray(x, dtype=float)
    if t <= 0:
        return np.where(x < x0, left, right)
    z = (x - x0) / (2.0 * math.sqrt(D * t))
    return left + 0.5 * (right - left) * (1.0 + np.vectorize(erf)(z))
