"""Analytic benchmarks and the synthetic plasma-diffusion closure."""
from __future__ import annotations

import math

import numpy as np

from ..core import Domain, TruthModel

# Deuterium and argon masses in deuterium-mass units
DEUTERIUM_MASS = 1.0
ARGON_MASS = 39.948 / 2.014102


def rosenbrock(x) -> float:
    """Rosenbrock function, sum of 100 (x[i+1] - x[i]^2)^2 + (1 - x[i])^2."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("rosenbrock needs a vector with at least two components")
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def rosenbrock_batch(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] < 2:
        raise ValueError("rosenbrock needs at least two dimensions")
    return np.sum(100.0 * (X[:, 1:] - X[:, :-1] ** 2) ** 2 + (1.0 - X[:, :-1]) ** 2, axis=1)


def rosenbrock_grad(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    t = x[1:] - x[:-1] ** 2
    g[:-1] += -400.0 * x[:-1] * t - 2.0 * (1.0 - x[:-1])
    g[1:] += 200.0 * t
    return g


class RosenbrockTruth(TruthModel):
    def __init__(self, dims: int, nominal_cost: float = 1.0):
        if dims < 2:
            raise ValueError("rosenbrock needs at least two dimensions")
        self.dim_in = dims
        self.dim_out = 1
        self.nominal_cost = nominal_cost

    def evaluate(self, x, seed: int = 0) -> np.ndarray:
        return np.array([rosenbrock(x)])

    def evaluate_many(self, X, seed: int = 0) -> np.ndarray:
        return rosenbrock_batch(X)[:, None]


def rosenbrock_domain(dims: int, lo: float = -2.0, hi: float = 2.0) -> Domain:
    return Domain.box(lo, hi, dims)


def coulomb_log(n_total: float, T: float) -> float:
    return max(2.0, math.log(1.0 + T ** 1.5 / math.sqrt(n_total) * 1e10))


def synthetic_closure(n1, n2, T, Z1, Z2, m1: float = DEUTERIUM_MASS, m2: float = ARGON_MASS):
    """Synthetic mutual-diffusion closure ``(D11, D12, D22)``.

    ``D_ab = T^(5/2) / ((n1 + n2) sqrt(mu_ab) (Z_a Z_b)^2 lnL)`` with reduced mass
    ``mu_ab`` in deuterium units and ``lnL = max(2, ln(1 + 1e10 T^(3/2) / sqrt(n1 + n2)))``.
    Densities in cm^-3, temperature in eV; the prefactor is 1 in synthetic units.
    """
    if n1 <= 0 or n2 <= 0:
        raise ValueError("densities must be positive")
    if T <= 0:
        raise ValueError("temperature must be positive")
    n = n1 + n2
    lnl = coulomb_log(n, T)
    base = T ** 2.5 / (n * lnl)

    def d(ma, mb, za, zb):
        mu = ma * mb / (ma + mb)
        return base / (math.sqrt(mu) * (za * zb) ** 2)

    return (d(m1, m1, Z1, Z1), d(m1, m2, Z1, Z2), d(m2, m2, Z2, Z2))


# the five-dimensional closure input box: (n1, n2, T, Z1, Z2)
ICF_BOUNDS = ((1e22, 1e25), (1e22, 1e25), (50.0, 150.0), (1.0, 18.0), (1.0, 18.0))


def icf_domain() -> Domain:
    return Domain(
        bounds=ICF_BOUNDS,
        log_scaled=(True, True, False, True, True),
        names=("n1", "n2", "T", "Z1", "Z2"),
    )


class SyntheticClosureTruth(TruthModel):
    """Truth model wrapping :func:`synthetic_closure` over ``(n1, n2, T, Z1, Z2)``."""

    dim_in = 5
    dim_out = 3

    def __init__(self, m1: float = DEUTERIUM_MASS, m2: float = ARGON_MASS, nominal_cost: float = 1.0):
        self.m1 = m1
        self.m2 = m2
        self.nominal_cost = nominal_cost

    def evaluate(self, x, seed: int = 0) -> np.ndarray:
        n1, n2, T, Z1, Z2 = (float(v) for v in x)
        return np.array(synthetic_closure(n1, n2, T, Z1, Z2, self.m1, self.m2))
