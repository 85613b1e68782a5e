"""Space-filling designs: uniform random, Latin hypercube and sparsity sampling."""
from __future__ import annotations

import numpy as np

from ..core import Domain, denormalize, normalize


def _check_n(n: int) -> None:
    if n < 1:
        raise ValueError("need at least one point")


def uniform_unit(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(size=(n, d))


def uniform_random(domain: Domain, n: int, seed) -> np.ndarray:
    """i.i.d. uniform points in the normalized cube, mapped back to the domain."""
    _check_n(n)
    rng = np.random.default_rng(seed)
    return denormalize(domain, uniform_unit(domain.dims, n, rng))


def lhs_unit(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    u = np.empty((n, d))
    for j in range(d):
        u[:, j] = (rng.permutation(n) + rng.uniform(size=n)) / n
    return u


def latin_hypercube(domain: Domain, n: int, seed) -> np.ndarray:
    """One point per stratum ``[k/n, (k+1)/n)`` in every dimension."""
    _check_n(n)
    rng = np.random.default_rng(seed)
    u = lhs_unit(domain.dims, n, rng)
    return denormalize(domain, u)


def sparsity_sample(domain: Domain, existing, n: int, m_candidates: int, seed) -> np.ndarray:
    """Greedy max-min selection from ``m_candidates`` uniform candidates.

    Each pick maximizes the normalized-space distance to the existing points
    and the points already picked; ties go to the lowest candidate index.
    """
    _check_n(n)
    if m_candidates < 10 * n:
        raise ValueError("need at least 10 candidates per selected point")
    rng = np.random.default_rng(seed)
    cand = uniform_unit(domain.dims, m_candidates, rng)
    existing = np.asarray(existing, dtype=float).reshape(-1, domain.dims)
    mind = np.full(m_candidates, np.inf)
    if len(existing):
        E = normalize(domain, existing, extrapolate=True)
        for block in range(0, len(E), 1024):
            d = np.linalg.norm(cand[:, None, :] - E[None, block:block + 1024, :], axis=-1)
            mind = np.minimum(mind, d.min(axis=1))
    picked = []
    for _ in range(n):
        k = int(np.argmax(mind))
        picked.append(k)
        mind = np.minimum(mind, np.linalg.norm(cand - cand[k], axis=1))
        mind[k] = -np.inf
    return denormalize(domain, cand[picked])


def ball_unit(center, radius: float, n: int, rng: np.random.Generator, clip: bool = True) -> np.ndarray:
    """Uniform points in a Euclidean ball in the unit cube (rejected outside the cube)."""
    center = np.asarray(center, dtype=float)
    d = center.size
    out = []
    while sum(len(o) for o in out) < n:
        g = rng.standard_normal((2 * n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = radius * rng.uniform(size=(2 * n, 1)) ** (1.0 / d)
        pts = center + g * r
        if clip:
            pts = pts[np.all((pts >= 0) & (pts <= 1), axis=1)]
        out.append(pts)
    return np.vstack(out)[:n]
