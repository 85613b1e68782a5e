"""Desk-scale Lennard-Jones molecular dynamics in reduced units.

Velocity-Verlet integration with minimum-image pair forces, a truncated and
shifted potential, and velocity-rescaling equilibration.  Positions are kept
unwrapped so mean-squared displacements can be computed directly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..core import ScaleBridgeError

log = logging.getLogger(__name__)


class IntegrationBlowup(ScaleBridgeError):
    """Total energy became non-finite or wandered far from its initial value."""


@dataclass(frozen=True)
class MdConfig:
    n_particles: int = 108
    density: float = 0.8
    temperature: float = 1.0
    dt: float = 0.004
    n_equil: int = 2000
    n_prod: int = 20000
    cutoff: float = 2.5
    stride: int = 5
    rescale_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.dt <= 0.005:
            raise ValueError("timestep must lie in (0, 0.005]")
        if self.n_particles < 32:
            raise ValueError("at least 32 particles are required")
        if self.density <= 0 or self.temperature <= 0:
            raise ValueError("density and temperature must be positive")
        if self.cutoff < 0 or self.cutoff > 0.5 * self.box_length:
            raise ValueError(f"cutoff must lie in [0, {0.5 * self.box_length:.4g}] (half the box)")
        if self.stride < 1 or self.n_prod < self.stride:
            raise ValueError("production run must cover at least one stride")

    @property
    def box_length(self) -> float:
        return (self.n_particles / self.density) ** (1.0 / 3.0)


@dataclass
class Trajectory:
    """Frames of velocities (and unwrapped positions), shape ``(frames, N, 3)``."""

    velocities: np.ndarray
    dt_frame: float
    positions: np.ndarray | None = None
    total_energy: np.ndarray | None = None
    momentum: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.velocities.ndim != 3:
            raise ValueError("velocities must have shape (frames, particles, dim)")
        if not np.all(np.isfinite(self.velocities)):
            raise ValueError("trajectory contains non-finite velocities")

    @property
    def n_frames(self) -> int:
        return self.velocities.shape[0]

    def energy_drift(self) -> float:
        e = self.total_energy
        return float(np.max(np.abs(e - e[0])) / abs(e[0]))

    def max_momentum(self) -> float:
        return float(np.max(np.linalg.norm(self.momentum, axis=1)))

    def write_xyz(self, path) -> None:
        """Dump positions as an XYZ-style text file, one block per frame."""
        if self.positions is None:
            raise ValueError("trajectory has no positions")
        with open(path, "w") as fh:
            for k, frame in enumerate(self.positions):
                fh.write(f"{frame.shape[0]}\nframe {k} t={k * self.dt_frame:.6g}\n")
                for r in frame:
                    fh.write(f"LJ {r[0]:.10g} {r[1]:.10g} {r[2]:.10g}\n")


def fcc_lattice(n: int, box: float) -> np.ndarray:
    cells = int(np.ceil((n / 4) ** (1.0 / 3.0)))
    a = box / cells
    basis = np.array([[0, 0, 0], [0.5, 0.5, 0], [0.5, 0, 0.5], [0, 0.5, 0.5]])
    grid = np.array([[i, j, k] for i in range(cells) for j in range(cells) for k in range(cells)], dtype=float)
    sites = (grid[:, None, :] + basis[None, :, :]).reshape(-1, 3) * a
    return sites[:n] + 0.25 * a


def _min_pair_distance(pos: np.ndarray, box: float) -> float:
    d = pos[:, None, :] - pos[None, :, :]
    d -= box * np.round(d / box)
    r2 = np.sum(d * d, axis=-1)
    np.fill_diagonal(r2, np.inf)
    return float(np.sqrt(r2.min()))


def _pair_indices(n: int):
    i, j = np.triu_indices(n, k=1)
    return i, j


def lj_forces(pos: np.ndarray, box: float, cutoff: float, pairs=None):
    """Forces and potential energy for the truncated, shifted LJ potential."""
    n = pos.shape[0]
    if cutoff <= 0:
        return np.zeros_like(pos), 0.0
    i, j = pairs if pairs is not None else _pair_indices(n)
    d = pos[i] - pos[j]
    d -= box * np.round(d / box)
    r2 = np.einsum("ij,ij->i", d, d)
    inside = r2 < cutoff * cutoff
    d, r2 = d[inside], r2[inside]
    i, j = i[inside], j[inside]
    inv2 = 1.0 / r2
    inv6 = inv2 ** 3
    shift = 4.0 * (cutoff ** -12 - cutoff ** -6)
    pot = float(np.sum(4.0 * inv6 * (inv6 - 1.0) - shift))
    fij = (24.0 * inv2 * inv6 * (2.0 * inv6 - 1.0))[:, None] * d
    forces = np.empty_like(pos)
    for k in range(3):
        forces[:, k] = np.bincount(i, fij[:, k], minlength=n) - np.bincount(j, fij[:, k], minlength=n)
    return forces, pot


def _kinetic(v: np.ndarray) -> float:
    return 0.5 * float(np.sum(v * v))


def _instant_temperature(v: np.ndarray) -> float:
    dof = 3 * v.shape[0] - 3
    return 2.0 * _kinetic(v) / dof


def _initial_state(cfg: MdConfig, rng: np.random.Generator, attempts: int = 10):
    box = cfg.box_length
    for attempt in range(attempts):
        jitter = 0.0 if attempt == 0 else 0.02 * attempt
        pos = fcc_lattice(cfg.n_particles, box) + jitter * rng.standard_normal((cfg.n_particles, 3))
        if cfg.cutoff <= 0 or _min_pair_distance(pos, box) > 0.8:
            break
        log.warning("lattice init overlap on attempt %d, retrying", attempt)
    else:
        raise ScaleBridgeError("could not build an overlap-free initial lattice")
    v = rng.standard_normal((cfg.n_particles, 3))
    v -= v.mean(axis=0)
    v *= np.sqrt(cfg.temperature / _instant_temperature(v))
    return pos, v


def lj_md_run(cfg: MdConfig) -> Trajectory:
    """Equilibrate with velocity rescaling, then record an NVE production run."""
    rng = np.random.default_rng(cfg.seed)
    box = cfg.box_length
    pos, v = _initial_state(cfg, rng)
    pairs = _pair_indices(cfg.n_particles)
    f, pot = lj_forces(pos, box, cfg.cutoff, pairs)
    dt = cfg.dt
    half = 0.5 * dt

    def step(pos, v, f):
        v = v + half * f
        pos = pos + dt * v
        f, pot = lj_forces(pos, box, cfg.cutoff, pairs)
        v = v + half * f
        return pos, v, f, pot

    for i in range(cfg.n_equil):
        pos, v, f, pot = step(pos, v, f)
        if (i + 1) % cfg.rescale_every == 0:
            v *= np.sqrt(cfg.temperature / _instant_temperature(v))

    n_frames = cfg.n_prod // cfg.stride
    vel = np.empty((n_frames, cfg.n_particles, 3))
    xyz = np.empty((n_frames, cfg.n_particles, 3))
    energy = np.empty(n_frames)
    momentum = np.empty((n_frames, 3))
    e0 = _kinetic(v) + pot
    k = 0
    for i in range(n_frames * cfg.stride):
        pos, v, f, pot = step(pos, v, f)
        if (i + 1) % cfg.stride == 0:
            e = _kinetic(v) + pot
            if not np.isfinite(e) or abs(e - e0) > 0.5 * max(abs(e0), 1.0):
                raise IntegrationBlowup(f"energy diverged at production step {i + 1}: {e!r} vs {e0!r}")
            vel[k] = v
            xyz[k] = pos
            energy[k] = e
            momentum[k] = v.sum(axis=0)
            k += 1
    return Trajectory(
        velocities=vel,
        positions=xyz,
        dt_frame=dt * cfg.stride,
        total_energy=energy,
        momentum=momentum,
        meta={"box": box, "initial_energy": e0},
    )
