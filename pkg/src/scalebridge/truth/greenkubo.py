"""Velocity autocorrelation, Green-Kubo and Einstein self-diffusion estimators."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..core import TruthModel
from .md import MdConfig, Trajectory, lj_md_run


@dataclass(frozen=True)
class VacfSeries:
    C: np.ndarray
    dt: float

    def __post_init__(self):
        if len(self.C) < 2:
            raise ValueError("a VACF series needs at least two lags")

    @property
    def lags(self) -> np.ndarray:
        return np.arange(len(self.C)) * self.dt


@dataclass(frozen=True)
class GreenKuboResult:
    integral: float          # signed integral over the whole series
    plateau: float           # running integral averaged over the final 20% of lags
    running: np.ndarray

    @property
    def D(self) -> float:
        return self.plateau


@dataclass(frozen=True)
class MsdResult:
    D: float
    exponent: float
    diagnostic: str          # "diffusive", "non-diffusive" or "frozen"
    msd: np.ndarray
    lags: np.ndarray

    @property
    def diffusive(self) -> bool:
        return self.diagnostic == "diffusive"


def _autocorr_sum(a: np.ndarray, max_lag: int) -> np.ndarray:
    """sum over origins and trailing axes of a[t0] * a[t0 + lag], via zero-padded FFT."""
    n = a.shape[0]
    size = 1 << int(np.ceil(np.log2(2 * n)))
    fa = np.fft.rfft(a, n=size, axis=0)
    ac = np.fft.irfft(fa * np.conj(fa), n=size, axis=0)[: max_lag + 1]
    return ac.reshape(max_lag + 1, -1).sum(axis=1)


def vacf(traj: Trajectory, max_lag: int) -> VacfSeries:
    """C[t] averaged over particles and all time origins."""
    v = traj.velocities
    n = v.shape[0]
    if max_lag < 1 or max_lag >= n:
        raise ValueError(f"max_lag must lie in [1, {n - 1}]")
    counts = (n - np.arange(max_lag + 1)) * v.shape[1]
    C = _autocorr_sum(v, max_lag) / counts
    return VacfSeries(C=C, dt=traj.dt_frame)


def green_kubo_diffusion(series: VacfSeries, dim: int = 3) -> GreenKuboResult:
    C = np.asarray(series.C, dtype=float)
    if len(C) < 2:
        raise ValueError("a VACF series needs at least two lags")
    increments = 0.5 * (C[1:] + C[:-1]) * series.dt
    running = np.concatenate([[0.0], np.cumsum(increments)]) / dim
    tail = max(1, int(round(0.2 * len(running))))
    return GreenKuboResult(integral=float(running[-1]), plateau=float(np.mean(running[-tail:])), running=running)


def mean_squared_displacement(positions: np.ndarray, max_lag: int) -> np.ndarray:
    n = positions.shape[0]
    msd = np.empty(max_lag + 1)
    msd[0] = 0.0
    for lag in range(1, max_lag + 1):
        d = positions[lag:] - positions[:-lag]
        msd[lag] = np.mean(np.sum(d * d, axis=-1))
    return msd


def einstein_msd_diffusion(traj: Trajectory, max_lag: int | None = None, dim: int = 3,
                           ballistic_exponent: float = 1.5) -> MsdResult:
    """D from the slope of MSD(t) / (2 dim), fit over the last half of lags.

    The log-log exponent over the same window is reported; above
    ``ballistic_exponent`` the motion is flagged non-diffusive.
    """
    if traj.positions is None:
        raise ValueError("trajectory has no positions")
    n = traj.n_frames
    if max_lag is None:
        max_lag = n // 4
    if max_lag < 2 or max_lag >= n:
        raise ValueError(f"max_lag must lie in [2, {n - 1}]")
    msd = mean_squared_displacement(traj.positions, max_lag)
    t = np.arange(max_lag + 1) * traj.dt_frame
    lo = max(1, max_lag // 2)
    tw, mw = t[lo:], msd[lo:]
    if np.all(mw == 0.0):
        return MsdResult(D=0.0, exponent=float("nan"), diagnostic="frozen", msd=msd, lags=t)
    slope, _ = np.polyfit(tw, mw, 1)
    exponent, _ = np.polyfit(np.log(tw), np.log(np.maximum(mw, 1e-300)), 1)
    diag = "diffusive" if exponent < ballistic_exponent else "non-diffusive"
    return MsdResult(D=float(slope / (2 * dim)), exponent=float(exponent), diagnostic=diag, msd=msd, lags=t)


def ou_velocity_series(gamma: float, kT_over_m: float, dt: float, n: int, seed,
                       n_particles: int = 1, dim: int = 3) -> Trajectory:
    """Ornstein-Uhlenbeck velocities sampled with the exact discrete update.

    Started from the stationary distribution; the analytic diffusion
    coefficient is ``kT_over_m / gamma``.  Positions follow by trapezoidal
    integration of the velocities.
    """
    if gamma <= 0 or kT_over_m <= 0 or dt <= 0:
        raise ValueError("gamma, kT/m and dt must be positive")
    if gamma * dt >= 0.1:
        raise ValueError("gamma * dt must stay below 0.1")
    if n < 2:
        raise ValueError("need at least two frames")
    rng = np.random.default_rng(seed)
    decay = np.exp(-gamma * dt)
    kick = np.sqrt(kT_over_m * (1.0 - decay * decay))
    v = np.empty((n, n_particles, dim))
    v[0] = np.sqrt(kT_over_m) * rng.standard_normal((n_particles, dim))
    noise = rng.standard_normal((n - 1, n_particles, dim))
    for k in range(1, n):
        v[k] = decay * v[k - 1] + kick * noise[k - 1]
    x = np.concatenate([np.zeros((1, n_particles, dim)), np.cumsum(0.5 * (v[1:] + v[:-1]) * dt, axis=0)])
    return Trajectory(velocities=v, positions=x, dt_frame=dt, meta={"gamma": gamma, "kT_over_m": kT_over_m})


class LjDiffusionTruth(TruthModel):
    """Truth model mapping reduced ``(density, temperature)`` to the Green-Kubo D."""

    dim_in = 2
    dim_out = 1

    def __init__(self, base=None, max_lag_time: float = 5.0, nominal_cost: float = 100.0):
        self.base = base or MdConfig(n_equil=1000, n_prod=5000)
        self.max_lag_time = max_lag_time
        self.nominal_cost = nominal_cost

    def evaluate(self, x, seed: int = 0) -> np.ndarray:
        rho, temp = (float(v) for v in x)
        half_box = 0.5 * (self.base.n_particles / rho) ** (1 / 3)
        cfg = dataclasses.replace(self.base, density=rho, temperature=temp, seed=seed,
                                  cutoff=min(self.base.cutoff, half_box))
        traj = lj_md_run(cfg)
        lag = min(traj.n_frames - 1, int(round(self.max_lag_time / traj.dt_frame)))
        return np.array([green_kubo_diffusion(vacf(traj, lag)).D])
