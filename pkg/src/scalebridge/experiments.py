"""Scaled-down sampling experiments on the Rosenbrock function.

* :func:`ab_experiment` compares optimizer-directed against uniform random
  sampling at equal evaluation budgets, globally and near the minimizer.
* :func:`validity_experiment` runs the validity loop with directed sampling.
* :func:`al_efficiency` counts how many evaluations committee-spread
  acquisition needs to reach an RMSE target, against uniform acquisition.
* :func:`md_checks` validates the Green-Kubo pipeline against analytic and
  Einstein-relation references.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .committee import CommitteeConfig, build_committee
from .core import Domain, denormalize, normalize
from .samplers.designs import ball_unit, latin_hypercube
from .samplers.directed import OptimizerDirectedSampler, UniformSampler
from .samplers.neldermead import NelderMeadConfig
from .samplers.validity import ValidityConfig, ValidityResult, validity_loop
from .surrogates.training import RbfTrainer
from .truth.analytic import RosenbrockTruth, rosenbrock_batch
from .truth.greenkubo import VacfSeries, einstein_msd_diffusion, green_kubo_diffusion, ou_velocity_series, vacf
from .truth.md import MdConfig, lj_md_run

STRATEGIES = ("directed", "uniform")


@dataclass(frozen=True)
class ABConfig:
    dims: int = 8
    lo: float = 0.0
    hi: float = 2.0
    budget: int = 600
    iterations: int = 10
    k_solvers: int = 32
    initial_scale: float = 0.2
    rbf_lambda: float = 1e-8
    n_test: int = 4096
    test_seed: int = 123
    n_near: int = 512
    near_radius: float = 0.1
    near_seed: int = 7
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        if self.budget % self.iterations:
            raise ValueError("budget must split evenly into iterations")
        if self.budget < self.k_solvers * (self.dims + 1):
            raise ValueError("budget cannot seed every solver's simplex")


@dataclass
class ABRun:
    strategy: str
    seed: int
    rows: list[tuple[int, int, float, float]]     # iteration, evaluations, global error, near-minimum error

    @property
    def final(self) -> tuple[float, float]:
        return self.rows[-1][2], self.rows[-1][3]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "evaluations", "test_score", "near_min_error"])
        for it, n, g, m in self.rows:
            w.writerow([it, n, repr(float(g)), repr(float(m))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass
class ABResult:
    config: ABConfig
    runs: list[ABRun]

    def finals(self, strategy: str) -> np.ndarray:
        return np.array([r.final for r in self.runs if r.strategy == strategy])

    def summary(self) -> dict:
        out = {}
        for s in STRATEGIES:
            f = self.finals(s)
            out[s] = {"median_test_score": float(np.median(f[:, 0])),
                      "median_near_min_error": float(np.median(f[:, 1]))}
        d, u = out["directed"], out["uniform"]
        out["near_min_directed_better"] = d["median_near_min_error"] < u["median_near_min_error"]
        out["global_ratio"] = d["median_test_score"] / u["median_test_score"]
        return out


def ab_test_sets(cfg: ABConfig):
    domain = Domain.box(cfg.lo, cfg.hi, cfg.dims)
    test = latin_hypercube(domain, cfg.n_test, cfg.test_seed)
    center = normalize(domain, np.ones(cfg.dims))
    near = denormalize(domain, ball_unit(center, cfg.near_radius, cfg.n_near, np.random.default_rng(cfg.near_seed)))
    return domain, test, rosenbrock_batch(test), near, rosenbrock_batch(near)


def ab_run(cfg: ABConfig, strategy: str, seed: int, sets=None) -> ABRun:
    domain, test, yt, near, yn = sets or ab_test_sets(cfg)
    truth = RosenbrockTruth(cfg.dims)
    if strategy == "directed":
        nm = NelderMeadConfig(initial_scale=cfg.initial_scale)
        sampler = OptimizerDirectedSampler(domain, truth, cfg.k_solvers, nm, seed=seed)
    elif strategy == "uniform":
        sampler = UniformSampler(domain, truth, seed=seed)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    trainer = RbfTrainer(cfg.rbf_lambda, domain)
    per = cfg.budget // cfg.iterations
    X = np.empty((0, cfg.dims))
    Y = np.empty((0, 1))
    rows = []
    for it in range(cfg.iterations):
        pts = sampler(per)
        X = np.vstack([X, [p.x for p in pts]])
        Y = np.vstack([Y, [p.y for p in pts]])
        model = trainer(X, Y)
        g = float(np.mean(np.abs(model.predict(test)[:, 0] - yt)))
        m = float(np.mean(np.abs(model.predict(near)[:, 0] - yn)))
        rows.append((it, len(X), g, m))
    return ABRun(strategy, seed, rows)


def ab_experiment(cfg: ABConfig = ABConfig()) -> ABResult:
    sets = ab_test_sets(cfg)
    return ABResult(cfg, [ab_run(cfg, s, seed, sets) for seed in cfg.seeds for s in STRATEGIES])


# -- validity loop -----------------------------------------------------------

@dataclass(frozen=True)
class ValidityExperimentConfig:
    dims: int = 2
    lo: float = 0.0
    hi: float = 2.0
    tol: float = 5.0
    window: int = 3
    rel_change: float = 0.05
    batch: int = 20
    max_iterations: int = 40
    k_solvers: int = 4
    initial_scale: float = 0.2
    f_tol: float = 1e-2
    x_tol: float = 1e-3
    starts: str = "sparsity"
    rbf_lambda: float = 1e-8
    n_test: int = 4096
    test_seed: int = 99
    seed: int = 0


def validity_experiment(cfg: ValidityExperimentConfig = ValidityExperimentConfig(),
                        strategy: str = "directed") -> ValidityResult:
    domain = Domain.box(cfg.lo, cfg.hi, cfg.dims)
    truth = RosenbrockTruth(cfg.dims)
    if strategy == "directed":
        nm = NelderMeadConfig(initial_scale=cfg.initial_scale, f_tol=cfg.f_tol, x_tol=cfg.x_tol)
        sampler = OptimizerDirectedSampler(domain, truth, cfg.k_solvers, nm, seed=cfg.seed, starts=cfg.starts)
    elif strategy == "uniform":
        sampler = UniformSampler(domain, truth, seed=cfg.seed)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    test = latin_hypercube(domain, cfg.n_test, cfg.test_seed)
    vcfg = ValidityConfig(tol=cfg.tol, window=cfg.window, rel_change=cfg.rel_change,
                          batch=cfg.batch, max_iterations=cfg.max_iterations)
    return validity_loop(truth, RbfTrainer(cfg.rbf_lambda, domain), sampler, vcfg, test, seed=cfg.seed)


# -- active-learning efficiency ----------------------------------------------

@dataclass(frozen=True)
class ALConfig:
    lo: float = 0.0
    hi: float = 2.0
    rmse_target: float = 1.0
    n_initial: int = 64
    step: int = 4
    pool: int = 2000
    max_evals: int = 1500
    rbf_lambda: float = 1e-8
    n_test: int = 4096
    test_seed: int = 99
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)


@dataclass
class ALRun:
    strategy: str
    seed: int
    curve: list[tuple[int, float]] = field(default_factory=list)
    evals_to_target: int | None = None


def al_run(cfg: ALConfig, strategy: str, seed: int) -> ALRun:
    """Grow the design ``step`` points at a time until the RMSE target is met."""
    domain = Domain.box(cfg.lo, cfg.hi, 2)
    test = latin_hypercube(domain, cfg.n_test, cfg.test_seed)
    yt = rosenbrock_batch(test)
    rng = np.random.default_rng(seed)
    X = latin_hypercube(domain, cfg.n_initial, seed)
    Y = rosenbrock_batch(X)[:, None]
    pool = denormalize(domain, rng.uniform(size=(cfg.pool, 2)))
    trainer = RbfTrainer(cfg.rbf_lambda, domain)
    run = ALRun(strategy, seed)
    while True:
        err = float(np.sqrt(np.mean((trainer(X, Y).predict(test)[:, 0] - yt) ** 2)))
        run.curve.append((len(X), err))
        if err <= cfg.rmse_target:
            run.evals_to_target = len(X)
            return run
        if len(X) >= cfg.max_evals or len(pool) < cfg.step:
            return run
        if strategy == "committee":
            c = build_committee((X, Y), trainer, CommitteeConfig(seed=seed))
            idx = np.argsort(-c.predict(pool)[2], kind="stable")[:cfg.step]
        elif strategy == "uniform":
            idx = rng.choice(len(pool), cfg.step, replace=False)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        X = np.vstack([X, pool[idx]])
        Y = np.vstack([Y, rosenbrock_batch(pool[idx])[:, None]])
        pool = np.delete(pool, idx, axis=0)


def al_efficiency(cfg: ALConfig = ALConfig()) -> dict:
    runs = {s: [al_run(cfg, s, seed) for seed in cfg.seeds] for s in ("committee", "uniform")}
    ratios = []
    for a, u in zip(runs["committee"], runs["uniform"]):
        na = a.evals_to_target if a.evals_to_target is not None else np.inf
        nu = u.evals_to_target if u.evals_to_target is not None else np.inf
        ratios.append(na / nu if np.isfinite(nu) else (0.0 if np.isfinite(na) else np.inf))
    return {
        "rmse_target": cfg.rmse_target,
        "committee_evals": [r.evals_to_target for r in runs["committee"]],
        "uniform_evals": [r.evals_to_target for r in runs["uniform"]],
        "ratios": ratios,
        "median_ratio": float(np.median(ratios)),
        "runs": runs,
    }


# -- Green-Kubo checks -------------------------------------------------------

@dataclass(frozen=True)
class MdCheckConfig:
    ou_gamma: float = 2.0
    ou_kT_over_m: float = 1.0
    ou_dt: float = 0.01
    ou_frames: int = 100_000
    ou_particles: int = 20
    ou_tolerance: float = 0.05
    max_lag_time: float = 5.0
    gk_msd_tolerance: float = 0.10
    drift_tolerance: float = 1e-3
    momentum_tolerance: float = 1e-10
    seed: int = 0


def md_checks(cfg: MdCheckConfig = MdCheckConfig(), md: MdConfig = MdConfig()) -> dict:
    """Verdicts for the analytic and cross-method diffusion checks."""
    out = {}
    const = green_kubo_diffusion(VacfSeries(np.ones(301), 0.01))
    out["constant_vacf"] = {"D": const.integral, "expected": 1.0, "pass": abs(const.integral - 1.0) < 1e-12}

    ou = ou_velocity_series(cfg.ou_gamma, cfg.ou_kT_over_m, cfg.ou_dt, cfg.ou_frames, cfg.seed, cfg.ou_particles)
    lag = int(round(cfg.max_lag_time / cfg.ou_dt))
    d_ou = green_kubo_diffusion(vacf(ou, lag)).D
    expected = cfg.ou_kT_over_m / cfg.ou_gamma
    err = abs(d_ou - expected) / expected
    out["ou"] = {"D": d_ou, "expected": expected, "relative_error": err, "pass": err < cfg.ou_tolerance}

    traj = lj_md_run(md)
    lag = min(traj.n_frames - 1, int(round(cfg.max_lag_time / traj.dt_frame)))
    d_gk = green_kubo_diffusion(vacf(traj, lag)).D
    msd = einstein_msd_diffusion(traj, lag)
    rel = abs(d_gk - msd.D) / msd.D
    out["gk_vs_msd"] = {"D_gk": d_gk, "D_msd": msd.D, "msd_exponent": msd.exponent,
                        "relative_difference": rel, "pass": rel < cfg.gk_msd_tolerance}
    drift, mom = traj.energy_drift(), traj.max_momentum()
    out["nve"] = {"energy_drift": drift, "max_momentum": mom,
                  "pass": drift < cfg.drift_tolerance and mom < cfg.momentum_tolerance}
    out["all_pass"] = all(v["pass"] for v in out.values() if isinstance(v, dict))
    return out
