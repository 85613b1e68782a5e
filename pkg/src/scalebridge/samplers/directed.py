"""Optimizer-directed sampling and the plain samplers it is compared against.

A first draw of starting points comes from probability (uniform) sampling.
Each start seeds a Nelder-Mead solver on the truth model; every evaluation a
solver requests is kept.  When a solver terminates, a fresh start is drawn
the same way and a new solver takes its place.  Solvers advance round-robin
against one shared evaluation budget, so the total spent is exact.
"""
from __future__ import annotations

import numpy as np

from ..core import Domain, Provenance, SamplePoint, denormalize
from .designs import sparsity_sample
from .neldermead import NelderMead, NelderMeadConfig


def _evaluate(truth, X) -> np.ndarray:
    X = np.atleast_2d(X)
    return np.asarray(truth.evaluate_many(X), dtype=float).reshape(len(X), -1)


def _points(X, Y, start: int) -> list[SamplePoint]:
    return [SamplePoint(x, y, Provenance.TRUTH, step=start + i) for i, (x, y) in enumerate(zip(X, Y))]


class OptimizerDirectedSampler:
    """Persistent ensemble of Nelder-Mead solvers running in the unit cube.

    Solvers survive between calls, so repeated draws continue the same
    snowball trajectories.  Points outside the cube are scored +inf without
    calling the truth model and do not consume budget.
    """

    def __init__(self, domain: Domain, truth, k_solvers: int = 4,
                 cfg: NelderMeadConfig = NelderMeadConfig(), seed=0, output_index: int = 0,
                 starts: str = "uniform"):
        if k_solvers < 1:
            raise ValueError("need at least one solver")
        if starts not in ("uniform", "sparsity"):
            raise ValueError("starts must be 'uniform' or 'sparsity'")
        self.starts = starts
        self._seen: list[np.ndarray] = []
        self.domain = domain
        self.truth = truth
        self.k_solvers = k_solvers
        self.cfg = cfg
        self.output_index = output_index
        self.rng = np.random.default_rng(seed)
        self.solvers: list[NelderMead] = []
        self.restarts = 0
        self.evaluations = 0
        self._cursor = 0

    def _new_solver(self) -> NelderMead:
        d = self.domain.dims
        if self.starts == "sparsity":
            existing = np.array(self._seen).reshape(-1, d)
            cand = self.rng.uniform(size=(20, d))
            if len(existing):
                dist = np.linalg.norm(cand[:, None, :] - existing[None, :, :], axis=-1).min(axis=1)
                x0 = cand[int(np.argmax(dist))]
            else:
                x0 = cand[0]
        else:
            x0 = self.rng.uniform(size=d)
        return NelderMead(x0, self.cfg, lower=np.zeros(d), upper=np.ones(d))

    def draw(self, budget: int) -> list[SamplePoint]:
        if not self.solvers:
            self.solvers = [self._new_solver() for _ in range(self.k_solvers)]
        out: list[SamplePoint] = []
        start = self.evaluations
        while len(out) < budget:
            k = self._cursor
            self._cursor = (k + 1) % len(self.solvers)
            solver = self.solvers[k]
            while True:
                if solver.done:
                    self.restarts += 1
                    solver = self.solvers[k] = self._new_solver()
                u = solver.ask()
                if np.all((u >= 0) & (u <= 1)):
                    break
                solver.tell(np.inf)
            self._seen.append(u)
            x = denormalize(self.domain, u)
            y = _evaluate(self.truth, x)[0]
            solver.tell(y[self.output_index])
            out.append(SamplePoint(x, y, Provenance.TRUTH, step=start + len(out)))
        self.evaluations += len(out)
        return out

    def __call__(self, n: int, seed=None, existing=None) -> list[SamplePoint]:
        return self.draw(n)


def optimizer_directed_draw(domain: Domain, truth, k_solvers: int, eval_budget: int,
                            cfg: NelderMeadConfig = NelderMeadConfig(), seed=0) -> list[SamplePoint]:
    """Spend exactly ``eval_budget`` truth evaluations on snowballing solvers."""
    if eval_budget < k_solvers * (domain.dims + 1):
        raise ValueError(f"budget {eval_budget} cannot seed {k_solvers} simplices of {domain.dims + 1} points")
    return OptimizerDirectedSampler(domain, truth, k_solvers, cfg, seed).draw(eval_budget)


class UniformSampler:
    def __init__(self, domain: Domain, truth, seed=0):
        self.domain = domain
        self.truth = truth
        self.rng = np.random.default_rng(seed)
        self.evaluations = 0

    def __call__(self, n: int, seed=None, existing=None) -> list[SamplePoint]:
        X = denormalize(self.domain, self.rng.uniform(size=(n, self.domain.dims)))
        pts = _points(X, _evaluate(self.truth, X), self.evaluations)
        self.evaluations += n
        return pts


class SparsitySampler:
    def __init__(self, domain: Domain, truth, candidates_per_point: int = 20, seed=0):
        self.domain = domain
        self.truth = truth
        self.candidates_per_point = candidates_per_point
        self.rng = np.random.default_rng(seed)
        self.evaluations = 0

    def __call__(self, n: int, seed=None, existing=None) -> list[SamplePoint]:
        existing = np.empty((0, self.domain.dims)) if existing is None else existing
        X = sparsity_sample(self.domain, existing, n, self.candidates_per_point * n,
                            int(self.rng.integers(2 ** 31)))
        pts = _points(X, _evaluate(self.truth, X), self.evaluations)
        self.evaluations += n
        return pts

