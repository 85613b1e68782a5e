"""Nelder-Mead downhill simplex in ask/tell form.

:class:`NelderMead` yields one trial point at a time, so several solvers can
be interleaved against a shared evaluation budget.  :func:`nelder_mead_run`
is the plain blocking driver.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NelderMeadConfig:
    alpha: float = 1.0       # reflection
    gamma: float = 2.0       # expansion
    rho: float = 0.5         # contraction
    sigma: float = 0.5       # shrink
    max_iters: int | None = None   # default 200 * dim
    f_tol: float = 1e-6
    x_tol: float = 1e-6
    initial_scale: float = 0.05

    def __post_init__(self):
        if not (self.alpha > 0 and self.gamma > 1 and 0 < self.rho < 1 and 0 < self.sigma < 1):
            raise ValueError("need alpha > 0, gamma > 1, 0 < rho < 1, 0 < sigma < 1")
        if self.initial_scale <= 0:
            raise ValueError("initial simplex scale must be positive")


@dataclass
class NelderMeadResult:
    x: np.ndarray
    f: float
    iterations: int
    reason: str
    log: list = field(default_factory=list)      # (x, f) for every evaluated point
    best_history: list = field(default_factory=list)


def _clean(f) -> float:
    f = float(f)
    return f if np.isfinite(f) else np.inf


class NelderMead:
    """Ask/tell simplex solver.

    Call :meth:`ask` for the next trial point and :meth:`tell` with its value
    until :attr:`done`.  ``lower``/``upper`` only steer the initial simplex
    (offsets flip inward at a bound); the objective handles constraints.
    """

    def __init__(self, x0, cfg: NelderMeadConfig = NelderMeadConfig(), lower=None, upper=None):
        self.cfg = cfg
        x0 = np.asarray(x0, dtype=float)
        self.dim = x0.size
        self.max_iters = cfg.max_iters if cfg.max_iters is not None else 200 * self.dim
        self.iterations = 0
        self.reason = ""
        self.best_history: list[float] = []
        self._coro = self._run(x0, lower, upper)
        self._pending = next(self._coro)

    @property
    def done(self) -> bool:
        return self._pending is None

    def ask(self) -> np.ndarray:
        if self._pending is None:
            raise RuntimeError("solver has terminated")
        return self._pending.copy()

    def tell(self, value) -> None:
        try:
            self._pending = self._coro.send(_clean(value))
        except StopIteration:
            self._pending = None

    @property
    def best(self) -> tuple[np.ndarray, float]:
        i = int(np.argmin(self._fs))
        return self._xs[i].copy(), float(self._fs[i])

    def _converged(self) -> str:
        xs = self._xs
        if np.max(np.linalg.norm(xs - xs[0], axis=1)) < self.cfg.x_tol:
            return "x_tol"
        if self.iterations >= self.max_iters:
            return "max_iters"
        return ""

    def _flat(self, extra=()) -> bool:
        fs = np.concatenate([self._fs, np.asarray(extra, dtype=float)])
        return bool(np.all(np.isfinite(fs)) and fs.max() - fs.min() < self.cfg.f_tol)

    def _run(self, x0, lower, upper):
        cfg = self.cfg
        n = self.dim
        xs = np.empty((n + 1, n))
        xs[0] = x0
        for i in range(n):
            step = np.zeros(n)
            h = cfg.initial_scale
            if upper is not None and x0[i] + h > upper[i]:
                h = -h
            elif lower is not None and x0[i] + h < lower[i]:
                h = -h
            step[i] = h
            xs[i + 1] = x0 + step
        fs = np.full(n + 1, np.inf)
        self._xs, self._fs = xs, fs
        for i in range(n + 1):
            fs[i] = yield xs[i]
        while True:
            order = np.argsort(fs, kind="stable")
            xs[:] = xs[order]
            fs[:] = fs[order]
            self.best_history.append(float(fs[0]))
            reason = self._converged()
            if reason:
                self.reason = reason
                return
            if self._flat():
                # a symmetric simplex can straddle the minimum with equal values;
                # confirm flatness at the centroid before stopping
                xm = xs.mean(axis=0)
                fm = yield xm
                if self._flat([fm]):
                    self.reason = "f_tol"
                    return
                self.iterations += 1
                if fm < fs[-1]:
                    xs[-1], fs[-1] = xm, fm
                continue
            self.iterations += 1
            centroid = xs[:-1].mean(axis=0)
            xr = centroid + cfg.alpha * (centroid - xs[-1])
            fr = yield xr
            if fs[0] <= fr < fs[-2]:
                xs[-1], fs[-1] = xr, fr
                continue
            if fr < fs[0]:
                xe = centroid + cfg.gamma * (xr - centroid)
                fe = yield xe
                if fe < fr:
                    xs[-1], fs[-1] = xe, fe
                else:
                    xs[-1], fs[-1] = xr, fr
                continue
            if fr < fs[-1]:
                xc = centroid + cfg.rho * (xr - centroid)
                fc = yield xc
                if fc <= fr:
                    xs[-1], fs[-1] = xc, fc
                    continue
            else:
                xc = centroid + cfg.rho * (xs[-1] - centroid)
                fc = yield xc
                if fc < fs[-1]:
                    xs[-1], fs[-1] = xc, fc
                    continue
            for i in range(1, n + 1):
                xs[i] = xs[0] + cfg.sigma * (xs[i] - xs[0])
                fs[i] = yield xs[i]


def nelder_mead_run(f, x0, cfg: NelderMeadConfig = NelderMeadConfig(), max_evals: int | None = None,
                    lower=None, upper=None) -> NelderMeadResult:
    """Minimize ``f`` from ``x0``; non-finite objective values count as +inf."""
    solver = NelderMead(x0, cfg, lower, upper)
    log = []
    while not solver.done:
        if max_evals is not None and len(log) >= max_evals:
            solver.reason = "max_evals"
            break
        x = solver.ask()
        fx = _clean(f(x))
        log.append((x, fx))
        solver.tell(fx)
    xb, fb = solver.best
    return NelderMeadResult(x=xb, f=fb, iterations=solver.iterations, reason=solver.reason,
                            log=log, best_history=solver.best_history)
