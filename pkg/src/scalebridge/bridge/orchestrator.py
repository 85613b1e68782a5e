"""On-the-fly closure serving for the interfacial-mixing solver.

Every coarse step asks for the mutual diffusivity in every cell.  A request is
answered from the result database when a stored input lies within the lookup
tolerance, from the committee when its spread is below ``tau``, and otherwise
by a blocking truth evaluation whose result is stored.  Between steps the
orchestrator forecasts upcoming cell states and evaluates the unconfident
ones speculatively, and rebuilds the committee once enough new truth data has
accumulated.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..committee import Committee, CommitteeBuildError, CommitteeConfig, build_committee
from ..core import Provenance, ScaleBridgeError
from ..datastore import Store
from ..samplers.designs import latin_hypercube
from ..surrogates.mlp import TrainConfig
from ..surrogates.training import MlpTrainer
from ..truth.analytic import ICF_BOUNDS, SyntheticClosureTruth, icf_domain
from .coarse import MixingState, coarse_step, max_stable_dt

log = logging.getLogger(__name__)

MUTUAL = 1          # index of D12 in the closure output


class ClosureError(ScaleBridgeError):
    def __init__(self, message: str, cell: int | None = None, step: int | None = None):
        super().__init__(message)
        self.cell = cell
        self.step = step


@dataclass(frozen=True)
class OrchestratorConfig:
    tau: float = 0.05
    retrain_batch: int = 32
    lookup_tol_cells: int = 1
    horizon: int = 3
    spec_budget: int = 4
    workers: int = 1
    truth: str = "synthetic"
    seed: int = 0
    q: float = 1e-3
    n_cells: int = 48
    steps: int = 60
    initial_design: int = 200
    z1: float = 1.0
    z2: float = 18.0
    n_major: float = 5e24
    n_trace: float = 1e22
    T0: float = 100.0
    heat_factor: float = 1.5
    cfl_fraction: float = 0.9
    mlp_epochs: int = 1500
    mlp_hidden: tuple[int, ...] = (24, 24)
    mlp_learning_rate: float = 1e-2

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.retrain_batch < 1:
            raise ValueError("retrain batch must be at least 1")
        if self.horizon < 0:
            raise ValueError("forecast horizon must be non-negative")
        if self.spec_budget < 0 or self.workers < 1:
            raise ValueError("need spec_budget >= 0 and workers >= 1")
        if self.truth != "synthetic":
            raise ValueError(f"unknown truth model {self.truth!r}")
        if self.n_cells < 8 or self.steps < 1:
            raise ValueError("need at least 8 cells and one step")
        if not 0 < self.cfl_fraction <= 1:
            raise ValueError("cfl_fraction must lie in (0, 1]")


class CallMap:
    """Provenance code for every (step, cell) closure request."""

    def __init__(self, steps: int, cells: int):
        self.grid = np.full((steps, cells), -1, dtype=int)

    def record(self, step: int, cell: int, provenance: Provenance) -> None:
        if self.grid[step, cell] != -1:
            raise ValueError(f"cell {cell} at step {step} already recorded")
        self.grid[step, cell] = provenance.code

    @property
    def complete(self) -> bool:
        return bool(np.all(self.grid >= 0))

    def counts(self) -> dict[str, int]:
        return {p.value: int(np.sum(self.grid == p.code)) for p in Provenance}

    def dedup_rate(self) -> float:
        return float(np.mean(self.grid == Provenance.DB_HIT.code))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.grid.tolist())
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, text: str) -> "CallMap":
        rows = [list(map(int, r)) for r in csv.reader(io.StringIO(text)) if r]
        cm = cls(len(rows), len(rows[0]))
        cm.grid[:] = rows
        return cm

    def to_pgm(self, path=None) -> str:
        """Plain PGM: truth white, surrogate mid-gray, database hit black."""
        shade = {Provenance.TRUTH.code: 255, Provenance.SURROGATE.code: 128, Provenance.DB_HIT.code: 0}
        h, w = self.grid.shape
        lines = ["P2", f"{w} {h}", "255"]
        lines += [" ".join(str(shade.get(int(v), 64)) for v in row) for row in self.grid]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass
class Accounting:
    truth_calls: int = 0
    speculative_calls: int = 0
    surrogate: int = 0
    db_hits: int = 0
    nominal_cost_per_call: float = 1.0
    blocking_per_step: list[int] = field(default_factory=list)
    retrain_events: list[dict] = field(default_factory=list)
    substeps: list[int] = field(default_factory=list)

    @property
    def total_cost(self) -> float:
        return (self.truth_calls + self.speculative_calls) * self.nominal_cost_per_call

    @property
    def requests(self) -> int:
        return self.truth_calls + self.surrogate + self.db_hits

    def to_dict(self) -> dict:
        d = asdict(self)
        d["total_cost"] = self.total_cost
        d["requests"] = self.requests
        d["dedup_rate"] = self.db_hits / self.requests if self.requests else 0.0
        d["mean_blocking_per_step"] = float(np.mean(self.blocking_per_step)) if self.blocking_per_step else 0.0
        return d


def closure_inputs(state: MixingState, z1: float, z2: float) -> np.ndarray:
    """Per-cell ``(n1, n2, T, Z1, Z2)`` with densities floored at the box minimum."""
    floor = ICF_BOUNDS[0][0]
    M = state.n_cells
    return np.column_stack([
        np.maximum(state.n1, floor), np.maximum(state.n2, floor), state.T,
        np.full(M, z1), np.full(M, z2),
    ])


class Orchestrator:
    """Database, committee and truth model wired into one closure service."""

    def __init__(self, cfg: OrchestratorConfig, truth=None):
        self.cfg = cfg
        self.truth = truth if truth is not None else SyntheticClosureTruth()
        self.domain = icf_domain()
        self.store = Store(self.domain, q=cfg.q)
        self.committee: Committee | None = None
        self.accounting = Accounting(nominal_cost_per_call=float(self.truth.nominal_cost))
        self.pool = ThreadPoolExecutor(max_workers=cfg.workers)
        self._pending: list[tuple[np.ndarray, Future]] = []
        self._batch = cfg.retrain_batch
        self._builds = 0
        self._records_at_build = 0
        self.step = 0

    # -- committee ---------------------------------------------------------

    def trainer(self) -> MlpTrainer:
        tc = TrainConfig(epochs=self.cfg.mlp_epochs, learning_rate=self.cfg.mlp_learning_rate,
                         hidden=tuple(self.cfg.mlp_hidden))
        return MlpTrainer(tc, domain=self.domain)

    def _build(self) -> Committee:
        X, Y = self.store.arrays()
        cc = CommitteeConfig(seed=self.cfg.seed * 1000 + self._builds)
        return build_committee((X, np.log10(Y)), self.trainer(), cc)

    def initial_build(self) -> None:
        X = latin_hypercube(self.domain, self.cfg.initial_design, self.cfg.seed)
        Y = self._evaluate_blocking(X)
        for x, y in zip(X, Y):
            self.store.put(x, y, Provenance.TRUTH, step=-1)
        self.committee = self._build()
        self._builds += 1
        self._records_at_build = len(self.store)

    def spread(self, X, committee: Committee | None = None) -> np.ndarray:
        """Quality flag ``s`` of ``committee`` (default: the current one) at ``X``."""
        return (committee or self.committee).predict(np.atleast_2d(X))[2]

    def retrain_if_due(self) -> bool:
        new = len(self.store) - self._records_at_build
        if new < self._batch:
            return False
        event = {"step": self.step, "store_size": len(self.store), "new_records": new}
        try:
            committee = self._build()
        except (CommitteeBuildError, ValueError) as exc:
            log.warning("committee rebuild failed at step %d: %s", self.step, exc)
            self._batch *= 2
            event.update(success=False, next_batch=self._batch)
            self.accounting.retrain_events.append(event)
            return False
        self._builds += 1
        self.committee = committee       # atomic reference swap
        self._records_at_build = len(self.store)
        event.update(success=True, next_batch=self._batch)
        self.accounting.retrain_events.append(event)
        return True

    # -- truth evaluation --------------------------------------------------

    def _eval_one(self, x):
        try:
            return np.asarray(self.truth.evaluate(x), dtype=float)
        except Exception:
            return np.asarray(self.truth.evaluate(x), dtype=float)    # one retry

    def _evaluate_blocking(self, X) -> np.ndarray:
        futures = [self.pool.submit(self._eval_one, x) for x in X]
        return np.array([f.result() for f in futures])

    # -- closure pipeline --------------------------------------------------

    def closure_for_cells(self, inputs, step: int | None = None) -> tuple[np.ndarray, list[Provenance]]:
        """Serve D for each row of ``inputs``; rows are handled in order.

        Unconfident rows are evaluated together on the pool; a later row that
        quantizes next to an earlier one in the same batch reuses its result.
        """
        if self.committee is None:
            raise ClosureError("committee not built")
        step = self.step if step is None else step
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        n = len(inputs)
        values = np.empty((n, 3))
        prov: list[Provenance | None] = [None] * n
        committee = self.committee
        mean, _, s = committee.predict(inputs)
        need: list[int] = []
        alias: dict[int, int] = {}
        keys: dict[tuple, int] = {}
        for i, x in enumerate(inputs):
            rec = self.store.lookup(x, self.cfg.lookup_tol_cells)
            if rec is not None:
                values[i], prov[i] = rec.y, Provenance.DB_HIT
            elif s[i] <= self.cfg.tau:
                values[i], prov[i] = 10.0 ** mean[i], Provenance.SURROGATE
            else:
                k = self.store.key(x)
                near = self._near_key(keys, k)
                if near is not None:
                    alias[i] = near
                else:
                    keys[k] = i
                    need.append(i)
        futures = {i: self.pool.submit(self._eval_one, inputs[i]) for i in need}
        for i in need:
            try:
                y = futures[i].result()
            except Exception as exc:
                raise ClosureError(f"truth model failed for cell {i} at step {step}: {exc}", cell=i, step=step) from exc
            if not np.all(np.isfinite(y)) or np.any(y <= 0):
                raise ClosureError(f"truth model returned {y} for cell {i} at step {step}", cell=i, step=step)
            values[i], prov[i] = y, Provenance.TRUTH
            self.store.put(inputs[i], y, Provenance.TRUTH, step=step)
        for i, j in alias.items():
            values[i], prov[i] = values[j], Provenance.DB_HIT
        for p in prov:
            if p is Provenance.TRUTH:
                self.accounting.truth_calls += 1
            elif p is Provenance.SURROGATE:
                self.accounting.surrogate += 1
            else:
                self.accounting.db_hits += 1
        return values, prov

    def _near_key(self, keys: dict, k: tuple):
        t = self.cfg.lookup_tol_cells
        for other, i in keys.items():
            if max(abs(a - b) for a, b in zip(other, k)) <= t:
                return i
        return None

    def closure_for_cell(self, x) -> tuple[np.ndarray, Provenance]:
        values, prov = self.closure_for_cells(np.asarray(x, dtype=float)[None, :])
        return values[0], prov[0]

    # -- speculation -------------------------------------------------------

    def speculative_prefetch(self, forecast) -> int:
        """Submit truth evaluations for unconfident, unseen forecast points."""
        forecast = np.asarray(forecast, dtype=float).reshape(-1, 5)
        if self.cfg.spec_budget == 0 or not len(forecast) or self.committee is None:
            return 0
        s = self.committee.predict(forecast)[2]
        issued, keys = 0, {}
        for x, si in zip(forecast, s):
            if issued >= self.cfg.spec_budget:
                break
            if si <= self.cfg.tau or self.store.lookup(x, self.cfg.lookup_tol_cells, count=False) is not None:
                continue
            k = self.store.key(x)
            if self._near_key(keys, k) is not None:
                continue
            keys[k] = issued
            self._pending.append((x, self.pool.submit(self._eval_one, x)))
            issued += 1
        self.accounting.speculative_calls += issued
        return issued

    def collect_speculative(self) -> list[np.ndarray]:
        """Store finished speculative results in submission order."""
        done = []
        for x, fut in self._pending:
            try:
                y = fut.result()
            except Exception as exc:
                log.warning("speculative evaluation failed: %s", exc)
                continue
            if np.all(np.isfinite(y)) and np.all(y > 0):
                self.store.put(x, y, Provenance.TRUTH, step=self.step)
                done.append(x)
        self._pending = []
        return done

    def close(self) -> None:
        self.pool.shutdown(wait=True)


def forecast_requests(history, horizon: int, z1: float = 1.0, z2: float = 18.0) -> np.ndarray:
    """Linear extrapolation of the last two states over ``horizon`` steps.

    Returns closure inputs ordered by lead time, then cell; empty when the
    history is too short.
    """
    if len(history) < 2 or horizon == 0:
        return np.empty((0, 5))
    prev, cur = history[-2], history[-1]
    tiny = np.finfo(float).tiny
    rows = []
    for k in range(1, horizon + 1):
        n1 = np.maximum(cur.n1 + k * (cur.n1 - prev.n1), tiny)
        n2 = np.maximum(cur.n2 + k * (cur.n2 - prev.n2), tiny)
        T = np.maximum(cur.T + k * (cur.T - prev.T), tiny)
        rows.append(closure_inputs(MixingState(n1, n2, T, cur.dx), z1, z2))
    return np.vstack(rows)


def initial_state(cfg: OrchestratorConfig) -> MixingState:
    M = cfg.n_cells
    left = np.arange(M) < M // 2
    n1 = np.where(left, cfg.n_major, cfg.n_trace)
    n2 = np.where(left, cfg.n_trace, cfg.n_major / 5.0)
    return MixingState(n1, n2, np.full(M, cfg.T0), dx=1.0 / M)


def temperature(cfg: OrchestratorConfig, scenario: str, step: int) -> np.ndarray:
    """Cell temperatures at ``step``; the heated case ramps the middle third."""
    M = cfg.n_cells
    T = np.full(M, cfg.T0)
    if scenario == "heated":
        lo, hi = ICF_BOUNDS[2]
        middle = (np.arange(M) >= M // 3) & (np.arange(M) < 2 * M // 3)
        T[middle] += cfg.heat_factor * (hi - lo) * step / cfg.steps
    elif scenario != "uniform":
        raise ValueError(f"unknown scenario {scenario!r}")
    return T


@dataclass
class MixingResult:
    scenario: str
    callmap: CallMap
    states: list[MixingState]
    accounting: Accounting
    store: Store
    spec_hits: list[float]
    probe_spread: dict

    def accounting_dict(self) -> dict:
        d = self.accounting.to_dict()
        d.update(scenario=self.scenario, counts=self.callmap.counts(),
                 callmap_dedup_rate=self.callmap.dedup_rate(),
                 forecast_coverage=_mean_or_nan(self.spec_hits), probe_spread=self.probe_spread)
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps(self.accounting_dict(), indent=2, sort_keys=True, default=_json_default)
        if path is not None:
            Path(path).write_text(text)
        return text

    def states_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "t", "cell", "x", "n1", "n2", "T"])
        for s in self.states:
            for c in range(s.n_cells):
                w.writerow([s.step, repr(s.t), c, repr(float(s.centers[c])),
                            repr(float(s.n1[c])), repr(float(s.n2[c])), repr(float(s.T[c]))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _mean_or_nan(v) -> float:
    return float(np.mean(v)) if len(v) else float("nan")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def _covered(store: Store, spec_points: list, x, tol: int) -> bool:
    k = store.key(x)
    return any(max(abs(a - b) for a, b in zip(store.key(p), k)) <= tol for p in spec_points)


def run_mixing_experiment(scenario: str, cfg: OrchestratorConfig, truth=None) -> MixingResult:
    """Run the coupled loop and return the call map, states and accounting."""
    orch = Orchestrator(cfg, truth)
    try:
        orch.initial_build()
        state = initial_state(cfg)
        state = MixingState(state.n1, state.n2, temperature(cfg, scenario, 0), state.dx)
        callmap = CallMap(cfg.steps, cfg.n_cells)
        history = [state]
        dt = None
        spec_hits: list[float] = []
        unconfident_heated: list[np.ndarray] = []
        probe = {}
        for step in range(cfg.steps):
            orch.step = step
            landed = orch.collect_speculative()
            # speculation for the coming steps runs alongside this step's closures
            orch.speculative_prefetch(forecast_requests(history[-2:], cfg.horizon, cfg.z1, cfg.z2))
            inputs = closure_inputs(state, cfg.z1, cfg.z2)
            values, prov = orch.closure_for_cells(inputs, step)
            truth_rows = [i for i, p in enumerate(prov) if p is Provenance.TRUTH]
            orch.accounting.blocking_per_step.append(len(truth_rows))
            for c, p in enumerate(prov):
                callmap.record(step, c, p)
            hits = [i for i, p in enumerate(prov) if p is not Provenance.SURROGATE
                    and _covered(orch.store, landed, inputs[i], cfg.lookup_tol_cells)]
            was_needed = [i for i in range(len(prov)) if prov[i] is Provenance.TRUTH or i in hits]
            if landed and was_needed:
                spec_hits.append(len(hits) / len(was_needed))
            if scenario == "heated":
                hot = inputs[:, 2] > ICF_BOUNDS[2][1]
                unconfident_heated += [inputs[i] for i in truth_rows if hot[i]]

            D = values[:, MUTUAL]
            if dt is None:
                dt = cfg.cfl_fraction * max_stable_dt(D, state.dx)
            n_sub = max(1, math.ceil(dt / (cfg.cfl_fraction * max_stable_dt(D, state.dx))))
            orch.accounting.substeps.append(n_sub)
            nxt = state
            for _ in range(n_sub):
                nxt = coarse_step(nxt, D, dt / n_sub)
            nxt = MixingState(nxt.n1, nxt.n2, temperature(cfg, scenario, step + 1), nxt.dx, nxt.t, step + 1)
            history.append(nxt)
            state = nxt

            before = orch.committee
            if orch.retrain_if_due() and unconfident_heated and "before" not in probe:
                P = np.array(unconfident_heated[-64:])
                probe = {"step": step, "n_probes": len(P),
                         "before": before.predict(P)[2].tolist(),
                         "after": orch.committee.predict(P)[2].tolist()}
        orch.collect_speculative()
        return MixingResult(scenario, callmap, history, orch.accounting, orch.store, spec_hits, probe)
    finally:
        orch.close()


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties."""
    def ranks(a):
        a = np.asarray(a, dtype=float)
        order = np.argsort(a, kind="stable")
        r = np.empty(len(a))
        r[order] = np.arange(len(a), dtype=float)
        for v in np.unique(a):
            m = a == v
            r[m] = r[m].mean()
        return r
    rx, ry = ranks(x), ranks(y)
    if rx.std() == 0 or ry.std() == 0:
        return 0.0
    return float(np.corrcoef(rx, ry)[0, 1])
