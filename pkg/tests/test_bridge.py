import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import erf
from scipy.stats import spearmanr

from scalebridge.bridge import (
    CallMap,
    CflViolation,
    ClosureError,
    MixingState,
    Orchestrator,
    OrchestratorConfig,
    closure_inputs,
    coarse_step,
    erf_profile,
    forecast_requests,
    max_stable_dt,
    run_mixing_experiment,
    spearman,
)
from scalebridge.committee import CommitteeBuildError
from scalebridge.core import Provenance
from scalebridge.truth import SyntheticClosureTruth

SMALL = OrchestratorConfig(n_cells=16, steps=10, initial_design=100, mlp_epochs=300)


def _step_state(M=200, left=1.0, right=0.0):
    n = np.where(np.arange(M) < M // 2, left, right)
    return MixingState(n, n[::-1].copy(), np.full(M, 100.0), dx=1.0 / M)


# -- coarse solver -------------------------------------------------------

def test_zero_diffusivity_leaves_state_unchanged():
    s = _step_state()
    nxt = coarse_step(s, np.zeros(s.n_cells), 1.0)
    assert np.array_equal(nxt.n1, s.n1) and nxt.step == 1 and nxt.t == 1.0


def test_uniform_field_is_stationary():
    s = MixingState(np.full(10, 3.0), np.full(10, 1.0), np.full(10, 5.0), dx=0.1)
    D = np.linspace(0.1, 1.0, 10)
    nxt = coarse_step(s, D, max_stable_dt(D, s.dx))
    assert np.allclose(nxt.n1, 3.0, rtol=1e-14) and np.allclose(nxt.n2, 1.0, rtol=1e-14)


def test_step_relaxes_to_error_function():
    s = _step_state()
    D = np.ones(s.n_cells)
    dt = max_stable_dt(D, s.dx)
    for _ in range(100):
        s = coarse_step(s, D, dt)
    x = s.centers
    ref = 0.5 * (1.0 - erf((x - 0.5) / (2 * np.sqrt(s.t))))
    assert np.linalg.norm(s.n1 - ref) / np.linalg.norm(ref) < 0.02
    assert np.allclose(erf_profile(x, 0.5, 1.0, 0.0, 1.0, s.t), ref, atol=1e-12)


@given(st.integers(0, 10_000), st.integers(8, 64))
def test_mass_is_conserved(seed, M):
    rng = np.random.default_rng(seed)
    s = MixingState(rng.uniform(0, 5, M), rng.uniform(0, 5, M), np.ones(M), dx=1.0 / M)
    D = rng.uniform(0, 2, M)
    m0 = s.mass()
    for _ in range(20):
        s = coarse_step(s, D, max_stable_dt(D, s.dx))
    assert s.mass() == pytest.approx(m0, rel=1e-10)
    assert np.all(s.n1 >= 0) and np.all(s.n2 >= 0)


def test_cfl_violation():
    s = _step_state(16)
    D = np.ones(16)
    with pytest.raises(CflViolation):
        coarse_step(s, D, 1.01 * max_stable_dt(D, s.dx))
    assert max_stable_dt(np.zeros(3), 0.1) == np.inf


def test_state_validation():
    with pytest.raises(ValueError):
        MixingState(np.ones(7), np.ones(7), np.ones(7), 0.1)
    with pytest.raises(ValueError):
        MixingState(-np.ones(8), np.ones(8), np.ones(8), 0.1)
    s = _step_state(16)
    with pytest.raises(ValueError):
        s.n1[0] = 5.0
    with pytest.raises(ValueError):
        coarse_step(s, np.ones(15), 1e-6)


# -- forecasting ---------------------------------------------------------

def test_stationary_history_forecasts_current_state():
    s = _step_state(16)
    f = forecast_requests([s, s], 2)
    assert f.shape == (32, 5)
    assert np.allclose(f[:16], closure_inputs(s, 1.0, 18.0))


def test_linear_ramp_is_extrapolated():
    a = MixingState(np.full(8, 1e24), np.full(8, 1e24), np.full(8, 100.0), 0.1)
    b = dataclasses.replace(a, T=np.full(8, 101.0))
    f = forecast_requests([a, b], 3)
    assert np.allclose(f[-8:, 2], 104.0)
    assert forecast_requests([b], 3).shape == (0, 5)
    assert forecast_requests([a, b], 0).shape == (0, 5)


# -- closure pipeline ----------------------------------------------------

class _Flaky(SyntheticClosureTruth):
    def __init__(self, failures=1, bad=False):
        super().__init__()
        self.failures = failures
        self.bad = bad
        self.calls = 0

    def evaluate(self, x, seed=0):
        self.calls += 1
        if self.failures:
            self.failures -= 1
            raise RuntimeError("transient")
        if self.bad:
            return np.array([1.0, -1.0, 1.0])
        return super().evaluate(x, seed)


@pytest.fixture(scope="module")
def built():
    o = Orchestrator(SMALL)
    o.initial_build()
    yield o
    o.close()


def _fresh(built, **changes):
    truth = changes.pop("truth", None)
    o = Orchestrator(dataclasses.replace(SMALL, **changes), truth=truth)
    o.committee = built.committee
    return o


HOT = np.array([2e24, 3e24, 140.0, 1.0, 18.0])


def test_repeat_request_is_a_db_hit(built):
    o = _fresh(built, tau=1e-9)
    y1, p1 = o.closure_for_cell(HOT)
    y2, p2 = o.closure_for_cell(HOT * [1.0001, 1, 1, 1, 1])
    assert p1 is Provenance.TRUTH and p2 is Provenance.DB_HIT
    assert np.array_equal(y1, y2)
    assert o.accounting.truth_calls == 1 and o.accounting.db_hits == 1
    o.close()


def test_huge_threshold_serves_everything_from_surrogate(built):
    o = _fresh(built, tau=1e9)
    X = np.tile(HOT, (5, 1)) * np.c_[np.linspace(1, 3, 5), np.ones((5, 4))]
    vals, prov = o.closure_for_cells(X)
    assert all(p is Provenance.SURROGATE for p in prov)
    assert np.all(vals > 0) and o.accounting.total_cost == 0.0
    o.close()


def test_duplicate_rows_in_one_batch_share_one_call(built):
    o = _fresh(built, tau=1e-9)
    vals, prov = o.closure_for_cells(np.vstack([HOT, HOT, HOT]))
    assert [p.value for p in prov] == ["truth", "db_hit", "db_hit"]
    assert np.all(vals == vals[0])
    o.close()


def test_cost_accounting(built):
    o = _fresh(built, tau=1e-9)
    o.accounting.nominal_cost_per_call = 7.0
    o.closure_for_cells(np.vstack([HOT, HOT * [2, 1, 1, 1, 1]]))
    o.speculative_prefetch(np.vstack([HOT * [4, 1, 1, 1, 1]]))
    o.collect_speculative()
    a = o.accounting
    assert (a.truth_calls, a.speculative_calls) == (2, 1)
    assert a.total_cost == 21.0
    o.close()


def test_zero_budget_issues_no_speculation(built):
    o = _fresh(built, tau=1e-9, spec_budget=0)
    assert o.speculative_prefetch(np.tile(HOT, (4, 1))) == 0
    o.close()


def test_speculation_respects_budget_and_skips_known(built):
    o = _fresh(built, tau=1e-9, spec_budget=2)
    o.closure_for_cell(HOT)
    forecast = np.vstack([HOT, HOT * [2, 1, 1, 1, 1], HOT * [2, 1, 1, 1, 1], HOT * [3, 1, 1, 1, 1], HOT * [5, 1, 1, 1, 1]])
    assert o.speculative_prefetch(forecast) == 2
    landed = o.collect_speculative()
    assert len(landed) == 2 and np.allclose(landed[1], forecast[3])
    o.close()


def test_transient_truth_failure_is_retried(built):
    truth = _Flaky(failures=1)
    o = _fresh(built, tau=1e-9, truth=truth)
    _, p = o.closure_for_cell(HOT)
    assert p is Provenance.TRUTH and truth.calls == 2
    o.close()


def test_persistent_failure_raises_closure_error(built):
    o = _fresh(built, tau=1e-9, truth=_Flaky(failures=5))
    with pytest.raises(ClosureError) as info:
        o.closure_for_cells(np.vstack([HOT]), step=7)
    assert info.value.cell == 0 and info.value.step == 7
    o.close()


def test_non_physical_truth_value_raises(built):
    o = _fresh(built, tau=1e-9, truth=_Flaky(failures=0, bad=True))
    with pytest.raises(ClosureError):
        o.closure_for_cell(HOT)
    o.close()


def test_retrain_triggers_at_batch_size(built):
    o = _fresh(built, tau=1e-9)
    o._records_at_build = 0
    o.store = built.store.__class__(o.domain, q=SMALL.q)
    X, Y = built.store.arrays()
    for x, y in zip(X[:31], Y[:31]):
        o.store.put(x, y)
    assert not o.retrain_if_due() and o.accounting.retrain_events == []
    o.store.put(X[31], Y[31])
    o.retrain_if_due()                 # 32 records is too few to calibrate, but the attempt is made
    assert len(o.store) == 32 and len(o.accounting.retrain_events) == 1
    assert o.accounting.retrain_events[0]["new_records"] == 32
    o.close()


def test_failed_retrain_keeps_committee_and_doubles_batch(built, monkeypatch):
    o = _fresh(built, tau=1e-9)
    old = o.committee

    def boom():
        raise CommitteeBuildError("gate", 0.1, 50)

    monkeypatch.setattr(o, "_build", boom)
    X, Y = built.store.arrays()
    for x, y in zip(X[:40], Y[:40]):
        o.store.put(x, y)
    assert not o.retrain_if_due()
    assert o.committee is old and o._batch == 64
    assert o.accounting.retrain_events[-1] == {"step": 0, "store_size": 40, "new_records": 40,
                                               "success": False, "next_batch": 64}
    o.close()


def test_closure_before_build_is_an_error():
    o = Orchestrator(SMALL)
    with pytest.raises(ClosureError):
        o.closure_for_cell(HOT)
    o.close()


@pytest.mark.parametrize("kwargs", [{"tau": 0.0}, {"retrain_batch": 0}, {"horizon": -1}])
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        OrchestratorConfig(**kwargs)


# -- full runs -----------------------------------------------------------

@pytest.fixture(scope="module")
def heated_run():
    return run_mixing_experiment("heated", SMALL)


def test_run_serves_every_cell_every_step(heated_run):
    r = heated_run
    assert r.callmap.complete
    assert r.accounting.requests == SMALL.steps * SMALL.n_cells
    assert sum(r.callmap.counts().values()) == SMALL.steps * SMALL.n_cells
    assert r.accounting_dict()["callmap_dedup_rate"] == pytest.approx(r.accounting.to_dict()["dedup_rate"])
    assert len(r.states) == SMALL.steps + 1


def test_run_conserves_mass(heated_run):
    m0, m1 = heated_run.states[0].mass(), heated_run.states[-1].mass()
    assert m1 == pytest.approx(m0, rel=1e-10)


def test_run_is_deterministic(heated_run):
    again = run_mixing_experiment("heated", SMALL)
    assert again.callmap.to_csv() == heated_run.callmap.to_csv()
    assert again.store.to_csv() == heated_run.store.to_csv()
    assert again.to_json() == heated_run.to_json()


def test_callmap_csv_and_pgm(heated_run):
    cm = heated_run.callmap
    assert CallMap.from_csv(cm.to_csv()).to_csv() == cm.to_csv()
    pgm = cm.to_pgm().split()
    assert pgm[:4] == ["P2", str(SMALL.n_cells), str(SMALL.steps), "255"]
    assert set(pgm[4:]) <= {"0", "128", "255"}


def test_callmap_rejects_double_record():
    cm = CallMap(2, 8)
    cm.record(0, 0, Provenance.TRUTH)
    with pytest.raises(ValueError):
        cm.record(0, 0, Provenance.SURROGATE)
    assert not cm.complete


def test_spearman_matches_reference():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 5, 40).astype(float)
    y = x + rng.standard_normal(40)
    assert spearman(x, y) == pytest.approx(spearmanr(x, y).statistic, rel=1e-12)
    assert spearman(np.ones(5), np.arange(5)) == 0.0


# -- default-size scenario measurements ----------------------------------

@pytest.fixture(scope="module")
def default_runs():
    cfg = OrchestratorConfig(seed=0)
    return {
        "uniform": run_mixing_experiment("uniform", cfg),
        "heated": run_mixing_experiment("heated", cfg),
        "heated_nospec": run_mixing_experiment("heated", dataclasses.replace(cfg, spec_budget=0)),
    }


def _mean_blocking(r):
    return float(np.mean(r.accounting.blocking_per_step))


@pytest.mark.slow
def test_speculation_lowers_blocking_at_equal_total_calls(default_runs):
    ahead, base = default_runs["heated"].accounting, default_runs["heated_nospec"].accounting
    total_ahead = ahead.truth_calls + ahead.speculative_calls
    total_base = base.truth_calls + base.speculative_calls
    assert base.speculative_calls == 0
    assert abs(total_ahead - total_base) <= 0.1 * total_base
    assert _mean_blocking(default_runs["heated"]) < _mean_blocking(default_runs["heated_nospec"])


@pytest.mark.slow
def test_forecast_coverage_in_heated_run(default_runs):
    assert default_runs["heated"].accounting_dict()["forecast_coverage"] >= 0.5


@pytest.mark.slow
def test_uniform_truth_fraction_declines(default_runs):
    grid = default_runs["uniform"].callmap.grid
    blocks = np.array_split(np.arange(grid.shape[0]), 6)
    frac = [np.mean(grid[b] == Provenance.TRUTH.code) for b in blocks]
    assert spearman(np.arange(len(frac)), frac) < 0


@pytest.mark.slow
def test_far_outside_box_goes_to_truth(default_runs):
    heated = default_runs["heated"]
    hot = np.array([s.T.max() for s in heated.states[:-1]]) > 150.0
    truth_on_hot = [heated.callmap.grid[k][heated.states[k].T > 150.0] for k in np.flatnonzero(hot)]
    assert np.any(np.concatenate(truth_on_hot) == Provenance.TRUTH.code)


@pytest.mark.slow
def test_served_values_match_store_and_truth(default_runs):
    r = default_runs["heated"]
    truth = SyntheticClosureTruth()
    X, Y = r.store.arrays()
    for x, y in list(zip(X, Y))[::25]:
        assert np.array_equal(truth.evaluate(x), y)
