import numpy as np
import pytest

from scalebridge.committee import (
    CommitteeBuildError,
    CommitteeConfig,
    build_committee,
    committee_predict,
    is_confident,
    load_committee,
    robust_scale,
    save_committee,
)
from scalebridge.core import ScaleBridgeError
from scalebridge.surrogates import RbfTrainer


class _Linear:
    def __init__(self, w):
        self.w = w

    def predict(self, X):
        return (np.asarray(X) @ self.w)[:, None]


def _data(n=200, seed=0):
    X = np.random.default_rng(seed).uniform(size=(n, 2))
    return X, X[:, 0] + 2 * X[:, 1]


def test_all_good_members_accepted():
    X, y = _data()
    c = build_committee((X, y), lambda Xf, Yf, s: _Linear(np.array([1.0, 2.0])), CommitteeConfig())
    assert len(c.members) == 5 and c.rejected_attempts == 0
    mean, spread, s = c.predict(X[:4])
    assert np.allclose(mean[:, 0], y[:4]) and np.all(spread == 0) and np.all(s == 0)


def test_bad_members_rejected_until_gate_passes():
    X, y = _data()
    calls = []

    def trainer(Xf, Yf, seed):
        calls.append(seed)
        return _Linear(np.array([1.0, 2.0]) if len(calls) % 2 == 0 else np.array([-1.0, 0.0]))

    c = build_committee((X, y), trainer, CommitteeConfig())
    assert len(c.members) == 5 and c.rejected_attempts == 5
    assert all(r >= 0.7 for r in c.calibration_scores)


def test_unreachable_gate_reports_best_r2():
    X, y = _data()
    with pytest.raises(CommitteeBuildError) as info:
        build_committee((X, y), lambda *a: _Linear(np.array([-1.0, 0.0])), CommitteeConfig(max_attempts=6))
    assert info.value.attempts == 6 and info.value.best_r2 < 0.7


def test_failing_trainer_attempts_count_against_budget():
    def trainer(*a):
        raise ScaleBridgeError("nope")

    X, y = _data()
    with pytest.raises(CommitteeBuildError):
        build_committee((X, y), trainer, CommitteeConfig(max_attempts=5))


def test_too_few_calibration_points():
    X, y = _data(n=20)
    with pytest.raises(ValueError):
        build_committee((X, y), lambda *a: _Linear(np.ones(2)))


@pytest.mark.parametrize("kwargs", [{"n_ensemble": 1}, {"subset_fraction": 1.0}, {"max_attempts": 3}])
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        CommitteeConfig(**kwargs)


def test_spread_is_population_std_and_s_uses_iqr():
    X, y = _data()
    members = [_Linear(np.array([1.0, 2.0]) * f) for f in (0.9, 0.95, 1.0, 1.05, 1.1)]
    it = iter(members)
    c = build_committee((X, y), lambda *a: next(it), CommitteeConfig())
    x = np.array([0.5, 0.5])
    mean, spread, s = committee_predict(c, x)
    preds = np.array([m.predict(x[None])[0, 0] for m in members])
    assert mean[0] == pytest.approx(preds.mean())
    assert spread[0] == pytest.approx(preds.std(ddof=0))
    q75, q25 = np.percentile(y, [75, 25])
    assert s == pytest.approx(spread[0] / (q75 - q25))
    assert is_confident(c, x, s) and not is_confident(c, x, s * 0.99)


def test_robust_scale_fallbacks():
    Y = np.column_stack([np.arange(8.0), np.r_[np.zeros(7), 1.0], np.zeros(8)])
    scale = robust_scale(Y)
    assert scale[0] == pytest.approx(3.5)
    assert scale[1] == pytest.approx(np.std(Y[:, 1]))
    assert scale[2] == 1.0


def test_build_is_deterministic_for_a_seed():
    X, y = _data(100)
    a = build_committee((X, y), RbfTrainer(), CommitteeConfig(seed=3))
    b = build_committee((X, y), RbfTrainer(), CommitteeConfig(seed=3))
    Q = np.random.default_rng(9).uniform(size=(20, 2))
    for u, v in zip(a.predict(Q), b.predict(Q)):
        assert np.array_equal(u, v)


def test_save_load_round_trip(tmp_path):
    X = np.random.default_rng(0).uniform(size=(100, 2))
    c = build_committee((X, np.sin(4 * X[:, 0]) + X[:, 1]), RbfTrainer(), CommitteeConfig(seed=1))
    save_committee(c, tmp_path / "c")
    d = load_committee(tmp_path / "c")
    Q = np.random.default_rng(1).uniform(size=(30, 2))
    for u, v in zip(c.predict(Q), d.predict(Q)):
        assert np.array_equal(u, v)
    assert d.config == c.config and d.calibration_scores == c.calibration_scores


def test_negative_threshold_rejected():
    X, y = _data()
    c = build_committee((X, y), lambda *a: _Linear(np.array([1.0, 2.0])))
    with pytest.raises(ValueError):
        is_confident(c, X[0], -1.0)


def test_default_gate_constants():
    cfg = CommitteeConfig()
    assert (cfg.n_ensemble, cfg.r2_threshold, cfg.calibration_fraction) == (5, 0.7, 0.10)
