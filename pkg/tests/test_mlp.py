import numpy as np
import pytest

from scalebridge.core import split_indices
from scalebridge.surrogates import (
    DegenerateMetric,
    MlpTrainer,
    TrainConfig,
    TrainingDiverged,
    average_model_error,
    load_surrogate,
    mlp_train,
    r_squared,
    rmse,
    save_surrogate,
)
from scalebridge.surrogates.mlp import MlpSurrogate, init_mlp


def _tiny_net(sizes, seed=0):
    rng = np.random.default_rng(seed)
    W, b = init_mlp(sizes, rng)
    b = [rng.standard_normal(v.shape) * 0.1 for v in b]
    return MlpSurrogate(W, b, np.zeros(sizes[0]), np.ones(sizes[0]), np.zeros(sizes[-1]), np.ones(sizes[-1]))


def _fd_check(net, Z, T, eps=1e-5):
    theta = net.get_params()
    _, grad = net.loss_and_grad(Z, T)
    fd = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = eps
        net.set_params(theta + e)
        lp, _ = net.loss_and_grad(Z, T)
        net.set_params(theta - e)
        lm, _ = net.loss_and_grad(Z, T)
        fd[i] = (lp - lm) / (2 * eps)
    net.set_params(theta)
    keep = np.abs(fd) > 1e-8
    return np.max(np.abs(grad[keep] - fd[keep]) / np.abs(fd[keep]))


def test_gradient_five_parameter_net():
    net = _tiny_net((2, 1, 1))                     # 2 + 1 hidden, 1 + 1 output
    rng = np.random.default_rng(1)
    Z = rng.standard_normal((8, 2))
    T = rng.standard_normal((8, net.n_outputs))
    assert net.get_params().size == 5
    assert _fd_check(net, Z, T) < 1e-4


def test_gradient_default_architecture():
    net = _tiny_net((3, 32, 32, 2), seed=5)
    rng = np.random.default_rng(2)
    Z, T = rng.standard_normal((12, 3)), rng.standard_normal((12, 2))
    assert _fd_check(net, Z, T) < 1e-4


def test_fit_identity_line():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(100, 1))
    train, held = split_indices(100, 0.2, 0)
    net = mlp_train(X[train], X[train], TrainConfig(seed=0))
    assert r_squared(X[held, 0], net.predict(X[held])[:, 0]) > 0.99


def test_loss_non_increasing_over_last_tenth():
    X = np.linspace(-1, 1, 50)[:, None]
    net = mlp_train(X, np.sin(3 * X), TrainConfig(epochs=1500, seed=1))
    h = net.loss_history
    tail = h[-max(1, len(h) // 10):]
    assert np.all(np.diff(tail) <= 0)


def test_deterministic_per_seed():
    X = np.linspace(0, 1, 30)[:, None]
    a = mlp_train(X, X ** 2, TrainConfig(epochs=200, seed=4))
    b = mlp_train(X, X ** 2, TrainConfig(epochs=200, seed=4))
    assert np.array_equal(a.get_params(), b.get_params())


def test_constant_targets_fit_exactly_and_r2_is_degenerate():
    X = np.random.default_rng(0).uniform(size=(20, 2))
    net = mlp_train(X, np.full(20, 3.0), TrainConfig(epochs=50))
    assert np.allclose(net.predict(X), 3.0)
    with pytest.raises(DegenerateMetric):
        r_squared(np.full(20, 3.0), net.predict(X)[:, 0])


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_divergence_reports_epoch():
    X = np.linspace(0, 1, 20)[:, None]
    with pytest.raises(TrainingDiverged) as info:
        mlp_train(X, 1e3 * X, TrainConfig(learning_rate=1e6, epochs=500))
    assert info.value.epoch >= 0


def test_needs_ten_points():
    with pytest.raises(ValueError):
        mlp_train(np.zeros((9, 1)), np.zeros(9))


@pytest.mark.parametrize("kwargs", [{"epochs": 0}, {"learning_rate": 0.0}])
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_input_gradient_matches_finite_differences():
    X = np.random.default_rng(3).uniform(size=(40, 2))
    net = mlp_train(X, np.column_stack([X[:, 0] * X[:, 1], np.sin(X[:, 0])]), TrainConfig(epochs=300))
    x = np.array([[0.3, 0.6]])
    g = np.array([[1.0, -2.0]])
    _, gx = net.predict_with_input_grad(x, g)
    fd = [(np.sum(g * net.predict(x + h)) - np.sum(g * net.predict(x - h))) / 2e-6 for h in 1e-6 * np.eye(2)]
    assert np.allclose(gx[0], fd, rtol=1e-5)


def test_save_load_round_trip(tmp_path):
    X = np.random.default_rng(0).uniform(size=(20, 2))
    net = MlpTrainer(TrainConfig(epochs=100))(X, X.sum(axis=1))
    save_surrogate(net, tmp_path / "m.npz")
    back = load_surrogate(tmp_path / "m.npz")
    assert np.array_equal(back.predict(X), net.predict(X))


def test_r_squared_examples():
    assert r_squared([1, 2, 3], [1, 2, 3]) == 1.0
    assert r_squared([1, 2, 3], [2, 2, 2]) == 0.0
    assert r_squared([1, 2, 3], [1, 2, 2]) == pytest.approx(0.5)


def test_r_squared_affine_invariance():
    rng = np.random.default_rng(0)
    t, p = rng.standard_normal(30), rng.standard_normal(30)
    assert r_squared(3 * t - 7, 3 * p - 7) == pytest.approx(r_squared(t, p), rel=1e-12)


def test_average_model_error_examples():
    class Const:
        def __init__(self, c):
            self.c = c

        def predict(self, X):
            return np.full((len(X), 1), self.c)

    X = np.zeros((5, 1))
    assert average_model_error(Const(2.0), None, X, np.full(5, 2.0)) == 0.0
    assert average_model_error(Const(2.0), None, X, np.full(5, 3.0)) == 1.0
    assert rmse([0, 0], [3, 4]) == pytest.approx(np.sqrt(12.5))
