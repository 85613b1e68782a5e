import itertools

import mpmath
import numpy as np
import pytest

from scalebridge.truth import (
    ARGON_MASS,
    SyntheticClosureTruth,
    rosenbrock,
    rosenbrock_batch,
    rosenbrock_grad,
    synthetic_closure,
)


def test_rosenbrock_examples():
    assert rosenbrock(np.ones(8)) == 0.0
    assert rosenbrock([0.0, 0.0]) == 1.0
    assert rosenbrock(np.zeros(8)) == 7.0


def test_rosenbrock_needs_two_dims():
    with pytest.raises(ValueError):
        rosenbrock([1.0])


def test_rosenbrock_non_negative_on_random_points():
    x = np.random.default_rng(0).uniform(-5, 5, size=(100_000, 4))
    assert np.all(rosenbrock_batch(x) >= 0)


def test_rosenbrock_gradient_vanishes_at_minimum():
    assert np.max(np.abs(rosenbrock_grad(np.ones(6)))) < 1e-12


def test_rosenbrock_gradient_matches_finite_differences():
    x = np.array([0.3, -0.7, 1.2])
    h = 1e-6
    fd = [(rosenbrock(x + h * e) - rosenbrock(x - h * e)) / (2 * h) for e in np.eye(3)]
    assert np.allclose(rosenbrock_grad(x), fd, rtol=1e-6)


def _closure_oracle(n1, n2, T, Z1, Z2, m1=1, m2=ARGON_MASS):
    mpmath.mp.dps = 40
    n1, n2, T = mpmath.mpf(n1), mpmath.mpf(n2), mpmath.mpf(T)
    n = n1 + n2
    lnl = max(mpmath.mpf(2), mpmath.log(1 + T ** 1.5 / mpmath.sqrt(n) * mpmath.mpf(10) ** 10))
    out = []
    for ma, mb, za, zb in ((m1, m1, Z1, Z1), (m1, m2, Z1, Z2), (m2, m2, Z2, Z2)):
        mu = mpmath.mpf(ma) * mb / (mpmath.mpf(ma) + mb)
        out.append(T ** 2.5 / (n * mpmath.sqrt(mu) * (za * zb) ** 2 * lnl))
    return [float(v) for v in out]


def test_closure_hand_value_against_high_precision_oracle():
    d11, d12, d22 = synthetic_closure(1e23, 1e23, 100.0, 1.0, 1.0)
    ref = _closure_oracle(1e23, 1e23, 100.0, 1, 1)
    assert d11 == pytest.approx(ref[0], rel=1e-12)
    assert d12 == pytest.approx(ref[1], rel=1e-12)
    assert d22 == pytest.approx(ref[2], rel=1e-12)
    assert d11 == pytest.approx(2.244e-19, rel=1e-3)


@pytest.mark.parametrize("x", [(5e22, 7e23, 60.0, 2.0, 9.0), (1e25, 1e22, 150.0, 18.0, 1.0), (3e23, 3e24, 80.0, 1.0, 18.0)])
def test_closure_matches_oracle_across_box(x):
    assert np.allclose(synthetic_closure(*x), _closure_oracle(*x), rtol=1e-12)


def test_doubling_density_halves_each_coefficient_where_log_is_clamped():
    # ln(Lambda) sits at its floor of 2 for dense, cool states
    a = np.array(synthetic_closure(2e24, 3e24, 50.0, 1.0, 6.0))
    b = np.array(synthetic_closure(4e24, 6e24, 50.0, 1.0, 6.0))
    assert np.allclose(b, a / 2, rtol=1e-14)


def test_mutual_coefficient_symmetric_under_species_swap():
    m1, m2 = 1.0, ARGON_MASS
    a = synthetic_closure(2e23, 7e24, 90.0, 1.0, 18.0, m1, m2)
    b = synthetic_closure(7e24, 2e23, 90.0, 18.0, 1.0, m2, m1)
    assert a[1] == pytest.approx(b[1], rel=1e-14)
    assert a[0] == pytest.approx(b[2], rel=1e-14)


def test_closure_positive_and_monotone_on_grid():
    ns = np.logspace(22, 25, 10)
    Ts = np.linspace(50, 150, 10)
    Zs = np.logspace(0, np.log10(18), 10)
    for z in Zs:
        D = np.array([[synthetic_closure(n / 2, n / 2, T, 1.0, z) for T in Ts] for n in ns])
        assert np.all(D > 0)
        assert np.all(np.diff(D, axis=1) > 0)      # increasing in T
        assert np.all(np.diff(D, axis=0) < 0)      # decreasing in total density


@pytest.mark.parametrize("bad", [(0.0, 1e23, 100.0, 1.0, 1.0), (1e23, -1.0, 100.0, 1.0, 1.0), (1e23, 1e23, 0.0, 1.0, 1.0)])
def test_closure_rejects_non_physical_inputs(bad):
    with pytest.raises(ValueError):
        synthetic_closure(*bad)


def test_closure_truth_accepts_states_outside_the_box():
    y = SyntheticClosureTruth().evaluate([1e23, 1e23, 250.0, 1.0, 18.0])
    assert y.shape == (3,) and np.all(y > 0)


def test_closure_truth_grid_matches_function():
    t = SyntheticClosureTruth()
    for n1, T in itertools.product([1e22, 1e24], [50.0, 150.0]):
        assert np.array_equal(t.evaluate([n1, 1e23, T, 1.0, 18.0]), np.array(synthetic_closure(n1, 1e23, T, 1.0, 18.0)))
