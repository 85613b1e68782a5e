import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scalebridge.core import (
    Dataset,
    Domain,
    DomainError,
    FunctionTruth,
    Provenance,
    SamplePoint,
    denormalize,
    normalize,
    split_indices,
    split_random,
)
from scalebridge.truth import icf_domain


def test_log_axis_lower_bound_maps_to_zero():
    d = Domain(((1e22, 1e25),), log_scaled=(True,))
    assert normalize(d, [1e22])[0] == 0.0


def test_log_axis_midpoint():
    d = Domain(((1e22, 1e25),), log_scaled=(True,))
    assert normalize(d, [10 ** 23.5])[0] == pytest.approx(0.5, abs=1e-12)


def test_linear_temperature_upper_bound():
    d = Domain(((50.0, 150.0),))
    assert normalize(d, [150.0])[0] == 1.0


def test_out_of_bounds_reports_index():
    with pytest.raises(DomainError) as info:
        normalize(icf_domain(), [1e23, 1e23, 200.0, 1.0, 1.0])
    assert info.value.index == 2


def test_extrapolate_maps_outside_cube():
    u = normalize(icf_domain(), [1e23, 1e23, 200.0, 1.0, 1.0], extrapolate=True)
    assert u[2] == pytest.approx(1.5)


@pytest.mark.parametrize("bounds, logs", [(((1.0, 1.0),), ()), (((2.0, 1.0),), ()), (((0.0, 1.0),), (True,))])
def test_domain_invariants(bounds, logs):
    with pytest.raises(ValueError):
        Domain(bounds, log_scaled=logs)


@pytest.mark.parametrize("domain", [icf_domain(), Domain.box(-2.0, 2.0, 8), Domain(((1e-3, 1e3), (0.0, 1.0)), (True, False))])
def test_round_trip_thousand_points(domain):
    rng = np.random.default_rng(0)
    x = denormalize(domain, rng.uniform(size=(1000, domain.dims)))
    back = denormalize(domain, normalize(domain, x))
    assert np.all(np.abs(back - x) <= 1e-12 * np.maximum(np.abs(x), 1e-300) + 1e-15)


@given(st.lists(st.floats(0.0, 1.0), min_size=5, max_size=5))
def test_normalize_lands_in_unit_cube(u):
    d = icf_domain()
    x = np.clip(denormalize(d, np.array(u)), d.lower, d.upper)
    v = normalize(d, x)
    assert np.all((v >= 0) & (v <= 1))


def test_sample_point_invariants():
    with pytest.raises(ValueError):
        SamplePoint((0.0,), (1.0,), quality=-1.0, provenance=Provenance.SURROGATE)
    with pytest.raises(ValueError):
        SamplePoint((0.0,), (1.0,), Provenance.TRUTH, quality=0.5)
    assert SamplePoint((0.0,), (1.0,), Provenance.SURROGATE, quality=0.5).quality == 0.5


def test_provenance_codes():
    assert [p.code for p in (Provenance.TRUTH, Provenance.SURROGATE, Provenance.DB_HIT)] == [0, 1, 2]


@pytest.mark.parametrize("n, fraction, sizes", [(10, 0.1, (9, 1)), (2, 0.5, (1, 1))])
def test_split_sizes(n, fraction, sizes):
    d = Domain.box(0.0, 1.0, 1)
    ds = Dataset.from_arrays(d, np.linspace(0, 1, n)[:, None], np.zeros((n, 1)))
    a, b = split_random(ds, fraction, seed=3)
    assert (len(a), len(b)) == sizes


def test_split_deterministic():
    assert all(np.array_equal(p, q) for p, q in zip(split_indices(50, 0.3, 7), split_indices(50, 0.3, 7)))


def test_split_empty_rejected():
    with pytest.raises(ValueError):
        split_random(Dataset(Domain.box(0.0, 1.0, 1)), 0.5, 0)


@given(st.integers(2, 300), st.floats(0.01, 0.99), st.integers(0, 2 ** 32 - 1))
def test_split_is_exact_partition(n, fraction, seed):
    a, b = split_indices(n, fraction, seed)
    assert len(b) == round(fraction * n) or len(b) in (1, n - 1)
    assert sorted(np.concatenate([a, b]).tolist()) == list(range(n))


def test_dataset_csv_round_trip(tmp_path):
    d = icf_domain()
    X = denormalize(d, np.random.default_rng(1).uniform(size=(5, 5)))
    ds = Dataset.from_arrays(d, X, np.random.default_rng(2).uniform(size=(5, 3)))
    path = tmp_path / "data.csv"
    text = ds.to_csv(path)
    assert text.splitlines()[0] == "x0,x1,x2,x3,x4,y0,y1,y2,provenance,quality,step"
    back = Dataset.from_csv(d, path)
    assert np.array_equal(back.X, ds.X) and np.array_equal(back.Y, ds.Y)
    assert [p.provenance for p in back] == [p.provenance for p in ds]


def test_out_of_domain_points_are_flagged():
    d = Domain(((50.0, 150.0),))
    ds = Dataset.from_arrays(d, [[100.0], [200.0]], [[1.0], [2.0]])
    assert ds.out_of_domain() == [1]


def test_function_truth_is_deterministic():
    t = FunctionTruth(lambda x: [math.sin(x[0]), x[0] ** 2], dim_in=1, dim_out=2)
    assert np.array_equal(t([0.3]), t([0.3]))
    assert t.evaluate_many([[0.1], [0.2]]).shape == (2, 2)
