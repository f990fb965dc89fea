import math

import numpy as np
import pytest

from hnlab.model import (ModelError, PotentialSpec, apply, bernoulli, build_matrix, constant, fixed_potential,
                         sample_potential, stream, uniform)
from oracles import dense_hn


def test_constant_potential_is_all_zero():
    pv = sample_potential(constant(0.0), 5, seed=123)
    assert pv.values.tolist() == [0.0] * 5


def test_background_is_added_periodically():
    pv = sample_potential(constant(0.0, background=(0.0, 2.0)), 4, seed=9)
    assert pv.values.tolist() == [0.0, 2.0, 0.0, 2.0]


def test_uniform_values_in_range_and_reproducible():
    a = sample_potential(uniform(0, 4), 70, seed=5)
    b = sample_potential(uniform(0, 4), 70, seed=5)
    assert a.n == 70
    assert np.all((a.values >= 0) & (a.values <= 4))
    assert a.values.tobytes() == b.values.tobytes()


def test_streams_differ_by_index_and_seed():
    a = sample_potential(uniform(0, 4), 50, seed=1, index=0).values
    b = sample_potential(uniform(0, 4), 50, seed=1, index=1).values
    c = sample_potential(uniform(0, 4), 50, seed=2, index=0).values
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_stream_is_order_independent():
    first = stream(7, 3).random(4)
    stream(7, 0).random(100)
    again = stream(7, 3).random(4)
    assert np.array_equal(first, again)


def test_bernoulli_takes_two_values():
    v = sample_potential(bernoulli(1.5), 400, seed=0).values
    assert set(np.unique(v)) == {-1.5, 1.5}


@pytest.mark.parametrize("spec, bound", [
    (uniform(0, 4), 4.0),
    (uniform(-3, 1), 3.0),
    (bernoulli(1.0), 1.0),
    (constant(-2.5), 2.5),
    (uniform(-0.5, 0.5, (0.0, 2.0)), 2.5),
    (bernoulli(1.0, (0.0, -3.0)), 4.0),
])
def test_bound_is_exact_supremum(spec, bound):
    assert spec.bound == pytest.approx(bound)


def test_bound_exhaustive_for_discrete_families():
    for spec in (bernoulli(0.7, (0.1, -2.0, 1.0)), constant(1.2, (0.0, -3.0))):
        vals = spec.distribution.values()
        brute = max(abs(x + a) for x in vals for a in spec.background)
        assert spec.bound == brute


def test_invalid_distributions_rejected():
    with pytest.raises(ModelError):
        uniform(2, 1)
    with pytest.raises(ModelError):
        bernoulli(-0.1)


def test_spec_round_trip():
    spec = uniform(-1, 3, (0.0, 2.0))
    assert PotentialSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ModelError):
        PotentialSpec.from_dict({"kind": "gaussian", "sigma": 1})


def test_matrix_entries_match_definition():
    v = [0.3, -1.0, 2.0, 0.5]
    H = build_matrix(fixed_potential(v), 0.1).entries
    np.testing.assert_array_equal(H, dense_hn(v, 0.1))
    assert H[0, 3] == pytest.approx(math.exp(0.1))
    assert H[3, 0] == pytest.approx(math.exp(-0.1))


def test_three_site_free_matrix_spectrum():
    H = build_matrix(fixed_potential([0, 0, 0]), 0.0).entries
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(H)), [-1, -1, 2], atol=1e-12)


def test_small_sizes_rejected():
    with pytest.raises(ModelError):
        build_matrix(fixed_potential([1.0, 2.0]), 0.0)


def test_apply_examples():
    M = build_matrix(fixed_potential(np.zeros(5)), 0.0)
    np.testing.assert_allclose(apply(M, np.ones(5)), 2 * np.ones(5))
    M = build_matrix(fixed_potential([1, 2, 3]), 0.0)
    np.testing.assert_allclose(apply(M, np.array([1.0, 0, 0])), [1, 1, 1])
    g = 0.1
    M = build_matrix(fixed_potential(np.zeros(4)), g)
    x = np.array([1, 1j, -1, -1j])
    # (Hx)_j = e^g x_{j-1} + e^-g x_{j+1} with x_j = i^j gives -i e^g + i e^-g
    lam = -2j * math.sinh(g)
    np.testing.assert_allclose(apply(M, x), lam * x, atol=1e-14)
    with pytest.raises(ModelError):
        apply(M, np.ones(3))


def test_norm_bound_at_zero_g():
    spec = uniform(0, 4)
    for k in range(5):
        pv = sample_potential(spec, 60, seed=3, index=k)
        H = build_matrix(pv, 0.0).entries
        assert np.linalg.norm(H, 2) <= 2 + spec.bound + 1e-12
