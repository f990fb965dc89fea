import math

import numpy as np
import pytest

from hnlab.model import bernoulli, fixed_potential, sample_potential, uniform
from hnlab.transfer import (TransferError, TransferProduct, band_structure, batch_products, batch_svd, char_value,
                            log_norm, rank_one_check, real_eigenvalues, ring_eigenvalues, spectral_radius_log,
                            svd_factors, transfer_product, transfer_step, verify_rank_one_bound)
from oracles import FREE_GAMMA_3, dense_hn, mp_det_shifted, mp_trace, naive_product


def test_transfer_step_examples():
    np.testing.assert_array_equal(transfer_step(2, 0), [[2, -1], [1, 0]])
    np.testing.assert_array_equal(transfer_step(0, 1), [[-1, -1], [1, 0]])
    T = transfer_step(1j, 0)
    np.testing.assert_array_equal(T, [[1j, -1], [1, 0]])
    assert abs(np.linalg.det(T) - 1) < 1e-15


def test_rotation_product_has_unit_norm():
    p = transfer_product(fixed_potential(np.zeros(37)), 0.0)
    assert log_norm(p) == pytest.approx(0.0, abs=1e-12)
    assert spectral_radius_log(p) == pytest.approx(0.0, abs=1e-12)


def test_identity_product():
    p = TransferProduct.from_matrix(np.eye(2))
    assert log_norm(p) == pytest.approx(0.0, abs=1e-15)


def test_free_growth_rate_long_product():
    n = 10_000
    p = transfer_product(fixed_potential(np.zeros(n)), 3.0)
    assert log_norm(p) / n == pytest.approx(FREE_GAMMA_3, abs=1e-3)
    assert log_norm(p) == pytest.approx(n * FREE_GAMMA_3, abs=10)


def test_free_spectral_radius_exact_power():
    p = transfer_product(fixed_potential(np.zeros(100)), 3.0)
    assert spectral_radius_log(p) == pytest.approx(100 * FREE_GAMMA_3, abs=1e-6)


def test_three_site_chebyshev_trace():
    for E in np.linspace(-3, 3, 13):
        p = transfer_product(fixed_potential([0, 0, 0]), E)
        assert p.trace == pytest.approx(E ** 3 - 3 * E, abs=1e-12)


def test_product_matches_naive_multiplication():
    rng = np.random.default_rng(0)
    for n in (3, 17, 60):
        v = rng.uniform(0, 4, n)
        for z in (0.3, -1.7 + 0.2j, 5.0):
            p = transfer_product(fixed_potential(v), z)
            ref = naive_product(v, z)
            np.testing.assert_allclose(p.matrix, ref, rtol=1e-10, atol=1e-10 * np.abs(ref).max())


def test_trace_against_high_precision():
    v = sample_potential(uniform(0, 4), 80, seed=2).values
    for E in (-1.3, 0.7, 2.2, 6.5):
        p = transfer_product(fixed_potential(v), E)
        ref = float(mp_trace(v, E))
        assert p.trace == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_determinant_is_one_in_scaled_form():
    eps = np.finfo(float).eps
    for n, E in ((30, 1.5), (200, 2.0), (500, 2.0)):
        v = sample_potential(uniform(0, 4), n, seed=4).values
        p = transfer_product(fixed_potential(v), E)
        det = np.linalg.det(p.scaled)
        # det(scaled) = exp(-2 sigma) is only resolvable above the rounding floor of the 2x2 determinant
        err = abs(det - math.exp(-2 * p.log_scale))
        assert err <= 1e-9 * n * math.exp(-2 * p.log_scale) + 4 * eps
        assert p.log_scale >= -math.log(2)


def test_characteristic_identity_against_determinant():
    rng = np.random.default_rng(11)
    for n in (3, 4, 7, 12):
        v = rng.uniform(-1, 3, n)
        for g in (0.0, 0.2, 0.9):
            for E in (-2.1, 0.4, 1.9):
                det = float(mp_det_shifted(v, g, E))
                p = transfer_product(fixed_potential(v), E)
                assert p.trace - 2 * math.cosh(n * g) == pytest.approx(det, rel=1e-9, abs=1e-9)


def test_char_value_vanishes_at_symmetric_eigenvalues():
    v = sample_potential(uniform(0, 4), 40, seed=8).values
    pv = fixed_potential(v)
    ev = np.linalg.eigvalsh(dense_hn(v, 0.0))
    h = 1e-7
    f = char_value(pv, 0.0, ev)
    slope = np.abs(char_value(pv, 0.0, ev + h) - char_value(pv, 0.0, ev - h)) / (2 * h)
    # the dense eigenvalues carry an absolute error of about 1e-14 * ||H||; allow 1e-10
    assert np.all(np.abs(f) <= slope * 1e-10 + 1e-12)


def test_char_value_free_examples():
    assert char_value(fixed_potential(np.zeros(4)), 0.1, 2 * math.cosh(0.1)) == pytest.approx(0.0, abs=1e-10)
    for E in (2.0, -1.0):
        assert char_value(fixed_potential([0, 0, 0]), 0.0, E) == pytest.approx(0.0, abs=1e-12)


def test_real_eigenvalues_free_examples():
    r = real_eigenvalues(fixed_potential([0, 0, 0]), 0.0)
    np.testing.assert_allclose(r.roots, [-1, -1, 2], atol=1e-10)
    r = real_eigenvalues(fixed_potential(np.zeros(10)), 1.0)
    np.testing.assert_allclose(r.roots, [-2 * math.cosh(1), 2 * math.cosh(1)], atol=1e-9)


@pytest.mark.parametrize("spec", [uniform(0, 4), bernoulli(1.0), uniform(-1, 1)])
def test_real_eigenvalues_at_zero_match_dense(spec):
    for k in range(4):
        pv = sample_potential(spec, 50 + 13 * k, seed=21, index=k)
        r = real_eigenvalues(pv, 0.0)
        ev = np.linalg.eigvalsh(dense_hn(pv.values, 0.0))
        np.testing.assert_allclose(np.sort(r.roots), ev, atol=1e-8)


def test_real_eigenvalues_match_dense_nonzero_g():
    for k in range(6):
        pv = sample_potential(uniform(0, 4), 60, seed=31, index=k)
        g = 0.2 + 0.1 * k
        w = np.linalg.eigvals(dense_hn(pv.values, g))
        dense_real = np.sort(w[np.abs(w.imag) <= 1e-8 * (1 + np.abs(w))].real)
        roots = real_eigenvalues(pv, g).roots
        assert roots.size == dense_real.size
        np.testing.assert_allclose(roots, dense_real, atol=1e-6)


def test_ring_eigenvalues_periodic_and_antiperiodic():
    v = sample_potential(uniform(0, 4), 30, seed=1).values
    for corner in (1.0, -1.0):
        H = np.diag(v) + np.diag(np.ones(29), 1) + np.diag(np.ones(29), -1)
        H[0, -1] = H[-1, 0] = corner
        ev, cluster = ring_eigenvalues(v, corner)
        np.testing.assert_allclose(ev, np.linalg.eigvalsh(H), atol=1e-10)
        assert not cluster.any()


def test_free_band_structure_has_closed_gaps():
    n = 8
    bs = band_structure(fixed_potential(np.zeros(n)))
    assert bs.bands.shape == (n, 2)
    assert bs.edges[0] == pytest.approx(2.0)
    assert bs.edges[-1] == pytest.approx(-2.0)
    # interior gaps of the free chain close at 2cos(pi k/N)
    assert bs.closed_gaps[1:n].all()
    inner = np.sort(bs.gaps[1:n, 0])
    np.testing.assert_allclose(inner, np.sort(2 * np.cos(np.pi * np.arange(1, n) / n)), atol=1e-7)


def test_bernoulli_band_structure():
    pv = sample_potential(bernoulli(1.0), 50, seed=4)
    bs = band_structure(pv)
    assert bs.bands.shape[0] == 50
    assert np.all(np.diff(bs.edges) <= 0)
    ev = np.linalg.eigvalsh(dense_hn(pv.values, 0.0))[::-1]
    np.testing.assert_allclose(bs.periodic, ev, atol=1e-8)
    # G_0 and G_2 edges are periodic eigenvalues
    assert bs.gap(0)[0] == pytest.approx(ev[0], abs=1e-8)
    a, b = bs.gap(2)
    assert b == pytest.approx(ev[1], abs=1e-8) and a == pytest.approx(ev[2], abs=1e-8)


def test_band_edges_are_crossings_of_trace_two():
    pv = sample_potential(uniform(0, 4), 20, seed=6)
    bs = band_structure(pv)
    e = bs.edges
    widths = -np.diff(e)
    for m, E in enumerate(e):
        neighbours = (widths[m - 1] if m else np.inf, widths[m] if m < e.size - 1 else np.inf)
        d = min(1e-9, 0.25 * min(neighbours))
        lo = abs(float(mp_trace(pv.values, E - d))) - 2
        hi = abs(float(mp_trace(pv.values, E + d))) - 2
        assert lo * hi < 0, (m, E, lo, hi)


def test_band_structure_requires_three_sites():
    with pytest.raises(TransferError):
        band_structure(fixed_potential([0.0, 1.0]))


def test_svd_examples():
    f = svd_factors(TransferProduct.from_matrix(np.eye(2)))
    assert f.log_s == pytest.approx(0.0, abs=1e-15)
    assert min(f.u_angle, 2 * math.pi - f.u_angle) == pytest.approx(0.0, abs=1e-12)
    f = svd_factors(TransferProduct.from_matrix(np.diag([5.0, 0.2])))
    assert f.log_s == pytest.approx(math.log(5))
    np.testing.assert_allclose(f.U @ f.V, np.eye(2), atol=1e-12)


def test_svd_reconstruction_against_numpy():
    rng = np.random.default_rng(3)
    for _ in range(20):
        v = rng.uniform(0, 4, 100)
        E = rng.uniform(-2, 6)
        p = transfer_product(fixed_potential(v), E)
        f = svd_factors(p)
        M = p.scaled
        s = np.linalg.svd(M, compute_uv=False)
        assert f.log_s == pytest.approx(p.log_scale + math.log(s[0]), rel=1e-12)
        R = f.reconstruct() * math.exp(-p.log_scale)
        np.testing.assert_allclose(R, M, atol=1e-9 * 100 * np.abs(M).max())


def test_svd_rejects_complex_parameter():
    p = transfer_product(fixed_potential([0.0, 1.0, 2.0]), 0.5 + 0.1j)
    with pytest.raises(TransferError):
        svd_factors(p)


def test_rank_one_bound_diagonal_case():
    rep = verify_rank_one_bound(TransferProduct.from_matrix(np.diag([10.0, 0.1])))
    assert rep.applicable and rep.bound_holds
    assert math.exp(rep.log_radius) == pytest.approx(10.0)
    rep = verify_rank_one_bound(TransferProduct.from_matrix(np.diag([2.0, 0.5])))
    assert not rep.applicable


def test_rank_one_bound_random_products():
    rng = np.random.default_rng(17)
    v = rng.uniform(0, 4, (5000, 50))
    E = rng.uniform(-3, 7, (5000, 1))
    p = batch_products(v, E)
    log_s, u, w = batch_svd(p)
    app, holds, _ = rank_one_check(log_s, u, w, p.log_radius())
    assert app.sum() > 100
    assert holds.all()
    # independent route for the radius: numpy eigenvalues of the scaled matrices
    M = np.stack([np.stack([p.a[:, 0], p.b[:, 0]], -1), np.stack([p.c[:, 0], p.d[:, 0]], -1)], -2)
    rho = np.abs(np.linalg.eigvals(M)).max(axis=1)
    ov = np.abs(np.cos(u + w))[:, 0]
    s_scaled = np.linalg.svd(M, compute_uv=False)[:, 0]
    sel = app[:, 0]
    assert np.all(rho[sel] >= 0.5 * s_scaled[sel] * ov[sel] * (1 - 1e-12))
