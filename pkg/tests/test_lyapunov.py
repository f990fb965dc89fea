import math
import warnings

import numpy as np
import pytest

from hnlab import lyapunov as ly
from hnlab.model import bernoulli, constant, uniform
from oracles import FREE_GAMMA_3, free_gamma, free_ids


def test_free_exponent_outside_band_is_deterministic():
    est = ly.estimate_gamma_mc(constant(0.0), 3.0, 10_000, 4, seed=0)
    assert est.value == pytest.approx(FREE_GAMMA_3, abs=1e-3)
    assert est.stderr == pytest.approx(0.0, abs=1e-12)


def test_free_exponent_inside_band_vanishes():
    est = ly.estimate_gamma_mc(constant(0.0), 1.0, 100_000, 2, seed=0)
    assert est.value == pytest.approx(0.0, abs=1e-3)


def test_disordered_exponent_positive():
    prof = ly.gamma_profile(uniform(0, 4), np.linspace(-2, 6, 9), 20_000, 8, seed=1)
    assert np.all(prof.value - 3 * prof.stderr > 0)


def test_free_profile_matches_arccosh():
    grid = np.array([2.5, 3.0, 3.5])
    prof = ly.gamma_profile(constant(0.0), grid, 100_000, 2, seed=0)
    np.testing.assert_allclose(prof.value, np.log(grid / 2 + np.sqrt(grid ** 2 / 4 - 1)), atol=1e-3)
    assert np.array_equal(prof.grid, grid)


def test_profile_grid_must_increase():
    with pytest.raises(ly.LyapunovError):
        ly.gamma_profile(constant(0.0), [1.0, 0.5], 1000, 2)


def test_sizes_checked():
    with pytest.raises(ly.LyapunovError):
        ly.estimate_gamma_mc(uniform(0, 4), 1.0, 10, 4)


def test_profile_is_reproducible_and_interpolates():
    a = ly.gamma_profile(uniform(0, 4), np.linspace(0, 4, 5), 5000, 4, seed=3)
    b = ly.gamma_profile(uniform(0, 4), np.linspace(0, 4, 5), 5000, 4, seed=3)
    assert a.value.tobytes() == b.value.tobytes()
    assert a(1.5) == pytest.approx(0.5 * (a.value[1] + a.value[2]))
    assert a.covers(0, 4) and not a.covers(-1, 4)
    assert a.to_csv().splitlines()[0] == "E,gamma,stderr"


def test_free_ids_matches_arccos():
    dos = ly.ids_empirical(constant(0.0), 1000, 1, seed=0)
    E = np.linspace(-2, 2, 201)
    assert np.max(np.abs(dos.ids(E) - free_ids(E))) <= 0.01


def test_ids_monotone_with_unit_range():
    dos = ly.ids_empirical(uniform(0, 4), 200, 4, seed=1)
    E = np.linspace(-5, 9, 300)
    N = dos.ids(E)
    assert np.all(np.diff(N) >= 0)
    assert N[0] == 0 and N[-1] == 1
    assert dos.sample.min() >= -2 and dos.sample.max() <= 6


def test_ids_needs_enough_sites():
    with pytest.raises(ly.LyapunovError):
        ly.ids_empirical(uniform(0, 4), 50, 1)


def test_thouless_free_and_far_field():
    dos = ly.ids_empirical(constant(0.0), 1000, 1, seed=0)
    assert ly.gamma_thouless(dos, 3.0) == pytest.approx(FREE_GAMMA_3, abs=0.01)
    dos = ly.ids_empirical(uniform(0, 4), 500, 4, seed=0)
    assert ly.gamma_thouless(dos, 100.0) == pytest.approx(math.log(100), abs=0.05)


def test_thouless_reports_exclusions():
    dos = ly.DensityOfStates(np.array([0.0, 1.0, 1.0, 2.0]), 4, 1, 0.1)
    val, excl = ly.gamma_thouless(dos, 1.0, return_excluded=True)
    assert excl == 2
    assert val == pytest.approx(0.0)


def test_thouless_agrees_with_monte_carlo():
    spec = uniform(0, 4)
    grid = np.linspace(-6, 6, 7)
    mc = ly.gamma_profile(spec, grid, 50_000, 16, seed=2)
    dos = ly.ids_empirical(spec, 600, 16, seed=3)
    assert np.max(np.abs(mc.value - ly.gamma_thouless(dos, grid))) <= 0.02


def test_density_peak_and_bandwidth():
    x = np.random.default_rng(0).normal(1.0, 0.5, 20_000)
    dos = ly.DensityOfStates(np.sort(x), 20_000, 1, ly.silverman_bandwidth(x))
    assert dos.peak() == pytest.approx(1.0, abs=0.15)   # the mode of a flat top is noisy
    assert dos.rho(1.0) == pytest.approx(1 / (0.5 * math.sqrt(2 * math.pi)), rel=0.05)


def test_complex_field_conjugation_symmetry():
    fld = ly.gamma_complex_grid(uniform(0, 4), (-2, 6, -1, 1), (16, 17), 5000, 4, seed=0)
    # rows are symmetric about Im z = 0 (the grid is symmetric, same potentials)
    assert np.max(np.abs(fld.value - fld.value[::-1]) - 2 * (fld.stderr + fld.stderr[::-1])) <= 1e-12


def test_complex_field_free_closed_form():
    fld = ly.gamma_complex_grid(constant(0.0), (-3, 3, -1, 1), (16, 16), 10_000, 2, seed=0)
    Z = fld.re[None, :] + 1j * fld.im[:, None]
    assert np.max(np.abs(fld.value - free_gamma(Z))) <= 1e-2


def test_complex_field_on_real_axis_matches_profile():
    spec = uniform(0, 4)
    fld = ly.gamma_complex_grid(spec, (-2, 6, -1, 1), (16, 17), 5000, 8, seed=4)
    prof = ly.gamma_profile(spec, fld.re, 5000, 8, seed=4)
    row = fld.value[8]
    assert np.all(np.abs(row - prof.value) <= 2 * prof.stderr + 1e-12)


def test_complex_field_resolution_checked():
    with pytest.raises(ly.LyapunovError):
        ly.gamma_complex_grid(constant(0.0), (-1, 1, -1, 1), (8, 8))


def test_constant_field_gives_empty_curve_with_warning():
    fld = ly.GammaField(np.linspace(0, 1, 16), np.linspace(0, 1, 16), np.full((16, 16), 0.3),
                        np.zeros((16, 16)), 1000, 1, 0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        curve = ly.extract_curve(fld, 0.3)
    assert curve.polylines == [] and curve.warnings
    assert any("degenerate" in str(w.message) for w in caught)


def test_free_level_set_within_one_cell():
    fld = ly.gamma_complex_grid(constant(0.0), (-3.5, 3.5, -1.5, 1.5), (71, 31), 10_000, 2, seed=0)
    curve = ly.extract_curve(fld, 0.5)
    assert curve.n_points > 20
    cell = max(fld.re[1] - fld.re[0], fld.im[1] - fld.im[0])
    # the exact level set gamma = 0.5 is the ellipse with semi-axes 2cosh(0.5), 2sinh(0.5)
    for line in curve.polylines:
        a, b = 2 * math.cosh(0.5), 2 * math.sinh(0.5)
        t = np.arctan2(line.imag / b, line.real / a)
        nearest = a * np.cos(t) + 1j * b * np.sin(t)
        assert np.max(np.abs(line - nearest)) <= cell
        np.testing.assert_allclose(free_gamma(line), 0.5, atol=0.02)


def test_level_outside_range_gives_empty_curve():
    fld = ly.gamma_complex_grid(constant(0.0), (-3, 3, -1, 1), (16, 16), 1000, 2, seed=0)
    assert ly.extract_curve(fld, 50.0).polylines == []


def test_bernoulli_exponent_positive():
    est = ly.estimate_gamma_mc(bernoulli(1.0), 0.3, 20_000, 8, seed=0)
    assert est.value - 3 * est.stderr > 0
