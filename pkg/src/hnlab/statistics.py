"""Ensemble statistics: level spacings, large deviations, radius/norm, gaps, regularity of gamma, V_N."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import _kernels
from .lyapunov import DensityOfStates, LyapunovProfile, _growth_rates, _potential_rows, estimate_gamma_mc
from .model import PotentialSpec, PotentialVector, sample_potential
from .transfer import (BandStructure, _products_1d, _svd_angles, band_structure, batch_products,
                       real_eigenvalues, ring_eigenvalues)

LN2 = math.log(2.0)


class StatisticsError(ValueError):
    pass


@dataclass(frozen=True)
class EnsembleConfig:
    spec: PotentialSpec
    N: int
    n_seeds: int
    base_seed: int = 0
    g: float = 0.0

    def __post_init__(self):
        if self.n_seeds < 1:
            raise StatisticsError("n_seeds must be >= 1")

    def potential(self, k: int) -> PotentialVector:
        return sample_potential(self.spec, self.N, self.base_seed, k)


def _fit_line(x, y):
    r = stats.linregress(np.asarray(x, float), np.asarray(y, float))
    return float(r.slope), float(r.intercept), float(r.stderr)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# local level statistics


@dataclass
class GapSample:
    spacings: np.ndarray
    E: float
    window: float
    scale: float             # N * rho(E)
    n_levels: int

    @property
    def count(self) -> int:
        return int(self.spacings.size)

    def to_csv(self) -> str:
        return _csv(["spacing"], ([s] for s in self.spacings))


def real_levels(potential: PotentialVector, g: float) -> np.ndarray:
    """Ascending real eigenvalues of H_N(g) from the characteristic equation."""
    if g == 0:
        return ring_eigenvalues(potential.values, 1.0)[0]
    return real_eigenvalues(potential, g).roots


def spacings_in_window(levels_list, E: float, window: float, scale: float) -> GapSample:
    """Consecutive spacings of levels in [E - window, E + window], pooled and multiplied by ``scale``."""
    out, total = [], 0
    for lv in levels_list:
        lv = np.sort(np.asarray(lv, float))
        sel = lv[(lv >= E - window) & (lv <= E + window)]
        total += sel.size
        if sel.size > 1:
            out.append(np.diff(sel) * scale)
    if not out:
        raise StatisticsError(f"no spacings in window [{E - window}, {E + window}]")
    return GapSample(np.concatenate(out), float(E), float(window), float(scale), total)


def rescaled_gaps(cfg: EnsembleConfig, E: float, dos: DensityOfStates, window: float) -> GapSample:
    rho = float(dos.rho(E))
    if rho <= 0:
        raise StatisticsError(f"density of states vanishes at E={E}")
    expected = 2 * window * cfg.N * rho
    if expected < 5:
        raise StatisticsError(f"window {window} holds about {expected:.1f} levels per realisation; need >= 5")
    levels = [real_levels(cfg.potential(k), cfg.g) for k in range(cfg.n_seeds)]
    return spacings_in_window(levels, E, window, cfg.N * rho)


@dataclass(frozen=True)
class KsResult:
    statistic: float
    critical: float
    count: int
    passed: bool
    pvalue: float


def ks_exponential(sample, coefficient: float = 1.63) -> KsResult:
    """One-sample Kolmogorov-Smirnov test against 1 - exp(-x) at the 1% level (critical 1.63/sqrt(n))."""
    x = sample.spacings if isinstance(sample, GapSample) else np.asarray(sample, float)
    n = x.size
    if n < 200:
        raise StatisticsError(f"KS test needs at least 200 spacings, got {n}")
    res = stats.kstest(x, "expon")
    crit = coefficient / math.sqrt(n)
    return KsResult(float(res.statistic), crit, n, bool(res.statistic < crit), float(res.pvalue))


# ---------------------------------------------------------------------------
# minimal spacing


def min_gap(levels, degeneracy_tol: float = 1e-10) -> tuple[float, bool]:
    """Smallest spacing between distinct levels, and whether any level repeats within the tolerance."""
    lv = np.sort(np.asarray(levels, float))
    d = np.diff(lv)
    tol = degeneracy_tol * max(1.0, float(np.max(np.abs(lv)))) if lv.size else 0.0
    degenerate = bool(np.any(d <= tol))
    distinct = d[d > tol]
    return (float(distinct.min()) if distinct.size else float("nan")), degenerate


@dataclass
class MinSpacingReport:
    N: np.ndarray
    min_gaps: np.ndarray        # (len(N), n_seeds)
    degenerate: np.ndarray      # same shape, bool
    K_hat: float
    K_stderr: float
    all_positive: bool

    def to_csv(self) -> str:
        rows = [(int(n), k, self.min_gaps[i, k], int(self.degenerate[i, k]))
                for i, n in enumerate(self.N) for k in range(self.min_gaps.shape[1])]
        return _csv(["N", "seed_index", "min_gap", "degenerate"], rows)


def min_spacing_exponent(spec: PotentialSpec, N_list: Sequence[int], n_seeds: int, base_seed: int = 0
                         ) -> MinSpacingReport:
    """Minimal Hermitian level spacing per realisation and the fitted exponent of min gap ~ N^-K."""
    N_arr = np.asarray(N_list, int)
    if N_arr.size < 4:
        raise StatisticsError("need at least four sizes")
    gaps = np.empty((N_arr.size, n_seeds))
    degen = np.zeros((N_arr.size, n_seeds), bool)
    for i, n in enumerate(N_arr):
        for k in range(n_seeds):
            lv = ring_eigenvalues(sample_potential(spec, int(n), base_seed, k).values, 1.0)[0]
            gaps[i, k], degen[i, k] = min_gap(lv)
    with np.errstate(divide="ignore"):
        y = np.nanmean(np.log(gaps), axis=1)
    slope, _, se = _fit_line(np.log(N_arr), y)
    positive = bool(np.all(gaps[np.isfinite(gaps)] > 0))
    return MinSpacingReport(N_arr, gaps, degen, -slope, se, positive)


# ---------------------------------------------------------------------------
# large deviations of (1/N) log ||Phi_N||


@dataclass
class LdpReport:
    N: np.ndarray
    p_hat: np.ndarray
    counts: np.ndarray
    n_reps: int
    gamma_ref: float
    epsilon: float
    slope: float                 # of log p_hat vs N over nonzero entries (nan if fewer than two)
    below_resolution: list
    decreasing: bool

    def to_csv(self) -> str:
        return _csv(["N", "p_hat", "count", "n_reps"],
                    ((int(n), p, int(c), self.n_reps) for n, p, c in zip(self.N, self.p_hat, self.counts)))


def ldp_empirics(spec: PotentialSpec, E: float, N_list: Sequence[int], epsilon: float, n_reps: int,
                 seed: int = 0, gamma_ref: Optional[float] = None) -> LdpReport:
    """Fraction of realisations with |(1/N) log||Phi_N(E)|| - gamma| >= epsilon for each N.

    Sizes use disjoint stream families (seed + 1 + i) so the estimates are independent.
    A zero count means the probability is below 1/n_reps and counts as a decrease.
    """
    if n_reps < 1000:
        raise StatisticsError("large deviation estimates need n_reps >= 1000")
    N_arr = np.asarray(N_list, int)
    if gamma_ref is None:
        gamma_ref = estimate_gamma_mc(spec, E, max(100_000, 10 * int(N_arr.max())), 32, seed).value
    counts = np.empty(N_arr.size, int)
    for i, n in enumerate(N_arr):
        rate = _growth_rates(spec, np.array([float(E)]), int(n), n_reps, seed + 1 + i)[:, 0]
        counts[i] = int(np.sum(np.abs(rate - gamma_ref) >= epsilon))
    p = counts / n_reps
    dec = bool(np.all((p[1:] < p[:-1]) | ((p[1:] == 0) & (p[:-1] == 0))))
    nz = p > 0
    slope = _fit_line(N_arr[nz], np.log(p[nz]))[0] if nz.sum() >= 2 else float("nan")
    below = [int(n) for n, c in zip(N_arr, counts) if c == 0]
    return LdpReport(N_arr, p, counts, n_reps, float(gamma_ref), float(epsilon), slope, below, dec)


# ---------------------------------------------------------------------------
# spectral radius against norm


@dataclass
class RadiusNormReport:
    delta: np.ndarray
    cdf: np.ndarray
    ratios: np.ndarray = field(repr=False)
    b: float
    B: float
    radius_le_norm: bool
    monotone: bool

    def to_csv(self) -> str:
        return _csv(["delta", "cdf"], zip(self.delta, self.cdf))


def radius_norm_ratio(spec: PotentialSpec, E: float, N: int, n_reps: int, delta_grid: Sequence[float],
                      seed: int = 0) -> RadiusNormReport:
    """Empirical P{rho(Phi_N) <= delta ||Phi_N||} and a power-law fit B delta^b on its small-delta part."""
    if n_reps < 1000:
        raise StatisticsError("need n_reps >= 1000")
    v = _potential_rows(spec, N, n_reps, seed)
    p = batch_products(v, np.array([float(E)]))
    log_ratio = (p.log_radius() - p.log_norm())[:, 0]
    ok = bool(np.all(log_ratio <= 0.0))
    ratio = np.exp(log_ratio)
    delta = np.asarray(delta_grid, float)
    srt = np.sort(ratio)
    cdf = np.searchsorted(srt, delta, side="right") / ratio.size
    fit = (cdf > 0) & (cdf < 1) & (delta > 0)
    if fit.sum() >= 2:
        b, logB, _ = _fit_line(np.log(delta[fit]), np.log(cdf[fit]))
        B = math.exp(logB)
    else:
        b, B = float("nan"), float("nan")
    mono = bool(np.all(np.diff(cdf[np.argsort(delta)]) >= 0))
    return RadiusNormReport(delta, cdf, ratio, b, B, ok, mono)


# ---------------------------------------------------------------------------
# spectral radius inside the gaps


@dataclass
class GapCheck:
    j: int
    left: float
    right: float
    gamma_max: float
    bulk: float              # max over the gap of (1/N) log rho
    edge_minus: float        # max over [a_j, a_j + e^{-cN}]
    edge_plus: float         # max over [b_j - e^{-cN}, b_j]
    narrow: bool

    def passes(self, epsilon: float) -> tuple[bool, bool, bool]:
        t = self.gamma_max - epsilon
        return self.bulk >= t, self.edge_minus >= t, self.edge_plus >= t


@dataclass
class GapRadiusReport:
    epsilon: float
    c_edge: float
    gaps: list
    skipped: list

    @property
    def bulk_ok(self) -> bool:
        return all(g.passes(self.epsilon)[0] for g in self.gaps)

    @property
    def edge_ok(self) -> bool:
        return all(all(g.passes(self.epsilon)[1:]) for g in self.gaps)

    def failures(self) -> list:
        return [g.j for g in self.gaps if not all(g.passes(self.epsilon))]

    def to_csv(self) -> str:
        return _csv(["j", "left", "right", "gamma_max", "bulk", "edge_minus", "edge_plus", "narrow"],
                    ((g.j, g.left, g.right, g.gamma_max, g.bulk, g.edge_minus, g.edge_plus, int(g.narrow))
                     for g in self.gaps))


def gap_radius_check(potential: PotentialVector, profile: LyapunovProfile, epsilon: float, c_edge: float,
                     bands: Optional[BandStructure] = None, resolution: float = 1e-4, max_points: int = 200
                     ) -> GapRadiusReport:
    """(1/N) log rho(Phi_N(E)) on each interior gap against max of gamma over the gap minus epsilon."""
    bs = bands if bands is not None else band_structure(potential)
    n = potential.n
    values = potential.values
    w_edge = math.exp(-c_edge * n)
    checks, skipped = [], []
    for j in range(1, n):
        a, b = bs.gap(j)
        if bs.closed_gaps[j]:
            skipped.append(j)
            continue
        width = b - a
        m = min(max_points, int(math.ceil(width / resolution)))
        narrow = m < 3
        grid = np.array([0.5 * (a + b)]) if narrow else np.linspace(a, b, m)
        wins = []
        for lo, hi in ((a, min(b, a + w_edge)), (max(a, b - w_edge), b)):
            k = min(max_points, max(3, int(math.ceil((hi - lo) / resolution))))
            wins.append(np.linspace(lo, hi, k))
        pts = np.concatenate([grid] + wins)
        lr = _products_1d(values, pts).log_radius() / n
        bulk = float(lr[:grid.size].max())
        if narrow:
            bulk = max(bulk, float(lr[grid.size:].max()))
        e1 = float(lr[grid.size:grid.size + wins[0].size].max())
        e2 = float(lr[grid.size + wins[0].size:].max())
        gmax = float(np.max(profile(np.linspace(a, b, 33))))
        checks.append(GapCheck(j, a, b, gmax, bulk, e1, e2, narrow))
    return GapRadiusReport(float(epsilon), float(c_edge), checks, skipped)


# ---------------------------------------------------------------------------
# regularity of gamma


@dataclass(frozen=True)
class HolderFit:
    C: float
    alpha: float
    feasible: bool
    max_violation: float      # of |dg| - C |dE|^alpha - 4 stderr over all pairs (<= 0 when feasible)
    n_pairs: int


def holder_check(profile: LyapunovProfile, n_bins: int = 12) -> HolderFit:
    """Fit |g(E) - g(E')| <= C |E - E'|^alpha + 4 stderr over all grid pairs.

    alpha is the slope of the upper envelope of log|dg| against log|dE|
    (binned maxima), clipped to (0, 1]; C is then the smallest constant
    making every pair satisfy the bound.
    """
    if profile.grid.size < 50:
        raise StatisticsError("Holder fit needs at least 50 grid points")
    E, gm, se = profile.grid, profile.value, profile.stderr
    i, k = np.triu_indices(E.size, 1)
    dE = E[k] - E[i]
    dg = np.abs(gm[k] - gm[i])
    noise = 4.0 * np.maximum(se[i], se[k])
    excess = np.maximum(dg - noise, 0.0)
    if not np.any(excess > 0):
        return HolderFit(0.0, 1.0, True, float(np.max(dg - noise)), int(dE.size))
    edges = np.geomspace(dE.min(), dE.max() * (1 + 1e-12), n_bins + 1)
    which = np.clip(np.searchsorted(edges, dE, side="right") - 1, 0, n_bins - 1)
    xs, ys = [], []
    for bidx in range(n_bins):
        sel = (which == bidx) & (excess > 0)
        if sel.any():
            xs.append(np.log(np.sqrt(edges[bidx] * edges[bidx + 1])))
            ys.append(np.log(excess[sel].max()))
    alpha = _fit_line(xs, ys)[0] if len(xs) >= 2 else 1.0
    alpha = float(min(max(alpha, 1e-3), 1.0))
    C = float(np.max(excess / dE ** alpha))
    viol = float(np.max(dg - C * dE ** alpha - noise))
    return HolderFit(C, alpha, bool(alpha > 0 and np.isfinite(C) and viol <= 1e-12), viol, int(dE.size))


# ---------------------------------------------------------------------------
# convergence of the right singular factor


def rotation_distance(theta1, theta2):
    """Operator-norm distance between R(theta1) and +-R(theta2), minimised over the sign.

    ||R(a) - R(b)|| = 2|sin((a - b)/2)|; the sign flip shifts b by pi.
    """
    d = np.asarray(theta1) - np.asarray(theta2)
    return np.minimum(2.0 * np.abs(np.sin(0.5 * d)), 2.0 * np.abs(np.cos(0.5 * d)))


@dataclass
class VConvergenceReport:
    N: np.ndarray
    mean_distance: np.ndarray
    stderr: np.ndarray
    rate: float                  # fitted b' in mean ~ exp(-b' N)
    decreasing: bool

    def to_csv(self) -> str:
        return _csv(["N", "mean_distance", "stderr"], zip(self.N, self.mean_distance, self.stderr))


def v_convergence(spec: PotentialSpec, E: float, N_list: Sequence[int], n_reps: int, seed: int = 0
                  ) -> VConvergenceReport:
    """Mean ||V_N - V_{N//2}|| over realisations, nested prefixes of one potential per realisation."""
    if n_reps < 100:
        raise StatisticsError("need n_reps >= 100")
    N_arr = np.asarray(N_list, int)
    cuts = np.unique(np.concatenate([N_arr, N_arr // 2]))
    v = _potential_rows(spec, int(N_arr.max()), n_reps, seed)
    a, b, c, d, _ = _kernels.nested_products(v, np.full(n_reps, float(E)), cuts)
    theta = _svd_angles(a, b, c, d)[3]
    col = {int(n): k for k, n in enumerate(cuts)}
    dist = np.column_stack([rotation_distance(theta[:, col[int(n)]], theta[:, col[int(n) // 2]]) for n in N_arr])
    mean = dist.mean(axis=0)
    se = dist.std(axis=0, ddof=1) / math.sqrt(n_reps)
    pos = mean > 0
    rate = -_fit_line(N_arr[pos], np.log(mean[pos]))[0] if pos.sum() >= 2 else float("inf")
    return VConvergenceReport(N_arr, mean, se, float(rate), bool(np.all(np.diff(mean) < 0)))
