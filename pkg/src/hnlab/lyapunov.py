"""Lyapunov exponents, density of states and the level curves of gamma(z)."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import contourpy
import numpy as np

from .model import PotentialSpec, draw, sample_potential, stream
from .transfer import batch_products


class LyapunovError(ValueError):
    pass


@dataclass(frozen=True)
class GammaEstimate:
    value: float
    stderr: float
    n_steps: int
    n_reps: int


def _potential_rows(spec: PotentialSpec, n_steps: int, n_reps: int, seed: int) -> np.ndarray:
    return np.stack([draw(spec, n_steps, stream(seed, r)) for r in range(n_reps)])


def _mean_se(x: np.ndarray, axis: int = 0):
    m = x.mean(axis=axis)
    r = x.shape[axis]
    se = x.std(axis=axis, ddof=1) / math.sqrt(r) if r > 1 else np.zeros_like(m)
    return m, se


def _check_sizes(n_steps: int, n_reps: int, min_steps: int = 1000):
    if n_steps < min_steps:
        raise LyapunovError(f"n_steps must be >= {min_steps}, got {n_steps}")
    if n_reps < 1:
        raise LyapunovError(f"n_reps must be >= 1, got {n_reps}")


def _growth_rates(spec, z: np.ndarray, n_steps, n_reps, seed, chunk: int = 20_000_000) -> np.ndarray:
    """(n_reps, len(z)) array of (1/n) log||Phi_n(z)||, the same potentials for every z.

    Realisations are generated in blocks of about ``chunk`` potential values.
    """
    rows = max(1, chunk // n_steps)
    out = []
    for r0 in range(0, n_reps, rows):
        r1 = min(n_reps, r0 + rows)
        v = np.stack([draw(spec, n_steps, stream(seed, r)) for r in range(r0, r1)])
        out.append(batch_products(v, z).log_norm() / n_steps)
    return np.concatenate(out, axis=0)


def estimate_gamma_mc(spec: PotentialSpec, z, n_steps: int = 100_000, n_reps: int = 32,
                      seed: int = 0) -> GammaEstimate:
    """Mean and standard error of (1/n) log||Phi_n(z)|| over independent potentials."""
    _check_sizes(n_steps, n_reps)
    rates = _growth_rates(spec, np.array([z]), n_steps, n_reps, seed)[:, 0]
    m, se = _mean_se(rates)
    return GammaEstimate(float(m), float(se), n_steps, n_reps)


@dataclass(frozen=True)
class LyapunovProfile:
    grid: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    n_steps: int
    n_reps: int
    seed: int
    common_random_numbers: bool = True

    def __post_init__(self):
        if self.grid.ndim != 1 or self.grid.size == 0:
            raise LyapunovError("profile grid must be a non-empty 1-D array")
        if np.any(np.diff(self.grid) <= 0):
            raise LyapunovError("profile grid must be strictly increasing")

    @property
    def estimates(self) -> list[GammaEstimate]:
        return [GammaEstimate(float(v), float(s), self.n_steps, self.n_reps)
                for v, s in zip(self.value, self.stderr)]

    def __call__(self, E):
        """Linear interpolation of gamma between grid points."""
        return np.interp(E, self.grid, self.value)

    def stderr_at(self, E):
        return np.interp(E, self.grid, self.stderr)

    def covers(self, lo: float, hi: float) -> bool:
        return self.grid[0] <= lo and self.grid[-1] >= hi

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["E", "gamma", "stderr"])
        for row in zip(self.grid, self.value, self.stderr):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    def meta(self) -> dict:
        return {"n_steps": self.n_steps, "n_reps": self.n_reps, "seed": self.seed,
                "common_random_numbers": self.common_random_numbers}


def gamma_profile(spec: PotentialSpec, E_grid: Sequence[float], n_steps: int = 100_000, n_reps: int = 32,
                  seed: int = 0, common_random_numbers: bool = True) -> LyapunovProfile:
    """gamma(E) on a sorted grid.

    With common random numbers every grid point sees the same potentials,
    which makes the profile smooth in E. Otherwise grid point k uses the
    streams of seed + k.
    """
    E = np.asarray(E_grid, dtype=float)
    if E.ndim != 1 or E.size == 0:
        raise LyapunovError("energy grid must be non-empty")
    _check_sizes(n_steps, n_reps)
    if common_random_numbers:
        rates = _growth_rates(spec, E, n_steps, n_reps, seed)
    else:
        rates = np.column_stack([_growth_rates(spec, E[k:k + 1], n_steps, n_reps, seed + k)[:, 0]
                                 for k in range(E.size)])
    m, se = _mean_se(rates)
    return LyapunovProfile(E, m, se, n_steps, n_reps, seed, common_random_numbers)


# ---------------------------------------------------------------------------
# density of states


def silverman_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x, float)
    sd = x.std(ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    spread = min(sd, iqr / 1.349) if iqr > 0 else sd
    if spread <= 0:
        spread = 1.0
    return float(0.9 * spread * x.size ** (-0.2))


@dataclass(frozen=True)
class DensityOfStates:
    """Pooled Hermitian eigenvalues of ``n_reps`` matrices of size ``n``."""

    sample: np.ndarray = field(repr=False)
    n: int
    n_reps: int
    bandwidth: float

    def ids(self, E):
        """Fraction of pooled eigenvalues strictly below E."""
        return np.searchsorted(self.sample, E, side="left") / self.sample.size

    def rho(self, E, bandwidth: Optional[float] = None):
        """Gaussian kernel estimate of the density of states."""
        h = self.bandwidth if bandwidth is None else bandwidth
        E = np.asarray(E, float)
        flat = E.ravel()
        # only samples within 8h contribute above rounding
        lo = np.searchsorted(self.sample, flat - 8 * h)
        hi = np.searchsorted(self.sample, flat + 8 * h)
        out = np.empty(flat.size)
        for k, (i, j) in enumerate(zip(lo, hi)):
            u = (flat[k] - self.sample[i:j]) / h
            out[k] = np.exp(-0.5 * u * u).sum()
        out /= self.sample.size * h * math.sqrt(2 * math.pi)
        return out.reshape(E.shape) if E.ndim else float(out[0])

    def peak(self, grid_points: int = 2001) -> float:
        """Location of the maximum of the kernel density estimate."""
        grid = np.linspace(self.sample[0], self.sample[-1], grid_points)
        return float(grid[np.argmax(self.rho(grid))])


def hermitian_levels(values: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of the symmetric ring with diagonal ``values``."""
    n = values.shape[0]
    H = np.diag(values) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    H[0, n - 1] = H[n - 1, 0] = 1.0
    return np.linalg.eigvalsh(H)


def ids_empirical(spec: PotentialSpec, n: int, n_reps: int, seed: int = 0,
                  bandwidth: Optional[float] = None) -> DensityOfStates:
    if n < 100:
        raise LyapunovError(f"density of states needs n >= 100, got {n}")
    levels = [hermitian_levels(sample_potential(spec, n, seed, r).values) for r in range(n_reps)]
    sample = np.sort(np.concatenate(levels))
    h = silverman_bandwidth(sample) if bandwidth is None else float(bandwidth)
    return DensityOfStates(sample, n, n_reps, h)


def gamma_thouless(dos: DensityOfStates, E, guard: float = 1e-12, return_excluded: bool = False):
    """Average of log|E - E'| over the pooled sample.

    Terms with |E - E'| < ``guard`` are dropped; with ``return_excluded`` the
    number of dropped terms per energy is returned as well.
    """
    if dos.sample.size == 0:
        raise LyapunovError("empty density of states")
    E_arr = np.atleast_1d(np.asarray(E, float))
    vals = np.empty(E_arr.size)
    excl = np.zeros(E_arr.size, dtype=int)
    for k, e in enumerate(E_arr):
        d = np.abs(e - dos.sample)
        ok = d >= guard
        excl[k] = int(d.size - ok.sum())
        vals[k] = np.log(d[ok]).sum() / ok.sum()
    if np.ndim(E) == 0:
        vals, excl = float(vals[0]), int(excl[0])
    return (vals, excl) if return_excluded else vals


# ---------------------------------------------------------------------------
# complex plane


@dataclass(frozen=True)
class GammaField:
    re: np.ndarray
    im: np.ndarray
    value: np.ndarray     # (len(im), len(re))
    stderr: np.ndarray
    n_steps: int
    n_reps: int
    seed: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "gamma", "stderr"])
        for i, y in enumerate(self.im):
            for k, x in enumerate(self.re):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(self.value[i, k])),
                            repr(float(self.stderr[i, k]))])
        return buf.getvalue()


def gamma_complex_grid(spec: PotentialSpec, region: tuple[float, float, float, float],
                       resolution: tuple[int, int] = (64, 32), n_steps: int = 10_000, n_reps: int = 8,
                       seed: int = 0) -> GammaField:
    """gamma estimates on the nodes of the rectangle (re_lo, re_hi, im_lo, im_hi).

    All nodes share the same potentials.
    """
    nx, ny = resolution
    if nx < 16 or ny < 16:
        raise LyapunovError(f"resolution must be at least 16x16, got {nx}x{ny}")
    _check_sizes(n_steps, n_reps)
    x0, x1, y0, y1 = region
    re = np.linspace(x0, x1, nx)
    im = np.linspace(y0, y1, ny)
    Z = (re[None, :] + 1j * im[:, None]).ravel()
    rates = _growth_rates(spec, Z, n_steps, n_reps, seed)
    m, se = _mean_se(rates)
    return GammaField(re, im, m.reshape(ny, nx), se.reshape(ny, nx), n_steps, n_reps, seed)


@dataclass
class SpectralCurve:
    polylines: list           # complex arrays
    level: float
    resolution: tuple[int, int]
    warnings: list = field(default_factory=list)

    @property
    def n_points(self) -> int:
        return int(sum(p.size for p in self.polylines))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["line", "re", "im"])
        for k, p in enumerate(self.polylines):
            for z in p:
                w.writerow([k, repr(float(z.real)), repr(float(z.imag))])
        return buf.getvalue()


def extract_curve(fld: GammaField, g: float) -> SpectralCurve:
    """Level set {gamma = g} of the field as polylines (marching squares, linear edge interpolation)."""
    res = (fld.re.size, fld.im.size)
    lo, hi = float(np.min(fld.value)), float(np.max(fld.value))
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        msg = "field is constant; the level set is degenerate"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return SpectralCurve([], g, res, [msg])
    if not lo <= g <= hi:
        return SpectralCurve([], g, res, [f"level {g} outside field range [{lo}, {hi}]"])
    gen = contourpy.contour_generator(fld.re, fld.im, fld.value, line_type=contourpy.LineType.Separate)
    lines = [xy[:, 0] + 1j * xy[:, 1] for xy in gen.lines(g) if len(xy) > 1]
    return SpectralCurve(lines, g, res)
