"""Complex spectra of H_N(g), reality of eigenvalues, and their motion as g grows."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from scipy import stats
from scipy.optimize import linear_sum_assignment

from .lyapunov import LyapunovProfile
from .model import HatanoNelsonMatrix, PotentialVector, build_matrix
from .transfer import _products_1d, real_eigenvalues

TAU_RE = 1e-8


class SpectrumError(RuntimeError):
    pass


class FlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class ComplexSpectrum:
    values: np.ndarray
    residuals: np.ndarray
    g: float
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def full_spectrum(matrix: HatanoNelsonMatrix, residuals: bool = True) -> ComplexSpectrum:
    """All eigenvalues from LAPACK's balanced Hessenberg-QR driver, with ||Hx - lx|| for unit x."""
    H = np.array(matrix.entries)
    if H.shape[0] < 3:
        raise SpectrumError("need N >= 3")
    try:
        if residuals:
            w, vr = scipy.linalg.eig(H, check_finite=True)
        else:
            w = scipy.linalg.eigvals(H, check_finite=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise SpectrumError(f"eigenvalue iteration failed (seed={matrix.potential.seed}, "
                            f"index={matrix.potential.index}, g={matrix.g}): {exc}") from exc
    if residuals:
        vr = vr / np.linalg.norm(vr, axis=0)
        res = np.linalg.norm(H @ vr - vr * w, axis=0)
    else:
        res = np.full(w.shape, np.nan)
    meta = {"driver": "scipy.linalg.eig", "seed": matrix.potential.seed, "index": matrix.potential.index}
    return ComplexSpectrum(w, res, matrix.g, meta)


# ---------------------------------------------------------------------------
# reality classification


@dataclass
class Partition:
    real: np.ndarray             # indices into the spectrum
    pairs: list                  # (upper, lower) index pairs
    ambiguous: list = field(default_factory=list)
    unpaired: list = field(default_factory=list)

    def is_real(self, n: int) -> np.ndarray:
        out = np.zeros(n, dtype=bool)
        out[self.real] = True
        return out


def classify_real(spectrum, tau: float = TAU_RE, pair_tol: float = 1e-6) -> Partition:
    """Split eigenvalues of a real matrix into real ones and conjugate pairs.

    An eigenvalue is real when |Im l| <= tau (1 + |l|). The rest are paired
    greedily with the nearest conjugate; when a second unused conjugate lies
    within ``pair_tol`` the pairing is reported as ambiguous instead of guessed.
    """
    lam = spectrum.values if isinstance(spectrum, ComplexSpectrum) else np.asarray(spectrum, complex)
    thr = tau * (1.0 + np.abs(lam))
    real = np.flatnonzero(np.abs(lam.imag) <= thr)
    upper = [i for i in np.flatnonzero(lam.imag > thr)]
    lower = set(np.flatnonzero(lam.imag < -thr).tolist())
    pairs, ambiguous, unpaired = [], [], []
    # pair the most isolated first so that near-collisions see the fewest options
    upper.sort(key=lambda i: (lam[i].real, lam[i].imag))
    for i in upper:
        if not lower:
            unpaired.append(int(i))
            continue
        cand = np.array(sorted(lower))
        d = np.abs(lam[cand] - np.conj(lam[i]))
        order = np.argsort(d)
        tol = pair_tol * (1.0 + abs(lam[i]))
        close = cand[order][d[order] <= tol]
        if close.size > 1 and abs(lam[close[0]] - lam[close[1]]) > tol * 1e-3:
            ambiguous.append((int(i), *map(int, close)))
        j = int(cand[order[0]])
        if d[order[0]] > tol:
            unpaired.append(int(i))
            continue
        lower.discard(j)
        pairs.append((int(i), j))
    unpaired.extend(int(j) for j in sorted(lower))
    return Partition(real, pairs, ambiguous, unpaired)


# ---------------------------------------------------------------------------
# continuation in g


@dataclass
class FlowStep:
    g: float
    max_move: float
    min_separation: float
    clustered: tuple = ()


@dataclass
class SpectralFlow:
    g_grid: np.ndarray
    trajectories: np.ndarray     # (len(g_grid), N) complex, column j is label j+1
    is_real: np.ndarray          # (len(g_grid), N) bool
    steps: list
    potential: Optional[PotentialVector] = None
    halvings: int = 0

    @property
    def n(self) -> int:
        return self.trajectories.shape[1]

    @property
    def initial(self) -> np.ndarray:
        return self.trajectories[0].real

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "g", "re", "im", "is_real"])
        for j in range(self.n):
            for k, g in enumerate(self.g_grid):
                z = self.trajectories[k, j]
                w.writerow([j + 1, repr(float(g)), repr(float(z.real)), repr(float(z.imag)),
                            int(self.is_real[k, j])])
        return buf.getvalue()


def _separations(lam: np.ndarray) -> np.ndarray:
    d = np.abs(lam[:, None] - lam[None, :])
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1)


def _match(prev: np.ndarray, new: np.ndarray) -> np.ndarray:
    """perm with new[perm[i]] continuing prev[i]; nearest neighbour, optimal assignment on conflicts."""
    d = np.abs(prev[:, None] - new[None, :])
    perm = np.argmin(d, axis=1)
    if np.unique(perm).size != perm.size:
        _, perm = linear_sum_assignment(d)
    return perm


def _clusters(lam: np.ndarray, radius: np.ndarray) -> list:
    """Groups of eigenvalues that lie within ``radius`` of each other (union-find)."""
    n = lam.size
    parent = list(range(n))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    d = np.abs(lam[:, None] - lam[None, :])
    close = np.argwhere(np.triu(d <= radius[:, None], 1))
    for i, k in close:
        parent[root(i)] = root(k)
    groups = {}
    for i in range(n):
        groups.setdefault(root(i), []).append(i)
    return list(groups.values())


def _step_ok(prev, new, perm, cluster_radius):
    """Continuity test of one step.

    Every eigenvalue must move less than half its distance to the nearest
    other eigenvalue. Near a collision the two colliding eigenvalues may
    instead move as a unit: a group of eigenvalues within ``cluster_radius``
    of each other is accepted if its members stay within half the distance to
    everything outside the group.
    """
    move = np.abs(new[perm] - prev)
    sep = _separations(prev)
    bad = move >= 0.5 * sep
    if not np.any(bad):
        return True, move, sep, ()
    if cluster_radius <= 0:
        return False, move, sep, tuple(np.flatnonzero(bad))
    groups = [gp for gp in _clusters(prev, np.full(prev.size, cluster_radius)) if len(gp) > 1]
    member = np.full(prev.size, -1)
    for k, gp in enumerate(groups):
        member[gp] = k
    clustered = []
    for i in np.flatnonzero(bad):
        k = member[i]
        if k < 0:
            return False, move, sep, (int(i),)
        gp = groups[k]
        outside = np.setdiff1d(np.arange(prev.size), gp)
        if outside.size == 0:
            continue
        ext = np.min(np.abs(prev[gp][:, None] - prev[outside][None, :]))
        if np.max(move[gp]) >= 0.5 * ext:
            return False, move, sep, tuple(int(x) for x in gp)
        clustered.append(tuple(int(x) for x in gp))
    return True, move, sep, tuple(sorted(set(clustered)))


def track_flow(potential: PotentialVector, g_max: float, initial_step: float = 0.01,
               min_step: float = 1e-9, cluster_step: float = 1e-5, tau: float = TAU_RE) -> SpectralFlow:
    """Follow every eigenvalue of H_N(g) from g = 0 to ``g_max``.

    Labels are assigned at g = 0 by decreasing eigenvalue. A step is accepted
    when the matching moves each eigenvalue by less than half of its
    separation; otherwise the step is halved. Once the step falls below
    ``cluster_step``, collisions are passed by moving the colliding group as a
    unit. A step below ``min_step`` raises FlowError naming the labels involved.
    """
    if g_max <= 0:
        raise FlowError("g_max must be positive")
    lam0 = full_spectrum(build_matrix(potential, 0.0), residuals=False).values
    lam0 = np.sort(lam0.real)[::-1].astype(complex)
    gs = [0.0]
    traj = [lam0]
    real_flags = [np.ones(lam0.size, dtype=bool)]
    steps = [FlowStep(0.0, 0.0, float(np.min(_separations(lam0))))]
    g = 0.0
    h = initial_step
    prev = lam0
    halvings = 0
    while g < g_max:
        h_try = min(h, g_max - g)
        g_new = g_max if h_try >= g_max - g else g + h_try
        new = full_spectrum(build_matrix(potential, g_new), residuals=False).values
        perm = _match(prev, new)
        radius = 4.0 * np.max(np.abs(new[perm] - prev)) if h_try <= cluster_step else 0.0
        ok, move, sep, who = _step_ok(prev, new, perm, radius)
        if not ok:
            halvings += 1
            h = h_try / 2.0
            if h < min_step:
                raise FlowError(f"step underflow at g={g:.12g}: labels {[i + 1 for i in who]} collide")
            continue
        prev = new[perm]
        g = g_new
        gs.append(g)
        traj.append(prev)
        real_flags.append(classify_real(prev, tau).is_real(prev.size))
        steps.append(FlowStep(g, float(move.max()), float(sep.min()), who))
        h = min(initial_step, 2.0 * h_try)
    return SpectralFlow(np.array(gs), np.array(traj), np.array(real_flags), steps, potential, halvings)


# ---------------------------------------------------------------------------
# theorem check


@dataclass
class TheoremReport:
    epsilon: float
    thresholds: np.ndarray           # gamma_hat(lambda_j(0)) per label
    n_checks: int
    max_deviation: float             # max |lambda_j(g) - lambda_j(0)| over checked (j, g)
    deviations: np.ndarray           # per label, max over its checked g (nan when unchecked)
    violations: list
    seed: Optional[int] = None

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "thresholds": self.thresholds.tolist(), "n_checks": self.n_checks,
                "max_deviation": self.max_deviation, "violations": self.violations, "seed": self.seed,
                "passed": self.passed}


def verify_theorem(flow: SpectralFlow, profile: LyapunovProfile, epsilon: float,
                   check_coverage: bool = True) -> TheoremReport:
    """Check reality and closeness to lambda_j(0) of each lambda_j(g) with g <= gamma_hat(lambda_j(0)) - epsilon."""
    lam0 = flow.initial
    if check_coverage:
        if not profile.covers(lam0.min() - 0.1, lam0.max() + 0.1):
            raise ValueError("profile does not cover the Hermitian spectrum")
        if epsilon <= 2.0 * float(np.max(profile.stderr)):
            raise ValueError("epsilon must exceed twice the largest profile standard error")
    thr = profile(lam0)
    limit = thr - epsilon
    mask = flow.g_grid[:, None] <= limit[None, :]
    dev = np.abs(flow.trajectories - lam0[None, :])
    bad = mask & ~flow.is_real
    violations = [{"j": int(j) + 1, "g": float(flow.g_grid[k]), "re": float(flow.trajectories[k, j].real),
                   "im": float(flow.trajectories[k, j].imag)} for k, j in np.argwhere(bad)]
    checked_dev = np.where(mask, dev, np.nan)
    with np.errstate(all="ignore"):
        per_label = np.where(mask.any(axis=0), np.nanmax(np.where(mask, dev, -np.inf), axis=0), np.nan)
    n_checks = int(mask.sum())
    maxdev = float(np.nanmax(checked_dev)) if n_checks else 0.0
    seed = flow.potential.seed if flow.potential is not None else None
    return TheoremReport(float(epsilon), thr, n_checks, maxdev, per_label, violations, seed)


@dataclass(frozen=True)
class DecayFit:
    c: float
    intercept: float
    c_stderr: float
    ci95: tuple
    n_values: tuple
    neg_log_dev: tuple


def fit_decay_constant(n_values: Sequence[int], deviations: Sequence[float]) -> DecayFit:
    """Least-squares slope of -log(deviation) against N."""
    N = np.asarray(n_values, float)
    y = -np.log(np.asarray(deviations, float))
    if N.size < 2:
        raise ValueError("need at least two sizes")
    r = stats.linregress(N, y)
    dof = N.size - 2
    if dof > 0:
        t = stats.t.ppf(0.975, dof)
        ci = (float(r.slope - t * r.stderr), float(r.slope + t * r.stderr))
    else:
        ci = (float("nan"), float("nan"))
    return DecayFit(float(r.slope), float(r.intercept), float(r.stderr), ci, tuple(N.tolist()), tuple(y.tolist()))


# ---------------------------------------------------------------------------
# dense solver vs characteristic equation


@dataclass
class CrossReport:
    g: float
    n_real_dense: int
    n_real_transfer: int
    missing_in_transfer: list     # dense real eigenvalues without a nearby root
    missing_in_dense: list        # roots without a nearby dense eigenvalue
    complex_residual: float       # max relative |tr Phi - 2cosh(Ng)| over non-real eigenvalues
    complex_failures: list
    dense_real: np.ndarray = field(repr=False, default=None)
    transfer_real: np.ndarray = field(repr=False, default=None)

    @property
    def ok(self) -> bool:
        return not (self.missing_in_transfer or self.missing_in_dense or self.complex_failures)


def _unmatched(a: np.ndarray, b: np.ndarray, tol: float) -> list:
    """Entries of ``a`` that find no partner in ``b`` within tol under an optimal one-to-one assignment."""
    if a.size == 0:
        return []
    if b.size == 0:
        return a.tolist()
    d = np.abs(a[:, None] - b[None, :])
    ri, ci = linear_sum_assignment(d)
    ok = np.zeros(a.size, bool)
    ok[ri[d[ri, ci] <= tol]] = True
    return a[~ok].tolist()


def cross_validate(potential: PotentialVector, g: float, tol: float = 1e-6, tau: float = TAU_RE) -> CrossReport:
    """Compare the dense spectrum with the roots of tr Phi_N(E) = 2cosh(Ng)."""
    n = potential.n
    if n > 500:
        raise ValueError("cross validation uses a dense solve; N must be <= 500")
    spec = full_spectrum(build_matrix(potential, g), residuals=False)
    part = classify_real(spec, tau)
    dense_real = np.sort(spec.values[part.real].real)
    roots = real_eigenvalues(potential, g).roots
    miss_t = _unmatched(dense_real, roots, tol)
    miss_d = _unmatched(roots, dense_real, tol)
    nonreal = np.setdiff1d(np.arange(n), part.real)
    rel = np.zeros(0)
    if nonreal.size:
        rel = _products_1d(potential.values, spec.values[nonreal]).char_relative(g, n)
    fails = [complex(z) for z, r in zip(spec.values[nonreal], rel) if not r <= tol]
    return CrossReport(float(g), int(dense_real.size), int(roots.size), miss_t, miss_d,
                       float(rel.max()) if rel.size else 0.0, fails, dense_real, roots)
