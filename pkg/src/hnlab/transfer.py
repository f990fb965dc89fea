"""Transfer matrices of the Hermitian chain and what they say about H_N(g).

Everything is computed in a scaled representation: the product
T_N(z)...T_1(z) equals ``exp(log_scale) * scaled`` where ``scaled`` has its
largest entry in [1/2, 1). Since det T_j = 1, det(scaled) = exp(-2*log_scale).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .model import PotentialVector

LN2 = math.log(2.0)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class TransferError(ArithmeticError):
    pass


class BandCountError(TransferError):
    """The band search did not resolve exactly N bands."""


def transfer_step(z, v: float) -> np.ndarray:
    dtype = complex if isinstance(z, complex) or np.iscomplexobj(z) else float
    return np.array([[z - v, -1.0], [1.0, 0.0]], dtype=dtype)


# ---------------------------------------------------------------------------
# batched products


@dataclass
class Products:
    """Arrays of scaled products sharing one shape."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    log_scale: np.ndarray

    @property
    def trace(self) -> np.ndarray:
        return self.a + self.d

    def log_norm(self) -> np.ndarray:
        f2 = abs(self.a) ** 2 + abs(self.b) ** 2 + abs(self.c) ** 2 + abs(self.d) ** 2
        det2 = np.exp(-4.0 * self.log_scale)
        s2 = 0.5 * (f2 + np.sqrt(np.maximum(f2 * f2 - 4.0 * det2, 0.0)))
        return self.log_scale + 0.5 * np.log(s2)

    def log_radius(self) -> np.ndarray:
        t = self.trace
        det = np.exp(-2.0 * self.log_scale)
        if np.iscomplexobj(t):
            sq = np.sqrt(t * t - 4.0 * det)
            big = np.where(abs(t + sq) >= abs(t - sq), t + sq, t - sq) / 2.0
            out = self.log_scale + np.log(abs(big))
        else:
            disc = t * t - 4.0 * det
            with np.errstate(invalid="ignore", divide="ignore"):
                big = 0.5 * (abs(t) + np.sqrt(np.maximum(disc, 0.0)))
                out = np.where(disc > 0, self.log_scale + np.log(big), 0.0)
        # rho <= ||Phi|| holds exactly; clip rounding excess
        return np.minimum(out, self.log_norm())

    def char(self, g: float, n: int) -> np.ndarray:
        """tr(scaled) - exp(-log_scale) * 2cosh(n g); same sign as tr Phi - 2cosh(n g)."""
        ng = n * g
        return self.trace - (np.exp(ng - self.log_scale) + np.exp(-ng - self.log_scale))

    def char_relative(self, g: float, n: int) -> np.ndarray:
        """|tr Phi - 2cosh(ng)| / max(|tr Phi|, 2cosh(ng)), overflow free."""
        ng = n * g
        target = np.exp(ng - self.log_scale) + np.exp(-ng - self.log_scale)
        return abs(self.trace - target) / np.maximum(abs(self.trace), target)


def batch_products(v: np.ndarray, z) -> Products:
    """Products for potential rows ``v`` (R, n) and parameters ``z`` (R, M) or (M,) shared by all rows."""
    v = np.ascontiguousarray(np.atleast_2d(v), dtype=np.float64)
    z = np.asarray(z)
    cplx = np.iscomplexobj(z)
    z = z.astype(np.complex128 if cplx else np.float64)
    if z.ndim == 0:
        z = z.reshape(1, 1)
    if z.ndim == 1:
        z = np.broadcast_to(z, (v.shape[0], z.shape[0]))
    z = np.ascontiguousarray(z)
    a, b, c, d, ex = _kernels.products(v, z)
    return Products(a, b, c, d, ex * LN2)


def _products_1d(values: np.ndarray, E) -> Products:
    """Products of one potential at many parameters, flattened to 1-D."""
    E = np.atleast_1d(np.asarray(E))
    p = batch_products(values[None, :], E[None, :])
    return Products(p.a[0], p.b[0], p.c[0], p.d[0], p.log_scale[0])


# ---------------------------------------------------------------------------
# single products


@dataclass(frozen=True)
class TransferProduct:
    scaled: np.ndarray = field(repr=False)
    log_scale: float
    n: int
    z: complex

    @classmethod
    def from_matrix(cls, m, n: int = 0, z: complex = 0.0) -> "TransferProduct":
        """Wrap an explicit 2x2 matrix (normalised the same way as a product)."""
        m = np.asarray(m)
        mx = float(np.max(np.abs(m)))
        k = math.frexp(mx)[1] if mx > 0 else 0
        return cls(np.ldexp(1.0, -k) * m, k * LN2, n, z)

    @property
    def products(self) -> Products:
        s = self.scaled
        return Products(*(np.array([s[i, j]]) for i, j in ((0, 0), (0, 1), (1, 0), (1, 1))),
                        np.array([self.log_scale]))

    @property
    def trace(self):
        """tr Phi itself; may overflow to inf for long products."""
        with np.errstate(over="ignore"):
            return np.trace(self.scaled) * np.exp(self.log_scale)

    @property
    def matrix(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return self.scaled * np.exp(self.log_scale)


def transfer_product(potential: PotentialVector, z) -> TransferProduct:
    values = potential.values if isinstance(potential, PotentialVector) else np.asarray(potential, float)
    p = _products_1d(values, z)
    if not (np.all(np.isfinite(p.a)) and np.all(np.isfinite(p.d)) and np.isfinite(p.log_scale[0])):
        raise TransferError(f"non-finite transfer product at z={z}")
    scaled = np.array([[p.a[0], p.b[0]], [p.c[0], p.d[0]]])
    return TransferProduct(scaled, float(p.log_scale[0]), values.shape[0], complex(z))


def log_norm(p: TransferProduct) -> float:
    return float(p.products.log_norm()[0])


def spectral_radius_log(p: TransferProduct) -> float:
    return float(p.products.log_radius()[0])


def char_value(potential: PotentialVector, g: float, E):
    """Scaled characteristic function tr(scaled) - exp(-log_scale) 2cosh(Ng).

    Real ``E`` gives a real value with the sign of tr Phi_N(E) - 2cosh(Ng); it
    vanishes exactly at eigenvalues of H_N(g). Complex ``E`` gives the complex
    residual. Accepts scalars or arrays.
    """
    values = potential.values
    E_arr = np.asarray(E)
    p = _products_1d(values, E_arr.ravel())
    out = p.char(g, values.shape[0]).reshape(E_arr.shape)
    return out.item() if out.ndim == 0 else out


def char_trace(potential: PotentialVector, E) -> tuple[np.ndarray, np.ndarray]:
    """(tr(scaled), log_scale) on a grid, for debugging exports."""
    p = _products_1d(potential.values, E)
    return p.trace, p.log_scale


def char_trace_csv(potential: PotentialVector, g: float, E) -> str:
    E = np.atleast_1d(np.asarray(E, dtype=float))
    p = _products_1d(potential.values, E)
    f = p.char(g, potential.n)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["E", "f_scaled", "sigma"])
    for row in zip(E, f, p.log_scale):
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# singular value decomposition and the rank-one bound


@dataclass(frozen=True)
class SvdFactors:
    log_s: float
    u_angle: float
    v_angle: float
    reflection: bool = False

    @staticmethod
    def rotation(angle: float) -> np.ndarray:
        c, s = math.cos(angle), math.sin(angle)
        return np.array([[c, -s], [s, c]])

    @property
    def U(self) -> np.ndarray:
        return self.rotation(self.u_angle)

    @property
    def V(self) -> np.ndarray:
        return self.rotation(self.v_angle)

    def reconstruct(self) -> np.ndarray:
        s = math.exp(self.log_s)
        small = -1.0 / s if self.reflection else 1.0 / s
        return self.U @ np.diag([s, small]) @ self.V


def _svd_angles(a, b, c, d):
    """Closed-form M = R(phi) diag(sx, sy) R(theta) for real 2x2 entries (arrays allowed)."""
    e_ = 0.5 * (a + d)
    f_ = 0.5 * (a - d)
    g_ = 0.5 * (c + b)
    h_ = 0.5 * (c - b)
    q = np.hypot(e_, h_)
    r = np.hypot(f_, g_)
    a1 = np.arctan2(g_, f_)
    a2 = np.arctan2(h_, e_)
    theta = 0.5 * (a2 - a1)
    phi = 0.5 * (a2 + a1)
    return q + r, q - r, phi, theta


def svd_factors(p: TransferProduct) -> SvdFactors:
    if abs(complex(p.z).imag) > 0 or np.iscomplexobj(p.scaled) and np.any(p.scaled.imag != 0):
        raise TransferError("SVD factors are only defined for real spectral parameters")
    m = np.real(p.scaled)
    sx, sy, phi, theta = _svd_angles(m[0, 0], m[0, 1], m[1, 0], m[1, 1])
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    two_pi = 2.0 * math.pi
    return SvdFactors(float(p.log_scale + math.log(sx)), float(phi % two_pi), float(theta % two_pi),
                      bool(det < 0 and sy < 0))


def batch_svd(p: Products):
    """log_s, u_angle, v_angle arrays for real batched products."""
    sx, _, phi, theta = _svd_angles(p.a, p.b, p.c, p.d)
    two_pi = 2.0 * math.pi
    return p.log_scale + np.log(sx), np.mod(phi, two_pi), np.mod(theta, two_pi)


@dataclass(frozen=True)
class RankOneReport:
    applicable: bool
    bound_holds: bool
    log_s: float
    overlap: float
    log_radius: float


def rank_one_check(log_s, u_angle, v_angle, log_rad):
    """Vectorised hypotheses and conclusion of rho >= (s/2)|(VUe1, e1)|."""
    overlap = np.abs(np.cos(np.asarray(u_angle) + np.asarray(v_angle)))
    log_s = np.asarray(log_s)
    with np.errstate(divide="ignore"):
        applicable = (log_s >= math.log(3.0)) & (np.log(overlap) >= math.log(3.0) - log_s)
        holds = np.asarray(log_rad) >= log_s - LN2 + np.log(overlap) - 1e-12
    return applicable, holds | ~applicable, overlap


def verify_rank_one_bound(p: TransferProduct) -> RankOneReport:
    f = svd_factors(p)
    lr = spectral_radius_log(p)
    app, holds, overlap = rank_one_check(f.log_s, f.u_angle, f.v_angle, lr)
    return RankOneReport(bool(app), bool(holds), f.log_s, float(overlap), lr)


# ---------------------------------------------------------------------------
# ring eigenvalues by Sturm isolation + discriminant bisection


def _gershgorin(values: np.ndarray, pad: float = 1.0) -> tuple[float, float]:
    return float(values.min()) - 2.0 - pad, float(values.max()) + 2.0 + pad


def ring_eigenvalues(values: np.ndarray, corner: float = 1.0, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """All eigenvalues of the symmetric ring (corner +1 periodic, -1 antiperiodic), ascending.

    Each eigenvalue is first isolated by inertia counts, then located by
    bisection on the sign of the discriminant minus 2*corner. Returns the
    eigenvalues and a boolean array marking members of unresolved clusters
    (coincident eigenvalues, i.e. closed gaps).
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    n = values.shape[0]
    lo, hi = _gershgorin(values)
    cnt = lambda x: _kernels.count_below(values, np.ascontiguousarray(x, dtype=np.float64), float(corner))
    c_lo, c_hi = cnt([lo, hi])
    if c_lo != 0 or c_hi != n:
        raise TransferError("Gershgorin interval does not enclose the spectrum")

    # isolation: intervals (a, b] with count difference
    a = np.array([lo])
    b = np.array([hi])
    ca = np.array([0])
    cb = np.array([n])
    done_a, done_b, done_ca, done_cb = [], [], [], []
    while a.size:
        single = (cb - ca == 1)
        tiny = (b - a) <= tol * max(1.0, abs(lo), abs(hi))
        fin = single | tiny
        done_a.append(a[fin]); done_b.append(b[fin]); done_ca.append(ca[fin]); done_cb.append(cb[fin])
        a, b, ca, cb = a[~fin], b[~fin], ca[~fin], cb[~fin]
        if not a.size:
            break
        m = 0.5 * (a + b)
        cm = cnt(m)
        left = cm > ca
        right = cb > cm
        a, b, ca, cb = (np.concatenate([a[left], m[right]]), np.concatenate([m[left], b[right]]),
                        np.concatenate([ca[left], cm[right]]), np.concatenate([cm[left], cb[right]]))
    a = np.concatenate(done_a); b = np.concatenate(done_b)
    ca = np.concatenate(done_ca); cb = np.concatenate(done_cb)
    order = np.argsort(ca, kind="stable")
    a, b, ca, cb = a[order], b[order], ca[order], cb[order]

    mult = cb - ca
    simple = mult == 1
    roots = 0.5 * (a + b)
    if np.any(simple):
        roots[simple] = _discriminant_bisect(values, corner, a[simple], b[simple], tol, cnt)
    ev = np.repeat(roots, mult)
    cluster = np.repeat(~simple, mult)
    return ev, cluster


def _discriminant_bisect(values, corner, a, b, tol, cnt):
    n = values.shape[0]

    def sign(x):
        p = _products_1d(values, x)
        return np.sign(p.trace - 2.0 * corner * np.exp(-p.log_scale))

    a = a.copy(); b = b.copy()
    sa, sb = sign(a), sign(b)
    ok = (sa * sb) < 0
    # fall back on count bisection where the discriminant sign is unreliable at the ends
    for _ in range(200):
        width = b - a
        active = width > tol * np.maximum(1.0, np.abs(a))
        if not np.any(active):
            break
        m = 0.5 * (a + b)
        mi = m[active]
        go_left = np.zeros(active.sum(), dtype=bool)
        okm = ok[active]
        if np.any(okm):
            sm = sign(mi[okm])
            go_left[okm] = (sm * sa[active][okm]) <= 0
        if np.any(~okm):
            cm = cnt(mi[~okm])
            # target eigenvalue lies in (a, m] iff count(m) exceeds count(a)
            ca = cnt(a[active][~okm])
            go_left[~okm] = cm > ca
        idx = np.flatnonzero(active)
        b[idx[go_left]] = mi[go_left]
        a[idx[~go_left]] = mi[~go_left]
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# bands and gaps


@dataclass(frozen=True)
class BandStructure:
    """Bands I_1..I_N and gaps G_0..G_N of the Hermitian ring, both ordered right to left.

    ``edges`` holds e_1 >= ... >= e_2N; band I_k = (e_2k, e_{2k-1}) and interior
    gap G_k = [e_{2k+1}, e_2k]. G_0 = [e_1, inf) and G_N = (-inf, e_2N].
    """

    periodic: np.ndarray      # descending: lambda_1(0) >= ... >= lambda_N(0)
    antiperiodic: np.ndarray  # descending
    edges: np.ndarray
    closed_gaps: np.ndarray   # bool per gap index 0..N, True if the gap shrank to a point

    @property
    def n(self) -> int:
        return self.periodic.shape[0]

    @property
    def bands(self) -> np.ndarray:
        """(N, 2) array of (left, right) per band I_1..I_N."""
        e = self.edges
        return np.column_stack([e[1::2], e[0::2]])

    @property
    def gaps(self) -> np.ndarray:
        """(N+1, 2) array of (a_j, b_j) per gap G_0..G_N, with infinite ends for G_0, G_N."""
        e = self.edges
        left = np.concatenate([[e[0]], e[2::2], [-np.inf]])
        right = np.concatenate([[np.inf], e[1::2]])
        return np.column_stack([left, right])

    def gap(self, j: int) -> tuple[float, float]:
        a, b = self.gaps[j]
        return float(a), float(b)

    def even_gap_indices(self) -> list[int]:
        return [j for j in range(0, self.n + 1, 2)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "index", "left", "right"])
        for k, (l, r) in enumerate(self.bands, start=1):
            w.writerow(["band", k, repr(float(l)), repr(float(r))])
        for j, (l, r) in enumerate(self.gaps):
            w.writerow(["gap", j, repr(float(l)), repr(float(r))])
        return buf.getvalue()


TANGENCY_SPLIT = 1e-7
TANGENCY_EXCESS = 1e-9


def _edge_pattern(n: int) -> np.ndarray:
    """True where sorted edge e_m (1-based m) is a periodic eigenvalue: m mod 4 in {0, 1}."""
    m = np.arange(1, 2 * n + 1)
    return (m % 4 == 0) | (m % 4 == 1)


def band_structure(potential: PotentialVector, tol: float = 1e-12, gap_tol: float = 1e-10) -> BandStructure:
    values = potential.values
    n = values.shape[0]
    if n < 3:
        raise TransferError("band structure needs N >= 3")
    per, _ = ring_eigenvalues(values, 1.0, tol)
    anti, _ = ring_eigenvalues(values, -1.0, tol)
    if per.size != n or anti.size != n:
        raise BandCountError(f"found {per.size} periodic and {anti.size} antiperiodic edges, expected {n}")
    per = per[::-1]
    anti = anti[::-1]
    pat = _edge_pattern(n)
    edges = np.empty(2 * n)
    edges[pat] = per
    edges[~pat] = anti
    scale = max(1.0, float(np.max(np.abs(edges))))
    if np.any(np.diff(edges) > 1e3 * tol * scale):
        raise BandCountError("band edges do not interlace; cannot split the spectrum into N bands")
    edges = np.minimum.accumulate(edges)
    gaps = np.concatenate([[edges[0]], edges[2::2], [-np.inf]]), np.concatenate([[np.inf], edges[1::2]])
    width = gaps[1] - gaps[0]
    closed = width <= gap_tol * scale
    # A tangency |tr| = 2 is a double root, which bisection only resolves to about sqrt(eps): the two
    # edges may split by ~1e-9 although the gap is closed. An open gap has |tr| - 2 of order
    # width * |d tr/dE| at its midpoint; a split tangency has it of order width**2.
    cand = np.flatnonzero(~closed & (width <= TANGENCY_SPLIT * scale))
    if cand.size:
        mid = 0.5 * (gaps[0][cand] + gaps[1][cand])
        p = _products_1d(values, mid)
        excess = np.abs(p.trace) * np.exp(np.minimum(p.log_scale, 700.0)) - 2.0
        closed[cand[excess <= TANGENCY_EXCESS]] = True
    return BandStructure(per, anti, edges, closed)


# ---------------------------------------------------------------------------
# real eigenvalues of H_N(g) from the characteristic equation


@dataclass
class RealRoots:
    roots: np.ndarray                 # ascending, repeated according to multiplicity
    multiplicity: np.ndarray          # per entry of ``roots``: 1 simple, 2 member of a double root
    suspect: np.ndarray               # near-tangency: max of tr Phi in the gap within tolerance of 2cosh(Ng)
    gap_index: np.ndarray             # even gap G_j hosting each root
    unexpected: int = 0               # grid sign changes not explained by the gap analysis
    tangencies: list = field(default_factory=list)

    def __len__(self):
        return self.roots.shape[0]


def _log_disc(values, E):
    """log tr Phi(E) where tr Phi > 0, -inf elsewhere."""
    p = _products_1d(values, E)
    t = p.trace
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t > 0, p.log_scale + np.log(np.where(t > 0, t, 1.0)), -np.inf)


def _golden_max(fun, a, b, iters: int = 80):
    """Batched golden-section maximisation of unimodal ``fun`` on [a, b]."""
    a = a.copy(); b = b.copy()
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = fun(x1), fun(x2)
    for _ in range(iters):
        left = f1 < f2
        a = np.where(left, x1, a)
        b = np.where(left, b, x2)
        nx1 = np.where(left, x2, b - GOLDEN * (b - a))
        nx2 = np.where(left, a + GOLDEN * (b - a), x1)
        newx = np.where(left, nx2, nx1)
        fn = fun(newx)
        f1, f2 = np.where(left, f2, fn), np.where(left, fn, f1)
        x1, x2 = nx1, nx2
        if np.all(b - a <= 1e-14 * np.maximum(1.0, np.abs(a))):
            break
    xm = 0.5 * (a + b)
    return xm, fun(xm)


def _char_bisect(values, g, a, b, tol, pin=None):
    """Bisection on the sign of char in [a, b].

    If both ends already share a sign, the root lies closer to the band edge
    than the discriminant can resolve; the edge given by ``pin`` ("a" or "b")
    is returned.
    """
    n = values.shape[0]
    f = lambda x: _products_1d(values, x).char(g, n)
    a = np.asarray(a, float).copy(); b = np.asarray(b, float).copy()
    if a.size == 0:
        return a
    va, vb = f(a), f(b)
    fa = np.sign(va)
    unbracketed = fa == np.sign(vb)
    pinned = a.copy() if pin == "a" else b.copy()
    for _ in range(200):
        if np.all(b - a <= tol):
            break
        m = 0.5 * (a + b)
        fm = np.sign(f(m))
        same = fm == fa
        a = np.where(same, m, a)
        b = np.where(same, b, m)
    return np.where(unbracketed, pinned, 0.5 * (a + b))


def _log_2cosh(x: float) -> float:
    x = abs(x)
    return x + math.log1p(math.exp(-2.0 * x))


def real_eigenvalues(potential: PotentialVector, g: float, search: Optional[tuple[float, float]] = None,
                     grid_density: Optional[int] = None, bands: Optional[BandStructure] = None,
                     tol: float = 1e-12, tangency_tol: float = 1e-10) -> RealRoots:
    """Real solutions of tr Phi_N(E) = 2cosh(Ng), i.e. the real eigenvalues of H_N(g).

    Real roots can only sit in even gaps, where the discriminant has a single
    maximum; each even interior gap therefore holds two roots or none. The gaps
    are scanned by golden-section search for that maximum, then each root is
    bisected. A uniform grid of ``grid_density`` points over ``search`` is
    scanned for sign changes as an independent check; any sign change the gap
    analysis missed is bisected too and counted in ``unexpected``.
    """
    values = potential.values
    n = values.shape[0]
    bs = bands if bands is not None else band_structure(potential)
    ch = 2.0 * math.cosh(g)
    if search is None:
        search = (float(values.min()) - ch - 1.0, float(values.max()) + ch + 1.0)
    lo, hi = search
    if grid_density is None:
        grid_density = 50 * n

    if g == 0:
        per = bs.periodic[::-1]
        closed_even = np.zeros(per.shape[0], dtype=bool)
        # lambda_{2j}, lambda_{2j+1} are the edges of G_{2j}; a closed gap is a double eigenvalue
        gap_of = np.empty(per.shape[0], dtype=int)
        for k in range(per.shape[0]):          # k: 0-based descending label
            j = 2 * ((k + 1) // 2)
            gap_of[k] = j
            if 0 < j < n and bs.closed_gaps[j]:
                closed_even[k] = True
        gap_of = gap_of[::-1]
        closed_even = closed_even[::-1]
        keep = (per >= lo) & (per <= hi)
        mult = np.where(closed_even, 2, 1)
        return RealRoots(per[keep], mult[keep], np.zeros(keep.sum(), bool), gap_of[keep])

    log_c = _log_2cosh(n * g)
    gaps = bs.gaps
    roots, gidx, suspect, mult = [], [], [], []
    tangencies = []

    # interior even gaps
    js = np.array([j for j in range(2, n, 2) if not bs.closed_gaps[j]], dtype=int)
    if js.size:
        ga, gb = gaps[js, 0], gaps[js, 1]
        inside = (gb >= lo) & (ga <= hi)
        js, ga, gb = js[inside], ga[inside], gb[inside]
    if js.size:
        xm, fm = _golden_max(lambda x: _log_disc(values, x), ga, gb)
        two = fm > log_c + tangency_tol
        near = np.abs(fm - log_c) <= tangency_tol
        if np.any(two):
            left = _char_bisect(values, g, ga[two], xm[two], tol, pin="a")
            right = _char_bisect(values, g, xm[two], gb[two], tol, pin="b")
            for x, j in zip(np.concatenate([left, right]), np.concatenate([js[two], js[two]])):
                roots.append(x); gidx.append(j); suspect.append(False); mult.append(1)
        for x, j, f in zip(xm[near], js[near], fm[near]):
            tangencies.append({"gap": int(j), "E": float(x), "log_max_minus_log_c": float(f - log_c)})
            roots.extend([x, x]); gidx.extend([j, j]); suspect.extend([True, True]); mult.extend([2, 2])

    # unbounded even gaps: exactly one root each
    top = float(values.max()) + ch + 1.0
    bottom = float(values.min()) - ch - 1.0
    outer = [(gaps[0, 0], top, 0, "a")]
    if n % 2 == 0:
        outer.append((bottom, gaps[n, 1], n, "b"))
    for a, b, j, pin in outer:
        x = float(_char_bisect(values, g, np.array([a]), np.array([b]), tol, pin=pin)[0])
        roots.append(x); gidx.append(j); suspect.append(False); mult.append(1)

    roots = np.asarray(roots, float)
    gidx = np.asarray(gidx, int)
    suspect = np.asarray(suspect, bool)
    mult = np.asarray(mult, int)

    # independent grid scan over the search interval
    unexpected = 0
    if grid_density > 1:
        grid = np.linspace(lo, hi, int(grid_density))
        fg = _products_1d(values, grid).char(g, n)
        cells = np.flatnonzero(np.sign(fg[:-1]) * np.sign(fg[1:]) < 0)
        if cells.size:
            found = np.searchsorted(grid, roots)
            explained = np.isin(cells + 1, found)
            missing = cells[~explained]
            if missing.size:
                unexpected = int(missing.size)
                extra = _char_bisect(values, g, grid[missing], grid[missing + 1], tol, pin="a")
                roots = np.concatenate([roots, extra])
                gidx = np.concatenate([gidx, np.full(extra.size, -1)])
                suspect = np.concatenate([suspect, np.ones(extra.size, bool)])
                mult = np.concatenate([mult, np.ones(extra.size, int)])

    keep = (roots >= lo) & (roots <= hi)
    order = np.argsort(roots[keep], kind="stable")
    return RealRoots(roots[keep][order], mult[keep][order], suspect[keep][order], gidx[keep][order],
                     unexpected, tangencies)
