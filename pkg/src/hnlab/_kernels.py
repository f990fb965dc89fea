"""Compiled inner loops.

Products are rescaled by exact powers of two, so the scaled matrix keeps its
largest entry in [1/2, 1) and the integer exponent accumulator carries the
overall size without rounding. Scaling by 2^k commutes exactly with every
floating-point operation here, so rescaling only when an entry leaves
[2^-LAZY, 2^LAZY] and once more at the end gives bit-for-bit the same result
as rescaling after every factor.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

PIVMIN = 1e-100
LAZY_HI = 2.0 ** 400
LAZY_LO = 2.0 ** -400


@njit(cache=True)
def products(v, z):
    """Transfer products for potentials ``v`` (R, n) at spectral parameters ``z`` (R, M).

    Returns the four scaled entries and the base-2 exponent, each shaped (R, M).
    """
    R, n = v.shape
    M = z.shape[1]
    a = np.empty((R, M), dtype=z.dtype)
    b = np.empty((R, M), dtype=z.dtype)
    c = np.empty((R, M), dtype=z.dtype)
    d = np.empty((R, M), dtype=z.dtype)
    ex = np.zeros((R, M), dtype=np.int64)
    for r in range(R):
        for m in range(M):
            zz = z[r, m]
            p00 = zz - zz + 1.0
            p01 = zz - zz
            p10 = zz - zz
            p11 = zz - zz + 1.0
            e = 0
            for j in range(n):
                t = zz - v[r, j]
                q00 = t * p00 - p10
                q01 = t * p01 - p11
                p10 = p00
                p11 = p01
                p00 = q00
                p01 = q01
                mx = max(max(abs(p00), abs(p01)), max(abs(p10), abs(p11)))
                if mx > LAZY_HI or mx < LAZY_LO:
                    k = math.frexp(mx)[1]
                    s = math.ldexp(1.0, -k)
                    p00 *= s
                    p01 *= s
                    p10 *= s
                    p11 *= s
                    e += k
            mx = max(max(abs(p00), abs(p01)), max(abs(p10), abs(p11)))
            k = math.frexp(mx)[1]
            s = math.ldexp(1.0, -k)
            p00 *= s
            p01 *= s
            p10 *= s
            p11 *= s
            e += k
            a[r, m] = p00
            b[r, m] = p01
            c[r, m] = p10
            d[r, m] = p11
            ex[r, m] = e
    return a, b, c, d, ex


@njit(cache=True)
def nested_products(v, z, cuts):
    """Scaled products of every prefix length listed in ``cuts`` (sorted) for one potential row.

    ``v`` is (R, n), ``z`` is (R,); result arrays are (R, len(cuts)).
    """
    R, n = v.shape
    K = cuts.shape[0]
    a = np.empty((R, K), dtype=z.dtype)
    b = np.empty((R, K), dtype=z.dtype)
    c = np.empty((R, K), dtype=z.dtype)
    d = np.empty((R, K), dtype=z.dtype)
    ex = np.zeros((R, K), dtype=np.int64)
    for r in range(R):
        zz = z[r]
        p00 = zz - zz + 1.0
        p01 = zz - zz
        p10 = zz - zz
        p11 = zz - zz + 1.0
        e = 0
        ic = 0
        while ic < K and cuts[ic] == 0:
            a[r, ic] = p00
            b[r, ic] = p01
            c[r, ic] = p10
            d[r, ic] = p11
            ex[r, ic] = 0
            ic += 1
        for j in range(n):
            t = zz - v[r, j]
            q00 = t * p00 - p10
            q01 = t * p01 - p11
            p10 = p00
            p11 = p01
            p00 = q00
            p01 = q01
            mx = max(max(abs(p00), abs(p01)), max(abs(p10), abs(p11)))
            if mx > LAZY_HI or mx < LAZY_LO:
                k = math.frexp(mx)[1]
                s = math.ldexp(1.0, -k)
                p00 *= s
                p01 *= s
                p10 *= s
                p11 *= s
                e += k
            if ic < K and cuts[ic] == j + 1:
                mx = max(max(abs(p00), abs(p01)), max(abs(p10), abs(p11)))
                k = math.frexp(mx)[1]
                s = math.ldexp(1.0, -k)
                while ic < K and cuts[ic] == j + 1:
                    a[r, ic] = p00 * s
                    b[r, ic] = p01 * s
                    c[r, ic] = p10 * s
                    d[r, ic] = p11 * s
                    ex[r, ic] = e + k
                    ic += 1
    return a, b, c, d, ex


@njit(cache=True)
def count_below(v, E, corner):
    """Number of eigenvalues below each ``E`` of the symmetric ring matrix.

    The matrix has diagonal ``v``, unit nearest-neighbour hopping and corner
    entries equal to ``corner`` (+1 periodic, -1 antiperiodic); len(v) >= 3.
    The open chain on the first N-1 sites is counted by LDL^T pivots. The
    last site adds one more negative eigenvalue iff the Schur complement is
    negative, whose sign is read off det(H - E) = (-1)^N (tr Phi_N(E) - 2 corner)
    instead of summing y^2/d terms, which cancel badly after a tiny pivot.
    """
    n = v.shape[0]
    M = E.shape[0]
    out = np.zeros(M, dtype=np.int64)
    for m in range(M):
        x = E[m]
        cnt = 0
        d = 1.0
        for i in range(n - 1):
            d = (v[i] - x) - (1.0 / d if i > 0 else 0.0)
            if abs(d) < PIVMIN:
                d = -PIVMIN
            if d < 0:
                cnt += 1
        p00 = 1.0
        p01 = 0.0
        p10 = 0.0
        p11 = 1.0
        e = 0
        for j in range(n):
            t = x - v[j]
            q00 = t * p00 - p10
            q01 = t * p01 - p11
            p10 = p00
            p11 = p01
            p00 = q00
            p01 = q01
            mx = max(max(abs(p00), abs(p01)), max(abs(p10), abs(p11)))
            if mx > LAZY_HI or mx < LAZY_LO:
                k = math.frexp(mx)[1]
                s = math.ldexp(1.0, -k)
                p00 *= s
                p01 *= s
                p10 *= s
                p11 *= s
                e += k
        disc = (p00 + p11) - 2.0 * corner * math.ldexp(1.0, -e)
        det_sign = 1.0 if disc > 0 else -1.0
        if n % 2 == 1:
            det_sign = -det_sign
        chain_sign = -1.0 if cnt % 2 == 1 else 1.0
        if det_sign * chain_sign < 0:
            cnt += 1
        out[m] = cnt
    return out
