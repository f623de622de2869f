"""Compiled float64 kernels: batched discriminant scans, scaled transfer products, Sturm counts."""

from __future__ import annotations

import math

import numba
import numpy as np

LN2 = math.log(2.0)
_BIG = 1e100
_SHRINK = 1e-100
_LN_SHRINK = 230.25850929940458


@numba.njit(cache=True)
def disc_scan(Es, v, out):
    """For each real E: trace and d/dE trace of T_q...T_1 (mantissas), log-scale, Dirichlet count.

    out[i] = (tr, dtr, logscale, count); the true trace is tr * exp(logscale).
    count = #{1 <= n <= q-1 : psi(n+1) psi(n) > 0} for psi(0) = 0, psi(1) = 1,
    i.e. the number of eigenvalues below E of the box on sites 1..q-1.
    The energy loop is innermost so that it vectorizes.
    """
    N = v.shape[0]
    K = Es.shape[0]
    x1 = np.ones(K)
    y1 = np.zeros(K)
    x2 = np.zeros(K)
    y2 = np.ones(K)
    dx1 = np.zeros(K)
    dy1 = np.zeros(K)
    dx2 = np.zeros(K)
    dy2 = np.zeros(K)
    ls = np.zeros(K)
    cnt = np.zeros(K, np.int64)
    sp = np.ones(K)
    for j in range(N):
        vj = v[j]
        last = j == N - 1
        for i in range(K):
            a = Es[i] - vj
            nx1 = a * x1[i] - y1[i]
            nx2 = a * x2[i] - y2[i]
            ndx1 = x1[i] + a * dx1[i] - dy1[i]
            ndx2 = x2[i] + a * dx2[i] - dy2[i]
            if not last:
                sn = 1.0 if nx1 > 0.0 else (-1.0 if nx1 < 0.0 else -sp[i])
                if sn == sp[i]:
                    cnt[i] += 1
                sp[i] = sn
            y1[i] = x1[i]
            y2[i] = x2[i]
            dy1[i] = dx1[i]
            dy2[i] = dx2[i]
            x1[i] = nx1
            x2[i] = nx2
            dx1[i] = ndx1
            dx2[i] = ndx2
        if (j & 15) == 15 or last:
            for i in range(K):
                m = max(abs(x1[i]), abs(y1[i]), abs(x2[i]), abs(y2[i]),
                        abs(dx1[i]), abs(dy1[i]), abs(dx2[i]), abs(dy2[i]))
                if m > _BIG:
                    x1[i] *= _SHRINK
                    y1[i] *= _SHRINK
                    x2[i] *= _SHRINK
                    y2[i] *= _SHRINK
                    dx1[i] *= _SHRINK
                    dy1[i] *= _SHRINK
                    dx2[i] *= _SHRINK
                    dy2[i] *= _SHRINK
                    ls[i] += _LN_SHRINK
    for i in range(K):
        out[i, 0] = x1[i] + y2[i]
        out[i, 1] = dx1[i] + dy2[i]
        out[i, 2] = ls[i]
        out[i, 3] = cnt[i]


@numba.njit(cache=True)
def disc_scan2(Es, v, out):
    """Trace with first and second E-derivatives: out[i] = (tr, dtr, d2tr, logscale)."""
    N = v.shape[0]
    K = Es.shape[0]
    x1 = np.ones(K)
    y1 = np.zeros(K)
    x2 = np.zeros(K)
    y2 = np.ones(K)
    dx1 = np.zeros(K)
    dy1 = np.zeros(K)
    dx2 = np.zeros(K)
    dy2 = np.zeros(K)
    ex1 = np.zeros(K)
    ey1 = np.zeros(K)
    ex2 = np.zeros(K)
    ey2 = np.zeros(K)
    ls = np.zeros(K)
    for j in range(N):
        vj = v[j]
        for i in range(K):
            a = Es[i] - vj
            nx1 = a * x1[i] - y1[i]
            nx2 = a * x2[i] - y2[i]
            ndx1 = x1[i] + a * dx1[i] - dy1[i]
            ndx2 = x2[i] + a * dx2[i] - dy2[i]
            nex1 = 2.0 * dx1[i] + a * ex1[i] - ey1[i]
            nex2 = 2.0 * dx2[i] + a * ex2[i] - ey2[i]
            y1[i] = x1[i]
            y2[i] = x2[i]
            dy1[i] = dx1[i]
            dy2[i] = dx2[i]
            ey1[i] = ex1[i]
            ey2[i] = ex2[i]
            x1[i] = nx1
            x2[i] = nx2
            dx1[i] = ndx1
            dx2[i] = ndx2
            ex1[i] = nex1
            ex2[i] = nex2
        if (j & 15) == 15 or j == N - 1:
            for i in range(K):
                m = max(abs(x1[i]), abs(y1[i]), abs(x2[i]), abs(y2[i]),
                        abs(dx1[i]), abs(dy1[i]), abs(dx2[i]), abs(dy2[i]),
                        abs(ex1[i]), abs(ey1[i]), abs(ex2[i]), abs(ey2[i]))
                if m > _BIG:
                    x1[i] *= _SHRINK
                    y1[i] *= _SHRINK
                    x2[i] *= _SHRINK
                    y2[i] *= _SHRINK
                    dx1[i] *= _SHRINK
                    dy1[i] *= _SHRINK
                    dx2[i] *= _SHRINK
                    dy2[i] *= _SHRINK
                    ex1[i] *= _SHRINK
                    ey1[i] *= _SHRINK
                    ex2[i] *= _SHRINK
                    ey2[i] *= _SHRINK
                    ls[i] += _LN_SHRINK
    for i in range(K):
        out[i, 0] = x1[i] + y2[i]
        out[i, 1] = dx1[i] + dy2[i]
        out[i, 2] = ex1[i] + ey2[i]
        out[i, 3] = ls[i]


@numba.njit(cache=True)
def count_scan(Es, v, out):
    """Trace mantissa and Dirichlet count only: out[i] = (tr, count)."""
    N = v.shape[0]
    K = Es.shape[0]
    x1 = np.ones(K)
    y1 = np.zeros(K)
    x2 = np.zeros(K)
    y2 = np.ones(K)
    cnt = np.zeros(K, np.int64)
    sp = np.ones(K)
    for j in range(N):
        vj = v[j]
        last = j == N - 1
        for i in range(K):
            a = Es[i] - vj
            nx1 = a * x1[i] - y1[i]
            nx2 = a * x2[i] - y2[i]
            if not last:
                sn = 1.0 if nx1 > 0.0 else (-1.0 if nx1 < 0.0 else -sp[i])
                if sn == sp[i]:
                    cnt[i] += 1
                sp[i] = sn
            y1[i] = x1[i]
            y2[i] = x2[i]
            x1[i] = nx1
            x2[i] = nx2
        if (j & 15) == 15 or last:
            for i in range(K):
                m = max(abs(x1[i]), abs(y1[i]), abs(x2[i]), abs(y2[i]))
                if m > _BIG:
                    x1[i] *= _SHRINK
                    y1[i] *= _SHRINK
                    x2[i] *= _SHRINK
                    y2[i] *= _SHRINK
    for i in range(K):
        out[i, 0] = x1[i] + y2[i]
        out[i, 1] = cnt[i]


CHUNK = 1024  # energies per kernel call; keeps the per-energy state in cache


def _chunked(kernel, Es, v, width):
    Es = np.ascontiguousarray(Es, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    out = np.empty((Es.shape[0], width))
    for s in range(0, Es.shape[0], CHUNK):
        kernel(Es[s:s + CHUNK], v, out[s:s + CHUNK])
    return out


def scan2(Es, v):
    return _chunked(disc_scan2, Es, v, 4)


def counts(Es, v):
    return _chunked(count_scan, Es, v, 2)


def scan(Es, v):
    return _chunked(disc_scan, Es, v, 4)


@numba.njit(cache=True)
def transfer_scaled(E, v):
    """T_n...T_1 at complex E, rescaled by an exact power of two after every step.

    Returns (m00, m01, m10, m11, exponent) with product = m * 2**exponent.
    """
    a00 = 1.0 + 0.0j
    a01 = 0.0j
    a10 = 0.0j
    a11 = 1.0 + 0.0j
    e = 0
    for j in range(v.shape[0]):
        t = E - v[j]
        n00 = t * a00 - a10
        n01 = t * a01 - a11
        a10 = a00
        a11 = a01
        a00 = n00
        a01 = n01
        m = max(abs(a00), abs(a01), abs(a10), abs(a11))
        if m > 0.0:
            _, k = math.frexp(m)
            s = math.ldexp(1.0, -k)
            a00 *= s
            a01 *= s
            a10 *= s
            a11 *= s
            e += k
    return a00, a01, a10, a11, e


@numba.njit(cache=True)
def sturm_count(diag, E):
    """Number of eigenvalues <= E of the tridiagonal matrix with unit off-diagonals."""
    n = diag.shape[0]
    cnt = 0
    d = 1.0
    for i in range(n):
        if i == 0:
            d = diag[0] - E
        else:
            d = diag[i] - E - 1.0 / d
        if d == 0.0:
            d = -1e-300  # zero pivot: eigenvalue at E, count it once
        if d < 0.0:
            cnt += 1
    return cnt


@numba.njit(cache=True)
def sturm_counts(diag, Es, out):
    for i in range(Es.shape[0]):
        out[i] = sturm_count(diag, Es[i])
