"""Compiled inner loops (numba, nopython, GIL released).

Each kernel is a pure function of its array arguments.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S5 = np.uint64(5)
_S6 = np.uint64(6)
_S32 = np.uint64(32)
_T26 = np.uint64(1 << 26)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi

_JIT = dict(cache=True, nogil=True)


@njit(inline="always")
def _philox(c0, c1, c2, c3, k0, k1):
    for r in range(10):
        if r > 0:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = c0 * _M0
        p1 = c2 * _M1
        n0 = (p1 >> _S32) ^ c1 ^ k0
        n1 = p1 & _MASK
        n2 = (p0 >> _S32) ^ c3 ^ k1
        n3 = p0 & _MASK
        c0, c1, c2, c3 = n0, n1, n2, n3
    return c0, c1, c2, c3


@njit(inline="always")
def _unit(hi, lo):
    bits = (hi >> _S5) * _T26 + (lo >> _S6)
    return (np.float64(bits) + 0.5) * _INV53


@njit(**_JIT)
def fill_uniform(k0, k1, scans, units, tag, offset, out):
    """out[m, :] = uniforms of stream (scans[m], units[m], tag) from ``offset``."""
    n = out.shape[1]
    t = np.uint64(tag)
    for m in range(out.shape[0]):
        s = np.uint64(scans[m])
        u = np.uint64(units[m])
        for b in range((n + 1) // 2):
            w0, w1, w2, w3 = _philox(s, u, t, np.uint64(offset // 2 + b), k0, k1)
            out[m, 2 * b] = _unit(w0, w1)
            if 2 * b + 1 < n:
                out[m, 2 * b + 1] = _unit(w2, w3)


@njit(**_JIT)
def fill_standard_gamma(k0, k1, scans, units, shapes, tag, max_rounds, out):
    """Marsaglia-Tsang; round ``r`` reads cipher blocks ``2r`` and ``2r + 1``.

    Returns the number of entries that failed to accept within ``max_rounds``.
    """
    t = np.uint64(tag)
    failed = 0
    for m in range(out.shape[0]):
        s = np.uint64(scans[m])
        u = np.uint64(units[m])
        d = shapes[m] - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        done = False
        for r in range(max_rounds):
            w0, w1, w2, w3 = _philox(s, u, t, np.uint64(2 * r), k0, k1)
            x0, x1, x2, x3 = _philox(s, u, t, np.uint64(2 * r + 1), k0, k1)
            u0 = _unit(w0, w1)
            u1 = _unit(w2, w3)
            u2 = _unit(x0, x1)
            z = math.sqrt(-2.0 * math.log(u0)) * math.cos(_TWO_PI * u1)
            v = 1.0 + c * z
            if v <= 0.0:
                continue
            v = v * v * v
            if math.log(u2) < 0.5 * z * z + d - d * v + d * math.log(v):
                out[m] = d * v
                done = True
                break
        if not done:
            out[m] = np.nan
            failed += 1
    return failed


@njit(**_JIT)
def mh_category(Xt, sxy, phi, beta, sigma, z, logu, Q, mu, normal):
    """Univariate random-walk Metropolis pass over one category given phi.

    Keeps ``w_i = phi_i exp(x_i' beta)`` so a one-coordinate move costs O(N).
    Returns (beta, accepted flags, non-finite proposal count).
    """
    K, N = Xt.shape
    beta = beta.copy()
    w = np.empty(N)
    e = np.empty(N)
    wsum = 0.0
    for i in range(N):
        s = 0.0
        for p in range(K):
            s += Xt[p, i] * beta[p]
        w[i] = phi[i] * math.exp(s)
        wsum += w[i]
    Qr = np.zeros(K)
    if normal:
        for a in range(K):
            acc = 0.0
            for b in range(K):
                acc += Q[a, b] * (beta[b] - mu[b])
            Qr[a] = acc
    accepted = np.zeros(K, dtype=np.int64)
    bad = 0
    for p in range(K):
        d = sigma[p] * z[p]
        tot = 0.0
        for i in range(N):
            e[i] = math.exp(d * Xt[p, i])
            tot += w[i] * e[i]
        delta = d * sxy[p] - (tot - wsum)
        if normal:
            delta -= d * Qr[p] + 0.5 * d * d * Q[p, p]
        if not math.isfinite(delta):
            bad += 1
            continue
        if logu[p] < delta:
            beta[p] += d
            wsum = 0.0
            for i in range(N):
                w[i] *= e[i]
                wsum += w[i]
            if normal:
                for a in range(K):
                    Qr[a] += d * Q[a, p]
            accepted[p] = 1
    return beta, accepted, bad


@njit(**_JIT)
def ess_category(X, sxy, phi, beta, nu, mu, logu, theta, shrink_u, max_shrink):
    """Elliptical slice update of one category's coefficients given phi.

    The log-likelihood along the ellipse is
    ``s'mu + cos(t) s'r + sin(t) s'nu - sum_i phi_i exp(xm_i + cos(t) xr_i + sin(t) xn_i)``
    with ``r = beta - mu``, so each proposal costs O(N).

    Returns (new beta, shrink steps, status): status 0 accepted, 1 out of
    shrink uniforms (caller retries with more), 2 hit ``max_shrink``,
    3 bracket collapsed onto the current state.
    """
    N, K = X.shape
    xm = np.zeros(N)
    xr = np.zeros(N)
    xn = np.zeros(N)
    r = beta - mu
    for i in range(N):
        a = 0.0
        b = 0.0
        c = 0.0
        for p in range(K):
            a += X[i, p] * mu[p]
            b += X[i, p] * r[p]
            c += X[i, p] * nu[p]
        xm[i] = a
        xr[i] = b
        xn[i] = c
    sm = 0.0
    sr = 0.0
    sn = 0.0
    for p in range(K):
        sm += sxy[p] * mu[p]
        sr += sxy[p] * r[p]
        sn += sxy[p] * nu[p]
    cur = sm + sr
    for i in range(N):
        cur -= phi[i] * math.exp(xm[i] + xr[i])
    h = logu + cur
    lo = theta - _TWO_PI
    hi = theta
    k = 0
    while True:
        ct = math.cos(theta)
        st = math.sin(theta)
        ll = sm + ct * sr + st * sn
        for i in range(N):
            ll -= phi[i] * math.exp(xm[i] + ct * xr[i] + st * xn[i])
        if ll > h:
            return mu + r * ct + nu * st, k, 0
        if k >= max_shrink:
            return beta, k, 2
        if k >= shrink_u.size:
            return beta, k, 1
        if theta > 0.0:
            hi = theta
        elif theta < 0.0:
            lo = theta
        else:
            return beta, k, 3
        theta = lo + (hi - lo) * shrink_u[k]
        k += 1


@njit(**_JIT)
def naive_scan(X, Xt, XtY, n, B, sigma, z, logu, Q, mu, normal, n_free):
    """Random-walk Metropolis over all free coefficients on the unaugmented target.

    Every proposal recomputes the row log-sum-exp over all categories.
    Returns (B, accepted flags, non-finite proposal count).
    """
    N, K = X.shape
    C = B.shape[1]
    B = B.copy()
    eta = X @ B if N > 0 else np.zeros((0, C))
    lse = np.empty(N)
    lse_new = np.empty(N)
    col = np.empty(N)
    for i in range(N):
        mx = eta[i, 0]
        for k in range(1, C):
            mx = max(mx, eta[i, k])
        s = 0.0
        for k in range(C):
            s += math.exp(eta[i, k] - mx)
        lse[i] = mx + math.log(s)
    accepted = np.zeros((K, C), dtype=np.int64)
    bad = 0
    Qr = np.zeros(K)
    for j in range(n_free):
        if normal:
            for a in range(K):
                acc = 0.0
                for b in range(K):
                    acc += Q[a, b] * (B[b, j] - mu[b])
                Qr[a] = acc
        for p in range(K):
            d = sigma[p, j] * z[p, j]
            dl = 0.0
            for i in range(N):
                col[i] = eta[i, j] + d * Xt[p, i]
                mx = col[i]
                for k in range(C):
                    if k != j and eta[i, k] > mx:
                        mx = eta[i, k]
                s = math.exp(col[i] - mx)
                for k in range(C):
                    if k != j:
                        s += math.exp(eta[i, k] - mx)
                lse_new[i] = mx + math.log(s)
                dl += n[i] * (lse_new[i] - lse[i])
            delta = d * XtY[p, j] - dl
            if normal:
                delta -= d * Qr[p] + 0.5 * d * d * Q[p, p]
            if not math.isfinite(delta):
                bad += 1
                continue
            if logu[p, j] < delta:
                B[p, j] += d
                for i in range(N):
                    eta[i, j] = col[i]
                    lse[i] = lse_new[i]
                if normal:
                    for a in range(K):
                        Qr[a] += d * Q[a, p]
                accepted[p, j] = 1
    return B, accepted, bad


_warm = False


def warmup() -> None:
    """Compile (or load from cache) every kernel on tiny inputs."""
    global _warm
    if _warm:
        return
    k = np.uint64(1)
    s = np.zeros(1, dtype=np.int64)
    fill_uniform(k, k, s, s, 1, 0, np.empty((1, 2)))
    fill_standard_gamma(k, k, s, s, np.ones(1), 1, 4, np.empty(1))
    X = np.ones((2, 1))
    Xt = np.ascontiguousarray(X.T)
    v = np.zeros(1)
    phi = np.ones(2)
    Q = np.eye(1)
    mh_category(Xt, v, phi, v, np.ones(1), v, v - 1.0, Q, v, True)
    ess_category(X, v, phi, v, v, v, -1.0, 1.0, np.full(4, 0.5), 10)
    B = np.zeros((1, 2))
    naive_scan(X, Xt, B, np.ones(2), B, np.ones((1, 2)), B, B - 1.0, Q, v, True, 1)
    _warm = True
