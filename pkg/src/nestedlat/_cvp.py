"""Compiled closest-point kernels.

All kernels work in integer *units* (lattice coordinates multiplied by
p/gamma) so candidate points are exact int64 vectors and only distances are
floating point. Two candidates whose squared distances differ by at most
``tol`` are treated as tied; the lexicographically smallest one wins.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _lex_less(a, b):
    for i in range(a.shape[0]):
        if a[i] < b[i]:
            return True
        if a[i] > b[i]:
            return False
    return False


@njit(cache=True, nogil=True)
def enum_quantize(Y, codewords, p, tol):
    """Nearest point of ``codewords + p Z^n`` for every row of ``Y``."""
    B, n = Y.shape
    M = codewords.shape[0]
    out = np.empty((B, n), dtype=np.int64)
    cand = np.empty(n, dtype=np.int64)
    best_u = np.empty(n, dtype=np.int64)
    for b in range(B):
        best = np.inf
        for m in range(M):
            d = 0.0
            for j in range(n):
                c = codewords[m, j]
                u = c + p * np.int64(np.rint((Y[b, j] - c) / p))
                cand[j] = u
                e = Y[b, j] - u
                d += e * e
            if d < best - tol:
                best = d
                best_u[:] = cand
            elif d <= best + tol and _lex_less(cand, best_u):
                best_u[:] = cand
                if d < best:
                    best = d
        out[b] = best_u
    return out


@njit(cache=True, nogil=True)
def enum_within(Y, codewords, p, r2):
    """For every row of ``Y`` and codeword, is its coset within squared radius ``r2``."""
    B, n = Y.shape
    M = codewords.shape[0]
    hit = np.zeros((B, M), dtype=np.bool_)
    dist = np.empty((B, M))
    for b in range(B):
        for m in range(M):
            d = 0.0
            for j in range(n):
                c = codewords[m, j]
                e = Y[b, j] - (c + p * np.rint((Y[b, j] - c) / p))
                d += e * e
            dist[b, m] = d
            hit[b, m] = d <= r2
    return hit, dist


@njit(cache=True, nogil=True)
def lll_reduce(basis, delta):
    """LLL on the rows of an integer basis; returns the reduced integer basis."""
    Bm = basis.copy()
    n = Bm.shape[0]
    Bf = Bm.astype(np.float64)
    mu = np.zeros((n, n))
    bn = np.zeros(n)
    star = np.zeros((n, Bm.shape[1]))
    for i in range(n):
        star[i] = Bf[i]
        for j in range(i):
            mu[i, j] = np.dot(Bf[i], star[j]) / bn[j]
            star[i] -= mu[i, j] * star[j]
        bn[i] = np.dot(star[i], star[i])
    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            q = np.rint(mu[k, j])
            if q != 0.0:
                qi = np.int64(q)
                Bm[k] -= qi * Bm[j]
                for i in range(j):
                    mu[k, i] -= q * mu[j, i]
                mu[k, j] -= q
        if bn[k] >= (delta - mu[k, k - 1] ** 2) * bn[k - 1]:
            k += 1
            continue
        tmp = Bm[k].copy()
        Bm[k] = Bm[k - 1]
        Bm[k - 1] = tmp
        m_ = mu[k, k - 1]
        b_ = bn[k] + m_ * m_ * bn[k - 1]
        mu[k, k - 1] = m_ * bn[k - 1] / b_
        bn[k] = bn[k - 1] * bn[k] / b_
        bn[k - 1] = b_
        for j in range(k - 1):
            t = mu[k, j]
            mu[k, j] = mu[k - 1, j]
            mu[k - 1, j] = t
        for i in range(k + 1, n):
            t = mu[i, k]
            mu[i, k] = mu[i, k - 1] - m_ * t
            mu[i, k - 1] = t + mu[k, k - 1] * mu[i, k]
        if k > 1:
            k -= 1
    return Bm


@njit(cache=True, nogil=True)
def svp_block(R, radius):
    """Shortest nonzero integer ``z`` with ``||R z||^2 < radius``; all zeros if none.

    ``R`` is upper triangular (a projected block of a basis).
    """
    n = R.shape[0]
    z = np.zeros(n, dtype=np.int64)
    c = np.zeros(n)
    d = np.zeros(n + 1)
    step = np.zeros(n, dtype=np.int64)
    best = radius
    bz = np.zeros(n, dtype=np.int64)
    k = n - 1
    step[k] = 1
    while True:
        e = (c[k] - z[k]) * R[k, k]
        nd = d[k + 1] + e * e
        if nd < best:
            if k == 0:
                nonzero = False
                for i in range(n):
                    if z[i] != 0:
                        nonzero = True
                        break
                if nonzero:
                    best = nd
                    bz[:] = z
                z[0] += step[0]
                step[0] = -step[0] - (1 if step[0] > 0 else -1)
            else:
                d[k] = nd
                k -= 1
                s = 0.0
                for j in range(k + 1, n):
                    s -= R[k, j] * z[j]
                c[k] = s / R[k, k]
                z[k] = np.int64(np.rint(c[k]))
                step[k] = 1 if c[k] >= z[k] else -1
        else:
            k += 1
            if k == n:
                break
            z[k] += step[k]
            step[k] = -step[k] - (1 if step[k] > 0 else -1)
    return bz


def _insert(B, i, x):
    """Unimodular change of rows i..i+len(x) so that row i becomes sum_j x_j B[i+j]."""
    B = B.copy()
    x = x.copy()
    live = [j for j in range(len(x)) if x[j] != 0]
    while len(live) > 1:
        a, b = live[0], live[1]
        if abs(x[a]) < abs(x[b]):
            a, b = b, a
        q = x[a] // x[b]
        x[a] -= q * x[b]
        B[i + b] += q * B[i + a]
        live = [j for j in range(len(x)) if x[j] != 0]
    m = live[0]
    v = B[i + m] * x[m]
    rest = [B[i + j].copy() for j in range(len(x)) if j != m]
    B[i] = v
    B[i + 1:i + len(x)] = np.array(rest)
    return B


def bkz_reduce(basis, block=10, tours=8, delta=0.99):
    """Block Korkine-Zolotarev reduction of integer rows (exact, deterministic)."""
    B = lll_reduce(basis, delta)
    n = B.shape[0]
    for _ in range(tours):
        changed = False
        for i in range(n - 1):
            h = min(block, n - i)
            R = np.linalg.qr(B.T.astype(float))[1]
            x = svp_block(np.ascontiguousarray(R[i:i + h, i:i + h]), 0.99 * R[i, i] ** 2)
            # a primitive coefficient vector keeps the lattice unchanged
            if x.any() and np.gcd.reduce(x) == 1:
                B = lll_reduce(_insert(B, i, x), delta)
                changed = True
        if not changed:
            break
    return B


@njit(cache=True, nogil=True)
def _sphere_one(R, qy, A, tol, best_u, z, c, d, step, u, ps, hi):
    # ps[k, j] = qy[k] - sum_{l >= j} R[k, l] z[l] is kept lazily: columns
    # j <= hi[k] of row k are stale and refreshed when level k is entered.
    n = R.shape[0]
    best = np.inf
    have = False
    d[n] = 0.0
    for i in range(n):
        ps[i, n] = qy[i]
        hi[i] = n - 1
    k = n - 1
    c[k] = qy[k] / R[k, k]
    z[k] = np.int64(np.rint(c[k]))
    step[k] = 1 if c[k] >= z[k] else -1
    if k > 0 and hi[k - 1] < k:
        hi[k - 1] = k
    while True:
        e = (c[k] - z[k]) * R[k, k]
        nd = d[k + 1] + e * e
        if nd <= best + tol:
            if k == 0:
                for i in range(n):
                    s = np.int64(0)
                    for j in range(n):
                        s += A[i, j] * z[j]
                    u[i] = s
                if not have or nd < best - tol:
                    best = nd
                    best_u[:] = u
                    have = True
                elif _lex_less(u, best_u):
                    best_u[:] = u
                    if nd < best:
                        best = nd
                z[0] += step[0]
                step[0] = -step[0] - (1 if step[0] > 0 else -1)
            else:
                d[k] = nd
                k -= 1
                if k > 0 and hi[k - 1] < hi[k]:
                    hi[k - 1] = hi[k]
                for j in range(hi[k], k, -1):
                    ps[k, j] = ps[k, j + 1] - R[k, j] * z[j]
                hi[k] = k
                c[k] = ps[k, k + 1] / R[k, k]
                z[k] = np.int64(np.rint(c[k]))
                step[k] = 1 if c[k] >= z[k] else -1
                if k > 0 and hi[k - 1] < k:
                    hi[k - 1] = k
        else:
            k += 1
            if k == n:
                break
            z[k] += step[k]
            step[k] = -step[k] - (1 if step[k] > 0 else -1)
            if hi[k - 1] < k:
                hi[k - 1] = k


@njit(cache=True, nogil=True)
def sphere_quantize(Y, Q, R, A, tol):
    """Schnorr-Euchner closest point search, lattice = A Z^n with A = Q R."""
    B, n = Y.shape
    out = np.empty((B, n), dtype=np.int64)
    z = np.zeros(n, dtype=np.int64)
    c = np.zeros(n)
    d = np.zeros(n + 1)
    step = np.zeros(n, dtype=np.int64)
    u = np.zeros(n, dtype=np.int64)
    best_u = np.zeros(n, dtype=np.int64)
    ps = np.zeros((n, n + 1))
    hi = np.zeros(n, dtype=np.int64)
    Qt = Q.T.copy()
    for b in range(B):
        qy = Qt @ Y[b]
        _sphere_one(R, qy, A, tol, best_u, z, c, d, step, u, ps, hi)
        out[b] = best_u
    return out
