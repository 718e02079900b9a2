"""Numba loops behind the gain operator.

Velocity nodes are flattened in C order over n axes of N cells.  Pair
tensors are stored packed over i <= j with row index
``i*NV - i*(i-1)//2 + (j-i)``.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def packed_index(i, j, NV):
    if i > j:
        i, j = j, i
    return i * NV - (i * (i - 1)) // 2 + (j - i)


@njit(cache=True, inline="always")
def _unravel(k, N, n, out):
    for a in range(n - 1, -1, -1):
        out[a] = k % N
        k //= N


@njit(cache=True, inline="always")
def _ravel(idx, N, n):
    k = 0
    for a in range(n):
        k = k * N + idx[a]
    return k


@njit(cache=True)
def _pair_keys(pi, qi, N, n):
    """Flat difference index and flat parity of p + q."""
    D = 0
    par = 0
    for a in range(n):
        D = D * (2 * N - 1) + (pi[a] - qi[a] + N - 1)
        par = par * 2 + ((pi[a] + qi[a]) & 1)
    return D, par


@njit(cache=True)
def _conservative_nodes(pi, qi, d2, N, n, lam, mu):
    """Nodes s/2 + d2/2 and s/2 - d2/2; False when either leaves the box."""
    ok = True
    for a in range(n):
        s = pi[a] + qi[a]
        la = (s + d2[a]) // 2
        ma = (s - d2[a]) // 2
        if la < 0 or la >= N or ma < 0 or ma >= N:
            ok = False
        lam[a] = la
        mu[a] = ma
    return ok


@njit(cache=True)
def conservative_assemble(N, n, d2lo, d2hi, r, K, Tp):
    """Fill the packed gain tensor; returns (total weight, weight sent back to the pair)."""
    NV = N**n
    M = K.shape[1]
    pi = np.empty(n, np.int64)
    qi = np.empty(n, np.int64)
    l1 = np.empty(n, np.int64)
    m1 = np.empty(n, np.int64)
    l2 = np.empty(n, np.int64)
    m2 = np.empty(n, np.int64)
    total = 0.0
    dropped = 0.0
    for p in range(NV):
        _unravel(p, N, n, pi)
        for q in range(p + 1, NV):
            _unravel(q, N, n, qi)
            D, par = _pair_keys(pi, qi, N, n)
            row = packed_index(p, q, NV)
            for m in range(M):
                k = K[D, m]
                if k == 0.0:
                    continue
                total += k
                ok = _conservative_nodes(pi, qi, d2lo[D, par, m], N, n, l1, m1)
                ok = _conservative_nodes(pi, qi, d2hi[D, par, m], N, n, l2, m2) and ok
                if not ok:
                    dropped += k
                    Tp[row, p] += k
                    Tp[row, q] += k
                    continue
                w = r[D, par, m]
                Tp[row, _ravel(l1, N, n)] += w * k
                Tp[row, _ravel(m1, N, n)] += w * k
                Tp[row, _ravel(l2, N, n)] += (1.0 - w) * k
                Tp[row, _ravel(m2, N, n)] += (1.0 - w) * k
    return total, dropped


@njit(cache=True)
def conservative_stream(N, n, d2lo, d2hi, r, K, F, G, out):
    """Symmetrised gain for a batch of fields without storing the tensor."""
    NV = N**n
    M = K.shape[1]
    B = F.shape[0]
    pi = np.empty(n, np.int64)
    qi = np.empty(n, np.int64)
    l1 = np.empty(n, np.int64)
    m1 = np.empty(n, np.int64)
    l2 = np.empty(n, np.int64)
    m2 = np.empty(n, np.int64)
    prod = np.empty(B)
    total = 0.0
    dropped = 0.0
    for p in range(NV):
        _unravel(p, N, n, pi)
        for q in range(p + 1, NV):
            nz = False
            for b in range(B):
                prod[b] = 0.5 * (F[b, p] * G[b, q] + F[b, q] * G[b, p])
                if prod[b] != 0.0:
                    nz = True
            _unravel(q, N, n, qi)
            D, par = _pair_keys(pi, qi, N, n)
            for m in range(M):
                k = K[D, m]
                if k == 0.0:
                    continue
                total += k
                ok = _conservative_nodes(pi, qi, d2lo[D, par, m], N, n, l1, m1)
                ok = _conservative_nodes(pi, qi, d2hi[D, par, m], N, n, l2, m2) and ok
                if not ok:
                    dropped += k
                if not nz:
                    continue
                if not ok:
                    for b in range(B):
                        out[b, p] += k * prod[b]
                        out[b, q] += k * prod[b]
                    continue
                w = r[D, par, m]
                a1 = _ravel(l1, N, n)
                b1 = _ravel(m1, N, n)
                a2 = _ravel(l2, N, n)
                b2 = _ravel(m2, N, n)
                for b in range(B):
                    v = k * prod[b]
                    out[b, a1] += w * v
                    out[b, b1] += w * v
                    out[b, a2] += (1.0 - w) * v
                    out[b, b2] += (1.0 - w) * v
    return total, dropped


@njit(cache=True)
def _hat_stencil(pos, N, n, nodes, weights):
    """Multilinear weights of a point given in index units; zero extension outside."""
    cnt = 0
    for c in range(1 << n):
        w = 1.0
        flat = 0
        inside = True
        for a in range(n):
            j0 = int(np.floor(pos[a]))
            fr = pos[a] - j0
            bit = (c >> (n - 1 - a)) & 1
            j = j0 + bit
            if j < 0 or j >= N:
                inside = False
                break
            w *= fr if bit else 1.0 - fr
            flat = flat * N + j
        if inside and w > 0.0:
            nodes[cnt] = flat
            weights[cnt] = w
            cnt += 1
    return cnt


@njit(cache=True)
def interpolated_assemble(N, n, dv, shift, W, Tp):
    """Packed tensor of the pre-collision interpolation scheme.

    ``shift[D, m]`` is the pre-collision kick in velocity units and
    ``W[D, m]`` the event weight (0 for skipped events).
    """
    NV = N**n
    M = W.shape[1]
    ai = np.empty(n, np.int64)
    bi = np.empty(n, np.int64)
    pos1 = np.empty(n)
    pos2 = np.empty(n)
    n1 = np.empty(1 << n, np.int64)
    w1 = np.empty(1 << n)
    n2 = np.empty(1 << n, np.int64)
    w2 = np.empty(1 << n)
    for a in range(NV):
        _unravel(a, N, n, ai)
        for b in range(NV):
            _unravel(b, N, n, bi)
            D = 0
            for c in range(n):
                D = D * (2 * N - 1) + (ai[c] - bi[c] + N - 1)
            for m in range(M):
                wt = W[D, m]
                if wt == 0.0:
                    continue
                for c in range(n):
                    pos1[c] = ai[c] + shift[D, m, c] / dv
                    pos2[c] = bi[c] - shift[D, m, c] / dv
                c1 = _hat_stencil(pos1, N, n, n1, w1)
                c2 = _hat_stencil(pos2, N, n, n2, w2)
                for i in range(c1):
                    for j in range(c2):
                        Tp[packed_index(n1[i], n2[j], NV), a] += wt * w1[i] * w2[j]


@njit(cache=True)
def interpolated_stream(N, n, dv, shift, W, F, G, out):
    NV = N**n
    M = W.shape[1]
    B = F.shape[0]
    ai = np.empty(n, np.int64)
    bi = np.empty(n, np.int64)
    pos1 = np.empty(n)
    pos2 = np.empty(n)
    n1 = np.empty(1 << n, np.int64)
    w1 = np.empty(1 << n)
    n2 = np.empty(1 << n, np.int64)
    w2 = np.empty(1 << n)
    for a in range(NV):
        _unravel(a, N, n, ai)
        for b in range(NV):
            _unravel(b, N, n, bi)
            D = 0
            for c in range(n):
                D = D * (2 * N - 1) + (ai[c] - bi[c] + N - 1)
            for m in range(M):
                wt = W[D, m]
                if wt == 0.0:
                    continue
                for c in range(n):
                    pos1[c] = ai[c] + shift[D, m, c] / dv
                    pos2[c] = bi[c] - shift[D, m, c] / dv
                c1 = _hat_stencil(pos1, N, n, n1, w1)
                c2 = _hat_stencil(pos2, N, n, n2, w2)
                for bb in range(B):
                    f1 = 0.0
                    g1 = 0.0
                    for i in range(c1):
                        f1 += w1[i] * F[bb, n1[i]]
                        g1 += w1[i] * G[bb, n1[i]]
                    f2 = 0.0
                    g2 = 0.0
                    for j in range(c2):
                        f2 += w2[j] * F[bb, n2[j]]
                        g2 += w2[j] * G[bb, n2[j]]
                    out[bb, a] += 0.5 * wt * (f1 * g2 + g1 * f2)


@njit(cache=True, inline="always")
def _gauss_time_integral(a, b, c, T):
    """int_0^T exp(-(a tau^2 + 2 b tau + c)) dtau for a > 0."""
    s = np.sqrt(a)
    lo = b / s
    hi = s * T + b / s
    if lo >= 0.0:
        diff = math.erfc(lo) - math.erfc(hi)
    elif hi <= 0.0:
        diff = math.erfc(-hi) - math.erfc(-lo)
    else:
        diff = math.erf(hi) - math.erf(lo)
    return 0.5 * np.sqrt(np.pi) / s * np.exp(b * b / a - c) * diff


@njit(cache=True)
def envelope_gain_integral(xs, vs, N, n, shift, W, alpha_f, beta_f, T, out):
    """int_0^T Q+^#(f, f) for f^# = exp(-alpha_f |x|^2 - beta_f |xi|^2), exact in time.

    With s the pre-collision kick, the integrand of one event is
    exp(-alpha_f (|x - tau s|^2 + |x + tau (u + s)|^2) - beta_f (|xi + s|^2 + |xi_* - s|^2)).
    """
    NX = xs.shape[0]
    NV = vs.shape[0]
    M = W.shape[1]
    ai = np.empty(n, np.int64)
    bi = np.empty(n, np.int64)
    for a in range(NV):
        _unravel(a, N, n, ai)
        for b in range(NV):
            _unravel(b, N, n, bi)
            D = 0
            for c in range(n):
                D = D * (2 * N - 1) + (ai[c] - bi[c] + N - 1)
            for m in range(M):
                wt = W[D, m]
                if wt == 0.0:
                    continue
                A = 0.0
                vel = 0.0
                for c in range(n):
                    s = shift[D, m, c]
                    u = vs[a, c] - vs[b, c]
                    A += s * s + (u + s) * (u + s)
                    p1 = vs[a, c] + s
                    p2 = vs[b, c] - s
                    vel += p1 * p1 + p2 * p2
                if A == 0.0:
                    continue
                for i in range(NX):
                    B = 0.0
                    x2 = 0.0
                    for c in range(n):
                        u = vs[a, c] - vs[b, c]
                        B += xs[i, c] * u
                        x2 += xs[i, c] * xs[i, c]
                    val = _gauss_time_integral(alpha_f * A, alpha_f * B, 2.0 * alpha_f * x2 + beta_f * vel, T)
                    out[i, a] += wt * val
