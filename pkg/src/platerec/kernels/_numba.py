"""numba-compiled versions of the hot kernels (same contracts as ``_numpy``)."""

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True, inline="always")
def _lse2(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def ctc_alpha_beta(logp, ext, blank):
    T = logp.shape[0]
    S = ext.shape[0]
    alpha = np.full((T, S), NEG_INF)
    beta = np.full((T, S), NEG_INF)

    alpha[0, 0] = logp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = logp[0, ext[1]]
    for t in range(1, T):
        for s in range(S):
            acc = alpha[t - 1, s]
            if s >= 1:
                acc = _lse2(acc, alpha[t - 1, s - 1])
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                acc = _lse2(acc, alpha[t - 1, s - 2])
            if acc != NEG_INF:
                alpha[t, s] = acc + logp[t, ext[s]]

    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        for s in range(S):
            acc = beta[t + 1, s] + logp[t + 1, ext[s]]
            if s + 1 < S:
                acc = _lse2(acc, beta[t + 1, s + 1] + logp[t + 1, ext[s + 1]])
            if s + 2 < S and ext[s + 2] != blank and ext[s + 2] != ext[s]:
                acc = _lse2(acc, beta[t + 1, s + 2] + logp[t + 1, ext[s + 2]])
            beta[t, s] = acc
    return alpha, beta


@njit(cache=True)
def im2col3x3(x):
    n, h, w, c = x.shape
    cols = np.zeros((n, h, w, 9 * c), dtype=x.dtype)
    for i in range(n):
        for y in range(h):
            for xx in range(w):
                for dy in range(3):
                    sy = y + dy - 1
                    if sy < 0 or sy >= h:
                        continue
                    for dx in range(3):
                        sx = xx + dx - 1
                        if sx < 0 or sx >= w:
                            continue
                        base = (dy * 3 + dx) * c
                        for k in range(c):
                            cols[i, y, xx, base + k] = x[i, sy, sx, k]
    return cols


@njit(cache=True)
def col2im3x3(cols, c):
    n, h, w, _ = cols.shape
    out = np.zeros((n, h, w, c), dtype=cols.dtype)
    for i in range(n):
        for y in range(h):
            for xx in range(w):
                for dy in range(3):
                    sy = y + dy - 1
                    if sy < 0 or sy >= h:
                        continue
                    for dx in range(3):
                        sx = xx + dx - 1
                        if sx < 0 or sx >= w:
                            continue
                        base = (dy * 3 + dx) * c
                        for k in range(c):
                            out[i, sy, sx, k] += cols[i, y, xx, base + k]
    return out


@njit(cache=True)
def maxpool2_forward(x):
    n, h, w, c = x.shape
    h2 = h // 2
    w2 = w // 2
    out = np.empty((n, h2, w2, c), dtype=x.dtype)
    arg = np.empty((n, h2, w2, c), dtype=np.int8)
    for i in range(n):
        for y in range(h2):
            for xx in range(w2):
                for k in range(c):
                    best = x[i, 2 * y, 2 * xx, k]
                    at = 0
                    for off in range(1, 4):
                        v = x[i, 2 * y + off // 2, 2 * xx + off % 2, k]
                        if v > best:
                            best = v
                            at = off
                    out[i, y, xx, k] = best
                    arg[i, y, xx, k] = at
    return out, arg


@njit(cache=True)
def _maxpool2_backward(grad, arg, dx):
    n, h2, w2, c = grad.shape
    for i in range(n):
        for y in range(h2):
            for xx in range(w2):
                for k in range(c):
                    off = arg[i, y, xx, k]
                    dx[i, 2 * y + off // 2, 2 * xx + off % 2, k] = grad[i, y, xx, k]
    return dx


def maxpool2_backward(grad, arg, in_shape):
    return _maxpool2_backward(grad, arg, np.zeros(in_shape, dtype=grad.dtype))


@njit(cache=True)
def _levenshtein(a, b):
    m = b.shape[0]
    prev = np.arange(m + 1)
    cur = np.empty(m + 1, dtype=prev.dtype)
    for i in range(1, a.shape[0] + 1):
        cur[0] = i
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev, cur = cur, prev
    return prev[m]


def levenshtein(a, b):
    return int(_levenshtein(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)))
