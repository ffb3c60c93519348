"""Pure-numpy reference versions of the hot kernels.

Every function here has a twin with the same signature in ``_numba``; the
dispatcher in ``platerec.kernels`` picks one at import time.
"""

import numpy as np

NEG_INF = -np.inf


def _lse(*terms):
    stacked = np.stack(terms)
    m = stacked.max(axis=0)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = safe + np.log(np.exp(stacked - safe).sum(axis=0))
    return np.where(np.isfinite(m), out, NEG_INF)


def _skip_mask(ext, blank):
    # s may be reached from s-2 when it is a symbol differing from ext[s-2]
    S = ext.shape[0]
    mask = np.zeros(S, dtype=bool)
    if S > 2:
        mask[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    return mask


def ctc_alpha_beta(logp, ext, blank):
    """Log-space forward and backward variables over a blank-extended label.

    ``alpha[t, s]`` includes the emission at ``t``; ``beta[t, s]`` covers
    frames ``t+1..T-1`` only, so ``alpha + beta`` is the log joint of being in
    state ``s`` at ``t`` and emitting the full label.
    """
    T = logp.shape[0]
    S = ext.shape[0]
    alpha = np.full((T, S), NEG_INF)
    beta = np.full((T, S), NEG_INF)
    emit = logp[:, ext]
    skip = _skip_mask(ext, blank)

    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        one = np.full(S, NEG_INF)
        one[1:] = prev[:-1]
        two = np.full(S, NEG_INF)
        two[2:] = prev[:-2]
        two[~skip] = NEG_INF
        alpha[t] = _lse(prev, one, two) + emit[t]

    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        one = np.full(S, NEG_INF)
        one[:-1] = nxt[1:]
        two = np.full(S, NEG_INF)
        two[:-2] = np.where(skip[2:], nxt[2:], NEG_INF)
        beta[t] = _lse(nxt, one, two)
    return alpha, beta


def im2col3x3(x):
    """(N, H, W, C) -> (N, H, W, 9*C) patches of the zero-padded input.

    Patch layout is (dy, dx, c) row-major, matching a (3, 3, C, Cout) kernel
    reshaped to (9*C, Cout).
    """
    n, h, w, c = x.shape
    xp = np.zeros((n, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1:-1, 1:-1, :] = x
    cols = np.empty((n, h, w, 9, c), dtype=x.dtype)
    for dy in range(3):
        for dx in range(3):
            cols[:, :, :, dy * 3 + dx, :] = xp[:, dy : dy + h, dx : dx + w, :]
    return cols.reshape(n, h, w, 9 * c)


def col2im3x3(cols, c):
    """Adjoint of :func:`im2col3x3`: scatter-add patches back to the input grid."""
    n, h, w, _ = cols.shape
    cols = cols.reshape(n, h, w, 9, c)
    xp = np.zeros((n, h + 2, w + 2, c), dtype=cols.dtype)
    for dy in range(3):
        for dx in range(3):
            xp[:, dy : dy + h, dx : dx + w, :] += cols[:, :, :, dy * 3 + dx, :]
    return xp[:, 1:-1, 1:-1, :]


def maxpool2_forward(x):
    """2x2/stride-2 max pool with floor semantics.

    Returns the pooled array and, per output cell, the winning offset within
    its window (0..3, row-major, first maximum on ties).
    """
    n, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    win = x[:, : 2 * h2, : 2 * w2, :].reshape(n, h2, 2, w2, 2, c)
    win = win.transpose(0, 1, 3, 5, 2, 4).reshape(n, h2, w2, c, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg.astype(np.int8)


def maxpool2_backward(grad, arg, in_shape):
    n, h, w, c = in_shape
    h2, w2 = grad.shape[1], grad.shape[2]
    win = np.zeros((n, h2, w2, c, 4), dtype=grad.dtype)
    np.put_along_axis(win, arg[..., None].astype(np.intp), grad[..., None], axis=-1)
    win = win.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    dx = np.zeros(in_shape, dtype=grad.dtype)
    dx[:, : 2 * h2, : 2 * w2, :] = win.reshape(n, 2 * h2, 2 * w2, c)
    return dx


def levenshtein(a, b):
    """Edit distance between two integer sequences (unit costs)."""
    a = np.asarray(a)
    b = np.asarray(b)
    prev = np.arange(len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = np.empty_like(prev)
        cur[0] = i
        sub = prev[:-1] + (b != a[i - 1])
        dele = prev[1:] + 1
        best = np.minimum(sub, dele)
        # insertions chain left to right
        for j in range(1, len(b) + 1):
            cur[j] = min(best[j - 1], cur[j - 1] + 1)
        prev = cur
    return int(prev[-1])
