"""Connectionist temporal classification: loss, gradient, decoders, oracle.

Probability matrices are ``(T, C)`` arrays whose rows sum to one; the blank
is always the last class (``C - 1``). Labels are sequences of class ids that
never contain the blank.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateRow, InfeasibleLabel, NoValidPath, TooLarge
from .tensor import argmax_rows

ROW_TOL = 1e-9
BRUTEFORCE_LIMIT = 10**7


@dataclass(frozen=True)
class SymbolAlphabet:
    """Ordered plate symbols plus a trailing blank class."""

    symbols: tuple
    blank_name: str = "-"

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("alphabet symbols must be unique")
        if self.blank_name in self.symbols:
            raise ValueError("the blank must not be a plate symbol")

    @property
    def blank_id(self):
        return len(self.symbols)

    @property
    def size(self):
        """Number of network classes, blank included."""
        return len(self.symbols) + 1

    def encode(self, text):
        index = {s: i for i, s in enumerate(self.symbols)}
        return [index[ch] for ch in text]

    def decode(self, ids):
        return "".join(self.symbols[i] for i in ids)


def collapse(path, blank):
    """Merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for c in path:
        c = int(c)
        if c != prev and c != blank:
            out.append(c)
        prev = c
    return out


def min_frames(label):
    """Shortest input length that can emit ``label``: one frame per symbol plus
    one separating blank per adjacent repeat."""
    label = list(label)
    return len(label) + sum(1 for a, b in zip(label, label[1:]) if a == b)


def _check_probs(probs):
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 1 or probs.shape[1] < 2:
        raise DegenerateRow(f"expected a (T, C) matrix with C >= 2, got shape {probs.shape}")
    if np.any(probs < 0) or not np.all(np.isfinite(probs)):
        raise DegenerateRow("probabilities must be finite and non-negative")
    bad = np.abs(probs.sum(axis=1) - 1.0) > ROW_TOL
    if bad.any():
        raise DegenerateRow(f"row {int(np.argmax(bad))} does not sum to 1")
    return probs


def _extended(label, blank):
    ext = np.full(2 * len(label) + 1, blank, dtype=np.int64)
    ext[1::2] = label
    return ext


def _check_label(label, T, blank):
    label = [int(c) for c in label]
    if any(c < 0 or c >= blank for c in label):
        raise ValueError(f"label ids must lie in [0, {blank}), got {label}")
    need = min_frames(label)
    if need > T:
        raise InfeasibleLabel(f"label of length {len(label)} needs {need} frames, only {T} available")
    return label


def ctc_log_likelihood(logp, label):
    """log p(label | logp) together with the alpha/beta tables.

    ``logp`` holds per-frame log-probabilities; used by the training path so
    that softmax and log are fused upstream.
    """
    T, C = logp.shape
    blank = C - 1
    label = _check_label(label, T, blank)
    ext = _extended(label, blank)
    alpha, beta = kernels.ctc_alpha_beta(np.ascontiguousarray(logp), ext, blank)
    tail = alpha[T - 1, -2:] if len(ext) > 1 else alpha[T - 1, -1:]
    m = tail.max()
    if m == -np.inf:
        return -np.inf, alpha, beta, ext
    return m + math.log(np.exp(tail - m).sum()), alpha, beta, ext


def ctc_loss(probs, label):
    """Negative log of the total probability of all paths collapsing to ``label``."""
    probs = _check_probs(probs)
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    ll, *_ = ctc_log_likelihood(logp, label)
    return -ll


def ctc_grad_from_logp(logp, label):
    """Loss and gradient w.r.t. pre-softmax logits given log-softmax outputs."""
    ll, alpha, beta, ext = ctc_log_likelihood(logp, label)
    if not np.isfinite(ll):
        return math.inf, np.full(logp.shape, np.nan)
    T, C = logp.shape
    post = np.exp(alpha + beta - ll)
    occupancy = np.zeros((T, C))
    np.add.at(occupancy.T, ext, post.T)
    return -ll, np.exp(logp) - occupancy


def ctc_gradient(probs, label):
    """Gradient of :func:`ctc_loss` with respect to the logits behind ``probs``.

    Uses the standard alpha-beta occupancy: ``y[t, k] - sum_{s: ext[s]=k} gamma[t, s]``.
    """
    probs = _check_probs(probs)
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    _, grad = ctc_grad_from_logp(logp, label)
    return grad


def path_label_masses(probs, limit=BRUTEFORCE_LIMIT):
    """Enumerate every length-T path; return ``{label_tuple: total probability}``."""
    probs = np.asarray(probs, dtype=np.float64)
    T, C = probs.shape
    if C**T > limit:
        raise TooLarge(f"{C}^{T} paths exceed the enumeration guard of {limit}")
    blank = C - 1
    masses = {}
    for path in itertools.product(range(C), repeat=T):
        p = 1.0
        for t, c in enumerate(path):
            p *= probs[t, c]
        key = tuple(collapse(path, blank))
        masses[key] = masses.get(key, 0.0) + p
    return masses


def ctc_bruteforce(probs, label, limit=BRUTEFORCE_LIMIT):
    """Exhaustive-path oracle for :func:`ctc_loss`."""
    probs = np.asarray(probs, dtype=np.float64)
    T, C = probs.shape
    if C**T > limit:
        raise TooLarge(f"{C}^{T} paths exceed the enumeration guard of {limit}")
    blank = C - 1
    target = [int(c) for c in label]
    total = 0.0
    for path in itertools.product(range(C), repeat=T):
        if collapse(path, blank) == target:
            p = 1.0
            for t, c in enumerate(path):
                p *= probs[t, c]
            total += p
    if total == 0.0:
        raise NoValidPath(f"no path of length {T} collapses to {target}")
    return -math.log(total)


# ----------------------------------------------------------------------------
# decoding
# ----------------------------------------------------------------------------
def greedy_decode(probs):
    """Best-path decoding: per-frame argmax followed by the collapse map."""
    probs = np.asarray(probs)
    return collapse(argmax_rows(probs), probs.shape[1] - 1)


def _logadd(a, b):
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def beam_decode(probs, beam_width=10):
    """Prefix beam search without a language model.

    Each prefix carries its collapsed-path mass split by whether the last frame
    was a blank, plus the score of its single best path. Pruning ranks
    prefixes by that best-path score, so the best path's prefix always
    survives and width 1 reduces to greedy decoding. The surviving prefixes are
    finally rescored with the exact CTC likelihood and the most probable one
    is returned.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    probs = np.asarray(probs, dtype=np.float64)
    T, C = probs.shape
    blank = C - 1
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    neg = -math.inf
    # prefix -> [mass_blank, mass_symbol, best_blank, best_symbol]
    beams = {(): [0.0, neg, 0.0, neg]}
    for t in range(T):
        row = logp[t]
        nxt = {}
        for prefix, (mb, ms, vb, vs) in beams.items():
            total = _logadd(mb, ms)
            vbest = max(vb, vs)
            last = prefix[-1] if prefix else None
            for c in range(C):
                lp = row[c]
                if lp == neg:
                    continue
                if c == blank:
                    e = nxt.setdefault(prefix, [neg, neg, neg, neg])
                    e[0] = _logadd(e[0], total + lp)
                    e[2] = max(e[2], vbest + lp)
                elif c == last:
                    # repeat without a blank stays on the same prefix
                    if ms != neg:
                        e = nxt.setdefault(prefix, [neg, neg, neg, neg])
                        e[1] = _logadd(e[1], ms + lp)
                        e[3] = max(e[3], vs + lp)
                    if mb != neg:
                        ext = nxt.setdefault(prefix + (c,), [neg, neg, neg, neg])
                        ext[1] = _logadd(ext[1], mb + lp)
                        ext[3] = max(ext[3], vb + lp)
                else:
                    ext = nxt.setdefault(prefix + (c,), [neg, neg, neg, neg])
                    ext[1] = _logadd(ext[1], total + lp)
                    ext[3] = max(ext[3], vbest + lp)
        ranked = sorted(nxt.items(), key=lambda kv: (-max(kv[1][2], kv[1][3]), kv[0]))
        beams = dict(ranked[:beam_width])
    best, best_ll = None, neg
    for prefix in beams:
        ll = ctc_log_likelihood(logp, prefix)[0]
        if best is None or ll > best_ll:
            best, best_ll = prefix, ll
    return list(best)


def label_probability(probs, label):
    """exp(-ctc_loss), 0 for infeasible labels."""
    try:
        return math.exp(-ctc_loss(probs, label))
    except InfeasibleLabel:
        return 0.0
