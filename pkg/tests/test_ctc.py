import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import numeric_grad, rel_error
from platerec.ctc import (
    SymbolAlphabet,
    beam_decode,
    collapse,
    ctc_bruteforce,
    ctc_gradient,
    ctc_loss,
    greedy_decode,
    label_probability,
    min_frames,
    path_label_masses,
)
from platerec.errors import DegenerateRow, InfeasibleLabel, NoValidPath, TooLarge
from platerec.layers import softmax

A, BLANK = 0, 1  # two-class alphabet {a, blank}


def random_probs(rng, T, C, concentration=1.0):
    return rng.dirichlet(np.full(C, concentration), size=T)


def random_feasible(rng, max_T=6, max_C=4, max_L=3):
    while True:
        T = int(rng.integers(1, max_T + 1))
        C = int(rng.integers(2, max_C + 1))
        L = int(rng.integers(0, max_L + 1))
        label = [int(c) for c in rng.integers(0, C - 1, size=L)]
        if min_frames(label) <= T:
            return random_probs(rng, T, C), label


# -- alphabet / collapse ------------------------------------------------------
def test_alphabet_blank_is_last():
    alpha = SymbolAlphabet("ab")
    assert alpha.blank_id == 2 and alpha.size == 3
    assert alpha.decode(alpha.encode("ba")) == "ba"
    with pytest.raises(ValueError):
        SymbolAlphabet("a-")
    with pytest.raises(ValueError):
        SymbolAlphabet("aa")


def test_collapse_examples():
    a, b, blank = 0, 1, 2
    assert collapse([blank], blank) == []
    assert collapse([a, a, blank, b], blank) == [a, b]
    assert collapse([a, blank, a], blank) == [a, a]


@given(st.lists(st.integers(0, 3), max_size=12))
def test_collapse_idempotent_on_clean_sequences(seq):
    blank = 4
    clean = collapse(seq, blank)  # blank-free, no adjacent repeats
    assert collapse(clean, blank) == clean


# -- loss -------------------------------------------------------------------
def test_loss_single_frame():
    assert abs(ctc_loss([[0.7, 0.3]], [A]) - (-math.log(0.7))) <= 1e-12
    assert abs(ctc_loss([[0.7, 0.3]], [A]) - 0.356675) <= 1e-6


def test_loss_two_uniform_frames():
    # admissible paths: aa, a-, -a
    loss = ctc_loss([[0.5, 0.5], [0.5, 0.5]], [A])
    assert abs(loss - (-math.log(0.75))) <= 1e-12
    assert abs(loss - 0.287682) <= 1e-6


def test_loss_empty_label():
    assert abs(ctc_loss([[0.6, 0.4]], []) - (-math.log(0.4))) <= 1e-12


def test_loss_matches_bruteforce(rng):
    for _ in range(200):
        probs, label = random_feasible(rng)
        assert abs(ctc_loss(probs, label) - ctc_bruteforce(probs, label)) <= 1e-9


def test_loss_infeasible():
    with pytest.raises(InfeasibleLabel):
        ctc_loss([[0.5, 0.5]] * 2, [A, A])  # repeat needs a separating blank


def test_loss_rejects_non_stochastic_rows():
    with pytest.raises(DegenerateRow):
        ctc_loss([[0.5, 0.6]], [A])


def test_loss_long_sequence_no_underflow(rng):
    probs = random_probs(rng, 50, 38)
    label = [int(c) for c in rng.integers(0, 37, size=8)]
    loss = ctc_loss(probs, label)
    assert math.isfinite(loss) and loss > 0


def test_total_probability_conservation(rng):
    for _ in range(10):
        T, C = 4, 3
        probs = random_probs(rng, T, C)
        total = 0.0
        for L in range(T + 1):
            for label in itertools.product(range(C - 1), repeat=L):
                total += label_probability(probs, label)
        assert abs(total - 1.0) <= 1e-9


# -- oracle -----------------------------------------------------------------
def test_bruteforce_examples():
    assert abs(ctc_bruteforce([[0.7, 0.3]], [A]) - (-math.log(0.7))) <= 1e-12
    assert abs(ctc_bruteforce([[0.5, 0.5]] * 2, [A]) - (-math.log(0.75))) <= 1e-12
    assert abs(ctc_bruteforce([[0.6, 0.4]], []) - (-math.log(0.4))) <= 1e-12


def test_bruteforce_no_valid_path():
    with pytest.raises(NoValidPath):
        ctc_bruteforce([[0.5, 0.5]], [A, A])


def test_bruteforce_guard():
    with pytest.raises(TooLarge):
        ctc_bruteforce(np.full((20, 4), 0.25), [0])


# -- gradient ---------------------------------------------------------------
def test_gradient_matches_finite_differences(rng):
    T, C = 8, 5
    logits = rng.normal(size=(T, C))
    label = [0, 2, 2, 1]
    analytic = ctc_gradient(softmax(logits), label)
    numeric = numeric_grad(lambda: ctc_loss(softmax(logits), label), logits)
    assert rel_error(analytic, numeric) <= 1e-5


def test_gradient_rows_sum_to_zero(rng):
    probs = random_probs(rng, 8, 5)
    g = ctc_gradient(probs, [1, 3])
    assert np.max(np.abs(g.sum(axis=1))) <= 1e-10


def test_gradient_single_path():
    p = 0.7
    g = ctc_gradient([[p, 1 - p]], [A])
    assert abs(g[0, A] - (-(1 - p))) <= 1e-12
    assert abs(g[0, BLANK] - (1 - p)) <= 1e-12


# -- decoders ---------------------------------------------------------------
def test_greedy_examples():
    assert greedy_decode(np.array([[0.9, 0.1], [0.8, 0.2]])) == [A]
    assert greedy_decode(np.array([[0.1, 0.9], [0.3, 0.7]])) == []


def test_beam_width_one_is_greedy(rng):
    for _ in range(1000):
        T = int(rng.integers(1, 12))
        C = int(rng.integers(2, 7))
        probs = random_probs(rng, T, C, 0.5)
        assert beam_decode(probs, 1) == greedy_decode(probs)


def test_exhaustive_beam_finds_best_label(rng):
    for _ in range(200):
        T = int(rng.integers(1, 6))
        C = int(rng.integers(2, 4))
        probs = random_probs(rng, T, C)
        masses = path_label_masses(probs)
        best = max(masses.values())
        got = tuple(beam_decode(probs, C**T))
        assert masses[got] == pytest.approx(best, rel=1e-12)


def test_wider_beam_never_worse(rng):
    for _ in range(200):
        T = int(rng.integers(2, 9))
        C = int(rng.integers(2, 6))
        probs = random_probs(rng, T, C, 0.7)
        prev = 0.0
        for width in range(1, 9):
            q = label_probability(probs, beam_decode(probs, width))
            assert q >= prev - 1e-12
            prev = q


def test_beam_rejects_zero_width():
    with pytest.raises(ValueError):
        beam_decode(np.array([[0.5, 0.5]]), 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_greedy_invariant_under_monotone_row_transform(seed):
    r = np.random.default_rng(seed)
    probs = random_probs(r, 7, 4)
    transformed = np.log(probs) * 3.0 + 2.0  # strictly increasing per entry
    assert greedy_decode(transformed) == greedy_decode(probs)
    assert greedy_decode(np.sqrt(probs)) == greedy_decode(probs)
