"""Brute-force reference values by exhaustive enumeration.

Nothing in here shares code with :mod:`stochdur.kernel`. The length
probability is rebuilt by enumerating every sequence of Bernoulli trial
outcomes, and everything downstream by enumerating every joint duration
assignment ``(w_1, ..., w_N)``. Use it on small instances only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

MAX_OUTCOMES = 10**7


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class JointOutcome:
    durations: tuple[int, ...]
    probability: float


def _guard(count: int, what: str) -> None:
    if count > MAX_OUTCOMES:
        raise InstanceTooLarge(f"{what}: {count} outcomes exceeds the enumeration bound of {MAX_OUTCOMES}")


def oracle_length_probability(p) -> np.ndarray:
    """Duration distribution from all 2**M trial outcome sequences per token."""
    p = np.asarray(p, dtype=np.float64)
    n_tokens, n_trials = p.shape
    _guard(n_tokens * 2**n_trials, f"length probability with M={n_trials}")
    l = np.zeros((n_tokens, n_trials + 1))
    for i in range(n_tokens):
        for trials in itertools.product((0, 1), repeat=n_trials):
            prob = 1.0
            for k, hit in enumerate(trials):
                prob *= float(p[i, k]) if hit else 1.0 - float(p[i, k])
            duration = trials.index(1) + 1 if 1 in trials else 0
            l[i, duration] += prob
    return l


def enumerate_outcomes(l) -> Iterator[JointOutcome]:
    """Yield every joint duration assignment with its probability.

    Raises:
        InstanceTooLarge: if ``(M+1)**N`` exceeds ``MAX_OUTCOMES``.
    """
    l = np.asarray(l, dtype=np.float64)
    n_tokens, width = l.shape
    _guard(width**n_tokens, f"N={n_tokens}, M={width - 1}")
    for durations in itertools.product(range(width), repeat=n_tokens):
        prob = 1.0
        for i, d in enumerate(durations):
            prob *= float(l[i, d])
        yield JointOutcome(durations, prob)


def oracle_q(l, n_frames: int) -> np.ndarray:
    """Prefix-total distribution, shape (N, T+2) with the overflow cell last."""
    n_tokens = np.shape(l)[0]
    q = np.zeros((n_tokens, n_frames + 2))
    for outcome in enumerate_outcomes(l):
        total = 0
        for i, d in enumerate(outcome.durations):
            total += d
            q[i, min(total, n_frames + 1)] += outcome.probability
    return q


def oracle_s(l, n_frames: int) -> np.ndarray:
    """Probability that frame j (1-based) falls inside token i's block."""
    n_tokens = np.shape(l)[0]
    s = np.zeros((n_tokens, n_frames))
    for outcome in enumerate_outcomes(l):
        start = 0
        for i, d in enumerate(outcome.durations):
            for j in range(start + 1, min(start + d, n_frames) + 1):
                s[i, j - 1] += outcome.probability
            start += d
    return s


def oracle_expected(l) -> np.ndarray:
    n_tokens = np.shape(l)[0]
    expected = np.zeros(n_tokens)
    for outcome in enumerate_outcomes(l):
        for i, d in enumerate(outcome.durations):
            expected[i] += d * outcome.probability
    return expected


def oracle_coverage(l, n_frames: int) -> np.ndarray:
    """``P(w_1 + ... + w_N >= j)`` for ``j = 1..T``."""
    cover = np.zeros(n_frames)
    for outcome in enumerate_outcomes(l):
        total = sum(outcome.durations)
        cover[: min(total, n_frames)] += outcome.probability
    return cover
