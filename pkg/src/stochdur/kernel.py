"""Forward computations of the stochastic duration model.

Every token ``i`` owns ``M`` Bernoulli parameters ``p[i, :]``. Its duration is
the index of the first successful trial (1-based), or zero when all ``M``
trials fail. From these per-token distributions we build

* ``l`` (N x (M+1)): the length probability, ``l[i, m] = P(w_i = m)``;
* ``q`` (N x (T+2)): the distribution of ``w_1 + ... + w_i`` over
  ``0..T`` plus a final overflow cell holding ``P(sum > T)``;
* ``s`` (N x T): the soft alignment, ``s[i, j-1] = P(frame j belongs to i)``.

Matrices are plain ``numpy.ndarray`` objects; the shape conventions above
are the contract. Everything is computed in float64, except that
``np.longdouble`` inputs stay in extended precision (the finite-difference
checks rely on this).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

EPS = 1e-7


def _float_array(x) -> np.ndarray:
    # float64 unless the caller explicitly works in extended precision
    x = np.asarray(x)
    return x.astype(np.longdouble if x.dtype == np.longdouble else np.float64, copy=False)


def _as_matrix(x, name: str) -> np.ndarray:
    x = _float_array(x)
    if x.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {x.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and column, got shape {x.shape}")
    return x


def clamp_probability(p) -> np.ndarray:
    return np.clip(_float_array(p), EPS, 1.0 - EPS)


def apply_noisy_sigmoid(logits, noise_std: float = 0.0, rng: np.random.Generator | None = None) -> np.ndarray:
    """Map logits to Bernoulli parameters, optionally perturbing them first.

    ``p = clamp(sigmoid(logits + noise_std * g))`` with ``g`` standard normal.
    Noise is drawn only when ``noise_std > 0``, so the noiseless map never
    touches ``rng``.
    """
    z = _as_matrix(logits, "logits")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits contain non-finite values")
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    if noise_std > 0:
        if rng is None:
            raise ValueError("a random generator is required when noise_std > 0")
        z = z + noise_std * rng.standard_normal(z.shape)
    return clamp_probability(expit(z))


def length_probability(p) -> np.ndarray:
    """Per-token duration distribution.

    Args:
        p: Bernoulli parameters of shape (N, M), clamped to (EPS, 1 - EPS).

    Returns:
        Array of shape (N, M+1). Column 0 is the probability that every trial
        fails (zero duration); column ``m`` is ``p[:, m-1]`` times the
        probability that the ``m - 1`` earlier trials failed. The running
        product of failure probabilities is accumulated as a sum of
        ``log1p(-p)`` terms.
    """
    p = clamp_probability(_as_matrix(p, "p"))
    log_fail = np.cumsum(np.log1p(-p), axis=1)
    # failures strictly before trial m, for m = 1..M
    before = np.concatenate([np.zeros((p.shape[0], 1), dtype=p.dtype), log_fail[:, :-1]], axis=1)
    l = np.empty((p.shape[0], p.shape[1] + 1), dtype=p.dtype)
    l[:, 0] = np.exp(log_fail[:, -1])
    l[:, 1:] = p * np.exp(before)
    return l


def survival(l) -> np.ndarray:
    """Reverse cumulative sum per row: ``out[i, k] = sum_{t >= k} l[i, t]``."""
    l = _float_array(l)
    return np.cumsum(l[:, ::-1], axis=1)[:, ::-1]


def _start_distribution(n_frames: int, dtype=np.float64) -> np.ndarray:
    # total duration of zero tokens is 0 with certainty
    q0 = np.zeros(n_frames + 2, dtype=dtype)
    q0[0] = 1.0
    return q0


def _convolve_step(q_prev: np.ndarray, l_row: np.ndarray, n_frames: int) -> np.ndarray:
    full = np.convolve(q_prev[: n_frames + 1], l_row)
    out = np.zeros(n_frames + 2, dtype=full.dtype)
    head = min(full.size, n_frames + 1)
    out[:head] = full[:head]
    out[-1] = q_prev[-1] + full[n_frames + 1 :].sum()
    return out


def cumulative_duration(l, n_frames: int) -> np.ndarray:
    """Distribution of the running total duration.

    Row ``i`` is the distribution of ``w_1 + ... + w_{i+1}`` over ``0..T``
    followed by the overflow mass ``P(total > T)``. Each row is the direct
    (non-FFT) convolution of the previous row with the next token's length
    probability; mass that crosses ``T`` is moved to the overflow cell and
    stays there since durations are non-negative.
    """
    l = _as_matrix(l, "l")
    if int(n_frames) != n_frames or n_frames < 1:
        raise ValueError(f"frame count T must be a positive integer, got {n_frames}")
    n_frames = int(n_frames)
    q = np.empty((l.shape[0], n_frames + 2), dtype=l.dtype)
    prev = _start_distribution(n_frames, l.dtype)
    for i in range(l.shape[0]):
        prev = q[i] = _convolve_step(prev, l[i], n_frames)
    return q


def _attention_row(q_prev: np.ndarray, surv_row: np.ndarray, n_frames: int) -> np.ndarray:
    # s[j-1] = sum_{m < j} q_prev[m] * P(w >= j - m)
    return np.convolve(q_prev[:n_frames], surv_row[1:])[:n_frames]


def attention_probability(l, q) -> np.ndarray:
    """Soft monotonic alignment between tokens and frames.

    Frame ``j`` (1-based) belongs to token ``i`` when the first ``i - 1``
    tokens end before ``j`` and token ``i`` lasts long enough to reach it.
    For the first token this reduces to ``P(w_1 >= j)``.

    Args:
        l: Length probability, shape (N, M+1).
        q: Cumulative duration distribution built from ``l``, shape (N, T+2).

    Returns:
        Array of shape (N, T).
    """
    l = _as_matrix(l, "l")
    q = _as_matrix(q, "q")
    if q.shape[0] != l.shape[0]:
        raise ValueError(f"l has {l.shape[0]} rows but q has {q.shape[0]}")
    if q.shape[1] < 3:
        raise ValueError(f"q must have at least 3 columns (T >= 1), got {q.shape[1]}")
    n_frames = q.shape[1] - 2
    surv = survival(l)
    s = np.empty((l.shape[0], n_frames), dtype=np.result_type(l, q))
    prev = _start_distribution(n_frames, q.dtype)
    for i in range(l.shape[0]):
        row = _attention_row(prev, surv[i], n_frames)
        s[i] = 0.0
        s[i, : row.size] = row
        prev = q[i]
    return s


def expected_durations(l) -> np.ndarray:
    l = _as_matrix(l, "l")
    return l[:, 1:] @ np.arange(1, l.shape[1], dtype=l.dtype)


def expected_upsample(s, h) -> np.ndarray:
    """Expected output frames ``y[j] = sum_i s[i, j] * h[i]``, shape (T, D)."""
    s = _as_matrix(s, "s")
    h = _as_matrix(h, "h")
    if s.shape[0] != h.shape[0]:
        raise ValueError(f"attention has {s.shape[0]} tokens but hidden sequence has {h.shape[0]}")
    return s.T @ h


@dataclass(frozen=True)
class Alignment:
    """All intermediates of one forward pass.

    ``unclamped`` marks the entries of ``p`` whose sigmoid output fell
    strictly inside (EPS, 1 - EPS); the backward pass uses it to zero the
    gradient of clamped entries.
    """

    logits: np.ndarray
    noise: np.ndarray
    p: np.ndarray
    unclamped: np.ndarray
    l: np.ndarray
    q: np.ndarray
    s: np.ndarray
    h: np.ndarray
    y: np.ndarray
    expected: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.s.shape[1]


def align(logits, h, n_frames: int, noise_std: float = 0.0, rng: np.random.Generator | None = None) -> Alignment:
    """Run the full forward pass from logits to expected upsampled output.

    The returned record doubles as the gradient tape for
    :func:`stochdur.grad.backward_align`.
    """
    z = _as_matrix(logits, "logits")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits contain non-finite values")
    h = _as_matrix(h, "h")
    if h.shape[0] != z.shape[0]:
        raise ValueError(f"logits have {z.shape[0]} tokens but hidden sequence has {h.shape[0]}")
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    if noise_std > 0:
        if rng is None:
            raise ValueError("a random generator is required when noise_std > 0")
        noise = noise_std * rng.standard_normal(z.shape)
    else:
        noise = np.zeros_like(z)
    raw = expit(z + noise)
    p = clamp_probability(raw)
    l = length_probability(p)
    q = cumulative_duration(l, n_frames)
    s = attention_probability(l, q)
    return Alignment(
        logits=z,
        noise=noise,
        p=p,
        unclamped=(raw > EPS) & (raw < 1.0 - EPS),
        l=l,
        q=q,
        s=s,
        h=h,
        y=expected_upsample(s, h),
        expected=expected_durations(l),
    )
