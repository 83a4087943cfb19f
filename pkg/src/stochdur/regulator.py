"""Hard durations: sampling, rounding, scaling and the length regulator."""

from __future__ import annotations

import numpy as np

from .kernel import clamp_probability


def sample_durations(p, rng: np.random.Generator) -> np.ndarray:
    """Draw one duration per token by running its Bernoulli trials in order.

    The duration is the (1-based) index of the first success, or 0 when all
    ``M`` trials fail.
    """
    p = clamp_probability(np.atleast_2d(p))
    hits = rng.random(p.shape) < p
    first = np.argmax(hits, axis=1) + 1
    return np.where(hits.any(axis=1), first, 0).astype(np.int64)


def sample_many(p, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """``n_samples`` independent draws, shape (n_samples, N)."""
    p = clamp_probability(np.atleast_2d(p))
    hits = rng.random((n_samples,) + p.shape) < p
    first = np.argmax(hits, axis=2) + 1
    return np.where(hits.any(axis=2), first, 0).astype(np.int64)


def discretize_durations(expected, max_duration: int | None = None) -> np.ndarray:
    """Round to the nearest frame (ties to even) and clamp to ``[0, max_duration]``."""
    d = np.rint(np.asarray(expected, dtype=np.float64))
    d = np.clip(d, 0, max_duration if max_duration is not None else np.inf)
    return d.astype(np.int64)


def scale_durations(durations, factor: float, max_duration: int | None = None) -> np.ndarray:
    if not factor > 0:
        raise ValueError(f"scaling factor must be positive, got {factor}")
    return discretize_durations(np.asarray(durations, dtype=np.float64) * factor, max_duration)


def _check_durations(d) -> np.ndarray:
    d = np.asarray(d)
    if d.ndim != 1:
        raise ValueError(f"durations must be a vector, got shape {d.shape}")
    if d.size and (np.any(d < 0) or np.any(d != np.round(d))):
        raise ValueError("durations must be non-negative integers")
    return d.astype(np.int64)


def expand(h, d) -> np.ndarray:
    """Repeat row ``i`` of ``h`` ``d[i]`` times, keeping token order."""
    h = np.asarray(h)
    d = _check_durations(d)
    if h.shape[0] != d.size:
        raise ValueError(f"{h.shape[0]} hidden states but {d.size} durations")
    return np.repeat(h, d, axis=0)


def hard_attention(d, n_frames: int) -> np.ndarray:
    """Binary alignment with ones where frame j falls in token i's block.

    Frames past the total duration get all-zero columns; blocks past ``T``
    are cut off.
    """
    d = _check_durations(d)
    ends = np.cumsum(d)
    starts = ends - d
    frames = np.arange(1, n_frames + 1)
    return ((frames[None, :] > starts[:, None]) & (frames[None, :] <= ends[:, None])).astype(np.float64)


def hard_params(d, max_duration: int) -> np.ndarray:
    """Bernoulli parameters that encode the durations ``d`` almost surely.

    Trial ``d[i]`` succeeds and every earlier trial fails; a zero duration
    makes every trial fail. Values sit at the clamp boundaries.
    """
    d = _check_durations(d)
    if np.any(d > max_duration):
        raise ValueError(f"durations exceed the maximum of {max_duration}")
    p = np.zeros((d.size, max_duration))
    for i, di in enumerate(d):
        if di > 0:
            p[i, di - 1] = 1.0
    return clamp_probability(p)
