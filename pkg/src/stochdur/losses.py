"""Training objectives as pure functions of already-computed values.

None of these functions sees the networks that produced its inputs. That is
how the duration loss implements its stop-gradient: it takes plain arrays, so
there is no path back to the encoder or the aligner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class LossWeights:
    lambda_length: float = 1.0
    lambda_duration: float = 1.0
    lambda_recon: float = 1.0
    lambda_mel: float = 45.0

    def __post_init__(self):
        for name in ("lambda_length", "lambda_duration", "lambda_recon", "lambda_mel"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")


@dataclass
class DiscriminatorOutputs:
    """Scores and per-layer feature maps of one discriminator pass."""

    scores: np.ndarray
    feature_maps: Sequence[np.ndarray] = field(default_factory=list)


def _vector(x, name: str) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def length_loss(expected_durations, total_frames: float) -> float:
    """``|total_frames - sum(expected_durations)| / N``.

    Extended-precision input gives an extended-precision result.
    """
    e = np.asarray(expected_durations)
    if e.dtype != np.longdouble:
        e = _vector(e, "expected durations")
    if e.ndim != 1 or e.size == 0:
        raise ValueError("expected durations must be a non-empty vector")
    if total_frames < 0:
        raise ValueError(f"total frame count must be >= 0, got {total_frames}")
    return abs(total_frames - e.sum()) / e.size


def duration_loss(predicted, expected) -> float:
    """Mean absolute error between predicted and aligner durations.

    Both arguments are treated as constants with respect to everything
    upstream; only the predictor's own parameters should be trained on this
    value (see :func:`stochdur.grad.backward_duration_loss`).
    """
    a = _vector(predicted, "predicted durations")
    b = _vector(expected, "expected durations")
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} predictions vs {b.size} targets")
    return float(np.mean(np.abs(a - b)))


def lsgan_discriminator_loss(real_scores, fake_scores) -> float:
    real = _vector(real_scores, "real scores")
    fake = _vector(fake_scores, "fake scores")
    return float(np.mean((real - 1.0) ** 2) + np.mean(fake**2))


def lsgan_generator_loss(fake_scores) -> float:
    fake = _vector(fake_scores, "fake scores")
    return float(np.mean((fake - 1.0) ** 2))


def feature_matching_loss(fake: DiscriminatorOutputs, real: DiscriminatorOutputs, reduction: str = "sum") -> float:
    """L1 distance between discriminator feature maps, summed over layers.

    ``reduction="sum"`` sums absolute differences over all entries of a layer;
    ``"mean"`` averages them per layer instead, which keeps wide layers from
    dominating.
    """
    if reduction not in ("sum", "mean"):
        raise ValueError(f"unknown reduction {reduction!r}")
    if not fake.feature_maps:
        raise ValueError("feature matching needs at least one feature map")
    if len(fake.feature_maps) != len(real.feature_maps):
        raise ValueError(f"layer count mismatch: {len(fake.feature_maps)} vs {len(real.feature_maps)}")
    total = 0.0
    for t, (a, b) in enumerate(zip(fake.feature_maps, real.feature_maps)):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if a.shape != b.shape:
            raise ValueError(f"layer {t}: shape mismatch {a.shape} vs {b.shape}")
        diff = np.abs(a - b)
        total += float(diff.sum() if reduction == "sum" else diff.mean())
    return total


def spectral_l1(fake_mel, real_mel) -> float:
    a = np.asarray(fake_mel, dtype=np.float64)
    b = np.asarray(real_mel, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"log-mel shape mismatch: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("log-mel matrices contain non-finite values")
    return float(np.abs(a - b).sum())


def reconstruction_loss(
    fake: DiscriminatorOutputs,
    real: DiscriminatorOutputs,
    fake_mel,
    real_mel,
    weights: LossWeights = LossWeights(),
    reduction: str = "sum",
) -> float:
    """Feature matching plus the mel-weighted spectral L1 term."""
    return feature_matching_loss(fake, real, reduction) + weights.lambda_mel * spectral_l1(fake_mel, real_mel)


def total_generator_loss(adv_g: float, length_l: float, duration_l: float, recon_l: float, weights: LossWeights = LossWeights()) -> float:
    return (
        adv_g
        + weights.lambda_length * length_l
        + weights.lambda_duration * duration_l
        + weights.lambda_recon * recon_l
    )
