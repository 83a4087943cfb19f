"""Toy alignment learning on synthetic sequences.

A task is a handful of random token embeddings ``h`` together with ground-truth
durations ``d*``; the target is the hard expansion of ``h`` by ``d*``. Only the
duration logits are trained, with

    loss = lambda_length * length_loss + sum((y - y*)**2)

where ``y`` is the expected upsampled output. Nothing tells the model where
the token boundaries are, so recovering ``d*`` means it has found the
alignment by itself.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logit

from . import grad, kernel, losses, regulator


LOGIT_LIMIT = 20.0


@dataclass(frozen=True)
class SyntheticTask:
    h: np.ndarray
    durations: np.ndarray
    target: np.ndarray
    max_duration: int

    @property
    def n_frames(self) -> int:
        return int(self.target.shape[0])

    @property
    def total_duration(self) -> int:
        return int(self.durations.sum())


def make_task(
    n_tokens: int,
    max_duration: int,
    embed_dim: int,
    seed: int,
    target_noise: float = 0.0,
    n_frames: int | None = None,
) -> SyntheticTask:
    """Random task: durations uniform in ``1..max_duration``, standard normal embeddings.

    With ``n_frames`` larger than the total duration the target is padded
    with all-zero frames.
    """
    if n_tokens < 1 or max_duration < 1 or embed_dim < 1:
        raise ValueError("n_tokens, max_duration and embed_dim must all be >= 1")
    rng = np.random.default_rng(seed)
    durations = rng.integers(1, max_duration + 1, size=n_tokens)
    h = rng.standard_normal((n_tokens, embed_dim))
    target = regulator.expand(h, durations)
    if n_frames is not None:
        if n_frames < target.shape[0]:
            raise ValueError(f"n_frames={n_frames} is shorter than the total duration {target.shape[0]}")
        target = np.vstack([target, np.zeros((n_frames - target.shape[0], embed_dim))])
    if target_noise > 0:
        target = target + target_noise * rng.standard_normal(target.shape)
    return SyntheticTask(h, durations, target, max_duration)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    learning_rate: float = 2e-2
    optimizer: str = "adamw"
    beta1: float = 0.8
    beta2: float = 0.99
    adam_eps: float = 1e-8
    weight_decay: float = 0.1
    noise_std: float = 1.0
    # noise decays linearly to zero over this fraction of the steps
    noise_decay_fraction: float = 0.8
    # "uniform" starts every token with equal mass on durations 1..M;
    # "constant" fills all logits with ``init_logit``
    init: str = "uniform"
    init_logit: float = 0.0
    # noise draws averaged per step
    noise_samples: int = 1
    seed: int = 0
    weights: losses.LossWeights = field(default_factory=losses.LossWeights)

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 0:
            raise ValueError(f"steps must be a non-negative integer, got {self.steps}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in ("sgd", "adamw"):
            raise ValueError(f"optimizer must be 'sgd' or 'adamw', got {self.optimizer!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.noise_std < 0 or self.weight_decay < 0:
            raise ValueError("noise_std and weight_decay must be >= 0")
        if self.init not in ("uniform", "constant"):
            raise ValueError(f"init must be 'uniform' or 'constant', got {self.init!r}")
        if int(self.noise_samples) != self.noise_samples or self.noise_samples < 1:
            raise ValueError(f"noise_samples must be a positive integer, got {self.noise_samples}")
        if not 0 <= self.noise_decay_fraction <= 1:
            raise ValueError("noise_decay_fraction must lie in [0, 1]")

    def noise_at(self, step: int) -> float:
        if self.noise_decay_fraction == 0:
            return self.noise_std
        horizon = self.noise_decay_fraction * self.steps
        return self.noise_std * max(0.0, 1.0 - step / horizon)


@dataclass
class TrainReport:
    loss: list[float]
    length_loss: list[float]
    recon_loss: list[float]
    discreteness: list[float]
    initial_loss: float
    final_logits: np.ndarray
    final_expected: np.ndarray
    duration_mae: float
    hard_match_rate: float
    final_discreteness: float
    diverged: bool = False
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["final_logits"] = self.final_logits.tolist()
        out["final_expected"] = self.final_expected.tolist()
        return out


def initial_logits(n_tokens: int, max_duration: int, config: TrainConfig) -> np.ndarray:
    """Starting logits for ``n_tokens`` tokens with ``max_duration`` trials each."""
    if config.init == "constant":
        return np.full((n_tokens, max_duration), float(config.init_logit))
    # hazard 1 / (M - m + 1) at trial m leaves every duration in 1..M equally likely
    hazard = 1.0 / (max_duration - np.arange(max_duration))
    row = np.clip(logit(hazard), -LOGIT_LIMIT, LOGIT_LIMIT)
    return np.tile(row, (n_tokens, 1))


def discreteness(l) -> float:
    """Mean over tokens of ``1 - max_m l[i, m]``; zero for point masses."""
    return float(np.mean(1.0 - np.max(l, axis=1)))


def evaluate_alignment(logits, task: SyntheticTask) -> tuple[float, float, float]:
    """Noiseless ``(duration_mae, discreteness, hard_match_rate)`` of ``logits`` on ``task``.

    The MAE compares the rounded expected durations with the true ones.
    """
    l = kernel.length_probability(kernel.apply_noisy_sigmoid(logits))
    hard = regulator.discretize_durations(kernel.expected_durations(l), task.max_duration)
    mae = float(np.mean(np.abs(hard - task.durations)))
    return mae, discreteness(l), float(np.mean(hard == task.durations))


def _objective(tape: kernel.Alignment, task: SyntheticTask, weights: losses.LossWeights):
    residual = tape.y - task.target
    recon = float(np.sum(residual**2))
    length = losses.length_loss(tape.expected, task.total_duration)
    total = weights.lambda_length * length + recon
    d_y = 2.0 * residual
    d_e = weights.lambda_length * grad.backward_length_loss(tape.expected, task.total_duration)
    return total, length, recon, d_y, d_e


def train(task: SyntheticTask, config: TrainConfig = TrainConfig()) -> TrainReport:
    """Fit duration logits to ``task`` by first-order descent.

    A fresh noise sample perturbs the logits at every step. Training stops
    early and flags the report if the loss stops being finite.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    logits = initial_logits(task.h.shape[0], task.max_duration, config)
    m = np.zeros_like(logits)
    v = np.zeros_like(logits)
    history = {"loss": [], "length_loss": [], "recon_loss": [], "discreteness": []}

    initial_tape = kernel.align(logits, task.h, task.n_frames)
    initial_loss = _objective(initial_tape, task, config.weights)[0]
    diverged = False
    for step in range(config.steps):
        sums = np.zeros(4)
        g = np.zeros_like(logits)
        for _ in range(config.noise_samples):
            tape = kernel.align(logits, task.h, task.n_frames, config.noise_at(step), rng)
            total, length, recon, d_y, d_e = _objective(tape, task, config.weights)
            sums += (total, length, recon, discreteness(tape.l))
            g += grad.backward_align(tape, d_y, d_e)[0]
        sums /= config.noise_samples
        g /= config.noise_samples
        if not math.isfinite(sums[0]):
            diverged = True
            break
        for key, value in zip(history, sums):
            history[key].append(float(value))

        if config.optimizer == "sgd":
            logits -= config.learning_rate * g
        else:
            m = config.beta1 * m + (1 - config.beta1) * g
            v = config.beta2 * v + (1 - config.beta2) * g**2
            m_hat = m / (1 - config.beta1 ** (step + 1))
            v_hat = v / (1 - config.beta2 ** (step + 1))
            logits -= config.learning_rate * (m_hat / (np.sqrt(v_hat) + config.adam_eps) + config.weight_decay * logits)
        if not np.all(np.isfinite(logits)):
            diverged = True
            break

    if diverged:
        mae, disc, match = math.nan, math.nan, math.nan
        expected = np.full(logits.shape[0], math.nan)
    else:
        mae, disc, match = evaluate_alignment(logits, task)
        expected = kernel.expected_durations(kernel.length_probability(kernel.apply_noisy_sigmoid(logits)))
    return TrainReport(
        loss=history["loss"],
        length_loss=history["length_loss"],
        recon_loss=history["recon_loss"],
        discreteness=history["discreteness"],
        initial_loss=initial_loss,
        final_logits=logits,
        final_expected=expected,
        duration_mae=mae,
        hard_match_rate=match,
        final_discreteness=disc,
        diverged=diverged,
        wall_time=time.perf_counter() - start,
    )
