"""Differentiable stochastic durations for monotonic sequence alignment."""

from .kernel import (
    EPS,
    Alignment,
    align,
    apply_noisy_sigmoid,
    attention_probability,
    cumulative_duration,
    expected_durations,
    expected_upsample,
    length_probability,
)
from .regulator import discretize_durations, expand, hard_attention, sample_durations, scale_durations

__version__ = "0.1.0"
