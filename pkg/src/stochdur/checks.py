"""Randomized verification runs shared by the CLI and the test-suite.

Each instance draws from its own generator seeded with ``(seed, index)``, so a
run gives the same per-instance results regardless of how it is split across
worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import grad, kernel, losses, oracle

ORACLE_TOL = 1e-9
GRAD_TOL = 1e-5
LOGIT_SCALE = 2.0


def instance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def random_shape(rng: np.random.Generator, max_n: int, max_m: int, max_t: int) -> tuple[int, int, int]:
    return int(rng.integers(1, max_n + 1)), int(rng.integers(1, max_m + 1)), int(rng.integers(1, max_t + 1))


@dataclass
class OracleResult:
    index: int
    n_tokens: int
    max_duration: int
    n_frames: int
    errors: dict[str, float]
    coverage_error: float

    @property
    def max_abs_error(self) -> float:
        return max(self.errors.values())

    @property
    def worst_field(self) -> str:
        return max(self.errors, key=self.errors.get)


def oracle_instance(job) -> OracleResult:
    """Compare the kernel with enumeration on one random instance.

    ``job`` is ``(seed, index, max_n, max_m, max_t, inject_fault)``.
    """
    seed, index, max_n, max_m, max_t, inject_fault = job
    rng = instance_rng(seed, index)
    n, m, t = random_shape(rng, max_n, max_m, max_t)
    p = kernel.apply_noisy_sigmoid(rng.normal(0.0, LOGIT_SCALE, (n, m)))

    l = kernel.length_probability(p)
    q = kernel.cumulative_duration(l, t)
    s = kernel.attention_probability(l, q)
    e = kernel.expected_durations(l)
    if inject_fault:
        s = s.copy()
        s[0, 0] += 1e-6

    ref_l = oracle.oracle_length_probability(p)
    errors = {
        "l": float(np.max(np.abs(l - ref_l))),
        "q": float(np.max(np.abs(q - oracle.oracle_q(ref_l, t)))),
        "s": float(np.max(np.abs(s - oracle.oracle_s(ref_l, t)))),
        "expected": float(np.max(np.abs(e - oracle.oracle_expected(ref_l)))),
    }
    coverage = float(np.max(np.abs(s.sum(axis=0) - oracle.oracle_coverage(ref_l, t))))
    return OracleResult(index, n, m, t, errors, coverage)


@dataclass
class GradResult:
    index: int
    shape: tuple[int, int, int, int]
    reports: dict[str, grad.GradCheckReport] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports.values())

    @property
    def max_rel_error(self) -> float:
        return max(r.max_rel_error for r in self.reports.values())


def gradcheck_instance(job) -> GradResult:
    """Check every backward pass on one random instance.

    ``job`` is ``(seed, index, eps, precision)`` with precision ``"double"``
    or ``"extended"``; it selects the float type of the finite-difference
    evaluations only. Analytic gradients are always float64. Scalar losses
    are random linear functionals of each output unless noted.
    """
    seed, index, eps, precision = job
    dtype = np.longdouble if precision == "extended" else np.float64
    rng = instance_rng(seed, index)
    n, m, t = random_shape(rng, 4, 5, 10)
    d = int(rng.integers(1, 4))
    z = rng.normal(0.0, LOGIT_SCALE, (n, m))
    h = rng.standard_normal((n, d))
    tape = kernel.align(z, h, t)
    p, l, q, s = tape.p, tape.l, tape.q, tape.s
    total_frames = int(rng.integers(0, n * m + 1))

    g_l = rng.standard_normal(l.shape)
    g_q = rng.standard_normal(q.shape)
    g_s = rng.standard_normal(s.shape)
    g_y = rng.standard_normal(tape.y.shape)
    g_e = rng.standard_normal(n)

    def check(f, x0, analytic):
        return grad.finite_difference_check(f, x0, analytic, eps=eps, rtol=GRAD_TOL, dtype=dtype)

    res = GradResult(index, (n, m, t, d))
    res.reports["length_probability"] = check(
        lambda x: np.sum(kernel.length_probability(x) * g_l), p, grad.backward_length_probability(p, l, g_l)
    )
    res.reports["cumulative"] = check(
        lambda x: np.sum(kernel.cumulative_duration(x, t) * g_q), l, grad.backward_cumulative(l, q, g_q)
    )
    d_l, d_q = grad.backward_attention(l, q, s, g_s)
    res.reports["attention_l"] = check(lambda x: np.sum(kernel.attention_probability(x, q) * g_s), l, d_l)
    res.reports["attention_q"] = check(lambda x: np.sum(kernel.attention_probability(l, x) * g_s), q, d_q)
    d_s, d_h = grad.backward_expected_upsample(s, h, g_y)
    res.reports["upsample_s"] = check(lambda x: np.sum(kernel.expected_upsample(x, h) * g_y), s, d_s)
    res.reports["upsample_h"] = check(lambda x: np.sum(kernel.expected_upsample(s, x) * g_y), h, d_h)

    d_z, d_h_full = grad.backward_align(tape, g_y, g_e)

    def full(x_z, x_h):
        a = kernel.align(x_z, x_h, t)
        return np.sum(a.y * g_y) + np.sum(a.expected * g_e)

    res.reports["align_logits"] = check(lambda x: full(x, h), z, d_z)
    res.reports["align_hidden"] = check(lambda x: full(z, x), h, d_h_full)

    d_len, _ = grad.backward_align(tape, None, grad.backward_length_loss(tape.expected, total_frames))
    res.reports["length_loss_logits"] = check(
        lambda x: losses.length_loss(kernel.align(x, h, t).expected, total_frames), z, d_len
    )
    return res
