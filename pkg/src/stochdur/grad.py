"""Hand-written reverse-mode gradients for the duration model.

Each ``backward_*`` function takes the forward values it needs plus the
cotangent of the forward output and returns the cotangent(s) of the inputs.
The graph is fixed, so there is no generic autodiff machinery here; the
finite-difference harness at the bottom keeps every derivation honest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernel import Alignment, _start_distribution, survival


def _full_conv_vjp(a: np.ndarray, b: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cotangents of ``a`` and ``b`` for ``c = np.convolve(a, b)`` given ``dc = g``.

    ``g`` must cover the full convolution length ``len(a) + len(b) - 1``.
    """
    return np.correlate(g, b, mode="valid"), np.correlate(g, a, mode="valid")


def _step_vjp(q_prev: np.ndarray, l_row: np.ndarray, g: np.ndarray, n_frames: int):
    # reverse of kernel._convolve_step: head copies, tail flows into overflow
    full_len = n_frames + 1 + l_row.size - 1
    g_full = np.full(full_len, g[-1])
    g_full[: n_frames + 1] = g[: n_frames + 1]
    d_prev_head, d_l = _full_conv_vjp(q_prev[: n_frames + 1], l_row, g_full)
    d_prev = np.zeros(n_frames + 2)
    d_prev[: n_frames + 1] = d_prev_head
    d_prev[-1] = g[-1]
    return d_prev, d_l


def _survival_vjp(d_surv: np.ndarray) -> np.ndarray:
    # surv[k] = sum_{t >= k} l[t]  =>  dl[t] = sum_{k <= t} dsurv[k]
    return np.cumsum(d_surv, axis=-1)


def backward_length_probability(p, l, dL_dl) -> np.ndarray:
    """Gradient of a loss w.r.t. the Bernoulli parameters.

    Uses ``dl[m]/dp[m] = l[m] / p[m]`` and, for every later duration ``m > k``
    as well as the zero-duration cell, ``dl[m]/dp[k] = -l[m] / (1 - p[k])``.
    Clamped parameters are treated at their clamped value.
    """
    p = np.asarray(p, dtype=np.float64)
    l = np.asarray(l, dtype=np.float64)
    g = np.asarray(dL_dl, dtype=np.float64)
    if g.shape != l.shape or l.shape != (p.shape[0], p.shape[1] + 1):
        raise ValueError(f"shape mismatch: p {p.shape}, l {l.shape}, dL_dl {g.shape}")
    weighted = g[:, 1:] * l[:, 1:]
    # contributions of durations strictly after trial k, plus the zero cell
    after = np.cumsum(weighted[:, ::-1], axis=1)[:, ::-1] - weighted
    after += (g[:, 0] * l[:, 0])[:, None]
    return weighted / p - after / (1.0 - p)


def backward_cumulative(l, q, dL_dq) -> np.ndarray:
    """Gradient through the running-total convolution, overflow cell included."""
    l = np.asarray(l, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    g = np.array(dL_dq, dtype=np.float64)
    if g.shape != q.shape or q.shape[0] != l.shape[0]:
        raise ValueError(f"shape mismatch: l {l.shape}, q {q.shape}, dL_dq {g.shape}")
    n_tokens, n_frames = l.shape[0], q.shape[1] - 2
    d_l = np.zeros_like(l)
    carry = np.zeros(n_frames + 2)
    for i in range(n_tokens - 1, -1, -1):
        g_row = g[i] + carry
        q_prev = q[i - 1] if i > 0 else _start_distribution(n_frames)
        carry, d_l[i] = _step_vjp(q_prev, l[i], g_row, n_frames)
    return d_l


def backward_attention(l, q, s, dL_ds) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the alignment w.r.t. ``l`` (direct path only) and ``q``.

    ``s`` is a function of ``l`` through each token's survival function and of
    ``q`` through rows ``0..N-2``; the returned ``dL_dq`` therefore has a zero
    last row and zero overflow column. Chain it through
    :func:`backward_cumulative` to get the total gradient w.r.t. ``l``.
    """
    l = np.asarray(l, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    g = np.asarray(dL_ds, dtype=np.float64)
    if g.shape != np.shape(s) or g.shape[0] != l.shape[0] or q.shape != (l.shape[0], g.shape[1] + 2):
        raise ValueError(f"shape mismatch: l {l.shape}, q {q.shape}, s {np.shape(s)}, dL_ds {g.shape}")
    n_tokens, n_frames = g.shape
    n_dur = l.shape[1] - 1
    surv = survival(l)
    d_l = np.zeros_like(l)
    d_q = np.zeros_like(q)
    for i in range(n_tokens):
        q_prev = q[i - 1] if i > 0 else _start_distribution(n_frames)
        g_full = np.zeros(n_frames + n_dur - 1)
        g_full[:n_frames] = g[i]
        d_prev, d_surv_tail = _full_conv_vjp(q_prev[:n_frames], surv[i, 1:], g_full)
        d_surv = np.concatenate([[0.0], d_surv_tail])
        d_l[i] = _survival_vjp(d_surv)
        if i > 0:
            d_q[i - 1, :n_frames] = d_prev
    return d_l, d_q


def backward_expected_durations(l, dL_dE) -> np.ndarray:
    l = np.asarray(l, dtype=np.float64)
    g = np.asarray(dL_dE, dtype=np.float64)
    return g[:, None] * np.arange(l.shape[1], dtype=np.float64)[None, :]


def backward_expected_upsample(s, h, dL_dy) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(dL_ds, dL_dh)`` for ``y = s.T @ h``."""
    g = np.asarray(dL_dy, dtype=np.float64)
    return np.asarray(h) @ g.T, np.asarray(s) @ g


def backward_length_loss(expected, total_frames: float) -> np.ndarray:
    """Subgradient of ``|total - sum(expected)| / N`` w.r.t. ``expected``.

    Zero at the kink.
    """
    expected = np.asarray(expected, dtype=np.float64)
    residual = total_frames - expected.sum()
    return np.full(expected.shape, -np.sign(residual) / expected.size)


def backward_duration_loss(predicted, expected) -> np.ndarray:
    """Subgradient of the duration loss w.r.t. the predictions only.

    The expected durations are targets; nothing flows back to them.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    return np.sign(predicted - np.asarray(expected, dtype=np.float64)) / predicted.size


def backward_align(tape: Alignment, dL_dy=None, dL_dE=None) -> tuple[np.ndarray, np.ndarray]:
    """Chain rule from the outputs of :func:`stochdur.kernel.align` to its inputs.

    Args:
        tape: The forward record. Its noise sample is a constant here.
        dL_dy: Cotangent of the expected output, shape (T, D), or None.
        dL_dE: Cotangent of the expected durations, shape (N,), or None.

    Returns:
        ``(dL_dlogits, dL_dh)``.
    """
    n_tokens = tape.l.shape[0]
    d_l = np.zeros_like(tape.l)
    d_h = np.zeros_like(tape.h)
    if dL_dy is not None:
        dL_dy = np.asarray(dL_dy, dtype=np.float64)
        if dL_dy.shape != tape.y.shape:
            raise ValueError(f"dL_dy has shape {dL_dy.shape}, expected {tape.y.shape}")
        d_s, d_h = backward_expected_upsample(tape.s, tape.h, dL_dy)
        d_l_direct, d_q = backward_attention(tape.l, tape.q, tape.s, d_s)
        d_l += d_l_direct + backward_cumulative(tape.l, tape.q, d_q)
    if dL_dE is not None:
        dL_dE = np.asarray(dL_dE, dtype=np.float64)
        if dL_dE.shape != (n_tokens,):
            raise ValueError(f"dL_dE has shape {dL_dE.shape}, expected ({n_tokens},)")
        d_l += backward_expected_durations(tape.l, dL_dE)
    d_p = backward_length_probability(tape.p, tape.l, d_l)
    d_logits = np.where(tape.unclamped, d_p * tape.p * (1.0 - tape.p), 0.0)
    return d_logits, d_h


@dataclass
class GradCheckReport:
    max_abs_error: float
    max_rel_error: float
    eps: float
    passed: bool
    worst_index: int = -1
    numeric: np.ndarray = field(default=None, repr=False)
    message: str = ""


def relative_error(analytic, numeric) -> np.ndarray:
    a = np.abs(np.asarray(analytic, dtype=np.float64))
    n = np.abs(np.asarray(numeric, dtype=np.float64))
    return np.abs(np.asarray(analytic) - np.asarray(numeric)) / np.maximum(np.maximum(a, n), 1e-8)


def numeric_gradient(f: Callable[[np.ndarray], float], x0, eps: float = 1e-5, dtype=np.float64) -> np.ndarray:
    """Central differences of a scalar function, one coordinate at a time.

    ``f`` receives its argument in ``dtype``. Passing ``np.longdouble`` lowers
    the rounding noise of the difference quotient by about three orders of
    magnitude when ``f`` is written to respect the input precision.
    """
    x0 = np.asarray(x0)
    grad = np.empty(x0.size, dtype=dtype)
    x = x0.astype(dtype).ravel()
    for k in range(x.size):
        orig = x[k]
        x[k] = orig + eps
        f_plus = f(x.reshape(x0.shape))
        x[k] = orig - eps
        f_minus = f(x.reshape(x0.shape))
        x[k] = orig
        grad[k] = (f_plus - f_minus) / (2 * dtype(eps))
    return grad.astype(np.float64).reshape(x0.shape)


def finite_difference_check(
    f: Callable[[np.ndarray], float],
    x0,
    analytic,
    eps: float = 1e-5,
    rtol: float = 1e-5,
    dtype=np.float64,
) -> GradCheckReport:
    """Compare an analytic gradient with central differences of ``f`` at ``x0``.

    The relative error per coordinate is ``|a - n| / max(|a|, |n|, 1e-8)``
    and the check passes when its maximum is at most ``rtol``. A non-finite
    function value or gradient produces a failed report rather than an
    exception.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    analytic = np.asarray(analytic, dtype=np.float64)
    with np.errstate(all="ignore"):
        try:
            numeric = numeric_gradient(f, x0, eps, dtype)
        except (FloatingPointError, OverflowError, ValueError) as exc:
            return GradCheckReport(np.inf, np.inf, eps, False, message=f"forward failed: {exc}")
    if numeric.shape != analytic.shape:
        raise ValueError(f"analytic gradient has shape {analytic.shape}, expected {numeric.shape}")
    if not (np.all(np.isfinite(numeric)) and np.all(np.isfinite(analytic))):
        return GradCheckReport(np.inf, np.inf, eps, False, numeric=numeric, message="non-finite gradient")
    if numeric.size == 0:
        return GradCheckReport(0.0, 0.0, eps, True, numeric=numeric)
    rel = relative_error(analytic, numeric)
    worst = int(np.argmax(rel))
    max_rel = float(rel.ravel()[worst])
    return GradCheckReport(
        max_abs_error=float(np.max(np.abs(analytic - numeric))),
        max_rel_error=max_rel,
        eps=eps,
        passed=max_rel <= rtol,
        worst_index=worst,
        numeric=numeric,
    )
