import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochdur import kernel, oracle, regulator
from stochdur.kernel import EPS

from conftest import logit_matrices, small_instances

GOLDEN = Path(__file__).parent / "data" / "golden_align.json"

HALF = np.array([[0.5, 0.5]])


class TestNoisySigmoid:
    def test_zero_logit(self):
        np.testing.assert_array_equal(kernel.apply_noisy_sigmoid([[0.0]]), [[0.5]])

    def test_saturation_is_clamped(self):
        np.testing.assert_array_equal(kernel.apply_noisy_sigmoid([[40.0]]), [[1.0 - EPS]])
        np.testing.assert_array_equal(kernel.apply_noisy_sigmoid([[-40.0]]), [[EPS]])

    def test_noise_mean_is_one_half(self):
        # E[sigmoid(g)] = 1/2 by symmetry of the standard normal
        p = kernel.apply_noisy_sigmoid(np.zeros((100, 1000)), 1.0, np.random.default_rng(0))
        assert abs(p.mean() - 0.5) <= 0.005

    def test_noiseless_is_deterministic_and_ignores_rng(self, rng):
        z = rng.normal(size=(3, 4))
        state = rng.bit_generator.state
        a = kernel.apply_noisy_sigmoid(z, 0.0, rng)
        assert rng.bit_generator.state == state
        np.testing.assert_array_equal(a, kernel.apply_noisy_sigmoid(z))

    def test_same_seed_same_noise(self):
        z = np.zeros((2, 3))
        a = kernel.apply_noisy_sigmoid(z, 1.0, np.random.default_rng(5))
        b = kernel.apply_noisy_sigmoid(z, 1.0, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_rejects_non_finite(self, bad):
        with pytest.raises(ValueError, match="non-finite"):
            kernel.apply_noisy_sigmoid([[0.0, bad]])

    def test_noise_needs_rng(self):
        with pytest.raises(ValueError):
            kernel.apply_noisy_sigmoid([[0.0]], 1.0)


class TestLengthProbability:
    def test_certain_success(self):
        np.testing.assert_allclose(kernel.length_probability([[1 - EPS]]), [[EPS, 1 - EPS]], rtol=1e-9)

    def test_two_fair_trials(self):
        # l1 = 0.5, l2 = 0.5 * 0.5, l0 = 0.5 * 0.5
        np.testing.assert_allclose(kernel.length_probability(HALF), [[0.25, 0.5, 0.25]], atol=1e-15)

    def test_rows_sum_to_one(self, rng):
        p = kernel.apply_noisy_sigmoid(rng.normal(0, 2, (3, 4)))
        np.testing.assert_allclose(kernel.length_probability(p).sum(axis=1), 1.0, atol=1e-9)

    def test_matches_direct_product(self, rng):
        p = rng.uniform(0.05, 0.95, (3, 5))
        l = kernel.length_probability(p)
        for i in range(3):
            for m in range(1, 6):
                assert l[i, m] == pytest.approx(p[i, m - 1] * np.prod(1 - p[i, : m - 1]), rel=1e-12)
            assert l[i, 0] == pytest.approx(np.prod(1 - p[i]), rel=1e-12)

    def test_stays_finite_near_one(self):
        # log-space accumulation must not produce log(0)
        l = kernel.length_probability(np.full((1, 8), 1.0))
        assert np.all(np.isfinite(l))
        assert l[0, 1] == pytest.approx(1 - EPS)


class TestCumulativeDuration:
    def test_two_unit_tokens(self):
        l = kernel.length_probability(np.full((2, 1), 1 - EPS))
        q = kernel.cumulative_duration(l, 3)
        assert q.shape == (2, 5)
        assert q[1, 2] == pytest.approx(1.0, abs=1e-6)
        np.testing.assert_allclose(np.delete(q[1], 2)[:-1], 0.0, atol=1e-6)

    def test_two_fair_tokens(self):
        # pairs (0,2), (1,1), (2,0): 0.25*0.25 + 0.5*0.5 + 0.25*0.25
        l = kernel.length_probability(np.full((2, 2), 0.5))
        q = kernel.cumulative_duration(l, 4)
        assert q[1, 2] == pytest.approx(0.375, abs=1e-15)
        assert q[1, 2] == pytest.approx(oracle.oracle_q(l, 4)[1, 2], abs=1e-15)

    def test_overflow_cell_holds_excess(self):
        l = kernel.length_probability(HALF)
        q = kernel.cumulative_duration(l, 1)
        np.testing.assert_allclose(q, [[0.25, 0.5, 0.25]])

    def test_rows_sum_to_one(self, rng):
        l = kernel.length_probability(rng.uniform(0, 1, (4, 3)))
        np.testing.assert_allclose(kernel.cumulative_duration(l, 5).sum(axis=1), 1.0, atol=1e-9)

    @pytest.mark.parametrize("bad", [0, -1, 2.5])
    def test_rejects_bad_frame_count(self, bad):
        with pytest.raises(ValueError, match="frame count"):
            kernel.cumulative_duration(kernel.length_probability(HALF), bad)


class TestAttention:
    def test_identity_alignment(self):
        l = kernel.length_probability(np.full((2, 1), 1 - EPS))
        s = kernel.attention_probability(l, kernel.cumulative_duration(l, 2))
        np.testing.assert_allclose(s, np.eye(2), atol=1e-6)

    def test_single_token(self):
        # s_1 = l_1 + l_2 = 0.75, s_2 = l_2 = 0.25
        l = kernel.length_probability(HALF)
        s = kernel.attention_probability(l, kernel.cumulative_duration(l, 2))
        np.testing.assert_allclose(s, [[0.75, 0.25]], atol=1e-15)
        np.testing.assert_allclose(s, oracle.oracle_s(l, 2), atol=1e-15)

    def test_coverage_two_fair_tokens(self):
        l = kernel.length_probability(np.full((2, 2), 0.5))
        s = kernel.attention_probability(l, kernel.cumulative_duration(l, 2))
        np.testing.assert_allclose(s.sum(axis=0), oracle.oracle_coverage(l, 2), atol=1e-9)

    def test_frames_beyond_all_durations_are_empty(self):
        l = kernel.length_probability(np.full((2, 1), 1 - EPS))
        s = kernel.attention_probability(l, kernel.cumulative_duration(l, 5))
        np.testing.assert_allclose(s[:, 2:], 0.0, atol=1e-12)

    def test_shape_mismatch(self):
        l = kernel.length_probability(np.full((2, 2), 0.5))
        q = kernel.cumulative_duration(l[:1], 3)
        with pytest.raises(ValueError, match="rows"):
            kernel.attention_probability(l, q)


class TestExpectations:
    def test_expected_durations(self):
        assert kernel.expected_durations(kernel.length_probability([[1 - EPS]]))[0] == pytest.approx(1.0)
        assert kernel.expected_durations(kernel.length_probability(HALF))[0] == pytest.approx(1.0, abs=1e-15)
        assert kernel.expected_durations(kernel.length_probability(np.full((1, 4), EPS)))[0] == pytest.approx(0.0, abs=1e-5)

    def test_upsample_identity(self, rng):
        h = rng.normal(size=(2, 3))
        np.testing.assert_array_equal(kernel.expected_upsample(np.eye(2), h), h)

    def test_upsample_weighted(self):
        np.testing.assert_allclose(kernel.expected_upsample([[0.75, 0.25]], [[2.0]]), [[1.5], [0.5]])

    def test_upsample_empty_column(self, rng):
        s = np.array([[1.0, 0.0], [0.0, 0.0]])
        y = kernel.expected_upsample(s, rng.normal(size=(2, 4)))
        np.testing.assert_array_equal(y[1], 0.0)

    def test_upsample_token_mismatch(self):
        with pytest.raises(ValueError, match="tokens"):
            kernel.expected_upsample(np.eye(2), np.ones((3, 1)))


class TestAlign:
    def test_identity(self, rng):
        h = rng.normal(size=(2, 3))
        tape = kernel.align([[40.0], [40.0]], h, 2)
        np.testing.assert_allclose(tape.s, np.eye(2), atol=1e-6)
        np.testing.assert_allclose(tape.y, h, atol=1e-5)

    def test_single_token(self):
        tape = kernel.align([[0.0, 0.0]], [[2.0]], 2)
        np.testing.assert_allclose(tape.s, [[0.75, 0.25]], atol=1e-15)
        np.testing.assert_allclose(tape.y, [[1.5], [0.5]], atol=1e-15)
        assert tape.expected[0] == pytest.approx(1.0)

    def test_golden_noisy_case(self):
        golden = json.loads(GOLDEN.read_text())
        inp = golden["inputs"]
        tape = kernel.align(
            inp["logits"], inp["h"], inp["n_frames"], inp["noise_std"], np.random.default_rng(inp["noise_seed"])
        )
        for name in ("p", "l", "q", "s", "y", "expected"):
            np.testing.assert_allclose(getattr(tape, name), golden[name], rtol=0, atol=1e-15, err_msg=name)

    def test_matches_component_calls(self, rng):
        z = rng.normal(size=(3, 4))
        h = rng.normal(size=(3, 2))
        tape = kernel.align(z, h, 6)
        l = kernel.length_probability(kernel.apply_noisy_sigmoid(z))
        s = kernel.attention_probability(l, kernel.cumulative_duration(l, 6))
        np.testing.assert_array_equal(tape.l, l)
        np.testing.assert_array_equal(tape.s, s)
        np.testing.assert_array_equal(tape.y, kernel.expected_upsample(s, h))


# properties

@settings(max_examples=100, deadline=None)
@given(logit_matrices(max_n=8, max_m=8, scale=20.0), st.integers(1, 20))
def test_normalization(logits, n_frames):
    l = kernel.length_probability(kernel.apply_noisy_sigmoid(logits))
    q = kernel.cumulative_duration(l, n_frames)
    assert np.all((l >= 0) & (l <= 1))
    assert np.all((q >= 0) & (q <= 1 + 1e-12))
    np.testing.assert_allclose(l.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(logit_matrices(max_n=5, max_m=3), st.integers(1, 20))
def test_support_of_running_total(logits, n_frames):
    l = kernel.length_probability(kernel.apply_noisy_sigmoid(logits))
    q = kernel.cumulative_duration(l, n_frames)
    n_dur = l.shape[1] - 1
    for i in range(q.shape[0]):
        reach = (i + 1) * n_dur
        if reach <= n_frames:
            np.testing.assert_array_equal(q[i, reach + 1 :], 0.0)


@settings(max_examples=60, deadline=None)
@given(small_instances())
def test_oracle_equivalence_and_coverage(instance):
    p, n_frames = instance
    l = kernel.length_probability(p)
    q = kernel.cumulative_duration(l, n_frames)
    s = kernel.attention_probability(l, q)
    ref_l = oracle.oracle_length_probability(p)
    np.testing.assert_allclose(l, ref_l, atol=1e-9)
    np.testing.assert_allclose(q, oracle.oracle_q(ref_l, n_frames), atol=1e-9)
    np.testing.assert_allclose(s, oracle.oracle_s(ref_l, n_frames), atol=1e-9)
    np.testing.assert_allclose(kernel.expected_durations(l), oracle.oracle_expected(ref_l), atol=1e-9)
    coverage = s.sum(axis=0)
    np.testing.assert_allclose(coverage, oracle.oracle_coverage(ref_l, n_frames), atol=1e-9)
    assert np.all(np.diff(coverage) <= 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=6))
def test_degenerate_discrete_limit(durations):
    d = np.array(durations)
    n_frames = max(int(d.sum()), 1)
    l = kernel.length_probability(regulator.hard_params(d, 5))
    s = kernel.attention_probability(l, kernel.cumulative_duration(l, n_frames))
    np.testing.assert_allclose(s, regulator.hard_attention(d, n_frames), atol=1e-5)


@settings(max_examples=40, deadline=None)
@given(small_instances(), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_upsample_is_linear(instance, a, b, seed):
    p, n_frames = instance
    l = kernel.length_probability(p)
    s = kernel.attention_probability(l, kernel.cumulative_duration(l, n_frames))
    rng = np.random.default_rng(seed)
    h1, h2 = rng.normal(size=(2, p.shape[0], 3))
    lhs = kernel.expected_upsample(s, a * h1 + b * h2)
    rhs = a * kernel.expected_upsample(s, h1) + b * kernel.expected_upsample(s, h2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_extended_precision_is_preserved():
    l = kernel.length_probability(np.full((2, 3), 0.3, dtype=np.longdouble))
    assert l.dtype == np.longdouble
    assert kernel.attention_probability(l, kernel.cumulative_duration(l, 4)).dtype == np.longdouble
    assert kernel.length_probability(np.full((2, 3), 0.3)).dtype == np.float64
