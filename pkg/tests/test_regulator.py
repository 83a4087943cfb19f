import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from stochdur import kernel, regulator
from stochdur.kernel import EPS


class TestSampling:
    def test_certain_success(self, rng):
        for _ in range(20):
            np.testing.assert_array_equal(regulator.sample_durations([[1 - EPS]], rng), [1])

    def test_certain_failure(self, rng):
        draws = regulator.sample_many([[EPS, EPS]], 1000, rng)
        assert np.all(draws == 0)

    def test_fair_trials_frequencies(self):
        draws = regulator.sample_many([[0.5, 0.5]], 100_000, np.random.default_rng(0))
        freq = np.bincount(draws[:, 0], minlength=3) / draws.shape[0]
        np.testing.assert_allclose(freq, [0.25, 0.5, 0.25], atol=0.01)

    def test_single_draw_matches_batched_definition(self):
        # both run the trials in order and stop at the first success
        a = [regulator.sample_durations([[0.3, 0.6, 0.2]], np.random.default_rng(s))[0] for s in range(200)]
        b = [regulator.sample_many([[0.3, 0.6, 0.2]], 1, np.random.default_rng(s))[0, 0] for s in range(200)]
        assert a == b

    def test_chi_square_against_length_probability(self):
        rng = np.random.default_rng(3)
        p = kernel.apply_noisy_sigmoid(rng.normal(0, 1.5, (4, 5)))
        l = kernel.length_probability(p)
        draws = regulator.sample_many(p, 100_000, rng)
        for i in range(4):
            observed = np.bincount(draws[:, i], minlength=6)
            keep = l[i] * draws.shape[0] > 5
            expected = l[i][keep] * draws.shape[0]
            observed = observed[keep]
            expected *= observed.sum() / expected.sum()
            assert stats.chisquare(observed, expected).pvalue > 1e-3


class TestDiscretize:
    @pytest.mark.parametrize("value, expected", [(1.4, 1), (1.5, 2), (2.5, 2), (0.49, 0)])
    def test_round_half_to_even(self, value, expected):
        assert regulator.discretize_durations([value])[0] == expected

    def test_clamped(self):
        np.testing.assert_array_equal(regulator.discretize_durations([-0.7, 9.2], max_duration=6), [0, 6])


class TestScale:
    def test_identity(self):
        np.testing.assert_array_equal(regulator.scale_durations([2, 3, 0], 1.0), [2, 3, 0])

    def test_values(self):
        np.testing.assert_array_equal(regulator.scale_durations([2, 4], 0.5), [1, 2])
        np.testing.assert_array_equal(regulator.scale_durations([1], 2.0), [2])

    def test_factor_must_be_positive(self):
        with pytest.raises(ValueError):
            regulator.scale_durations([1], 0.0)


class TestExpand:
    def test_values(self):
        h = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(regulator.expand(h, [1, 1]), h)
        np.testing.assert_array_equal(regulator.expand(h, [2, 0]), [[1.0, 2.0], [1.0, 2.0]])
        assert regulator.expand(h[:1], [0]).shape == (0, 2)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            regulator.expand(np.ones((1, 1)), [-1])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            regulator.expand(np.ones((2, 1)), [1])


class TestHardAttention:
    def test_values(self):
        np.testing.assert_array_equal(regulator.hard_attention([1, 1], 2), np.eye(2))
        np.testing.assert_array_equal(regulator.hard_attention([2, 1], 3), [[1, 1, 0], [0, 0, 1]])
        np.testing.assert_array_equal(regulator.hard_attention([0, 1], 1), [[0], [1]])

    def test_trailing_frames_empty(self):
        np.testing.assert_array_equal(regulator.hard_attention([1], 3), [[1, 0, 0]])


durations = arrays(np.int64, st.integers(1, 7), elements=st.integers(0, 6))


@given(durations, st.integers(1, 4), st.integers(0, 2**31))
def test_expand_equals_hard_upsample(d, dim, seed):
    h = np.random.default_rng(seed).normal(size=(d.size, dim))
    lhs = regulator.expand(h, d)
    rhs = kernel.expected_upsample(regulator.hard_attention(d, max(int(d.sum()), 1)), h)
    if d.sum() == 0:
        assert lhs.shape == (0, dim)
    else:
        np.testing.assert_array_equal(lhs, rhs)


@given(durations)
def test_blocks_are_contiguous_and_ordered(d):
    s = regulator.hard_attention(d, max(int(d.sum()), 1))
    last_end = 0
    for i in range(d.size):
        frames = np.flatnonzero(s[i])
        assert frames.size == d[i]
        if frames.size:
            assert np.all(np.diff(frames) == 1)
            assert frames[0] == last_end
            last_end = frames[-1] + 1
    assert np.all(s.sum(axis=0) <= 1)


@given(durations)
def test_soft_matches_hard_for_deterministic_params(d):
    n_frames = max(int(d.sum()), 1)
    l = kernel.length_probability(regulator.hard_params(d, 6))
    s = kernel.attention_probability(l, kernel.cumulative_duration(l, n_frames))
    np.testing.assert_allclose(s, regulator.hard_attention(d, n_frames), atol=1e-5)
    np.testing.assert_allclose(kernel.expected_durations(l), d, atol=1e-5)
