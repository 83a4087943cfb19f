import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stochdur import kernel


@st.composite
def logit_matrices(draw, max_n=4, max_m=5, scale=6.0):
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(1, max_m))
    return draw(arrays(np.float64, (n, m), elements=st.floats(-scale, scale, allow_nan=False)))


@st.composite
def small_instances(draw, max_n=4, max_m=5, max_t=12):
    """(p, T) pairs small enough for exhaustive enumeration."""
    logits = draw(logit_matrices(max_n, max_m))
    return kernel.apply_noisy_sigmoid(logits), draw(st.integers(1, max_t))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
