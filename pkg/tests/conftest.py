import numpy as np
import pytest

from iecd2 import TokenDistribution, smooth, softmax_with_temperature
from iecd2.distributions import LogitVector


def random_distribution(rng, vocab_size, scale=2.0, eps=1e-8):
    """A smoothed random distribution (full support guaranteed)."""
    logits = LogitVector(rng.normal(0.0, scale, vocab_size))
    return smooth(softmax_with_temperature(logits, 1.0), eps)


def random_pair(rng, vocab_size, scale=2.0, eps=1e-8):
    return (random_distribution(rng, vocab_size, scale, eps),
            random_distribution(rng, vocab_size, scale, eps))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def two_token(request):
    def make(p0):
        return TokenDistribution.from_probs([p0, 1.0 - p0])
    return make
