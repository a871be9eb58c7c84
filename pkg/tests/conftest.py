import os

import numpy as np
import pytest
from hypothesis import settings

from nmqj.linalg import SIGMA_MINUS, SIGMA_PLUS
from nmqj.model import (
    Constant,
    DampedOscillation,
    build_two_level_model,
    excited_state,
    superposition_state,
)

settings.register_profile("default", deadline=None, max_examples=40)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

PE = SIGMA_PLUS @ SIGMA_MINUS
PG = np.eye(2, dtype=np.complex128) - PE


@pytest.fixture
def osc_rate():
    """Sign-changing rate e^{-t/4} sin(2t)."""
    return DampedOscillation(1.0, 0.25, 2.0, 0.0)


@pytest.fixture
def osc_model(osc_rate):
    return build_two_level_model(osc_rate, None, superposition_state())


@pytest.fixture
def markov_model():
    return build_two_level_model(Constant(1.0), None, excited_state())


def random_state(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_matrix(rng, d, scale=1.0):
    return scale * (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))


def random_hermitian(rng, d, scale=1.0):
    m = random_matrix(rng, d, scale)
    return 0.5 * (m + m.conj().T)
