"""Shared pytest configuration.

The hypothesis profile pins every property suite at 200 examples (the
acceptance bar) with no deadline, since numeric cases have long tails, and
derandomized runs so failures reproduce without shrink-seed hunting.
"""

import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

PROPERTY_EXAMPLES = 200

settings.register_profile(
    "bulk",
    max_examples=PROPERTY_EXAMPLES,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("bulk")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(20240817)))
