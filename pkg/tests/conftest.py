import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from blpp_lab import GridSpec, RngPolicy, TruncationPolicy


@pytest.fixture
def small_grid() -> GridSpec:
    """Cheap grid for unit tests; horizon 30 suits drift gaps >= 0.7."""
    return GridSpec(-2.0, 30.0, 1e-3)


@pytest.fixture
def policy() -> RngPolicy:
    return RngPolicy(20260809)


@pytest.fixture
def trunc() -> TruncationPolicy:
    return TruncationPolicy()
