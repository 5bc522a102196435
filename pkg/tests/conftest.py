"""Shared fixtures: the built-in landscapes and their critical points."""
import hypothesis
import pytest

from mlab import (builtin_himmelblau2d, builtin_multiwell1d,
                  find_critical_points)

# Deterministic property tests: same examples on every run, no deadline
# (compiled kernels make first calls slow).
hypothesis.settings.register_profile(
    "suite", derandomize=True, deadline=None, max_examples=50)
hypothesis.settings.load_profile("suite")


@pytest.fixture(scope="session")
def land1d():
    return builtin_multiwell1d()


@pytest.fixture(scope="session")
def points1d(land1d):
    return find_critical_points(land1d)


@pytest.fixture(scope="session")
def land2d():
    return builtin_himmelblau2d()
