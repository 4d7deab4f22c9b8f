"""Shared test fixtures for the minimax-infer test suite."""

from dataclasses import replace

import numpy as np
import pytest
from dotenv import load_dotenv

from problems.builtin import builtin
from services.solver import SolverConfig

# Load .env so MINIMAX_* overrides apply to local runs
load_dotenv()


# ---------------------------------------------------------------------------
# Built-in problems
# ---------------------------------------------------------------------------

@pytest.fixture
def paper_example():
    return builtin("paper_example")


@pytest.fixture
def smooth_saddle():
    return builtin("smooth_saddle(1)")


@pytest.fixture
def vee_value():
    return builtin("vee_value")


@pytest.fixture
def cone_qp():
    return builtin("cone_qp")


@pytest.fixture
def ridge2d():
    return builtin("ridge2d")


# ---------------------------------------------------------------------------
# Solver configurations
# ---------------------------------------------------------------------------

@pytest.fixture
def solver_config():
    """Default solver configuration from Settings."""
    return SolverConfig.from_settings()


@pytest.fixture
def fast_solver_config():
    """Cheaper phase 1 for tests that run many sample solves.

    The built-in problems are convex in γ near γ*, so a short subgradient
    phase still hands phase 2 a point inside its basin.
    """
    return replace(
        SolverConfig.from_settings(),
        outer_points_per_axis=5,
        subgradient_steps=60,
        refine_starts=1,
    )


# ---------------------------------------------------------------------------
# Random test data
# ---------------------------------------------------------------------------

@pytest.fixture
def rng():
    """numpy Generator for test inputs only (library code never uses it)."""
    return np.random.default_rng(20240601)
