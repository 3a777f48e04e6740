import os
import sys

import pytest
import sympy

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from linearizer.expr import P, Q, U, X  # noqa: E402
from linearizer.fixtures import load_fixture  # noqa: E402
from linearizer.identity import SamplerConfig  # noqa: E402

ALPHA = sympy.Symbol("alpha")
JET_LEAVES = (X, U, P, Q, ALPHA)


def build_random_tree(rng, depth, leaves=JET_LEAVES, leaf_chance=0.4, max_power=3):
    """Random expression over leaves with +, -, *, / and small integer powers."""
    if depth == 0 or rng.random() < leaf_chance:
        if rng.random() < 0.25:
            return sympy.Integer(rng.randint(1, 5))
        return rng.choice(leaves)
    op = rng.choice("+-*/^")
    lhs = build_random_tree(rng, depth - 1, leaves, leaf_chance, max_power)
    if op == "^":
        return lhs ** rng.randint(0, max_power)
    rhs = build_random_tree(rng, depth - 1, leaves, leaf_chance, max_power)
    return {"+": lhs + rhs, "-": lhs - rhs, "*": lhs * rhs, "/": lhs / rhs}[op]


@pytest.fixture
def sampler():
    """Default sampler: seed 0, 8 points."""
    return SamplerConfig()


@pytest.fixture
def random_tree():
    """Factory for seeded random expression trees."""
    return build_random_tree


@pytest.fixture
def fixture():
    """Factory returning a parsed fixture file by name."""
    return load_fixture


@pytest.fixture
def cubic_jet():
    return load_fixture("cubic_jet")


@pytest.fixture
def power_ratio():
    return load_fixture("power_ratio")
