import unittest
from fractions import Fraction
from unittest.mock import patch

import pytest
import sympy

from linearizer import invariants
from linearizer.classifier import (
    FIVE_SYMMETRY, FOUR_SYMMETRY, OUTSIDE_SCOPE, WUENSCHMANN_ZERO, classify, condition_table, s_as_radical,
)
from linearizer.calculus import OdeContext
from linearizer.expr import J, P, Q, SamplePoint, normalize
from linearizer.identity import SamplerConfig, exact_value, is_zero
from linearizer.cubic import CubicScalar
from linearizer.fixtures import load_fixture
from linearizer.parser import parse

FIXTURES = ["power_ratio", "cubic_jet", "linear_five", "linear_four_x", "linear_four_exp", "square_u", "vanishing"]


@pytest.mark.parametrize("name", FIXTURES)
def test_fixture_outcomes(name, fixture, sampler):
    data = fixture(name)
    result = classify(data.f, sampler)
    assert result.outcome == data.outcome
    if "first_failing" in data.expected:
        assert result.first_failing == data.expected["first_failing"]


def test_power_ratio_is_five_symmetry(power_ratio, sampler):
    result = classify(power_ratio.f, sampler)
    assert result.outcome == FIVE_SYMMETRY
    assert result.linearizable and result.exit_code == 0
    assert result.parameters == ("alpha",)
    alpha = sympy.Symbol("alpha")
    expected = (3 * alpha ** 2 - 9 * alpha + 9) * Q ** 2 / (9 * P ** 2 * J ** 2)
    verdict = is_zero(result.s - expected, result.tower.ctx, sampler)
    assert verdict.identically_zero and verdict.mode == "exact"


def test_s_as_radical_matches_closed_form(power_ratio, sampler):
    result = classify(power_ratio.f, sampler)
    radical = s_as_radical(result.tower)
    assert not radical.has(J)
    assert not radical.free_symbols & {P, Q}
    closed = parse(power_ratio.expected["s"])
    verdict = is_zero(radical - closed, OdeContext.for_equation(0), sampler)
    assert verdict.identically_zero and verdict.mode == "float"


def test_cubic_jet_is_four_symmetry(cubic_jet, sampler):
    result = classify(cubic_jet.f, sampler)
    assert result.outcome == FOUR_SYMMETRY
    assert normalize(result.K + 3 / P ** 4) == 0
    assert result.s is None
    assert not result.dK_witness.identically_zero
    for name in ("I6", "I8", "I10", "I11", "I12", "I13", "I14", "I15"):
        assert result.verdict(name).identically_zero


def test_linear_five_reports_s(fixture, sampler):
    result = classify(fixture("linear_five").f, sampler)
    assert result.outcome == FIVE_SYMMETRY
    assert result.s == sympy.Symbol("s")


def test_square_u_fails_at_i11(fixture, sampler):
    result = classify(fixture("square_u").f, sampler)
    assert result.outcome == OUTSIDE_SCOPE
    assert result.exit_code == 4
    assert result.first_failing == "I11"
    assert not result.witness.identically_zero
    tested = [name for name, _ in result.conditions]
    assert tested == ["I3", "I6", "I8", "I10", "I11"]


def test_square_u_i11_value(fixture):
    result = classify(fixture("square_u").f, SamplerConfig())
    value = exact_value(result.tower.I11, result.tower.ctx, SamplePoint.of(0, 1, 1, 1))
    assert value == CubicScalar(Fraction(0), Fraction(1, 3), Fraction(0), Fraction(-2))
    assert abs(float(value.to_mpf()) + 0.41997368329829105) < 1e-12


def test_vanishing_is_wuenschmann_zero(fixture, sampler):
    result = classify(fixture("vanishing").f, sampler)
    assert result.outcome == WUENSCHMANN_ZERO
    assert result.exit_code == 3
    assert result.tower is None
    assert [row["name"] for row in condition_table(result)] == ["I3"]


def test_condition_table_rows(cubic_jet, sampler):
    rows = condition_table(classify(cubic_jet.f, sampler))
    assert rows[0]["name"] == "I3" and rows[0]["verdict"] == "NonZero"
    assert rows[-1]["name"] == "DxK"
    assert all(set(row) >= {"name", "verdict", "mode", "points_tested"} for row in rows)


@pytest.mark.slow
@pytest.mark.parametrize("name", FIXTURES)
def test_outcome_does_not_depend_on_seed(name, fixture):
    data = fixture(name)
    outcomes = {classify(data.f, SamplerConfig(seed=seed)).outcome for seed in range(5)}
    assert outcomes == {data.outcome}


def test_parallel_classification_matches(cubic_jet):
    cfg = SamplerConfig()
    assert classify(cubic_jet.f, cfg, jobs=4).conditions == classify(cubic_jet.f, cfg, jobs=1).conditions


def test_classification_records_seed(cubic_jet):
    assert classify(cubic_jet.f, SamplerConfig(seed=9)).seed == 9
    assert classify(parse("0"), SamplerConfig(seed=4)).seed == 4


class TestBaseInvariantsComputedOnce(unittest.TestCase):
    @patch('linearizer.invariants.compute_base', wraps=invariants.compute_base)
    @patch('linearizer.classifier.compute_base', wraps=invariants.compute_base)
    def test_tower_reuses_base(self, classifier_base, tower_base):
        result = classify(load_fixture("cubic_jet").f, SamplerConfig())

        self.assertEqual(result.outcome, FOUR_SYMMETRY)
        self.assertEqual(classifier_base.call_count, 1)
        tower_base.assert_not_called()

    def test_supplied_base_gives_same_tower(self):
        f = load_fixture("power_ratio").f
        with_base = invariants.compute_tower(f, base=invariants.compute_base(f))
        self.assertEqual(with_base.K, invariants.compute_tower(f).K)
