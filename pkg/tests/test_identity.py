import random
import unittest
from fractions import Fraction
from unittest.mock import patch

import mpmath
import pytest
import sympy

from linearizer.calculus import OdeContext
from linearizer.cubic import CubicScalar
from linearizer.errors import InconclusiveSamplingError, MalformedExpressionError, SingularPointError
from linearizer.expr import J, P, Q, U, X, eval_float, normalize, precision
from linearizer.identity import EXACT, FLOAT, SamplerConfig, exact_value, is_constant, is_zero, zero_tests
from linearizer.parser import parse

ALPHA = sympy.Symbol("alpha")


def _ctx(f=0, i3=None):
    ctx = OdeContext.for_equation(f)
    return ctx.with_i3(i3) if i3 is not None else ctx


def test_syntactic_zero_needs_no_points(sampler):
    verdict = is_zero((X + 1) ** 2 - X ** 2 - 2 * X - 1, _ctx(), sampler)
    assert verdict.identically_zero
    assert verdict.points_tested == 0


def test_nonzero_reports_witness(sampler):
    verdict = is_zero(X * U - ALPHA, _ctx(), sampler, label="I6")
    assert not verdict.identically_zero
    assert verdict.mode == EXACT
    assert verdict.witness is not None
    assert not verdict.value.is_zero()
    data = verdict.to_dict()
    assert data["verdict"] == "NonZero"
    assert data["component"] == "I6"
    assert set(data["witness"]) == {"alpha", "p", "q", "u", "x"}


def test_cube_root_relation_is_respected(sampler):
    ctx = _ctx(i3=U ** 2 + 1)
    assert is_zero(J ** 3 - U ** 2 - 1, ctx, sampler).identically_zero
    assert not is_zero(J - 1, ctx, sampler).identically_zero


def test_transcendental_identity_uses_float_mode(sampler):
    verdict = is_zero(parse("ln(x*p) - ln(x) - ln(p)"), _ctx(), sampler)
    assert verdict.identically_zero
    assert verdict.mode == FLOAT


def test_real_cube_root_is_consistent_with_j(sampler):
    ctx = _ctx(i3=parse("2*alpha^3 - 9*alpha^2 + 9*alpha"))
    verdict = is_zero(J - parse("cbrt(2*alpha^3 - 9*alpha^2 + 9*alpha)"), ctx, sampler)
    assert verdict.identically_zero
    assert verdict.mode == FLOAT


def test_pinned_parameters(sampler):
    verdict = is_zero(ALPHA - 2, _ctx(), sampler.with_pins(alpha=2))
    assert verdict.identically_zero
    assert verdict.points_tested == sampler.points


def test_is_constant(sampler):
    assert is_constant(ALPHA ** 2 + 1, _ctx(), sampler).identically_zero
    verdict = is_constant(ALPHA * P, _ctx(), sampler, label="K")
    assert not verdict.identically_zero
    assert verdict.label == "K_p"


def test_seed_determines_witness():
    cfg = SamplerConfig(seed=5)
    first = is_zero(X * U + P, _ctx(), cfg)
    second = is_zero(X * U + P, _ctx(), cfg)
    assert first.witness == second.witness
    assert first.value == second.value


def test_exhausted_resampling_names_condition():
    cfg = SamplerConfig(max_resamples=3)
    with pytest.raises(InconclusiveSamplingError) as info:
        zero_tests([("I11", parse("sqrt(-x^2-1)"))], _ctx(), cfg)
    assert info.value.condition == "I11"
    assert info.value.exit_code == 6


@pytest.mark.parametrize("kwargs", [
    {"points": 0}, {"bound": 0}, {"max_resamples": 0}, {"precision_bits": 32}, {"float_threshold": 0},
])
def test_invalid_sampler_settings(kwargs):
    with pytest.raises(ValueError):
        SamplerConfig(**kwargs)


class TestResampling(unittest.TestCase):
    @patch('linearizer.identity.exact_value')
    def test_singular_points_are_resampled(self, mock_value):
        one = CubicScalar.constant(1, 1)
        mock_value.side_effect = [SingularPointError("pole"), SingularPointError("pole"), one]

        verdict = is_zero(X * U, _ctx(), SamplerConfig(points=1))

        self.assertFalse(verdict.identically_zero)
        self.assertEqual(mock_value.call_count, 3)
        self.assertEqual(verdict.value, one)

    @patch('linearizer.identity.exact_value')
    def test_resample_limit(self, mock_value):
        mock_value.side_effect = SingularPointError("pole")

        with self.assertRaises(InconclusiveSamplingError):
            is_zero(X * U, _ctx(), SamplerConfig(points=1, max_resamples=4))
        self.assertEqual(mock_value.call_count, 4)

    def test_parallel_matches_sequential(self):
        cfg = SamplerConfig()
        named = [("a", X - X * U / U), ("b", X * P), ("c", U - Fraction(1, 2))]
        sequential = zero_tests(named, _ctx(), cfg, jobs=1)
        parallel = zero_tests(named, _ctx(), cfg, jobs=3)
        self.assertEqual([v.outcome for v in sequential], [v.outcome for v in parallel])
        self.assertEqual([v.witness for v in sequential], [v.witness for v in parallel])


def _rational_cases(rng, random_tree, count):
    """J-free rational expressions, about a third of them zero after rewriting."""
    cases = []
    while len(cases) < count:
        e = random_tree(rng, 4, max_power=2)
        try:
            normalize(e)
        except MalformedExpressionError:
            continue
        if rng.random() < 0.35:
            e = sympy.expand(e) - sympy.together(e)
        cases.append(e)
    return cases


@pytest.mark.slow
def test_exact_and_float_modes_agree(random_tree):
    rng = random.Random(17)
    exact_cfg = SamplerConfig(seed=3)
    float_cfg = SamplerConfig(seed=3, force_float=True)
    for e in _rational_cases(rng, random_tree, 200):
        exact = is_zero(e, _ctx(), exact_cfg)
        floating = is_zero(e, _ctx(), float_cfg)
        assert floating.mode == FLOAT
        assert exact.identically_zero == floating.identically_zero, e


@pytest.mark.slow
def test_nonzero_witness_reproduces_value(random_tree):
    rng = random.Random(19)
    ctx = _ctx(i3=U ** 2 - 2 * X + 3 * P)
    leaves = (X, U, P, Q, ALPHA, J)
    found = {EXACT: 0, FLOAT: 0}
    for index in range(60):
        e = random_tree(rng, 3, leaves, max_power=2)
        try:
            reduced = ctx.reduce(e)
        except MalformedExpressionError:
            continue
        cfg = SamplerConfig(seed=index, force_float=index % 2 == 1)
        verdict = is_zero(e, ctx, cfg)
        if verdict.identically_zero:
            continue
        found[verdict.mode] += 1
        if verdict.mode == EXACT:
            again = exact_value(reduced, ctx, verdict.witness)
            assert not again.is_zero()
            assert again == verdict.value
        else:
            again = eval_float(reduced, verdict.witness, cfg.precision_bits, i3=ctx.i3)
            assert abs(again) > 0
            with precision(cfg.precision_bits):
                assert abs(again - verdict.value) <= mpmath.mpf(10) ** -30 * abs(verdict.value)
    assert found[EXACT] > 0 and found[FLOAT] > 0


def test_parallel_float_tests_are_deterministic():
    cfg = SamplerConfig(force_float=True)
    named = [("a", parse("ln(x*p) - ln(x) - ln(p)")), ("b", parse("exp(x)*p")), ("c", parse("cbrt(u) - 1"))]
    sequential = zero_tests(named, _ctx(), cfg, jobs=1)
    parallel = zero_tests(named, _ctx(), cfg, jobs=3)
    assert [v.outcome for v in sequential] == [v.outcome for v in parallel] == ["IdenticallyZero", "NonZero", "NonZero"]
    assert [v.value for v in sequential] == [v.value for v in parallel]
