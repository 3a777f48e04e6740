import random
from fractions import Fraction

import pytest
import sympy

from linearizer.calculus import OdeContext, fd_check, partial, rational_cube_root_expr, reduce_mod_j, total_d
from linearizer.errors import MalformedExpressionError
from linearizer.expr import J, P, Q, U, X, SamplePoint, normalize


def test_reduce_mod_j_lowers_degree():
    assert normalize(reduce_mod_j(J ** 4, U) - U * J) == 0
    assert normalize(reduce_mod_j(J ** 5 + J ** 3, U) - (U * J ** 2 + U)) == 0


def test_reduce_mod_j_clears_denominator():
    assert normalize(reduce_mod_j(1 / J, U) - J ** 2 / U) == 0
    reduced = reduce_mod_j(1 / (1 + J), U)
    assert not sympy.fraction(reduced)[1].has(J)
    assert normalize(reduce_mod_j(reduced * (1 + J), U) - 1) == 0


def test_rational_cube_root_expr():
    assert normalize(rational_cube_root_expr(-P ** 3 * Q ** 3) + P * Q) == 0
    assert normalize(rational_cube_root_expr(8 * X ** 3 / 27) - 2 * X / 3) == 0
    assert rational_cube_root_expr(U) is None
    assert rational_cube_root_expr(2 * X ** 3) is None


def test_j_chain_rule():
    ctx = OdeContext.for_equation(U ** 2).with_i3(-2 * U)
    assert normalize(partial(J, U, ctx) - J / (3 * U)) == 0
    assert partial(J, X, ctx) == 0


def test_perfect_cube_substitutes_root():
    ctx = OdeContext.for_equation(X ** 3 * U).with_i3(-X ** 3)
    assert normalize(ctx.j_root + X) == 0
    assert normalize(ctx.j - (-X)) == 0
    assert OdeContext.for_equation(U ** 2).with_i3(-2 * U).j_root is None


def test_total_derivative():
    ctx = OdeContext.for_equation(sympy.Integer(0))
    assert total_d(X * U, ctx) == U + X * P
    f = Q ** 2 / P
    ctx = OdeContext.for_equation(f)
    assert normalize(total_d(Q, ctx) - f) == 0
    assert normalize(total_d(P * Q, ctx) - (Q ** 2 + P * f)) == 0


def test_equation_may_not_contain_j():
    with pytest.raises(ValueError):
        OdeContext.for_equation(J * U)


def _random_polynomial(rng):
    terms = []
    for _ in range(rng.randint(1, 4)):
        coeff = rng.randint(-5, 5) or 1
        terms.append(coeff * X ** rng.randint(0, 2) * U ** rng.randint(0, 2) * P ** rng.randint(0, 2) * Q ** rng.randint(0, 2))
    return sympy.Add(*terms)


@pytest.mark.slow
def test_partials_match_central_differences():
    rng = random.Random(42)
    i3 = 1 + U ** 2 + P ** 2
    ctx = OdeContext.for_equation(Q ** 2 / P).with_i3(i3)
    for _ in range(100):
        num = _random_polynomial(rng) + J * _random_polynomial(rng)
        den = 2 + X ** 2 + Q ** 2 * J ** 2
        e = num / den
        var = rng.choice((X, U, P, Q))
        pt = SamplePoint.of(*(Fraction(rng.randint(10, 20), 10) for _ in range(4)), mode="float")
        assert fd_check(e, var, pt, 1e-30, ctx) < 1e-20


def _j_context():
    return OdeContext.for_equation(Q ** 2 / P + X * U).with_i3(1 + U ** 2 + P ** 2)


def _j_tree(rng, random_tree):
    while True:
        e = random_tree(rng, 3, (X, U, P, Q, J), max_power=2)
        try:
            return normalize(e)
        except MalformedExpressionError:
            continue


@pytest.mark.slow
def test_total_derivative_obeys_leibniz(random_tree):
    rng = random.Random(3)
    ctx = _j_context()
    for _ in range(40):
        g, h = _j_tree(rng, random_tree), _j_tree(rng, random_tree)
        lhs = total_d(g * h, ctx)
        rhs = g * total_d(h, ctx) + h * total_d(g, ctx)
        assert ctx.reduce(lhs - rhs) == 0


@pytest.mark.slow
def test_mixed_partials_commute(random_tree):
    rng = random.Random(4)
    ctx = _j_context()
    for _ in range(40):
        e = _j_tree(rng, random_tree)
        up = partial(partial(e, U, ctx), P, ctx)
        pu = partial(partial(e, P, ctx), U, ctx)
        assert ctx.reduce(up - pu) == 0
