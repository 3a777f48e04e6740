"""Partial and total derivatives on the second-order jet space (x, u, p, q).

The cube-root symbol J stands for I3^(1/3) and differentiates by the chain
rule dJ/dv = (dI3/dv) / (3 J^2). Results are kept reduced modulo J^3 - I3 so
that J never appears with degree above two and never in a denominator.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import mpmath
import sympy

from .expr import JET_VARS, J, P, Q, U, X, Expr, SamplePoint, VarId, compile_float, normalize, precision

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OdeContext:
    """Right-hand side f of u''' = f together with the cached Wuenschmann invariant."""
    f: Expr
    i3: Optional[Expr] = None
    j_rewrite_enabled: bool = True
    j_root: Optional[Expr] = None

    @classmethod
    def for_equation(cls, f) -> "OdeContext":
        f = normalize(f)
        stray = f.free_symbols & {J}
        if stray:
            raise ValueError("the right-hand side may not contain J")
        return cls(f)

    def with_i3(self, i3: Expr) -> "OdeContext":
        i3 = normalize(i3)
        return replace(self, i3=i3, j_root=rational_cube_root_expr(i3))

    @property
    def j(self) -> Expr:
        """J itself, or the rational cube root of I3 when I3 is a perfect cube."""
        return self.j_root if self.j_root is not None else J

    def prepare(self, e) -> Expr:
        e = sympy.sympify(e)
        if self.j_root is not None and e.has(J):
            e = e.xreplace({J: self.j_root})
        return e

    def reduce(self, e) -> Expr:
        e = normalize(self.prepare(e))
        if self.j_rewrite_enabled and self.i3 is not None and e.has(J):
            return reduce_mod_j(e, self.i3)
        return e

    def dj(self, v: VarId) -> Expr:
        if self.i3 is None:
            raise ValueError("I3 must be cached before differentiating J")
        return sympy.diff(self.i3, v) / (3 * J ** 2)


# --- J arithmetic ---
def rational_cube_root_expr(e: Expr) -> Optional[Expr]:
    """Return r with r**3 == e when e is the cube of a rational function, else None."""
    e = normalize(e)
    if e == 0:
        return None
    num, den = sympy.fraction(e)
    roots = []
    for part in (num, den):
        try:
            coeff, factors = sympy.factor_list(part)
        except (sympy.PolynomialError, sympy.GeneratorsNeeded, NotImplementedError):
            return None
        if any(mult % 3 for _, mult in factors):
            return None
        if not coeff.is_Rational:
            return None
        c_root = _rational_cbrt(sympy.Rational(coeff))
        if c_root is None:
            return None
        roots.append(c_root * sympy.Mul(*[base ** (mult // 3) for base, mult in factors]))
    return normalize(roots[0] / roots[1])


def _rational_cbrt(c: sympy.Rational) -> Optional[sympy.Rational]:
    num_root, num_exact = sympy.integer_nthroot(abs(int(c.p)), 3)
    den_root, den_exact = sympy.integer_nthroot(int(c.q), 3)
    if not (num_exact and den_exact):
        return None
    root = sympy.Rational(int(num_root), int(den_root))
    return -root if c < 0 else root


def _j_coefficients(poly_expr: Expr, i3: Expr) -> Tuple[Expr, Expr, Expr]:
    """Coefficients (c0, c1, c2) of poly_expr reduced modulo J^3 - i3."""
    coeffs = [sympy.S.Zero, sympy.S.Zero, sympy.S.Zero]
    for (k,), coeff in sympy.Poly(sympy.expand(poly_expr), J).terms():
        coeffs[k % 3] += coeff * i3 ** (k // 3)
    return tuple(coeffs)


def reduce_mod_j(e: Expr, i3: Expr) -> Expr:
    """Rewrite e so that J appears with degree < 3 and only in the numerator."""
    e = normalize(e)
    if not e.has(J):
        return e
    num, den = sympy.fraction(e)
    n0, n1, n2 = _j_coefficients(num, i3)
    if den.has(J):
        d0, d1, d2 = _j_coefficients(den, i3)
        v = i3
        # multiply through by the adjugate of d0 + d1 J + d2 J^2
        a0 = d0 ** 2 - v * d1 * d2
        a1 = v * d2 ** 2 - d0 * d1
        a2 = d1 ** 2 - d0 * d2
        norm = d0 ** 3 + v * d1 ** 3 + v ** 2 * d2 ** 3 - 3 * v * d0 * d1 * d2
        product = (n0 + n1 * J + n2 * J ** 2) * (a0 + a1 * J + a2 * J ** 2)
        n0, n1, n2 = _j_coefficients(product, i3)
        den = norm
    return normalize((n0 + n1 * J + n2 * J ** 2) / den)


# --- Derivatives ---
def _raw_partial(e: Expr, v: VarId, ctx: OdeContext) -> Expr:
    result = sympy.diff(e, v)
    if e.has(J):
        result = result + sympy.diff(e, J) * ctx.dj(v)
    return result


def partial(e, v: VarId, ctx: OdeContext) -> Expr:
    """Partial derivative on the jet space with the chain rule for J."""
    e = ctx.prepare(e)
    return ctx.reduce(_raw_partial(e, v, ctx))


def total_d(e, ctx: OdeContext) -> Expr:
    """D = d/dx + p d/du + q d/dp + f d/dq, normalized."""
    e = ctx.prepare(e)
    raw = (
        _raw_partial(e, X, ctx)
        + P * _raw_partial(e, U, ctx)
        + Q * _raw_partial(e, P, ctx)
        + ctx.f * _raw_partial(e, Q, ctx)
    )
    return ctx.reduce(raw)


def fd_check(e, v: VarId, pt: SamplePoint, h: float, ctx: OdeContext, precision_bits: int = 256) -> float:
    """Relative error between the symbolic partial and a central difference."""
    e = ctx.prepare(e)
    derivative = compile_float(partial(e, v, ctx), i3=ctx.i3)
    fn = compile_float(e, i3=ctx.i3)
    with precision(precision_bits):
        env = {k: _mpf(val) for k, val in pt.values.items()}
        symbolic = derivative(env)
        step = mpmath.mpf(h)
        forward = dict(env)
        forward[v] = env[v] + step
        backward = dict(env)
        backward[v] = env[v] - step
        numeric = (fn(forward) - fn(backward)) / (2 * step)
        return float(abs(symbolic - numeric) / max(mpmath.mpf(1), abs(symbolic)))


def _mpf(value) -> mpmath.mpf:
    if hasattr(value, "numerator") and hasattr(value, "denominator") and not isinstance(value, mpmath.mpf):
        return mpmath.mpf(value.numerator) / value.denominator
    return mpmath.mpf(value)

