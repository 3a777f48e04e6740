"""Expression core: symbols of the jet space, rational normal form, substitution
and exact/float evaluation.

Expressions are plain sympy trees. The jet coordinates are the four reserved
symbols ``x, u, p, q``; every other symbol is a free parameter, except ``J``,
the cube-root symbol that the invariant tower uses for J3 = I3^(1/3). At this
layer ``J`` is an ordinary atom: ``J**3`` is never rewritten here.
"""
import logging
import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType
from typing import Callable, Dict, Iterable, Mapping, Optional, Union

import mpmath
import sympy

from .cubic import CubicScalar
from .errors import (
    DomainError,
    MalformedExpressionError,
    SingularPointError,
    UnknownParameterError,
)

logger = logging.getLogger(__name__)

Expr = sympy.Expr
VarId = sympy.Symbol
Number = Union[Fraction, mpmath.mpf, float]

# --- Reserved symbols ---
X, U, P, Q = sympy.symbols("x u p q")
J = sympy.Symbol("J")
JET_VARS = (X, U, P, Q)
RESERVED_NAMES = frozenset({"x", "u", "p", "q", "J"})
FUNCTION_NAMES = frozenset({"ln", "exp", "cbrt", "sqrt"})

_JET_BY_NAME = {str(s): s for s in JET_VARS}

# mpmath keeps its working precision in one global context; every
# high-precision evaluation runs under this lock.
_PRECISION_LOCK = threading.RLock()


@contextmanager
def precision(bits: int):
    """Hold the process-wide precision lock at the given working precision.

    mpmath.workprec only changes the shared context, so two threads may not
    run it side by side. Float evaluations are serialized; worker threads
    overlap the symbolic preparation but not the mpmath arithmetic.
    """
    with _PRECISION_LOCK:
        with mpmath.workprec(bits):
            yield


def var(name: str) -> VarId:
    """Return the symbol for a jet coordinate or a parameter name."""
    if name in _JET_BY_NAME:
        return _JET_BY_NAME[name]
    if name == "J":
        return J
    return parameter(name)


def parameter(name: str) -> VarId:
    if name in RESERVED_NAMES or name in FUNCTION_NAMES:
        raise UnknownParameterError(f"'{name}' is reserved and cannot be used as a parameter")
    if not name.isidentifier():
        raise UnknownParameterError(f"'{name}' is not a valid parameter name")
    return sympy.Symbol(name)


def is_parameter(sym: sympy.Basic) -> bool:
    return isinstance(sym, sympy.Symbol) and sym not in JET_VARS and sym != J


def parameters_of(*exprs: Expr) -> list:
    """Free parameters of the given expressions, sorted by name."""
    found = set()
    for e in exprs:
        found.update(s for s in sympy.sympify(e).free_symbols if is_parameter(s))
    return sorted(found, key=lambda s: s.name)


def is_exact_evaluable(e: Expr) -> bool:
    """True when e is a rational function of symbols (and J) with integer powers only."""
    for node in sympy.preorder_traversal(sympy.sympify(e)):
        if isinstance(node, sympy.Pow):
            if not node.exp.is_Integer:
                return False
        elif isinstance(node, (sympy.exp, sympy.log)):
            return False
        elif isinstance(node, sympy.NumberSymbol):
            return False
        elif isinstance(node, sympy.Function):
            return False
    return True


# --- Normal form ---
def normalize(e) -> Expr:
    """Bring e to rational normal form: one quotient of expanded polynomials.

    Transcendental subterms (ln, exp) and powers with non-integer exponents are
    treated as opaque generators. Sums in exponents are split first so that
    p**(a - 1) and p**a/p share the generator p**a.
    """
    e = sympy.sympify(e)
    if _is_malformed(e):
        raise MalformedExpressionError(f"division by zero in {e}")
    try:
        result = sympy.cancel(sympy.expand_power_exp(e))
    except (ZeroDivisionError, sympy.PolynomialError) as err:
        raise MalformedExpressionError(f"cannot normalize {e}: {err}") from err
    if _is_malformed(result):
        raise MalformedExpressionError(f"division by the zero polynomial in {e}")
    return result


def _is_malformed(e: Expr) -> bool:
    return e.has(sympy.zoo, sympy.nan, sympy.oo, -sympy.oo)


def substitute(e: Expr, bindings: Mapping) -> Expr:
    """Simultaneous substitution followed by normalization.

    Keys may be symbols or names. A parameter key that does not occur in e is
    rejected; jet coordinates may always be bound.
    """
    e = sympy.sympify(e)
    if not bindings:
        return normalize(e)
    resolved = {}
    free = e.free_symbols
    for key, value in bindings.items():
        sym = var(key) if isinstance(key, str) else key
        if is_parameter(sym) and sym not in free:
            raise UnknownParameterError(f"parameter '{sym}' does not occur in {e}")
        resolved[sym] = sympy.sympify(value)
    return normalize(e.xreplace(resolved))


# --- Sample points ---
@dataclass(frozen=True)
class SamplePoint:
    """Assignment of values to jet coordinates and parameters."""
    values: Mapping[VarId, Number]
    mode: str = "exact"

    def __post_init__(self):
        missing = [str(s) for s in JET_VARS if s not in self.values]
        if missing:
            raise ValueError(f"sample point misses jet coordinates: {', '.join(missing)}")
        object.__setattr__(self, "values", MappingProxyType(dict(self.values)))

    @classmethod
    def of(cls, x, u, p, q, mode: str = "exact", **params) -> "SamplePoint":
        values = {X: _as_number(x, mode), U: _as_number(u, mode), P: _as_number(p, mode), Q: _as_number(q, mode)}
        for name, value in params.items():
            values[parameter(name)] = _as_number(value, mode)
        return cls(values, mode)

    def __getitem__(self, sym: VarId) -> Number:
        try:
            return self.values[sym]
        except KeyError:
            raise UnknownParameterError(f"no value assigned to '{sym}'") from None

    def with_values(self, **updates) -> "SamplePoint":
        values = dict(self.values)
        for name, value in updates.items():
            values[var(name)] = _as_number(value, self.mode)
        return SamplePoint(values, self.mode)

    def as_dict(self) -> Dict[str, str]:
        return {str(k): str(v) for k, v in sorted(self.values.items(), key=lambda kv: str(kv[0]))}


def _as_number(value, mode: str) -> Number:
    if mode == "exact":
        return Fraction(value) if not isinstance(value, Fraction) else value
    return value if isinstance(value, (mpmath.mpf, float)) else _to_mpf(Fraction(value))


def _to_mpf(value: Fraction) -> mpmath.mpf:
    return mpmath.mpf(value.numerator) / value.denominator


# --- Exact evaluation ---
def eval_exact(e: Expr, pt: SamplePoint, j_value: Optional[CubicScalar] = None) -> CubicScalar:
    """Evaluate e at pt in the cubic field Q(c), c**3 = v, with J mapped to j_value."""
    radicand = j_value.radicand if j_value is not None else Fraction(1)
    cache: Dict[sympy.Basic, CubicScalar] = {}

    def walk(node):
        if node in cache:
            return cache[node]
        if node.is_Rational:
            result = CubicScalar.constant(Fraction(int(node.p), int(node.q)), radicand)
        elif node == J:
            if j_value is None:
                raise MalformedExpressionError("J needs a field value for exact evaluation")
            result = j_value
        elif node.is_Symbol:
            value = pt[node]
            result = CubicScalar.constant(Fraction(value), radicand)
        elif node.is_Add:
            result = CubicScalar.constant(Fraction(0), radicand)
            for arg in node.args:
                result = result + walk(arg)
        elif node.is_Mul:
            result = CubicScalar.constant(Fraction(1), radicand)
            for arg in node.args:
                result = result * walk(arg)
        elif node.is_Pow and node.exp.is_Integer:
            base = walk(node.base)
            n = int(node.exp)
            if n < 0:
                if base.is_zero():
                    raise SingularPointError(f"denominator {node.base} vanishes")
                base = base.inverse()
            result = base ** abs(n)
        else:
            raise MalformedExpressionError(f"cannot evaluate {node} exactly")
        cache[node] = result
        return result

    return walk(sympy.sympify(e))


# --- Float evaluation ---
def real_cbrt(value):
    """Real cube root, negative radicands allowed."""
    if isinstance(value, mpmath.mpf):
        if value == 0:
            return mpmath.mpf(0)
        return mpmath.cbrt(abs(value)) * (1 if value > 0 else -1)
    if value == 0:
        return 0.0
    return math.copysign(abs(value) ** (1.0 / 3.0), value)


class _MpmathKit:
    name = "mpmath"

    def const(self, value: Fraction):
        return _to_mpf(value)

    def convert(self, value):
        if isinstance(value, Fraction):
            return _to_mpf(value)
        return mpmath.mpf(value)

    def is_zero(self, value) -> bool:
        return value == 0 or abs(value) < mpmath.ldexp(1, -mpmath.mp.prec * 4)

    def log(self, value):
        if value <= 0:
            raise DomainError(f"ln of non-positive value {mpmath.nstr(value, 8)}")
        return mpmath.log(value)

    def exp(self, value):
        return mpmath.exp(value)

    def real_power(self, base, exponent):
        return mpmath.power(base, exponent)

    def rational_root(self, base, num: int, den: int):
        return mpmath.power(abs(base), mpmath.mpf(num) / den)


class _FloatKit:
    name = "float"

    def const(self, value: Fraction):
        return value.numerator / value.denominator

    def convert(self, value):
        return float(value)

    def is_zero(self, value) -> bool:
        return value == 0.0 or abs(value) < 1e-300

    def log(self, value):
        if value <= 0:
            raise DomainError(f"ln of non-positive value {value:.8g}")
        return math.log(value)

    def exp(self, value):
        try:
            return math.exp(value)
        except OverflowError as err:
            raise DomainError(f"exp overflow at {value:.8g}") from err

    def real_power(self, base, exponent):
        return base ** exponent

    def rational_root(self, base, num: int, den: int):
        return abs(base) ** (num / den)


_KITS = {"mpmath": _MpmathKit(), "float": _FloatKit()}

Compiled = Callable[[Mapping[VarId, Number]], Number]


def compile_float(e: Expr, i3: Optional[Expr] = None, backend: str = "mpmath") -> Compiled:
    """Turn e into a closure env -> value on the real branch.

    J evaluates to the real cube root of i3 at the same point. Rational powers
    with odd denominators of negative bases take the real root; other powers of
    negative bases raise DomainError.
    """
    kit = _KITS[backend]
    e = sympy.sympify(e)
    j_fn = None
    if e.has(J):
        if i3 is None:
            raise MalformedExpressionError("J needs I3 for float evaluation")
        i3_fn = _compile_node(sympy.sympify(i3), kit, None)
        j_fn = lambda env: real_cbrt(i3_fn(env))
    return _compile_node(e, kit, j_fn)


def _compile_node(node, kit, j_fn) -> Compiled:
    if node.is_Rational:
        value = Fraction(int(node.p), int(node.q))
        return lambda env: kit.const(value)
    if node == J:
        if j_fn is None:
            raise MalformedExpressionError("J needs I3 for float evaluation")
        return j_fn
    if node.is_Symbol:
        def lookup(env, sym=node):
            try:
                return kit.convert(env[sym])
            except KeyError:
                raise UnknownParameterError(f"no value assigned to '{sym}'") from None
        return lookup
    if node.is_Add:
        parts = [_compile_node(a, kit, j_fn) for a in node.args]
        return lambda env: sum((fn(env) for fn in parts[1:]), parts[0](env))
    if node.is_Mul:
        parts = [_compile_node(a, kit, j_fn) for a in node.args]

        def product(env):
            result = parts[0](env)
            for fn in parts[1:]:
                result = result * fn(env)
            return result
        return product
    if node.is_Pow:
        return _compile_pow(node, kit, j_fn)
    if isinstance(node, sympy.exp):
        arg = _compile_node(node.args[0], kit, j_fn)
        return lambda env: kit.exp(arg(env))
    if isinstance(node, sympy.log):
        arg = _compile_node(node.args[0], kit, j_fn)
        return lambda env: kit.log(arg(env))
    if node == sympy.E:
        return lambda env: kit.exp(kit.const(Fraction(1)))
    raise MalformedExpressionError(f"unsupported node {node.func.__name__} in float evaluation")


def _compile_pow(node, kit, j_fn) -> Compiled:
    base_fn = _compile_node(node.base, kit, j_fn)
    exponent = node.exp
    if exponent.is_Integer:
        n = int(exponent)

        def int_power(env):
            b = base_fn(env)
            if n < 0 and kit.is_zero(b):
                raise SingularPointError(f"denominator {node.base} vanishes")
            return b ** n
        return int_power
    if exponent.is_Rational:
        num, den = int(exponent.p), int(exponent.q)

        def rational_power(env):
            b = base_fn(env)
            if kit.is_zero(b):
                if num < 0:
                    raise SingularPointError(f"denominator {node.base} vanishes")
                return b * 0
            if b > 0:
                return kit.rational_root(b, num, den)
            if den % 2 == 0:
                raise DomainError(f"even root of negative value in {node}")
            sign = -1 if num % 2 else 1
            return sign * kit.rational_root(b, num, den)
        return rational_power
    exp_fn = _compile_node(exponent, kit, j_fn)

    def real_power(env):
        b = base_fn(env)
        t = exp_fn(env)
        if kit.is_zero(b):
            if t <= 0:
                raise SingularPointError(f"{node.base} vanishes under a non-positive power")
            return b * 0
        if b < 0:
            raise DomainError(f"non-rational power of negative value in {node}")
        return kit.real_power(b, t)
    return real_power


def eval_float(e: Expr, pt: SamplePoint, precision_bits: int = 256, i3: Optional[Expr] = None) -> mpmath.mpf:
    """Evaluate e at pt with at least precision_bits of working precision."""
    with precision(precision_bits):
        fn = compile_float(e, i3=i3, backend="mpmath")
        return fn(pt.values)


def evaluate_many(exprs: Iterable[Expr], pt: SamplePoint, precision_bits: int, i3: Optional[Expr] = None) -> list:
    with precision(precision_bits):
        return [compile_float(e, i3=i3)(pt.values) for e in exprs]
