"""Decide "vanishes identically" and "is constant" by random evaluation.

Rational expressions are evaluated exactly in the cubic field generated by
J = I3^(1/3) at each sample point; expressions with ln/exp atoms or
non-integer powers fall back to high-precision floats.
"""
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

import mpmath
import sympy
from tenacity import RetryError, Retrying, retry_if_exception_type, stop_after_attempt

from .calculus import OdeContext, partial
from .cubic import CubicScalar
from .errors import DomainError, InconclusiveSamplingError, SingularPointError
from .expr import (
    JET_VARS,
    J,
    P,
    Q,
    U,
    X,
    Expr,
    SamplePoint,
    compile_float,
    eval_exact,
    is_exact_evaluable,
    parameters_of,
    precision,
)

logger = logging.getLogger(__name__)

EXACT = "exact"
FLOAT = "float"


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 0
    points: int = 8
    bound: int = 10_000
    max_resamples: int = 50
    precision_bits: int = 256
    float_threshold: float = 1e-40
    float_range: int = 3
    pinned: Mapping[str, Fraction] = field(default_factory=dict)
    force_float: bool = False

    def __post_init__(self):
        if self.points < 1:
            raise ValueError(f"points must be at least 1, got {self.points}")
        if self.bound < 1:
            raise ValueError(f"sample bound must be positive, got {self.bound}")
        if self.max_resamples < 1:
            raise ValueError(f"max resamples must be positive, got {self.max_resamples}")
        if self.precision_bits < 64:
            raise ValueError(f"precision must be at least 64 bits, got {self.precision_bits}")
        if self.float_threshold <= 0 or self.float_range <= 0:
            raise ValueError("float threshold and range must be positive")

    def with_seed(self, seed: int) -> "SamplerConfig":
        return replace(self, seed=seed)

    def with_pins(self, **pins) -> "SamplerConfig":
        merged = dict(self.pinned)
        merged.update({k: Fraction(v) for k, v in pins.items()})
        return replace(self, pinned=merged)


@dataclass(frozen=True)
class ZeroVerdict:
    """IdenticallyZero (witness is None) or NonZero with the witnessing point."""
    identically_zero: bool
    mode: str
    points_tested: int
    witness: Optional[SamplePoint] = None
    value: Any = None
    label: Optional[str] = None

    @property
    def outcome(self) -> str:
        return "IdenticallyZero" if self.identically_zero else "NonZero"

    def labelled(self, label: str) -> "ZeroVerdict":
        return ZeroVerdict(self.identically_zero, self.mode, self.points_tested, self.witness, self.value, label)

    def to_dict(self) -> Dict[str, Any]:
        data = {"verdict": self.outcome, "mode": self.mode, "points_tested": self.points_tested}
        if self.witness is not None:
            data["witness"] = self.witness.as_dict()
            data["value"] = format_value(self.value)
        if self.label:
            data["component"] = self.label
        return data


def format_value(value) -> str:
    if isinstance(value, CubicScalar):
        return str(value)
    if isinstance(value, mpmath.mpf):
        return mpmath.nstr(value, 20)
    return str(value)


# --- Sampling ---
class PointSampler:
    """Seeded generator of distinct sample points avoiding p = 0 and q = 0."""

    def __init__(self, cfg: SamplerConfig, parameters, mode: str):
        self.cfg = cfg
        self.mode = mode
        self.rng = random.Random(cfg.seed)
        self.variables = list(JET_VARS) + [s for s in parameters if s.name not in cfg.pinned]
        self.pinned = {sympy.Symbol(name): Fraction(value) for name, value in cfg.pinned.items()}
        self.seen = set()

    def _draw_value(self) -> Fraction:
        bound = self.cfg.bound
        if self.mode == EXACT:
            return Fraction(self.rng.randint(-bound, bound), self.rng.randint(1, bound))
        span = self.cfg.float_range * bound
        return Fraction(self.rng.randint(-span, span), bound)

    def draw(self) -> SamplePoint:
        while True:
            values = {s: self._draw_value() for s in self.variables}
            if values[P] == 0 or values[Q] == 0:
                continue
            key = tuple(values[s] for s in self.variables)
            if key in self.seen:
                continue
            self.seen.add(key)
            values.update(self.pinned)
            if self.mode == FLOAT:
                values = {k: mpmath.mpf(v.numerator) / v.denominator for k, v in values.items()}
            return SamplePoint(values, self.mode)


def _sample(sampler: PointSampler, evaluate: Callable[[SamplePoint], Any], cfg: SamplerConfig, label: Optional[str]):
    """Draw points until evaluate succeeds, resampling on singular or out-of-domain points."""

    def attempt():
        pt = sampler.draw()
        return pt, evaluate(pt)

    retryer = Retrying(
        stop=stop_after_attempt(cfg.max_resamples),
        retry=retry_if_exception_type((SingularPointError, DomainError)),
        after=lambda state: logger.debug(
            f"[Identity] resampling {label or 'expression'} after attempt {state.attempt_number}"
        ),
    )
    try:
        return retryer(attempt)
    except RetryError as err:
        cause = err.last_attempt.exception()
        raise InconclusiveSamplingError(
            f"all {cfg.max_resamples} resamples hit singular loci ({cause})", condition=label
        ) from err


# --- Evaluation at a point ---
def choose_mode(e: Expr, ctx: OdeContext, cfg: SamplerConfig) -> str:
    if cfg.force_float:
        return FLOAT
    if not is_exact_evaluable(e):
        return FLOAT
    if ctx.i3 is not None and not is_exact_evaluable(ctx.i3):
        return FLOAT
    return EXACT


def exact_value(e: Expr, ctx: OdeContext, pt: SamplePoint) -> CubicScalar:
    """Value of e at pt in Q(c), c^3 = I3(pt)."""
    j_value = None
    if ctx.i3 is not None:
        v = eval_exact(ctx.i3, pt)
        if v.is_zero():
            raise SingularPointError("I3 vanishes at the sample point")
        if e.has(J):
            j_value = CubicScalar.generator(v.a)
    return eval_exact(e, pt, j_value)


def float_evaluator(e: Expr, ctx: OdeContext, cfg: SamplerConfig) -> Callable[[SamplePoint], Tuple[mpmath.mpf, mpmath.mpf]]:
    """Compile e into pt -> (value, scale); the zero test is relative to scale."""
    num, den = sympy.fraction(e)
    terms = sympy.Add.make_args(sympy.expand(num))
    term_fns = [compile_float(t, i3=ctx.i3) for t in terms]
    den_fn = compile_float(den, i3=ctx.i3)
    i3_fn = compile_float(ctx.i3) if ctx.i3 is not None else None

    def evaluate(pt: SamplePoint):
        with precision(cfg.precision_bits):
            if i3_fn is not None and abs(i3_fn(pt.values)) < mpmath.ldexp(1, -cfg.precision_bits // 2):
                raise SingularPointError("I3 vanishes at the sample point")
            d = den_fn(pt.values)
            if d == 0:
                raise SingularPointError(f"denominator of {e} vanishes")
            values = [fn(pt.values) for fn in term_fns]
            total = mpmath.fsum(values)
            scale = max(abs(v) for v in values) / abs(d)
            return total / d, scale
    return evaluate


def float_value(e: Expr, ctx: OdeContext, pt: SamplePoint, cfg: SamplerConfig) -> Tuple[mpmath.mpf, mpmath.mpf]:
    return float_evaluator(e, ctx, cfg)(pt)


def is_zero(e: Expr, ctx: OdeContext, cfg: SamplerConfig, label: Optional[str] = None) -> ZeroVerdict:
    """Test whether e vanishes identically on the jet space (generic parameters)."""
    e = ctx.reduce(e)
    mode = choose_mode(e, ctx, cfg)
    if e == 0:
        return ZeroVerdict(True, mode, 0, label=label)
    parameters = parameters_of(e, ctx.i3 if ctx.i3 is not None else 0)
    sampler = PointSampler(cfg, parameters, mode)
    if mode == EXACT:
        def evaluate(pt):
            return exact_value(e, ctx, pt)
    else:
        evaluate = float_evaluator(e, ctx, cfg)

    for tested in range(1, cfg.points + 1):
        pt, result = _sample(sampler, evaluate, cfg, label)
        if mode == EXACT:
            if not result.is_zero():
                logger.info(f"[Identity] {label or 'expression'} is nonzero at {pt.as_dict()}")
                return ZeroVerdict(False, mode, tested, pt, result, label)
        else:
            value, scale = result
            if abs(value) > cfg.float_threshold * scale:
                logger.info(f"[Identity] {label or 'expression'} is nonzero at {pt.as_dict()} (float)")
                return ZeroVerdict(False, mode, tested, pt, value, label)
    logger.debug(f"[Identity] {label or 'expression'} vanished at {cfg.points} {mode} points")
    return ZeroVerdict(True, mode, cfg.points, label=label)


def is_constant(e: Expr, ctx: OdeContext, cfg: SamplerConfig, label: Optional[str] = None) -> ZeroVerdict:
    """Constant iff all four jet partials vanish; the first nonzero partial supplies the witness."""
    name = label or "expression"
    mode = None
    tested = 0
    for var in (X, U, P, Q):
        verdict = is_zero(partial(e, var, ctx), ctx, cfg, label=f"{name}_{var}")
        mode = verdict.mode if mode in (None, EXACT) else mode
        tested += verdict.points_tested
        if not verdict.identically_zero:
            return verdict
    return ZeroVerdict(True, mode or EXACT, tested, label=label)


def zero_tests(named, ctx: OdeContext, cfg: SamplerConfig, jobs: int = 1) -> list:
    """Zero-test (name, expression) pairs; an inconclusive test names its condition.

    With jobs > 1 the pairs run on a thread pool. Float-mode evaluations still
    take turns on the precision lock, so results are identical to a sequential
    run and the gain is limited to the symbolic work.
    """

    def run(item):
        name, expr = item
        try:
            return is_zero(expr, ctx, cfg, label=name)
        except InconclusiveSamplingError as err:
            if err.condition is None:
                raise err.with_condition(name) from err
            raise

    named = list(named)
    if jobs <= 1 or len(named) <= 1:
        return [run(item) for item in named]
    with ThreadPoolExecutor(max_workers=jobs, thread_name_prefix="zero-test") as executor:
        return list(executor.map(run, named))
