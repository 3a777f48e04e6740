"""The differential-invariant tower of u''' = f(x, u, p, q).

Everything past I3 is expressed through the single cube-root symbol J
(J^3 = I3) and kept reduced modulo J^3 - I3 by the calculus layer.
"""
import logging
import time
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import sympy

from .calculus import OdeContext, partial, total_d
from .errors import WuenschmannZeroError
from .expr import P, Q, U, X, Expr, normalize
from .identity import is_zero

logger = logging.getLogger(__name__)

TOWER_NAMES = (
    "I1", "I2", "I3", "J3", "I4", "I5", "I6", "I7", "I8", "I9",
    "K", "Q", "I10", "I11", "I12", "I13", "I14", "I15",
)
# Relative invariants whose vanishing both branches require, in test order.
SHARED_CONDITIONS = ("I6", "I8", "I10", "I11", "I12")
FOUR_SYMMETRY_CONDITIONS = ("I13", "I14", "I15")


@dataclass(frozen=True)
class InvariantSet:
    ctx: OdeContext
    I1: Expr
    I2: Expr
    I3: Expr
    J3: Expr
    I4: Expr
    I5: Expr
    I6: Expr
    I7: Expr
    I8: Expr
    I9: Expr
    K: Expr
    Q: Expr
    I10: Expr
    I11: Expr
    I12: Expr
    I13: Expr
    I14: Expr
    I15: Expr

    @property
    def f(self) -> Expr:
        return self.ctx.f

    @property
    def s_candidate(self) -> Expr:
        return self.K

    def __getitem__(self, name: str) -> Expr:
        if name not in TOWER_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    def as_dict(self) -> Dict[str, Expr]:
        return {name: getattr(self, name) for name in TOWER_NAMES}

    def has_symbolic_j(self) -> bool:
        return self.ctx.j_root is None


class _Timer:
    def __init__(self):
        self.timings = {}

    def run(self, name, fn):
        start = time.perf_counter()
        value = fn()
        self.timings[name] = time.perf_counter() - start
        logger.debug(f"[Tower] {name} computed in {self.timings[name]:.3f}s")
        return value


def compute_base(f) -> Tuple[Expr, Expr, Expr]:
    """I1, I2 and the Wuenschmann invariant I3, all free of J."""
    ctx = OdeContext.for_equation(f)
    f = ctx.f
    d = lambda e: total_d(e, ctx)
    i1 = normalize(-partial(f, Q, ctx))
    i2 = normalize(-sympy.Rational(2, 9) * i1 ** 2 - partial(f, P, ctx) - d(i1) / 3)
    i3 = normalize(-i1 * i2 / 3 - partial(f, U, ctx) - d(i2) / 2)
    return i1, i2, i3


def compute_tower(f, sampler=None, base: Optional[Tuple[Expr, Expr, Expr]] = None) -> InvariantSet:
    """Build the full tower; raises WuenschmannZeroError when I3 vanishes identically.

    With a sampler configuration the I3 gate also uses the identity tester, so
    that transcendental expressions which are zero but not syntactically zero
    are caught. A caller that already holds (I1, I2, I3) passes it as `base`.
    """
    logger.info(f"[Tower] computing invariants of f = {f}")
    timer = _Timer()
    i1, i2, i3 = base if base is not None else timer.run("I1..I3", lambda: compute_base(f))
    if i3 == 0:
        raise WuenschmannZeroError()
    base_ctx = OdeContext.for_equation(f)
    if sampler is not None:
        if is_zero(i3, base_ctx, sampler, label="I3").identically_zero:
            raise WuenschmannZeroError()

    ctx = base_ctx.with_i3(i3)
    j = ctx.j
    red = ctx.reduce
    d = lambda e: total_d(e, ctx)
    pd = lambda e, v: partial(e, v, ctx)
    if ctx.j_root is not None:
        logger.debug(f"[Tower] I3 is a perfect cube, J3 = {j}")

    i4 = timer.run("I4", lambda: pd(j, Q))
    dj = d(j)
    i5 = timer.run("I5", lambda: red((i1 * j + 3 * dj) / (3 * j ** 2)))
    i6 = timer.run("I6", lambda: red(
        sympy.Rational(2, 3) * i4 * i1 - pd(i1, Q) * j / 3 - 2 * pd(j, P) + 2 * j * i4 * i5
    ))
    i7 = timer.run("I7", lambda: red(-pd(i5, Q) * j ** 2))
    i8 = timer.run("I8", lambda: pd(i4, Q))
    d_i5 = d(i5)
    i9 = timer.run("I9", lambda: red(2 * j * d_i5 - i2 + j ** 2 * i5 ** 2))
    k = timer.run("K", lambda: red(i9 / j ** 2))
    j_u = pd(j, U)
    q_inv = timer.run("Q", lambda: red(
        -(i1 * i7 + 3 * j ** 2 * pd(i5, P) + 3 * j_u - 3 * j * i4 * d_i5) / (3 * j)
    ))
    d_i7 = d(i7)
    i10 = timer.run("I10", lambda: red(i4 * d_i7 - j * pd(i7, P) + j ** 2 * pd(i4 / j, U)))
    i11 = timer.run("I11", lambda: red(j_u - d_i7))
    i12 = timer.run("I12", lambda: red(
        6 * i1 * j * (i5 * i7 - i4 * d_i5)
        - 18 * j ** 3 * i4
        + 6 * pd(i5, P) * i1 * j ** 2
        - 18 * i2 * j * i4 * i5
        - 18 * j * i7 * d_i5
        + 18 * j ** 2 * pd(i5, U)
        + 18 * i2 * d(i4)
        + 2 * i1 ** 2 * i7
        - 9 * pd(i2, P) * j
        + 6 * j ** 2 * pd(i1 / j, U)
        + 36 * i2 * i7
    ))
    d_k = d(k)
    k_p = pd(k, P)
    i13 = timer.run("I13", lambda: red((j * i4 * i5 - i7) * d_k + j * pd(k, U) - j ** 2 * i5 * k_p))
    i14 = timer.run("I14", lambda: pd(k, Q))
    i15 = timer.run("I15", lambda: red(i4 * d_k - j * k_p))
    total = sum(timer.timings.values())
    logger.info(f"[Tower] finished in {total:.2f}s")
    return InvariantSet(
        ctx=ctx, I1=i1, I2=i2, I3=i3, J3=j, I4=i4, I5=i5, I6=i6, I7=i7, I8=i8, I9=i9,
        K=k, Q=q_inv, I10=i10, I11=i11, I12=i12, I13=i13, I14=i14, I15=i15,
    )


def k_partials(tower: InvariantSet) -> Dict[str, Expr]:
    """K_x, K_u, K_p, K_q; K_q is the same expression as I14."""
    return {f"K_{v}": partial(tower.K, v, tower.ctx) for v in (X, U, P, Q)}


def coframe_matrix(tower: InvariantSet, a1=1) -> sympy.Matrix:
    """Lifted invariant coframe against (du - p dx, dp - q dx, dq - f dx, dx, da1)."""
    t = tower
    j = t.J3
    a1 = sympy.sympify(a1)
    rows = [
        [a1, 0, 0, 0, 0],
        [a1 * t.I5, a1 / j, 0, 0, 0],
        [(t.I5 ** 2 / 2 + t.I2 / (2 * j ** 2)) * a1, (t.I5 / j + t.I1 / (3 * j ** 2)) * a1, a1 / j ** 2, 0, 0],
        [t.I7, t.I4, 0, j, 0],
        [t.Q, t.I7 / j - t.I4 * t.I5, 0, -t.I5 * j, 1 / a1],
    ]
    return sympy.Matrix([[t.ctx.reduce(entry) for entry in row] for row in rows])


def invariant_derivation(tower: InvariantSet, e, index: int, a1=1) -> Expr:
    """Apply the vector field dual to the index-th coframe element to e(x, u, p, q)."""
    t = tower
    ctx = t.ctx
    j = t.J3
    a1 = sympy.sympify(a1)
    pd = lambda v: partial(e, v, ctx)
    if index == 1:
        result = (
            (j * t.I4 * t.I5 - t.I7) / (j * a1) * total_d(e, ctx)
            + pd(U) / a1
            - j * t.I5 / a1 * pd(P)
            + (3 * j ** 3 * t.I5 ** 2 + 2 * j ** 2 * t.I1 * t.I5 - 3 * t.I2 * j) / (6 * a1 * j) * pd(Q)
        )
    elif index == 2:
        result = (
            -t.I4 / a1 * total_d(e, ctx)
            + j / a1 * pd(P)
            - (3 * j ** 2 * t.I5 + j * t.I1) / (3 * a1) * pd(Q)
        )
    elif index == 3:
        result = j ** 2 / a1 * pd(Q)
    elif index == 4:
        result = total_d(e, ctx) / j
    else:
        raise ValueError(f"invariant derivations are indexed 1..4, got {index}")
    return ctx.reduce(result)


def classifying_set(tower: InvariantSet) -> Tuple[Expr, Expr]:
    """First-order classifying set (K, dK/dtheta4) of the four-symmetry branch."""
    return tower.K, invariant_derivation(tower, tower.K, 4)
