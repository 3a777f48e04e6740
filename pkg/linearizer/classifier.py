"""Decision tree for contact linearization to the five- and four-symmetry forms."""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import sympy

from .calculus import OdeContext, partial, total_d
from .expr import J, P, Q, U, X, Expr, parameters_of
from .identity import EXACT, FLOAT, SamplerConfig, ZeroVerdict, zero_tests
from .invariants import FOUR_SYMMETRY_CONDITIONS, SHARED_CONDITIONS, InvariantSet, compute_base, compute_tower

logger = logging.getLogger(__name__)

FIVE_SYMMETRY = "FiveSymmetryLinearizable"
FOUR_SYMMETRY = "FourSymmetryLinearizable"
WUENSCHMANN_ZERO = "WuenschmannZero"
OUTSIDE_SCOPE = "OutsideScope"

EXIT_CODES = {FIVE_SYMMETRY: 0, FOUR_SYMMETRY: 0, WUENSCHMANN_ZERO: 3, OUTSIDE_SCOPE: 4}


@dataclass(frozen=True)
class Classification:
    outcome: str
    conditions: Tuple[Tuple[str, ZeroVerdict], ...]
    f: Expr
    tower: Optional[InvariantSet] = None
    s: Optional[Expr] = None
    K: Optional[Expr] = None
    dK_witness: Optional[ZeroVerdict] = None
    first_failing: Optional[str] = None
    witness: Optional[ZeroVerdict] = None
    parameters: Tuple[str, ...] = field(default_factory=tuple)
    seed: int = 0

    @property
    def mode(self) -> str:
        if any(v.mode == FLOAT for _, v in self.conditions):
            return FLOAT
        return EXACT

    @property
    def linearizable(self) -> bool:
        return self.outcome in (FIVE_SYMMETRY, FOUR_SYMMETRY)

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.outcome]

    def verdict(self, name: str) -> ZeroVerdict:
        for cond, verdict in self.conditions:
            if cond == name:
                return verdict
        raise KeyError(name)


def s_as_radical(tower: InvariantSet) -> Expr:
    """K with J written as the real cube root of I3, radicals split over factors."""
    k = tower.K
    if not k.has(J):
        return k
    root = sympy.Pow(sympy.factor(tower.I3), sympy.Rational(1, 3))
    value = sympy.powdenest(sympy.expand_power_base(k.xreplace({J: root}), force=True), force=True)
    return sympy.powsimp(sympy.factor_terms(value), force=True)


def classify(f, cfg: SamplerConfig, jobs: int = 1) -> Classification:
    """Run the branch tests in order: I3 gate, shared invariants, K constancy, four-symmetry set."""
    conditions: List[Tuple[str, ZeroVerdict]] = []
    base_ctx = OdeContext.for_equation(f)
    f = base_ctx.f
    params = tuple(s.name for s in parameters_of(f))

    base = compute_base(f)
    i3 = base[2]
    i3_verdict = zero_tests([("I3", i3)], base_ctx, cfg, 1)[0]
    conditions.append(("I3", i3_verdict))
    if i3_verdict.identically_zero:
        logger.info("[Classifier] I3 vanishes identically")
        return Classification(WUENSCHMANN_ZERO, tuple(conditions), f, parameters=params, seed=cfg.seed)

    tower = compute_tower(f, base=base)
    ctx = tower.ctx

    def outside(name: str, verdict: ZeroVerdict) -> Classification:
        logger.info(f"[Classifier] outside scope at condition {name}")
        return Classification(
            OUTSIDE_SCOPE, tuple(conditions), f, tower=tower, K=tower.K,
            first_failing=name, witness=verdict, parameters=params, seed=cfg.seed,
        )

    shared = zero_tests([(name, tower[name]) for name in SHARED_CONDITIONS], ctx, cfg, jobs)
    for name, verdict in zip(SHARED_CONDITIONS, shared):
        conditions.append((name, verdict))
        if not verdict.identically_zero:
            return outside(name, verdict)

    k_names = [f"K_{v}" for v in (X, U, P, Q)]
    k_verdicts = zero_tests(
        [(name, partial(tower.K, v, ctx)) for name, v in zip(k_names, (X, U, P, Q))], ctx, cfg, jobs
    )
    conditions.extend(zip(k_names, k_verdicts))
    if all(v.identically_zero for v in k_verdicts):
        logger.info(f"[Classifier] five-symmetry linearizable, s = {tower.K}")
        return Classification(
            FIVE_SYMMETRY, tuple(conditions), f, tower=tower, s=tower.K, K=tower.K,
            parameters=params, seed=cfg.seed,
        )

    four = zero_tests([(name, tower[name]) for name in FOUR_SYMMETRY_CONDITIONS], ctx, cfg, jobs)
    for name, verdict in zip(FOUR_SYMMETRY_CONDITIONS, four):
        conditions.append((name, verdict))
        if not verdict.identically_zero:
            return outside(name, verdict)
    dk_verdict = zero_tests([("DxK", total_d(tower.K, ctx))], ctx, cfg, 1)[0]
    conditions.append(("DxK", dk_verdict))
    if dk_verdict.identically_zero:
        return outside("DxK", dk_verdict)
    logger.info(f"[Classifier] four-symmetry linearizable, K = {tower.K}")
    return Classification(
        FOUR_SYMMETRY, tuple(conditions), f, tower=tower, K=tower.K, dK_witness=dk_verdict,
        parameters=params, seed=cfg.seed,
    )


def condition_table(result: Classification) -> List[Dict]:
    rows = []
    for name, verdict in result.conditions:
        row = {"name": name}
        row.update(verdict.to_dict())
        rows.append(row)
    return rows
