"""Contact transformations: contact condition, prolongation, target check and
residuals of the first-order systems that construct the linearizing map.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import sympy

from .calculus import OdeContext, partial, total_d
from .errors import DegenerateTransformError, InvalidTargetError, UsageError
from .expr import J, P, Q, U, X, Expr, normalize
from .identity import SamplerConfig, ZeroVerdict, zero_tests
from .invariants import InvariantSet, compute_tower

logger = logging.getLogger(__name__)

LINEAR5 = "Linear5"
LINEAR4 = "Linear4"


def _d(e: Expr, v) -> Expr:
    return normalize(sympy.diff(e, v))


def _dx_point(e: Expr) -> Expr:
    """Total derivative of a function of (x, u, p); the f term drops out."""
    return normalize(_d(e, X) + P * _d(e, U) + Q * _d(e, P))


# --- Targets ---
@dataclass(frozen=True)
class TargetForm:
    """u''' = s u' + u (Linear5) or u''' = a(x)^3 u (Linear4), written in the target's own jet coordinates."""
    variant: str
    s: Optional[Expr] = None
    a_bar: Optional[Expr] = None

    @classmethod
    def linear5(cls, s) -> "TargetForm":
        s = normalize(s)
        if s.free_symbols & {X, U, P, Q}:
            raise InvalidTargetError(f"s must be constant, got {s}")
        return cls(LINEAR5, s=s)

    @classmethod
    def linear4(cls, a_bar) -> "TargetForm":
        a_bar = normalize(a_bar)
        if a_bar.free_symbols & {U, P, Q, J}:
            raise InvalidTargetError(f"a(x) may depend on x only, got {a_bar}")
        if _d(a_bar, X) == 0:
            raise InvalidTargetError("a(x) must not be constant for the four-symmetry form")
        target = cls(LINEAR4, a_bar=a_bar)
        if _d(target.k_bar(), X) == 0:
            raise InvalidTargetError(
                f"a(x) = {a_bar} gives a constant invariant K; use the five-symmetry form instead"
            )
        return target

    def equation(self) -> Expr:
        if self.variant == LINEAR5:
            return normalize(self.s * P + U)
        return normalize(self.a_bar ** 3 * U)

    def k_bar(self) -> Expr:
        if self.variant == LINEAR5:
            return self.s
        a = self.a_bar
        a1, a2 = _d(a, X), _d(_d(a, X), X)
        return normalize((2 * a * a2 - 3 * a1 ** 2) / a ** 4)

    def a_at(self, phi: Expr) -> Expr:
        return normalize(self.a_bar.xreplace({X: phi}))

    def fbar_at(self, phi: Expr, psi: Expr, chi: Expr, eta: Expr) -> Expr:
        """Right-hand side of the target evaluated at (x, u, p, q) = (phi, psi, chi, eta)."""
        return normalize(self.equation().xreplace({X: phi, U: psi, P: chi, Q: eta}))


def target_invariants(target: TargetForm) -> Dict[str, Expr]:
    """Closed-form tower values of the target equation in its own coordinates."""
    zero = sympy.S.Zero
    if target.variant == LINEAR5:
        return {"I1": zero, "I2": -target.s, "J3": sympy.S.NegativeOne, "I4": zero,
                "I5": zero, "I7": zero, "Q": zero, "K": target.s}
    a = target.a_bar
    return {"I1": zero, "I2": zero, "J3": -a, "I4": zero, "I5": normalize(-_d(a, X) / a ** 2),
            "I7": zero, "Q": zero, "K": target.k_bar()}


# --- Transformations ---
@dataclass(frozen=True)
class ContactTransform:
    phi: Expr
    psi: Expr
    chi: Expr

    def __post_init__(self):
        for name in ("phi", "psi", "chi"):
            value = normalize(getattr(self, name))
            if value.free_symbols & {Q, J}:
                raise UsageError(f"{name} must be a function of (x, u, p), got {value}")
            object.__setattr__(self, name, value)

    @property
    def lam(self) -> Expr:
        return normalize(_d(self.psi, U) - self.chi * _d(self.phi, U))

    @property
    def eta(self) -> Expr:
        return normalize(_dx_point(self.chi) / _dx_point(self.phi))

    def jacobian(self) -> Expr:
        rows = [[_d(g, v) for v in (X, U, P)] for g in (self.phi, self.psi, self.chi)]
        return normalize(sympy.Matrix(rows).det())


@dataclass(frozen=True)
class ContactCheck:
    verdicts: Dict[str, ZeroVerdict]
    lam: Expr
    is_point: bool

    @property
    def passed(self) -> bool:
        v = self.verdicts
        return (
            v["contact-p"].identically_zero
            and v["contact-x"].identically_zero
            and not v["lambda-nonzero"].identically_zero
            and not v["jacobian-nonzero"].identically_zero
        )

    @property
    def kind(self) -> str:
        return "point" if self.is_point else "contact"


def check_contact(T: ContactTransform, cfg: SamplerConfig, ctx: Optional[OdeContext] = None) -> ContactCheck:
    """Contact condition d(psi) - chi d(phi) = lambda (du - p dx), lambda != 0, Jacobian != 0."""
    ctx = ctx or OdeContext.for_equation(0)
    lam = T.lam
    named = [
        ("contact-p", _d(T.psi, P) - T.chi * _d(T.phi, P)),
        ("contact-x", _d(T.psi, X) - T.chi * _d(T.phi, X) + P * lam),
        ("lambda-nonzero", lam),
        ("jacobian-nonzero", T.jacobian()),
        ("phi_p", _d(T.phi, P)),
        ("psi_p", _d(T.psi, P)),
    ]
    verdicts = dict(zip([n for n, _ in named], zero_tests(named, ctx, cfg)))
    phi_p, psi_p = verdicts.pop("phi_p"), verdicts.pop("psi_p")
    is_point = phi_p.identically_zero and psi_p.identically_zero
    check = ContactCheck(verdicts, lam, is_point)
    logger.info(f"[Transform] contact check {'passed' if check.passed else 'failed'} ({check.kind})")
    return check


@dataclass(frozen=True)
class Prolongation:
    eta: Expr
    fbar_pushed: Expr
    chi_residual: Expr
    chi_verdict: Optional[ZeroVerdict] = None


def prolong(T: ContactTransform, ctx: OdeContext, cfg: Optional[SamplerConfig] = None) -> Prolongation:
    """eta = D chi / D phi and the pushed-forward third derivative D eta / D phi."""
    d_phi = total_d(T.phi, ctx)
    if d_phi == 0:
        raise DegenerateTransformError("D phi vanishes identically")
    eta = ctx.reduce(total_d(T.chi, ctx) / d_phi)
    fbar = ctx.reduce(total_d(eta, ctx) / d_phi)
    chi_residual = ctx.reduce(T.chi - total_d(T.psi, ctx) / d_phi)
    verdict = None
    if cfg is not None:
        verdict = zero_tests([("where-chi", chi_residual)], ctx, cfg)[0]
    return Prolongation(eta, fbar, chi_residual, verdict)


@dataclass(frozen=True)
class TargetCheck:
    contact: ContactCheck
    prolongation: Optional[Prolongation]
    residual: Optional[Expr]
    verdict: Optional[ZeroVerdict]

    @property
    def passed(self) -> bool:
        return self.contact.passed and self.verdict is not None and self.verdict.identically_zero


def verify_target(T: ContactTransform, ctx: OdeContext, target: TargetForm, cfg: SamplerConfig) -> TargetCheck:
    """Push u''' = f through T and compare with the target right-hand side at (phi, psi, chi, eta)."""
    contact = check_contact(T, cfg, ctx)
    if not contact.passed:
        return TargetCheck(contact, None, None, None)
    pro = prolong(T, ctx)
    residual = ctx.reduce(pro.fbar_pushed - target.fbar_at(T.phi, T.psi, T.chi, pro.eta))
    verdict = zero_tests([("target", residual)], ctx, cfg)[0]
    logger.info(f"[Transform] target {target.variant}: {verdict.outcome}")
    return TargetCheck(contact, pro, residual, verdict)


# --- Residual systems ---
@dataclass(frozen=True)
class ResidualReport:
    system: str
    entries: Tuple[Tuple[str, Expr, ZeroVerdict], ...]

    @property
    def passed(self) -> bool:
        return all(v.identically_zero for _, _, v in self.entries)

    def failing(self) -> List[str]:
        return [label for label, _, v in self.entries if not v.identically_zero]

    def __getitem__(self, label: str) -> ZeroVerdict:
        for name, _, verdict in self.entries:
            if name == label:
                return verdict
        raise KeyError(label)


def coframe_system(tower: InvariantSet, H, b, s_bar, fbar, a1, phi, eta, chi, psi) -> List[Tuple[str, Expr]]:
    """Residuals of the a1, phi and (eta, chi, psi) systems for auxiliary data (H, b).

    The five-symmetry construction is H = 0, b = 1 with s_bar = s; the
    four-symmetry construction uses the Riccati solution H, b = a(phi) and
    s_bar = 0.
    """
    t = tower
    ctx = t.ctx
    j = t.J3
    d = lambda e: total_d(e, ctx)
    pd = lambda e, v: partial(e, v, ctx)
    hi5 = H + t.I5
    rows = [
        ("a1.Dx", d(a1) - j * hi5 * a1),
        ("a1.u", pd(a1, U) - (H * t.I7 - t.Q) * a1),
        ("a1.p", pd(a1, P) - (t.I4 * hi5 - t.I7 / j) * a1),
        ("a1.q", pd(a1, Q)),
        ("phi.Dx", d(phi) + j / b),
        ("phi.u", pd(phi, U) + t.I7 / b),
        ("phi.p", pd(phi, P) + t.I4 / b),
        ("eta.Dx", d(eta) + j / b * fbar),
        ("eta.u", pd(eta, U) - ((hi5 ** 2 / 2 + s_bar / 2 + t.I2 / (2 * j ** 2)) * b ** 2 * a1 - t.I7 / b * fbar)),
        ("eta.p", pd(eta, P) - ((hi5 / j + t.I1 / (3 * j ** 2)) * b ** 2 * a1 - t.I4 / b * fbar)),
        ("eta.q", pd(eta, Q) - b ** 2 * a1 / j ** 2),
        ("chi.Dx", d(chi) + j / b * eta),
        ("chi.u", pd(chi, U) + hi5 * b * a1 + t.I7 / b * eta),
        ("chi.p", pd(chi, P) + b * a1 / j + t.I4 / b * eta),
        ("psi.Dx", t.I7 * d(psi) - j * (pd(psi, U) - a1)),
        ("psi.x", pd(psi, X) - chi * pd(phi, X) + P * a1),
        ("psi.p", pd(psi, P) + t.I4 / b * chi),
    ]
    d_phi = d(phi)
    rows += [
        ("where-chi", chi - d(psi) / d_phi),
        ("where-eta", eta - d(chi) / d_phi),
        ("lambda", pd(psi, U) - chi * pd(phi, U) - a1),
    ]
    return [(label, ctx.reduce(expr)) for label, expr in rows]


def _report(system: str, tower: InvariantSet, rows, cfg: SamplerConfig, jobs: int) -> ResidualReport:
    verdicts = zero_tests(rows, tower.ctx, cfg, jobs)
    entries = tuple((label, expr, verdict) for (label, expr), verdict in zip(rows, verdicts))
    report = ResidualReport(system, entries)
    logger.info(f"[Transform] {system} residuals: {'all zero' if report.passed else report.failing()}")
    return report


def residuals_five(f, a1, phi, eta, chi, psi, cfg: SamplerConfig,
                   tower: Optional[InvariantSet] = None, jobs: int = 1) -> ResidualReport:
    """Residuals of the five-symmetry construction with s = K and fbar = s chi + psi."""
    tower = tower or compute_tower(f)
    s = tower.K
    fbar = s * chi + psi
    rows = coframe_system(tower, sympy.S.Zero, sympy.S.One, s, fbar, a1, phi, eta, chi, psi)
    return _report("five-symmetry", tower, rows, cfg, jobs)


def riccati_residual(tower: InvariantSet, H) -> Expr:
    """-(2/J) D H + H^2 - K."""
    ctx = tower.ctx
    return ctx.reduce(-2 / tower.J3 * total_d(H, ctx) + H ** 2 - tower.K)


def b_residual(tower: InvariantSet, H, b) -> Expr:
    ctx = tower.ctx
    return ctx.reduce(total_d(b, ctx) + tower.J3 * H * b)


def residuals_four(f, H, b, a1, phi, eta, chi, psi, a_bar, cfg: SamplerConfig,
                   tower: Optional[InvariantSet] = None, jobs: int = 1) -> ResidualReport:
    """Residuals of the four-symmetry construction with fbar = a(phi)^3 psi."""
    tower = tower or compute_tower(f)
    ctx = tower.ctx
    target = a_bar if isinstance(a_bar, TargetForm) else TargetForm.linear4(a_bar)
    a_phi = target.a_at(phi)
    fbar = a_phi ** 3 * psi
    a_prime_phi = normalize(_d(target.a_bar, X).xreplace({X: phi}))
    k_bar = target.k_bar()
    rows = [
        ("riccati", riccati_residual(tower, H)),
        ("b.Dx", b_residual(tower, H, b)),
    ]
    rows += coframe_system(tower, H, b, sympy.S.Zero, fbar, a1, phi, eta, chi, psi)
    rows += [
        ("K.target", ctx.reduce(tower.K - k_bar.xreplace({X: phi}))),
        ("dK.target", ctx.reduce(total_d(tower.K, ctx) / tower.J3 + _d(k_bar, X).xreplace({X: phi}) / a_phi)),
        ("aux-b", ctx.reduce(b - a_phi)),
        ("aux-H", ctx.reduce(H - a_prime_phi / a_phi ** 2)),
    ]
    return _report("four-symmetry", tower, rows, cfg, jobs)


def auxiliary_from_target(target: TargetForm, phi) -> Tuple[Expr, Expr]:
    """(H, b) implied by a(x): b = a(phi), H = a'(phi) / a(phi)^2."""
    a_phi = target.a_at(phi)
    a_prime_phi = normalize(_d(target.a_bar, X).xreplace({X: phi}))
    return normalize(a_prime_phi / a_phi ** 2), a_phi
