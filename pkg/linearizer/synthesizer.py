"""Numeric reconstruction of linearizing transformations.

The first-order systems for (a1, phi, eta, chi, psi) are linear total
differential systems whose coefficients are built from the invariant tower.
They are integrated along axis-parallel paths in (x, u, p) on the slice
q = q_ref, starting from fixed gauge constants at a base point.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import mpmath
import numpy as np
import sympy
from scipy.integrate import solve_ivp

from .calculus import OdeContext, partial
from .classifier import FIVE_SYMMETRY, FOUR_SYMMETRY, classify
from .errors import (
    ClassificationMismatchError,
    DomainError,
    PathError,
    RejectedAnsatzError,
    SingularPointError,
    StepSizeUnderflowError,
    UsageError,
)
from .expr import P, Q, U, X, Expr, compile_float, normalize, parameters_of, precision
from .identity import SamplerConfig, ZeroVerdict, zero_tests
from .invariants import InvariantSet
from .transform import ContactTransform, b_residual, riccati_residual

logger = logging.getLogger(__name__)

AXES = (X, U, P)
AXIS_NAMES = {"x": X, "u": U, "p": P}
COMPONENTS = ("a1", "phi", "eta", "chi", "psi")
DEFAULT_GAUGE = (1.0, 0.0, 0.0, 0.0, 0.0)

_EVAL_ERRORS = (SingularPointError, DomainError, ZeroDivisionError, OverflowError, ValueError)


@dataclass(frozen=True)
class SynthesisOptions:
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    q_ref: float = 1.0
    rtol: float = 1e-12
    atol: float = 1e-14
    quad_dps: int = 30
    fd_step: float = 1e-4
    order: str = "xup"
    swap_check: bool = False
    quadrature_nodes: int = 8
    jobs: int = 1

    def __post_init__(self):
        if sorted(self.order) != ["p", "u", "x"]:
            raise UsageError(f"path order must be a permutation of 'xup', got '{self.order}'")
        if self.q_ref == 0:
            raise UsageError("the reference slice q = 0 is singular")
        if self.rtol <= 0 or self.atol <= 0 or self.fd_step <= 0:
            raise UsageError("integration tolerances and the difference step must be positive")

    @property
    def pins(self) -> Dict[sympy.Symbol, Fraction]:
        return {sympy.Symbol(name): value for name, value in self.sampler.pinned.items()}

    @property
    def quad_bits(self) -> int:
        return int(self.quad_dps * 3.33) + 16


@dataclass(frozen=True)
class GridSpec:
    nodes: Tuple[int, int, int] = (5, 5, 5)
    half_width: Tuple[float, float, float] = (0.5, 0.5, 0.5)

    def __post_init__(self):
        if len(self.nodes) != 3 or len(self.half_width) != 3:
            raise UsageError("grid needs three node counts and three half-widths")
        if any(n < 1 for n in self.nodes):
            raise UsageError(f"node counts must be positive, got {self.nodes}")
        if any(w <= 0 for w in self.half_width):
            raise UsageError(f"half-widths must be positive, got {self.half_width}")

    @classmethod
    def cube(cls, nodes: int = 5, half_width: float = 0.5) -> "GridSpec":
        return cls((nodes,) * 3, (half_width,) * 3)

    def axis_values(self, base: Sequence[float]) -> Dict[sympy.Symbol, np.ndarray]:
        values = {}
        for axis, centre, n, w in zip(AXES, base, self.nodes, self.half_width):
            values[axis] = np.array([centre]) if n == 1 else np.linspace(centre - w, centre + w, n)
        return values


# --- Gradient fields ---
@dataclass(frozen=True)
class GradientField:
    """(g_x, g_u, g_p) of a potential in (x, u, p); q may appear only formally."""
    label: str
    gx: Expr
    gu: Expr
    gp: Expr
    ctx: OdeContext = field(default_factory=lambda: OdeContext.for_equation(0))

    def component(self, axis) -> Expr:
        return {X: self.gx, U: self.gu, P: self.gp}[axis]


@dataclass(frozen=True)
class ExactnessCheck:
    label: str
    verdicts: Tuple[Tuple[str, ZeroVerdict], ...]

    @property
    def exact(self) -> bool:
        return all(v.identically_zero for _, v in self.verdicts)


def exactness_check(g: GradientField, cfg: SamplerConfig) -> ExactnessCheck:
    """Zero-test the three mixed-partial differences of g."""
    ctx = g.ctx
    pd = lambda e, v: partial(e, v, ctx)
    named = [
        ("curl-xu", pd(g.gx, U) - pd(g.gu, X)),
        ("curl-xp", pd(g.gx, P) - pd(g.gp, X)),
        ("curl-up", pd(g.gu, P) - pd(g.gp, U)),
    ]
    verdicts = zero_tests(named, ctx, cfg)
    check = ExactnessCheck(g.label, tuple((name, v) for (name, _), v in zip(named, verdicts)))
    logger.info(f"[Synthesizer] gradient {g.label} is {'exact' if check.exact else 'not exact'}")
    return check


def q_independence(g: GradientField, cfg: SamplerConfig) -> List[ZeroVerdict]:
    named = [(f"{g.label}.{axis}_q", partial(g.component(axis), Q, g.ctx)) for axis in AXES]
    return zero_tests(named, g.ctx, cfg)


def _base_env(options: SynthesisOptions, coords: Mapping, backend: str) -> Dict:
    env = {Q: options.q_ref}
    env.update(coords)
    for sym, value in options.pins.items():
        env[sym] = float(value) if backend == "float" else mpmath.mpf(value.numerator) / value.denominator
    return env


def integrate_gradient(g: GradientField, base: Sequence[float], target: Sequence[float],
                       options: SynthesisOptions, order: Optional[str] = None) -> mpmath.mpf:
    """Line integral of g from base to target along axis-parallel segments."""
    order = order or options.order
    i3 = g.ctx.i3
    fns = {axis: compile_float(g.component(axis), i3=i3) for axis in AXES}
    with precision(options.quad_bits):
        current = {axis: mpmath.mpf(v) for axis, v in zip(AXES, base)}
        goal = {axis: mpmath.mpf(v) for axis, v in zip(AXES, target)}
        total = mpmath.mpf(0)
        for name in order:
            axis = AXIS_NAMES[name]
            if current[axis] == goal[axis]:
                continue
            env = _base_env(options, current, "mpmath")
            fn = fns[axis]

            def integrand(t, env=env, axis=axis, fn=fn):
                env[axis] = t
                return fn(env)

            try:
                value = mpmath.quad(integrand, [current[axis], goal[axis]])
            except _EVAL_ERRORS as err:
                raise PathError(f"{g.label}: singular point on the {name}-segment ({err})") from err
            if not mpmath.isfinite(value):
                raise PathError(f"{g.label}: quadrature diverged on the {name}-segment")
            total += value
            current[axis] = goal[axis]
        return total


# --- The coframe system ---
_STATE = sympy.symbols("a1_ phi_ eta_ chi_ psi_", cls=sympy.Dummy)


@dataclass(frozen=True)
class CoframeSystem:
    """Right-hand sides d(state)/dv for v in (x, u, p), linear in the state (a1, phi, eta, chi, psi)."""
    label: str
    tower: InvariantSet
    H: Expr
    b: Expr
    s_bar: Expr
    fbar: Expr
    rhs: Dict[Any, Tuple[Expr, ...]]

    @property
    def ctx(self) -> OdeContext:
        return self.tower.ctx

    def a1_gradient(self) -> GradientField:
        a1 = _STATE[0]
        gx, gu, gp = (normalize(self.rhs[axis][0] / a1) for axis in AXES)
        return GradientField("log-a1", gx, gu, gp, self.ctx)

    def phi_gradient(self) -> GradientField:
        gx, gu, gp = (self.rhs[axis][1] for axis in AXES)
        return GradientField("phi", gx, gu, gp, self.ctx)

    def compiled(self) -> Dict[Any, List[Callable]]:
        i3 = self.ctx.i3
        return {axis: [compile_float(e, i3=i3, backend="float") for e in self.rhs[axis]] for axis in AXES}


def build_system(tower: InvariantSet, H, b, branch: str) -> CoframeSystem:
    """Unified system: five-symmetry uses H = 0, b = 1, fbar = s chi + psi; four-symmetry fbar = b^3 psi."""
    t = tower
    j = t.J3
    f = t.f
    a1, phi, eta, chi, psi = _STATE
    H = sympy.sympify(H)
    b = sympy.sympify(b)
    if branch == FIVE_SYMMETRY:
        s_bar = t.K
        fbar = s_bar * chi + psi
    else:
        s_bar = sympy.S.Zero
        fbar = b ** 3 * psi
    hi5 = H + t.I5

    a_u = (H * t.I7 - t.Q) * a1
    a_p = (t.I4 * hi5 - t.I7 / j) * a1
    a_x = j * hi5 * a1 - P * a_u - Q * a_p

    phi_u = -t.I7 / b
    phi_p = -t.I4 / b
    phi_x = -j / b - P * phi_u - Q * phi_p

    eta_u = (hi5 ** 2 / 2 + s_bar / 2 + t.I2 / (2 * j ** 2)) * b ** 2 * a1 - t.I7 / b * fbar
    eta_p = (hi5 / j + t.I1 / (3 * j ** 2)) * b ** 2 * a1 - t.I4 / b * fbar
    eta_q = b ** 2 * a1 / j ** 2
    eta_x = -j / b * fbar - P * eta_u - Q * eta_p - f * eta_q

    chi_u = -hi5 * b * a1 - t.I7 / b * eta
    chi_p = -b * a1 / j - t.I4 / b * eta
    chi_x = -j / b * eta - P * chi_u - Q * chi_p

    psi_u = a1 + chi * phi_u
    psi_p = -t.I4 / b * chi
    psi_x = chi * phi_x - P * a1

    rhs = {
        X: (a_x, phi_x, eta_x, chi_x, psi_x),
        U: (a_u, phi_u, eta_u, chi_u, psi_u),
        P: (a_p, phi_p, eta_p, chi_p, psi_p),
    }
    label = "five-symmetry" if branch == FIVE_SYMMETRY else "four-symmetry"
    return CoframeSystem(label, tower, H, b, s_bar, fbar, rhs)


# --- Path integration ---
class _PathIntegrator:
    def __init__(self, system: CoframeSystem, options: SynthesisOptions):
        self.system = system
        self.options = options
        self.fns = system.compiled()

    def _rhs(self, axis, coords: Mapping):
        env = _base_env(self.options, coords, "float")
        fns = self.fns[axis]

        def rhs(t, y):
            env[axis] = t
            for sym, value in zip(_STATE, y):
                env[sym] = value
            try:
                return [fn(env) for fn in fns]
            except _EVAL_ERRORS as err:
                raise PathError(f"singular point at {axis} = {t:.6g} ({err})") from err
        return rhs

    def segment(self, axis, coords: Mapping, y0: np.ndarray, targets: Sequence[float]) -> List[np.ndarray]:
        """State at each target value of axis, starting from y0 at coords[axis]."""
        start = coords[axis]
        results: Dict[int, np.ndarray] = {}
        forward = sorted((i for i, t in enumerate(targets) if t >= start), key=lambda i: targets[i])
        backward = sorted((i for i, t in enumerate(targets) if t < start), key=lambda i: -targets[i])
        for indices in (forward, backward):
            if not indices:
                continue
            end = targets[indices[-1]]
            if end == start:
                for i in indices:
                    results[i] = np.array(y0, dtype=float)
                continue
            t_eval = [targets[i] for i in indices]
            sol = solve_ivp(
                self._rhs(axis, coords), (start, end), y0, method="DOP853", t_eval=t_eval,
                rtol=self.options.rtol, atol=self.options.atol,
            )
            if sol.status < 0:
                if "step size" in sol.message.lower():
                    raise StepSizeUnderflowError(f"along {axis} from {start:.6g}: {sol.message}")
                raise PathError(f"along {axis} from {start:.6g}: {sol.message}")
            for column, i in enumerate(indices):
                results[i] = sol.y[:, column]
        return [results[i] for i in range(len(targets))]

    def sweep(self, base: Sequence[float], gauge: Sequence[float],
              axis_values: Dict[Any, np.ndarray], order: str) -> Dict[Tuple[int, int, int], np.ndarray]:
        states = {(): ({axis: float(v) for axis, v in zip(AXES, base)}, np.array(gauge, dtype=float))}
        for name in order:
            axis = AXIS_NAMES[name]
            targets = [float(t) for t in axis_values[axis]]

            def advance(item):
                key, (coords, y) = item
                out = {}
                for i, y_i in enumerate(self.segment(axis, coords, y, targets)):
                    node = dict(coords)
                    node[axis] = targets[i]
                    out[key + ((axis, i),)] = (node, y_i)
                return out

            items = list(states.items())
            if self.options.jobs > 1 and len(items) > 1:
                with ThreadPoolExecutor(max_workers=self.options.jobs, thread_name_prefix="sweep") as executor:
                    parts = list(executor.map(advance, items))
            else:
                parts = [advance(item) for item in items]
            states = {k: v for part in parts for k, v in part.items()}
            logger.info(f"[Synthesizer] swept {name}: {len(states)} states")
        grid = {}
        for key, (_, y) in states.items():
            index = dict(key)
            grid[(index[X], index[U], index[P])] = y
        return grid


@dataclass
class SynthesisGrid:
    system_label: str
    base: Tuple[float, float, float]
    q_ref: float
    gauge: Tuple[float, ...]
    axes: Dict[Any, np.ndarray]
    values: Dict[Tuple[int, int, int], np.ndarray]
    order: str
    parameters: Dict[str, str] = field(default_factory=dict)
    abar_samples: List[Tuple[float, float]] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    system: Optional[CoframeSystem] = field(default=None, repr=False)

    @property
    def node_count(self) -> int:
        return len(self.values)

    def coords(self, index: Tuple[int, int, int]) -> Tuple[float, float, float]:
        return tuple(float(self.axes[axis][i]) for axis, i in zip(AXES, index))

    def rows(self):
        """(x, u, p, a1, phi, eta, chi, psi) per node in index order."""
        for index in sorted(self.values):
            yield self.coords(index) + tuple(float(v) for v in self.values[index])

    def component(self, name: str) -> Dict[Tuple[int, int, int], float]:
        k = COMPONENTS.index(name)
        return {index: float(y[k]) for index, y in self.values.items()}

    def interior(self) -> List[Tuple[int, int, int]]:
        sizes = [len(self.axes[axis]) for axis in AXES]
        return [idx for idx in sorted(self.values)
                if all(0 < i < n - 1 or n == 1 for i, n in zip(idx, sizes))]


def _check_pins(options: SynthesisOptions, *exprs):
    missing = [s.name for s in parameters_of(*exprs) if s.name not in options.sampler.pinned]
    if missing:
        raise UsageError(f"synthesis needs numeric values for parameters: {', '.join(missing)} (use --pin)")


def _expect(f, branch: str, options: SynthesisOptions, classification=None) -> InvariantSet:
    result = classification or classify(f, options.sampler, jobs=options.jobs)
    if result.outcome != branch:
        raise ClassificationMismatchError(f"equation classified as {result.outcome}, expected {branch}")
    return result.tower


def _synthesize(system: CoframeSystem, base, grid_spec: GridSpec,
                options: SynthesisOptions, gauge=DEFAULT_GAUGE) -> SynthesisGrid:
    if gauge[0] == 0:
        raise UsageError("the gauge value of a1 must be nonzero")
    base = tuple(float(v) for v in base)
    axis_values = grid_spec.axis_values(base)
    integrator = _PathIntegrator(system, options)
    logger.info(f"[Synthesizer] {system.label} sweep over {grid_spec.nodes} nodes from base {base}")
    values = integrator.sweep(base, gauge, axis_values, options.order)
    grid = SynthesisGrid(
        system_label=system.label, base=base, q_ref=options.q_ref, gauge=tuple(float(g) for g in gauge),
        axes=axis_values, values=values, order=options.order,
        parameters={name: str(v) for name, v in options.sampler.pinned.items()}, system=system,
    )
    grid.summary.update(_quadrature_diagnostics(grid, system, options))
    if options.swap_check:
        swapped = integrator.sweep(base, gauge, axis_values, options.order[::-1])
        grid.summary["path_swap_max_diff"] = max(
            float(np.max(np.abs(values[k] - swapped[k]))) for k in values
        )
    grid.summary["nodes"] = grid.node_count
    return grid


def _quadrature_nodes(grid: SynthesisGrid, limit: int) -> List[Tuple[int, int, int]]:
    sizes = [len(grid.axes[axis]) for axis in AXES]
    corners = sorted({(i * (sizes[0] - 1), j * (sizes[1] - 1), k * (sizes[2] - 1))
                      for i in (0, 1) for j in (0, 1) for k in (0, 1)})
    return corners[:limit]


def _quadrature_diagnostics(grid: SynthesisGrid, system: CoframeSystem, options: SynthesisOptions) -> Dict[str, float]:
    """Compare the ODE values of a1 and phi with direct line integrals of their gradients."""
    a1_grad, phi_grad = system.a1_gradient(), system.phi_gradient()
    a1_err = phi_err = 0.0
    for index in _quadrature_nodes(grid, options.quadrature_nodes):
        target = grid.coords(index)
        log_a1 = integrate_gradient(a1_grad, grid.base, target, options)
        phi = integrate_gradient(phi_grad, grid.base, target, options)
        y = grid.values[index]
        a1_err = max(a1_err, abs(grid.gauge[0] * float(mpmath.exp(log_a1)) - y[0]))
        phi_err = max(phi_err, abs(grid.gauge[1] + float(phi) - y[1]))
    return {"a1_quadrature_max_diff": a1_err, "phi_quadrature_max_diff": phi_err}


def synthesize_branch1(f, base, grid_spec: GridSpec = GridSpec(), options: SynthesisOptions = SynthesisOptions(),
                       gauge=DEFAULT_GAUGE, classification=None) -> SynthesisGrid:
    """Reconstruct (a1, phi, eta, chi, psi) on a grid for a five-symmetry equation."""
    f = normalize(f)
    _check_pins(options, f)
    tower = _expect(f, FIVE_SYMMETRY, options, classification)
    system = build_system(tower, 0, 1, FIVE_SYMMETRY)
    grid = _synthesize(system, base, grid_spec, options, gauge)
    grid.summary.update(contact_residuals(grid, system, options))
    return grid


def check_auxiliary(tower: InvariantSet, H, b, cfg: SamplerConfig) -> None:
    """Reject H, b unless the Riccati and b equations hold identically."""
    named = [("riccati", riccati_residual(tower, H)), ("b.Dx", b_residual(tower, H, b))]
    for (label, _), verdict in zip(named, zero_tests(named, tower.ctx, cfg)):
        if not verdict.identically_zero:
            logger.info(f"[Synthesizer] auxiliary functions fail {label}")
            raise RejectedAnsatzError(label, verdict.witness, verdict.value)


def synthesize_branch2_assisted(f, H, b, base, grid_spec: GridSpec = GridSpec(),
                                options: SynthesisOptions = SynthesisOptions(),
                                gauge=DEFAULT_GAUGE, classification=None) -> SynthesisGrid:
    """As synthesize_branch1 for a four-symmetry equation, given the Riccati solution H and b."""
    f, H, b = normalize(f), normalize(H), normalize(b)
    _check_pins(options, f, H, b)
    tower = _expect(f, FOUR_SYMMETRY, options, classification)
    check_auxiliary(tower, H, b, options.sampler)
    system = build_system(tower, H, b, FOUR_SYMMETRY)
    grid = _synthesize(system, base, grid_spec, options, gauge)
    b_fn = compile_float(b, i3=tower.ctx.i3, backend="float")
    for index in sorted(grid.values):
        x, u, p = grid.coords(index)
        env = _base_env(options, {X: x, U: u, P: p}, "float")
        grid.abar_samples.append((float(grid.values[index][1]), float(b_fn(env))))
    grid.summary.update(contact_residuals(grid, system, options))
    return grid


# --- Residual diagnostics ---
def contact_residuals(grid: SynthesisGrid, system: CoframeSystem, options: SynthesisOptions) -> Dict[str, float]:
    """Max contact and where-clause residuals on interior nodes, by central differences."""
    integrator = _PathIntegrator(system, options)
    h = options.fd_step
    worst = {"contact_p": 0.0, "contact_x": 0.0, "where_chi": 0.0, "where_eta": 0.0}
    q = options.q_ref
    for index in grid.interior():
        x, u, p = grid.coords(index)
        coords = {X: x, U: u, P: p}
        y = grid.values[index]
        partials = {}
        for axis in AXES:
            centre = coords[axis]
            plus, minus = integrator.segment(axis, coords, y, [centre + h, centre - h])
            partials[axis] = (plus - minus) / (2 * h)
        a1, phi, eta, chi, psi = y
        k_phi, k_eta, k_chi, k_psi = 1, 2, 3, 4
        lam = partials[U][k_psi] - chi * partials[U][k_phi]
        d_phi = partials[X][k_phi] + p * partials[U][k_phi] + q * partials[P][k_phi]
        d_psi = partials[X][k_psi] + p * partials[U][k_psi] + q * partials[P][k_psi]
        d_chi = partials[X][k_chi] + p * partials[U][k_chi] + q * partials[P][k_chi]
        updates = {
            "contact_p": abs(partials[P][k_psi] - chi * partials[P][k_phi]),
            "contact_x": abs(partials[X][k_psi] - chi * partials[X][k_phi] + p * lam),
            "where_chi": abs(chi * d_phi - d_psi),
            "where_eta": abs(eta * d_phi - d_chi),
        }
        for key, value in updates.items():
            worst[key] = max(worst[key], float(value))
    logger.info(f"[Synthesizer] interior residuals {worst}")
    return {f"max_{k}_residual": v for k, v in worst.items()}


@dataclass(frozen=True)
class FitReport:
    max_abs: Dict[str, float]
    phi_offset: float
    grid: SynthesisGrid

    @property
    def max_error(self) -> float:
        return max(self.max_abs.values())


def candidate_values(T: ContactTransform, coords: Mapping, options: SynthesisOptions) -> Tuple[float, ...]:
    """(lambda, phi, eta, chi, psi) of a closed-form transformation at a point of the slice."""
    env = _base_env(options, coords, "float")
    values = []
    for e in (T.lam, T.phi, T.eta, T.chi, T.psi):
        try:
            values.append(float(compile_float(e, backend="float")(env)))
        except _EVAL_ERRORS as err:
            raise PathError(f"candidate is singular at {coords} ({err})") from err
    return tuple(values)


def fit_to_candidate(f, T: ContactTransform, base, grid_spec: GridSpec = GridSpec(),
                     options: SynthesisOptions = SynthesisOptions(), H=None, b=None,
                     classification=None) -> FitReport:
    """Re-run the synthesis with the candidate's base values as gauge and compare on every node."""
    base_coords = dict(zip(AXES, (float(v) for v in base)))
    gauge = candidate_values(T, base_coords, options)
    if H is None:
        grid = synthesize_branch1(f, base, grid_spec, options, gauge, classification)
    else:
        grid = synthesize_branch2_assisted(f, H, b, base, grid_spec, options, gauge, classification)
    diffs = {name: [] for name in COMPONENTS}
    for index, y in grid.values.items():
        expected = candidate_values(T, dict(zip(AXES, grid.coords(index))), options)
        for name, got, want in zip(COMPONENTS, y, expected):
            diffs[name].append(float(got) - want)
    phi_offset = float(np.mean(diffs["phi"]))
    diffs["phi"] = [d - phi_offset for d in diffs["phi"]]
    max_abs = {name: float(np.max(np.abs(d))) for name, d in diffs.items()}
    logger.info(f"[Synthesizer] fit against candidate: {max_abs}")
    return FitReport(max_abs, phi_offset, grid)
