"""Command-line surface: invariants, classify, verify and synthesize."""
import functools
import io
import logging
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Optional, Tuple

import arrow
import click

from . import create_settings
from .classifier import FIVE_SYMMETRY, FOUR_SYMMETRY, classify, s_as_radical
from .errors import ClassificationMismatchError, LinearizerError, ParseError, UsageError, WuenschmannZeroError
from .fixtures import Fixture, list_fixtures, load_fixture
from .identity import SamplerConfig
from .invariants import compute_tower
from .parser import parse, to_text
from .reports import (
    classify_report,
    error_report,
    invariants_report,
    render_text,
    synthesize_report,
    timing_footer,
    to_json,
    validate_report,
    verify_report,
    write_grid_csv,
)
from .synthesizer import GridSpec, fit_to_candidate, synthesize_branch1, synthesize_branch2_assisted
from .transform import (
    LINEAR4,
    LINEAR5,
    ContactTransform,
    TargetForm,
    auxiliary_from_target,
    check_contact,
    prolong,
    residuals_five,
    residuals_four,
    verify_target,
)

logger = logging.getLogger(__name__)

VERIFY_FAILED = 5


@dataclass(frozen=True)
class RunConfig:
    """Flags merged over the configuration defaults."""
    command: str
    f_text: str
    pins: Dict[str, Fraction]
    seed: int
    points: int
    precision_bits: int
    output_format: str
    output_path: Optional[str]
    jobs: int
    fixture: Optional[Fixture] = field(default=None, repr=False)

    def sampler(self, settings) -> SamplerConfig:
        return settings.sampler(
            seed=self.seed, points=self.points, precision_bits=self.precision_bits, pinned=dict(self.pins),
        )


def _parse_pins(values) -> Dict[str, Fraction]:
    pins = {}
    for item in values:
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise UsageError(f"--pin expects name=rational, got '{item}'")
        try:
            pins[name.strip()] = Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as err:
            raise UsageError(f"--pin value for '{name.strip()}' is not a rational number: '{value}'") from err
    return pins


def _build_run(command: str, settings, f_text, fixture, pin, seed, points, precision_bits,
               output_format, output, jobs, fixture_pins=None) -> RunConfig:
    fx = load_fixture(fixture) if fixture else None
    if f_text is None:
        if fx is None:
            raise UsageError("give an equation right-hand side or --fixture")
        f_text = fx.f_text
    pins = dict(fixture_pins(fx) if (fx is not None and fixture_pins) else (fx.pins if fx else {}))
    pins.update(_parse_pins(pin))
    return RunConfig(
        command=command,
        f_text=f_text,
        pins=pins,
        seed=settings.seed if seed is None else seed,
        points=settings.points if points is None else points,
        precision_bits=settings.precision_bits if precision_bits is None else precision_bits,
        output_format=output_format,
        output_path=output,
        jobs=settings.jobs if jobs is None else jobs,
        fixture=fx,
    )


def _emit(run: RunConfig, data, started, grid=None) -> None:
    if run.output_format == "json":
        validate_report(data)
        text = to_json(data)
    elif run.output_format == "csv" and grid is not None:
        buffer = io.StringIO()
        write_grid_csv(grid, buffer)
        text = buffer.getvalue()
    else:
        text = render_text(data) + timing_footer(started)
    if run.output_path:
        with open(run.output_path, "w", encoding="utf-8") as fh:
            fh.write(text)
        click.echo(f"Report written to {run.output_path}", err=True)
    else:
        click.echo(text, nl=False)


def _fail(command: str, output_format: str, err: LinearizerError) -> int:
    code = err.exit_code
    if isinstance(err, ParseError):
        message = err.diagnostic.render(err.text)
    else:
        message = str(err)
    click.echo(click.style(f"Error: {message}", fg="red"), err=True)
    if output_format == "json":
        click.echo(to_json(error_report(command, err, code)), nl=False)
    return code


def run_command(command: str):
    """Translate engine errors into exit codes; the wrapped function returns its exit code."""

    def decorator(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            output_format = kwargs.get("output_format", "text")
            try:
                code = fn(*args, **kwargs)
            except LinearizerError as err:
                logger.info(f"[CLI] {command} failed: {err}")
                code = _fail(command, output_format, err)
            except Exception as err:
                logger.error(f"[CLI] unexpected failure in {command}: {err}", exc_info=True)
                click.echo(click.style(f"Unexpected error: {err}", fg="red"), err=True)
                code = 1
            sys.exit(code)
        return wrapper
    return decorator


def common_options(fn):
    options = [
        click.argument("f_text", required=False),
        click.option("--fixture", default=None, help=f"Use a shipped fixture ({', '.join(list_fixtures())})."),
        click.option("--pin", multiple=True, help="Pin a parameter to a rational value, e.g. --pin alpha=2."),
        click.option("--seed", type=int, default=None, help="Sampler seed."),
        click.option("--points", type=int, default=None, help="Sample points per zero test."),
        click.option("--precision", "precision_bits", type=int, default=None, help="Float precision in bits."),
        click.option("--output", "-o", default=None, help="Write the report to this file."),
        click.option("--jobs", type=int, default=None,
                     help="Worker threads for zero tests and sweeps (float evaluations share one precision lock)."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _format_option(choices=("text", "json")):
    return click.option("--format", "output_format", type=click.Choice(choices), default="text", show_default=True)


@click.group()
@click.option("--config", "config_name", default=None, help="Configuration name (default, quick, thorough).")
@click.option("--verbose", "-v", count=True, help="-v for progress, -vv for debug output.")
@click.pass_context
def cli(ctx, config_name, verbose):
    """Contact linearization of third-order ODEs u''' = f(x, u, p, q)."""
    settings = create_settings(config_name)
    level = {0: settings.log_level, 1: "INFO"}.get(verbose, "DEBUG")
    logging.getLogger().setLevel(level)
    ctx.obj = settings


# --- invariants ---
@cli.command()
@common_options
@_format_option()
@click.option("--coframe", is_flag=True, help="Also print the lifted invariant coframe.")
@click.pass_obj
@run_command("invariants")
def invariants(settings, f_text, fixture, pin, seed, points, precision_bits, output, jobs, output_format, coframe):
    """Print the invariant tower of f."""
    started = arrow.utcnow()
    run = _build_run("invariants", settings, f_text, fixture, pin, seed, points, precision_bits,
                     output_format, output, jobs)
    tower = compute_tower(parse(run.f_text), sampler=run.sampler(settings))
    _emit(run, invariants_report(tower, coframe=coframe), started)
    return 0


# --- classify ---
@cli.command("classify")
@common_options
@_format_option()
@click.pass_obj
@run_command("classify")
def classify_cmd(settings, f_text, fixture, pin, seed, points, precision_bits, output, jobs, output_format):
    """Decide which canonical linear form, if any, f is contact-equivalent to."""
    started = arrow.utcnow()
    run = _build_run("classify", settings, f_text, fixture, pin, seed, points, precision_bits,
                     output_format, output, jobs)
    result = classify(parse(run.f_text), run.sampler(settings), jobs=run.jobs)
    logger.info(f"[CLI] classification outcome {result.outcome}")
    _emit(run, classify_report(result), started)
    return result.exit_code


# --- verify ---
def _pick(text: Optional[str], fx: Optional[Fixture], key: str):
    if text is not None:
        return parse(text)
    if fx is not None:
        return fx.expr(key)
    return None


def _target_form(target, s_text, abar_text, fx: Optional[Fixture], tower, has_aux: bool) -> TargetForm:
    fx_target = fx.target if fx is not None else {}
    abar_text = abar_text or fx_target.get("abar")
    s_text = s_text or fx_target.get("s")
    variant = target or fx_target.get("variant") or (LINEAR4 if (abar_text or has_aux) else LINEAR5)
    variant = {"linear5": LINEAR5, "linear4": LINEAR4}.get(variant.lower(), variant)
    if variant == LINEAR4:
        if not abar_text:
            raise UsageError("the four-symmetry target needs --abar")
        return TargetForm.linear4(parse(abar_text))
    return TargetForm.linear5(parse(s_text) if s_text else s_as_radical(tower))


@cli.command()
@common_options
@_format_option()
@click.option("--phi", default=None, help="New independent variable phi(x, u, p).")
@click.option("--psi", default=None, help="New dependent variable psi(x, u, p).")
@click.option("--chi", default=None, help="New first derivative chi(x, u, p).")
@click.option("--a1", "a1_text", default=None, help="Coframe scale a1 (defaults to lambda).")
@click.option("--eta", "eta_text", default=None, help="New second derivative (defaults to D chi / D phi).")
@click.option("--H", "h_text", default=None, help="Riccati solution H (four-symmetry target).")
@click.option("--b", "b_text", default=None, help="Auxiliary b = a(phi) (four-symmetry target).")
@click.option("--abar", "abar_text", default=None, help="a(x) of the target u''' = a(x)^3 u.")
@click.option("--s", "s_text", default=None, help="s of the target u''' = s u' + u (defaults to K).")
@click.option("--target", type=click.Choice(["linear5", "linear4"]), default=None)
@click.pass_obj
@run_command("verify")
def verify(settings, f_text, fixture, pin, seed, points, precision_bits, output, jobs, output_format,
           phi, psi, chi, a1_text, eta_text, h_text, b_text, abar_text, s_text, target):
    """Check a candidate contact transformation against a canonical target."""
    started = arrow.utcnow()
    run = _build_run("verify", settings, f_text, fixture, pin, seed, points, precision_bits,
                     output_format, output, jobs)
    fx = run.fixture
    parts = {key: _pick(text, fx, key) for key, text in (("phi", phi), ("psi", psi), ("chi", chi))}
    missing = [key for key, value in parts.items() if value is None]
    if missing:
        raise UsageError(f"verify needs --{', --'.join(missing)}")
    T = ContactTransform(parts["phi"], parts["psi"], parts["chi"])
    cfg = run.sampler(settings)
    f = parse(run.f_text)
    tower = compute_tower(f, sampler=cfg)
    H, b = _pick(h_text, fx, "H"), _pick(b_text, fx, "b")
    target_form = _target_form(target, s_text, abar_text, fx, tower, H is not None)

    contact = check_contact(T, cfg, tower.ctx)
    check = residuals = None
    code = 0
    if not contact.passed:
        code = VERIFY_FAILED
    else:
        check = verify_target(T, tower.ctx, target_form, cfg)
        a1 = _pick(a1_text, fx, "a1")
        a1 = a1 if a1 is not None else T.lam
        eta = _pick(eta_text, fx, "eta")
        eta = eta if eta is not None else prolong(T, tower.ctx).eta
        if target_form.variant == LINEAR5:
            residuals = residuals_five(f, a1, T.phi, eta, T.chi, T.psi, cfg, tower=tower, jobs=run.jobs)
        else:
            if H is None or b is None:
                H_default, b_default = auxiliary_from_target(target_form, T.phi)
                H = H if H is not None else H_default
                b = b if b is not None else b_default
            residuals = residuals_four(f, H, b, a1, T.phi, eta, T.chi, T.psi, target_form, cfg,
                                         tower=tower, jobs=run.jobs)
        if not (check.passed and residuals.passed):
            code = VERIFY_FAILED
    equation = f"u''' = {to_text(target_form.equation())}"
    _emit(run, verify_report(f, contact, check, residuals, equation, code), started)
    return code


# --- synthesize ---
def _parse_base(text: Optional[str], fx: Optional[Fixture]) -> Tuple[float, float, float]:
    if text is None:
        if fx is not None and fx.synthesis_base is not None:
            return fx.synthesis_base
        raise UsageError("synthesize needs --base x,u,p")
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise UsageError(f"--base expects three comma-separated numbers, got '{text}'")
    try:
        return tuple(float(Fraction(p)) for p in parts)
    except (ValueError, ZeroDivisionError) as err:
        raise UsageError(f"--base has a non-numeric entry: '{text}'") from err


@cli.command()
@common_options
@_format_option(("text", "json", "csv"))
@click.option("--base", "base_text", default=None, help="Base point x,u,p of the grid.")
@click.option("--nodes", type=int, default=5, show_default=True, help="Grid nodes per axis.")
@click.option("--half-width", type=float, default=0.5, show_default=True, help="Grid half-width per axis.")
@click.option("--H", "h_text", default=None, help="Riccati solution H (four-symmetry inputs).")
@click.option("--b", "b_text", default=None, help="Auxiliary b with D b = -J3 H b (four-symmetry inputs).")
@click.option("--order", default=None, help="Axis order of the integration paths, e.g. xup or pux.")
@click.option("--swap-check", is_flag=True, help="Also integrate along the reversed axis order.")
@click.option("--fit", is_flag=True, help="Gauge-fit against the closed-form --phi/--psi/--chi.")
@click.option("--phi", default=None)
@click.option("--psi", default=None)
@click.option("--chi", default=None)
@click.pass_obj
@run_command("synthesize")
def synthesize(settings, f_text, fixture, pin, seed, points, precision_bits, output, jobs, output_format,
               base_text, nodes, half_width, h_text, b_text, order, swap_check, fit, phi, psi, chi):
    """Reconstruct the linearizing transformation on a grid around a base point."""
    started = arrow.utcnow()
    run = _build_run("synthesize", settings, f_text, fixture, pin, seed, points, precision_bits,
                     output_format, output, jobs, fixture_pins=lambda fx: fx.synthesis_pins or fx.pins)
    fx = run.fixture
    base = _parse_base(base_text, fx)
    grid_spec = GridSpec.cube(nodes, half_width)
    cfg = run.sampler(settings)
    overrides = {"swap_check": swap_check, "jobs": run.jobs}
    if order:
        overrides["order"] = order
    options = settings.synthesis(cfg, **overrides)
    f = parse(run.f_text)
    result = classify(f, cfg, jobs=run.jobs)
    if result.outcome == FOUR_SYMMETRY:
        H, b = _pick(h_text, fx, "H"), _pick(b_text, fx, "b")
        if H is None or b is None:
            raise UsageError("a four-symmetry equation needs --H and --b")
    elif result.outcome == FIVE_SYMMETRY:
        H = b = None
    elif result.exit_code == 3:
        raise WuenschmannZeroError()
    else:
        raise ClassificationMismatchError(f"equation classified as {result.outcome}; nothing to synthesize")

    report = None
    if fit:
        parts = {key: _pick(text, fx, key) for key, text in (("phi", phi), ("psi", psi), ("chi", chi))}
        if any(value is None for value in parts.values()):
            raise UsageError("--fit needs --phi, --psi and --chi")
        T = ContactTransform(parts["phi"], parts["psi"], parts["chi"])
        report = fit_to_candidate(f, T, base, grid_spec, options, H=H, b=b, classification=result)
        grid = report.grid
    elif H is None:
        grid = synthesize_branch1(f, base, grid_spec, options, classification=result)
    else:
        grid = synthesize_branch2_assisted(f, H, b, base, grid_spec, options, classification=result)
    _emit(run, synthesize_report(grid, report), started, grid=grid)
    return 0