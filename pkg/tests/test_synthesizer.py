import unittest
from types import SimpleNamespace
from unittest.mock import patch

import pytest
import sympy

from linearizer.classifier import FOUR_SYMMETRY
from linearizer.errors import (
    ClassificationMismatchError, PathError, RejectedAnsatzError, StepSizeUnderflowError, UsageError,
)
from linearizer.expr import P, U, X
from linearizer.fixtures import load_fixture
from linearizer.identity import SamplerConfig
from linearizer.invariants import compute_tower
from linearizer.synthesizer import (
    GradientField, GridSpec, SynthesisOptions, build_system, exactness_check, fit_to_candidate, integrate_gradient,
    q_independence, synthesize_branch1, synthesize_branch2_assisted,
)
from linearizer.transform import ContactTransform

ZERO = sympy.S.Zero


def _transform(data):
    return ContactTransform(data.expr("phi"), data.expr("psi"), data.expr("chi"))


# --- Gradients ---
def test_exact_gradient(sampler):
    assert exactness_check(GradientField("xu", U, X, ZERO), sampler).exact
    check = exactness_check(GradientField("rot", U, ZERO, ZERO), sampler)
    assert not check.exact
    assert dict(check.verdicts)["curl-up"].identically_zero
    assert not dict(check.verdicts)["curl-xu"].identically_zero


def test_line_integral_of_exact_gradient():
    g = GradientField("xu", U, X, ZERO)
    options = SynthesisOptions()
    assert abs(integrate_gradient(g, (0, 0, 0), (2, 3, 1), options) - 6) < 1e-20
    assert abs(integrate_gradient(g, (0, 0, 0), (2, 3, 1), options, order="uxp") - 6) < 1e-20


def test_line_integral_of_inexact_gradient_depends_on_path():
    g = GradientField("rot", U, ZERO, ZERO)
    options = SynthesisOptions()
    assert abs(integrate_gradient(g, (0, 0, 0), (2, 3, 1), options)) < 1e-20
    assert abs(integrate_gradient(g, (0, 0, 0), (2, 3, 1), options, order="uxp") - 6) < 1e-20


def test_line_integral_outside_domain_fails():
    g = GradientField("root", sympy.sqrt(X), ZERO, ZERO)
    with pytest.raises(PathError):
        integrate_gradient(g, (-1, 0, 1), (1, 0, 1), SynthesisOptions())


def test_cubic_jet_gradients(cubic_jet, sampler):
    tower = compute_tower(cubic_jet.f)
    system = build_system(tower, cubic_jet.expr("H"), cubic_jet.expr("b"), FOUR_SYMMETRY)
    assert exactness_check(system.a1_gradient(), sampler).exact
    assert exactness_check(system.phi_gradient(), sampler).exact
    assert all(v.identically_zero for v in q_independence(system.a1_gradient(), sampler))
    phi = integrate_gradient(system.phi_gradient(), (0, 1, 2), (0.3, 1.2, 2.5), SynthesisOptions())
    assert abs(phi - 0.5) < 1e-20


# --- Options and grids ---
def test_invalid_options():
    with pytest.raises(UsageError):
        SynthesisOptions(order="xxu")
    with pytest.raises(UsageError):
        SynthesisOptions(q_ref=0)
    with pytest.raises(UsageError):
        GridSpec(nodes=(0, 5, 5))
    with pytest.raises(UsageError):
        GridSpec.cube(5, -1.0)


def test_grid_axis_values():
    values = GridSpec(nodes=(3, 1, 5), half_width=(1.0, 1.0, 0.5)).axis_values((0, 2, 1))
    assert list(values[X]) == [-1.0, 0.0, 1.0]
    assert list(values[U]) == [2.0]
    assert len(values[P]) == 5


# --- Synthesis ---
def test_identity_is_recovered_for_canonical_form():
    data = load_fixture("linear_five")
    options = SynthesisOptions(sampler=SamplerConfig().with_pins(s=0))
    report = fit_to_candidate(data.f, _transform(data), (0, 0, 1), GridSpec.cube(3, 0.25), options)
    assert report.max_error < 1e-9
    assert report.grid.node_count == 27
    assert report.grid.summary["phi_quadrature_max_diff"] < 1e-9


def test_unpinned_parameter_is_rejected():
    with pytest.raises(UsageError) as info:
        synthesize_branch1(sympy.Symbol("s") * P + U, (0, 0, 1), GridSpec.cube(3, 0.25))
    assert "--pin" in str(info.value)


def test_wrong_branch_is_rejected(cubic_jet):
    with pytest.raises(ClassificationMismatchError):
        synthesize_branch1(cubic_jet.f, (0, 1, 2), GridSpec.cube(3, 0.25))


def test_riccati_failure_rejects_ansatz(cubic_jet):
    with pytest.raises(RejectedAnsatzError) as info:
        synthesize_branch2_assisted(cubic_jet.f, ZERO, P, (0, 1, 2), GridSpec.cube(3, 0.25))
    assert info.value.label == "riccati"
    assert info.value.witness is not None
    with pytest.raises(RejectedAnsatzError) as info:
        synthesize_branch2_assisted(cubic_jet.f, 1 / P ** 2, sympy.S.One, (0, 1, 2), GridSpec.cube(3, 0.25))
    assert info.value.label == "b.Dx"


@pytest.mark.slow
def test_cubic_jet_synthesis_matches_closed_form(cubic_jet):
    options = SynthesisOptions(swap_check=True)
    report = fit_to_candidate(
        cubic_jet.f, _transform(cubic_jet), (0, 1, 2), GridSpec.cube(5, 0.5), options,
        H=cubic_jet.expr("H"), b=cubic_jet.expr("b"),
    )
    assert report.max_error < 1e-8
    summary = report.grid.summary
    assert summary["path_swap_max_diff"] < 1e-8
    assert summary["max_contact_p_residual"] < 1e-6
    assert summary["max_contact_x_residual"] < 1e-6
    # b = a(phi) with a(x) = x, so the samples lie on the diagonal
    assert all(abs(phi - a) < 1e-8 for phi, a in report.grid.abar_samples)


@pytest.mark.slow
def test_power_ratio_synthesis_satisfies_contact_condition(power_ratio):
    options = SynthesisOptions(sampler=SamplerConfig().with_pins(alpha=1))
    grid = synthesize_branch1(power_ratio.f, power_ratio.synthesis_base, GridSpec.cube(5, 0.5), options)
    for key in ("max_contact_p_residual", "max_contact_x_residual", "max_where_chi_residual", "max_where_eta_residual"):
        assert grid.summary[key] < 1e-6, key
    assert grid.summary["a1_quadrature_max_diff"] < 1e-9


@pytest.mark.slow
def test_power_ratio_synthesis_matches_closed_form(power_ratio):
    options = SynthesisOptions(sampler=SamplerConfig().with_pins(alpha=1))
    report = fit_to_candidate(power_ratio.f, _transform(power_ratio), power_ratio.synthesis_base,
                              GridSpec.cube(5, 0.5), options)
    assert report.max_error < 1e-8


class TestIntegratorFailures(unittest.TestCase):
    def setUp(self):
        self.data = load_fixture("linear_five")
        self.options = SynthesisOptions(sampler=SamplerConfig().with_pins(s=0))

    @patch('linearizer.synthesizer.solve_ivp')
    def test_step_size_underflow(self, mock_solve):
        mock_solve.return_value = SimpleNamespace(
            status=-1, message="Required step size is less than spacing between numbers.", y=None,
        )
        with self.assertRaises(StepSizeUnderflowError):
            synthesize_branch1(self.data.f, (0, 0, 1), GridSpec.cube(3, 0.25), self.options)

    @patch('linearizer.synthesizer.solve_ivp')
    def test_other_solver_failures(self, mock_solve):
        mock_solve.return_value = SimpleNamespace(status=-1, message="integration diverged", y=None)
        with self.assertRaises(PathError):
            synthesize_branch1(self.data.f, (0, 0, 1), GridSpec.cube(3, 0.25), self.options)
