import json
import unittest
from unittest.mock import patch

import pytest
from click.testing import CliRunner

from linearizer.classifier import OUTSIDE_SCOPE, Classification
from linearizer.cli import cli
from linearizer.expr import normalize
from linearizer.parser import parse
from linearizer.reports import validate_report

CUBIC_JET = "-x*p^4*q^3+u*p^3*q^3"


def _json_tail(output: str) -> dict:
    """Report JSON printed after any stderr lines the runner mixed in."""
    return json.loads(output[output.index("{"):])


@pytest.fixture
def runner():
    return CliRunner()


def test_classify_fixture(runner):
    result = runner.invoke(cli, ["classify", "--fixture", "cubic_jet"])
    assert result.exit_code == 0
    assert "FourSymmetryLinearizable" in result.output
    assert "K = -3/p^4" in result.output


def test_classify_json_is_deterministic(runner):
    args = ["classify", "--fixture", "cubic_jet", "--format", "json"]
    first = runner.invoke(cli, args)
    second = runner.invoke(cli, args)
    assert first.exit_code == 0
    assert first.output == second.output
    data = json.loads(first.output)
    validate_report(data)
    assert data["outcome"] == "FourSymmetryLinearizable"
    assert data["mode"] == "exact"


def test_classify_json_carries_input_and_seed(runner):
    result = runner.invoke(cli, ["classify", "--fixture", "power_ratio", "--format", "json", "--seed", "7"])
    assert result.exit_code == 0
    data = json.loads(result.output)
    validate_report(data)
    assert data["seed"] == 7
    assert "f" not in data
    assert normalize(parse(data["input"]) - parse("alpha*q^2/p")) == 0

    default = json.loads(runner.invoke(cli, ["classify", "--fixture", "cubic_jet", "--format", "json"]).output)
    assert default["seed"] == 0


def test_leading_minus_needs_separator(runner):
    result = runner.invoke(cli, ["classify", "--format", "json", "--", CUBIC_JET])
    assert result.exit_code == 0
    assert json.loads(result.output)["outcome"] == "FourSymmetryLinearizable"


def test_outside_scope_exit_code(runner):
    result = runner.invoke(cli, ["classify", "--format", "json", "u^2"])
    assert result.exit_code == 4
    data = json.loads(result.output)
    assert data["first_failing"] == "I11"
    assert data["witness"]["verdict"] == "NonZero"


def test_wuenschmann_zero(runner):
    result = runner.invoke(cli, ["invariants", "0"])
    assert result.exit_code == 3
    assert "I3 vanishes identically" in result.output

    result = runner.invoke(cli, ["classify", "--fixture", "vanishing"])
    assert result.exit_code == 3


def test_error_report_in_json(runner):
    result = runner.invoke(cli, ["invariants", "--format", "json", "0"])
    assert result.exit_code == 3
    data = _json_tail(result.output)
    validate_report(data)
    assert data["error"] == "WuenschmannZeroError"
    assert data["exit_code"] == 3


def test_parse_error(runner):
    result = runner.invoke(cli, ["classify", "2 x"])
    assert result.exit_code == 2
    assert "implicit multiplication" in result.output


@pytest.mark.parametrize("args", [
    ["classify", "--pin", "alpha", "alpha*q^2/p"],
    ["classify", "--pin", "alpha=two", "alpha*q^2/p"],
    ["classify", "--fixture", "no_such_fixture"],
    ["classify"],
    ["verify", "u"],
])
def test_usage_errors(runner, args):
    assert runner.invoke(cli, args).exit_code == 2


def test_invariants_json(runner):
    result = runner.invoke(cli, ["invariants", "--format", "json", "--coframe", "s*p + u"])
    assert result.exit_code == 0
    data = json.loads(result.output)
    validate_report(data)
    assert data["invariants"]["K"] == "s"
    assert data["side_condition"] == "J = -1"
    assert len(data["coframe"]) == 5


def test_verify_fixture_passes(runner):
    result = runner.invoke(cli, ["verify", "--fixture", "cubic_jet", "--format", "json"])
    assert result.exit_code == 0
    data = json.loads(result.output)
    validate_report(data)
    assert data["passed"]
    assert data["kind"] == "contact"
    assert data["residuals"]["system"] == "four-symmetry"
    assert data["residuals"]["failing"] == []


def test_verify_wrong_candidate_fails(runner):
    result = runner.invoke(cli, ["verify", "--fixture", "cubic_jet", "--chi", "x"])
    assert result.exit_code == 5
    assert "FAILED" in result.output


def test_verify_identity_against_canonical_form(runner):
    result = runner.invoke(cli, ["verify", "--phi", "x", "--psi", "u", "--chi", "p", "--pin", "s=1", "s*p+u"])
    assert result.exit_code == 0
    assert "kind: point" in result.output


@pytest.mark.slow
def test_verify_power_ratio(runner):
    result = runner.invoke(cli, ["verify", "--fixture", "power_ratio", "--format", "json"])
    assert result.exit_code == 0
    data = json.loads(result.output)
    assert data["residuals"]["system"] == "five-symmetry"
    assert data["residuals"]["failing"] == []


def test_report_written_to_file(runner, tmp_path):
    path = tmp_path / "classify.json"
    result = runner.invoke(cli, ["classify", "--fixture", "square_u", "--format", "json", "-o", str(path)])
    assert result.exit_code == 4
    assert "Report written to" in result.output
    assert json.loads(path.read_text())["outcome"] == "OutsideScope"


def test_synthesize_four_symmetry_needs_auxiliary(runner):
    result = runner.invoke(cli, ["synthesize", "--base", "0,1,2", "--", CUBIC_JET])
    assert result.exit_code == 2
    assert "--H and --b" in result.output


def test_synthesize_wuenschmann_zero(runner):
    assert runner.invoke(cli, ["synthesize", "--base", "0,0,1", "0"]).exit_code == 3


def test_synthesize_csv(runner):
    result = runner.invoke(cli, [
        "synthesize", "--fixture", "linear_five", "--nodes", "3", "--half-width", "0.25", "--format", "csv",
    ])
    assert result.exit_code == 0
    lines = result.output.splitlines()
    assert lines[0].startswith("# gauge")
    header = lines.index("x,u,p,a1,phi,eta,chi,psi")
    assert len(lines) - header - 1 == 27


@pytest.mark.slow
def test_synthesize_fit_json(runner):
    result = runner.invoke(cli, [
        "synthesize", "--fixture", "cubic_jet", "--fit", "--swap-check", "--format", "json",
    ])
    assert result.exit_code == 0
    data = json.loads(result.output)
    validate_report(data)
    assert all(err < 1e-8 for err in data["fit"]["max_abs"].values())
    assert data["summary"]["path_swap_max_diff"] < 1e-8
    assert data["summary"]["nodes"] == 125


class TestSynthesizeMismatch(unittest.TestCase):
    @patch('linearizer.cli.classify')
    def test_outside_scope_is_rejected(self, mock_classify):
        mock_classify.return_value = Classification(OUTSIDE_SCOPE, (), parse("u^2"))

        result = CliRunner().invoke(cli, ["synthesize", "--base", "0,1,1", "u^2"])

        self.assertEqual(result.exit_code, 4)
        mock_classify.assert_called_once()
