"""Report rendering: JSON (byte-stable), plain text with a timing footer, CSV grids."""
import csv
import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import arrow
import jsonschema
import mpmath

from .classifier import Classification, condition_table, s_as_radical
from .invariants import TOWER_NAMES, InvariantSet, coframe_matrix
from .parser import to_text
from .synthesizer import COMPONENTS, SynthesisGrid
from .transform import ContactCheck, ResidualReport, TargetCheck

logger = logging.getLogger(__name__)

SCHEMA_DIR = Path(__file__).resolve().parent / "schemas"
GRID_COLUMNS = ("x", "u", "p") + COMPONENTS


def _num(value) -> str:
    return mpmath.nstr(mpmath.mpf(value), 20)


# --- Report builders ---
def invariants_report(tower: InvariantSet, coframe: bool = False) -> Dict[str, Any]:
    data = {
        "command": "invariants",
        "f": to_text(tower.f),
        "invariants": {name: to_text(tower[name]) for name in TOWER_NAMES},
        "side_condition": "J^3 = I3" if tower.has_symbolic_j() else f"J = {to_text(tower.J3)}",
        "exit_code": 0,
    }
    if coframe:
        matrix = coframe_matrix(tower)
        data["coframe"] = [[to_text(entry) for entry in matrix.row(i)] for i in range(matrix.rows)]
    return data


def classify_report(result: Classification) -> Dict[str, Any]:
    data = {
        "command": "classify",
        "input": to_text(result.f),
        "seed": result.seed,
        "outcome": result.outcome,
        "linearizable": result.linearizable,
        "mode": result.mode,
        "exit_code": result.exit_code,
        "parameters": list(result.parameters),
        "conditions": condition_table(result),
    }
    if result.tower is not None:
        data["K"] = to_text(result.K)
    if result.s is not None:
        data["s"] = to_text(s_as_radical(result.tower))
    if result.first_failing:
        data["first_failing"] = result.first_failing
        data["witness"] = result.witness.to_dict()
    if result.dK_witness is not None:
        data["dK_witness"] = result.dK_witness.to_dict()
    return data


def _verdicts(named: Iterable) -> List[Dict[str, Any]]:
    rows = []
    for name, verdict in named:
        row = {"name": name}
        row.update(verdict.to_dict())
        rows.append(row)
    return rows


def verify_report(f, contact: ContactCheck, target: Optional[TargetCheck], residuals: Optional[ResidualReport],
                  target_equation: Optional[str], exit_code: int) -> Dict[str, Any]:
    data = {
        "command": "verify",
        "f": to_text(f),
        "lambda": to_text(contact.lam),
        "kind": contact.kind,
        "contact": _verdicts(contact.verdicts.items()),
        "contact_passed": contact.passed,
        "exit_code": exit_code,
        "passed": exit_code == 0,
    }
    if target is not None and target.verdict is not None:
        data["target"] = {
            "equation": target_equation,
            "eta": to_text(target.prolongation.eta),
            "verdict": target.verdict.to_dict(),
        }
    if residuals is not None:
        data["residuals"] = {
            "system": residuals.system,
            "entries": _verdicts((label, verdict) for label, _, verdict in residuals.entries),
            "failing": residuals.failing(),
        }
    return data


def synthesize_report(grid: SynthesisGrid, fit=None) -> Dict[str, Any]:
    data = {
        "command": "synthesize",
        "system": grid.system_label,
        "base": [_num(v) for v in grid.base],
        "reference_q": _num(grid.q_ref),
        "gauge": dict(zip(COMPONENTS, (_num(g) for g in grid.gauge))),
        "order": grid.order,
        "parameters": grid.parameters,
        "summary": {k: v for k, v in grid.summary.items()},
        "nodes": [dict(zip(GRID_COLUMNS, (_num(v) for v in row))) for row in grid.rows()],
        "exit_code": 0,
    }
    if grid.abar_samples:
        data["abar_samples"] = [{"phi": _num(phi), "abar": _num(a)} for phi, a in grid.abar_samples]
    if fit is not None:
        data["fit"] = {"max_abs": fit.max_abs, "phi_offset": fit.phi_offset}
    return data


def error_report(command: str, err: Exception, exit_code: int) -> Dict[str, Any]:
    data = {"command": command, "error": type(err).__name__, "message": str(err), "exit_code": exit_code}
    condition = getattr(err, "condition", None) or getattr(err, "label", None)
    if condition:
        data["condition"] = condition
    witness = getattr(err, "witness", None)
    if witness is not None:
        data["witness"] = witness.as_dict()
    return data


# --- JSON ---
def to_json(data: Dict[str, Any]) -> str:
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


@lru_cache(maxsize=None)
def load_schema(kind: str) -> Dict[str, Any]:
    with open(SCHEMA_DIR / f"{kind}.json", encoding="utf-8") as fh:
        return json.load(fh)


def validate_report(data: Dict[str, Any]) -> None:
    """Raise jsonschema.ValidationError unless data matches the schema of its command."""
    kind = "error" if "error" in data else data["command"]
    jsonschema.validate(instance=data, schema=load_schema(kind))


# --- Text ---
def _verdict_line(name: str, verdict: Dict[str, Any]) -> str:
    line = f"  {name:<18} {verdict['verdict']:<15} ({verdict['mode']}, {verdict['points_tested']} points)"
    if "witness" in verdict:
        point = ", ".join(f"{k}={v}" for k, v in verdict["witness"].items())
        line += f"\n  {'':<18} witness {point} -> {verdict['value']}"
    return line


def render_text(data: Dict[str, Any]) -> str:
    command = data["command"]
    equation = data.get("f", data.get("input"))
    lines = [f"f = {equation}"] if equation is not None else []
    if "error" in data:
        lines.append(f"error: {data['message']}")
    elif command == "invariants":
        for name, value in data["invariants"].items():
            lines.append(f"  {name:<4} = {value}")
        lines.append(f"  where {data['side_condition']}")
        for i, row in enumerate(data.get("coframe", []), start=1):
            lines.append(f"  theta{i}: ({', '.join(row)})")
    elif command == "classify":
        lines.append(f"outcome: {data['outcome']}")
        for row in data["conditions"]:
            lines.append(_verdict_line(row["name"], row))
        if "s" in data:
            lines.append(f"s = {data['s']}")
        elif "K" in data:
            lines.append(f"K = {data['K']}")
        if "first_failing" in data:
            lines.append(f"first failing condition: {data['first_failing']}")
    elif command == "verify":
        lines.append(f"transformation kind: {data['kind']}, lambda = {data['lambda']}")
        for row in data["contact"]:
            lines.append(_verdict_line(row["name"], row))
        if "target" in data:
            lines.append(f"target {data['target']['equation']}, eta = {data['target']['eta']}")
            lines.append(_verdict_line("target", data["target"]["verdict"]))
        if "residuals" in data:
            lines.append(f"residuals ({data['residuals']['system']}):")
            for row in data["residuals"]["entries"]:
                lines.append(_verdict_line(row["name"], row))
        lines.append("PASSED" if data["passed"] else "FAILED")
    elif command == "synthesize":
        lines.append(f"system: {data['system']}, base {data['base']}, q = {data['reference_q']}, order {data['order']}")
        for key, value in sorted(data["summary"].items()):
            lines.append(f"  {key}: {value}")
        if "fit" in data:
            for key, value in sorted(data["fit"]["max_abs"].items()):
                lines.append(f"  fit {key}: {value:.3e}")
    return "\n".join(lines) + "\n"


def timing_footer(started: arrow.Arrow) -> str:
    finished = arrow.utcnow()
    elapsed = (finished - started).total_seconds()
    return f"-- {elapsed:.2f} s, finished {finished.isoformat()} ({finished.humanize(started)})\n"


# --- CSV ---
def write_grid_csv(grid: SynthesisGrid, stream) -> None:
    stream.write(f"# gauge {' '.join(_num(g) for g in grid.gauge)}\n")
    stream.write(f"# base {' '.join(_num(v) for v in grid.base)}\n")
    stream.write(f"# reference_q {_num(grid.q_ref)}\n")
    if grid.parameters:
        stream.write(f"# parameters {' '.join(f'{k}={v}' for k, v in sorted(grid.parameters.items()))}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(GRID_COLUMNS)
    for row in grid.rows():
        writer.writerow([_num(v) for v in row])
