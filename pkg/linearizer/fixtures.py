"""Loader for the worked-example fixture files shipped under fixtures/."""
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .errors import UsageError
from .expr import Expr
from .parser import parse

logger = logging.getLogger(__name__)

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"


@dataclass(frozen=True)
class Fixture:
    name: str
    description: str
    f_text: str
    pins: Dict[str, Fraction]
    expected: Dict
    transform: Dict[str, str] = field(default_factory=dict)
    target: Dict[str, str] = field(default_factory=dict)
    synthesis: Dict = field(default_factory=dict)

    @property
    def f(self) -> Expr:
        return parse(self.f_text)

    @property
    def outcome(self) -> str:
        return self.expected["outcome"]

    def expr(self, key: str) -> Optional[Expr]:
        """Parsed transformation entry (phi, psi, chi, a1, eta, H, b) or None."""
        text = self.transform.get(key)
        return parse(text) if text is not None else None

    def expected_invariants(self) -> Dict[str, Expr]:
        return {name: parse(text) for name, text in self.expected.get("invariants", {}).items()}

    @property
    def synthesis_base(self) -> Optional[Tuple[float, float, float]]:
        base = self.synthesis.get("base")
        return tuple(float(Fraction(v)) for v in base) if base else None

    @property
    def synthesis_pins(self) -> Dict[str, Fraction]:
        return {k: Fraction(v) for k, v in self.synthesis.get("pins", {}).items()}


def list_fixtures() -> List[str]:
    return sorted(path.stem for path in FIXTURE_DIR.glob("*.json"))


def load_fixture(name: str) -> Fixture:
    path = FIXTURE_DIR / f"{name}.json"
    if not path.exists():
        raise UsageError(f"unknown fixture '{name}' (available: {', '.join(list_fixtures())})")
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    logger.debug(f"[Fixtures] loaded {name} from {path}")
    return Fixture(
        name=data["name"],
        description=data.get("description", ""),
        f_text=data["f"],
        pins={k: Fraction(v) for k, v in data.get("pins", {}).items()},
        expected=data.get("expected", {}),
        transform=data.get("transform", {}),
        target=data.get("target", {}),
        synthesis=data.get("synthesis", {}),
    )
