"""Text <-> expression conversion.

The grammar is a small precedence-climbing parser over the operators
``+ - * / ^`` with unary minus, parentheses and the functions ``ln``, ``exp``,
``cbrt`` and ``sqrt``. Implicit multiplication is not accepted.
"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import List

import sympy
from sympy.printing.str import StrPrinter

from .errors import ParseDiagnostic, ParseError, ReservedNameError
from .expr import FUNCTION_NAMES, J, JET_VARS, Expr

logger = logging.getLogger(__name__)

# Groups of increasing binding power; "^" is right associative.
OPERATORS = [
    [("+", "left"), ("-", "left")],
    [("*", "left"), ("/", "left")],
    [("^", "right")],
]
OPERATOR_PREC = {op: idx for idx, group in enumerate(OPERATORS) for op, _ in group}
OPERATOR_ASSOC = {op: assoc for group in OPERATORS for op, assoc in group}
UNARY_MINUS_PREC = OPERATOR_PREC["^"]

_JET_BY_NAME = {str(s): s for s in JET_VARS}


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "name", "op", "(", ")", "end"
    text: str
    offset: int


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    idx = 0
    n = len(text)
    while idx < n:
        c = text[idx]
        if c.isspace():
            idx += 1
            continue
        if c.isdigit() or (c == "." and idx + 1 < n and text[idx + 1].isdigit()):
            start = idx
            while idx < n and text[idx].isdigit():
                idx += 1
            if idx < n and text[idx] == ".":
                idx += 1
                while idx < n and text[idx].isdigit():
                    idx += 1
            tokens.append(Token("num", text[start:idx], start))
            continue
        if c.isalpha() or c == "_":
            start = idx
            while idx < n and (text[idx].isalnum() or text[idx] == "_"):
                idx += 1
            tokens.append(Token("name", text[start:idx], start))
            continue
        if c in OPERATOR_PREC:
            tokens.append(Token("op", c, idx))
            idx += 1
            continue
        if c in "()":
            tokens.append(Token(c, c, idx))
            idx += 1
            continue
        raise ParseError(ParseDiagnostic(idx, f"unexpected character '{c}'"), text)
    tokens.append(Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def fail(self, token: Token, message: str, expected: str = None):
        raise ParseError(ParseDiagnostic(token.offset, message, expected), self.text)

    def expect(self, kind: str, expected: str) -> Token:
        token = self.peek()
        if token.kind != kind:
            found = token.text or "end of input"
            self.fail(token, f"unexpected '{found}'", expected)
        return self.advance()

    def expression(self, min_prec: int) -> Expr:
        lhs = self.atom()
        while True:
            token = self.peek()
            if token.kind != "op" or OPERATOR_PREC[token.text] < min_prec:
                return lhs
            self.advance()
            prec = OPERATOR_PREC[token.text]
            next_prec = prec if OPERATOR_ASSOC[token.text] == "right" else prec + 1
            rhs = self.expression(next_prec)
            lhs = _apply(token.text, lhs, rhs)

    def atom(self) -> Expr:
        token = self.advance()
        if token.kind == "op" and token.text == "-":
            return -self.expression(UNARY_MINUS_PREC)
        if token.kind == "(":
            inner = self.expression(0)
            self.expect(")", "')'")
            return inner
        if token.kind == "num":
            value = Fraction(token.text)
            return sympy.Rational(value.numerator, value.denominator)
        if token.kind == "name":
            return self.name(token)
        if token.kind == "end":
            self.fail(token, "unexpected end of input", "an operand")
        self.fail(token, f"unexpected '{token.text}'", "an operand")

    def name(self, token: Token) -> Expr:
        if token.text in FUNCTION_NAMES:
            self.expect("(", "'(' after function name")
            arg = self.expression(0)
            self.expect(")", "')'")
            return _apply_function(token.text, arg)
        if token.text == "J":
            raise ReservedNameError(
                ParseDiagnostic(token.offset, "'J' is reserved for the internal cube root"), self.text
            )
        if token.text in _JET_BY_NAME:
            return _JET_BY_NAME[token.text]
        return sympy.Symbol(token.text)

    def parse(self) -> Expr:
        if self.peek().kind == "end":
            self.fail(self.peek(), "empty input", "an expression")
        result = self.expression(0)
        trailing = self.peek()
        if trailing.kind != "end":
            if trailing.kind in ("name", "num", "("):
                self.fail(trailing, "implicit multiplication is not supported", "an operator")
            self.fail(trailing, f"unexpected '{trailing.text}'", "end of input")
        return result


def _apply(op: str, lhs: Expr, rhs: Expr) -> Expr:
    if op == "+":
        return lhs + rhs
    if op == "-":
        return lhs - rhs
    if op == "*":
        return lhs * rhs
    if op == "/":
        return lhs / rhs
    return sympy.Pow(lhs, rhs)


def _apply_function(name: str, arg: Expr) -> Expr:
    if name == "ln":
        return sympy.log(arg)
    if name == "exp":
        return sympy.exp(arg)
    if name == "cbrt":
        return sympy.Pow(arg, sympy.Rational(1, 3))
    return sympy.Pow(arg, sympy.Rational(1, 2))


def parse(text: str) -> Expr:
    """Parse user text into an expression over x, u, p, q and parameters."""
    return _Parser(text).parse()


class _TextPrinter(StrPrinter):
    def _print_log(self, expr):
        return f"ln({self._print(expr.args[0])})"

    def _print_Exp1(self, expr):
        return "exp(1)"

    def doprint(self, expr):
        return super().doprint(expr).replace("**", "^")


def to_text(e: Expr) -> str:
    return _TextPrinter().doprint(sympy.sympify(e))
