"""Exact arithmetic in the cubic extension Q(c), c**3 = v."""
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

import mpmath
from sympy import integer_nthroot

Scalar = Union["CubicScalar", Fraction, int]


def rational_cube_root(v: Fraction) -> Optional[Fraction]:
    """Return r with r**3 == v if v is the cube of a rational, else None."""
    v = Fraction(v)
    num_root, num_exact = integer_nthroot(abs(v.numerator), 3)
    den_root, den_exact = integer_nthroot(v.denominator, 3)
    if not (num_exact and den_exact):
        return None
    root = Fraction(int(num_root), int(den_root))
    return -root if v < 0 else root


@dataclass(frozen=True)
class CubicScalar:
    """Element a + b*c + d*c**2 of Q(c) with c**3 = radicand.

    When the radicand is a rational cube the generator itself is rational and
    the element is carried as a plain rational (b = d = 0).
    """
    a: Fraction
    b: Fraction
    d: Fraction
    radicand: Fraction

    @classmethod
    def constant(cls, value, radicand) -> "CubicScalar":
        return cls(Fraction(value), Fraction(0), Fraction(0), Fraction(radicand))

    @classmethod
    def generator(cls, radicand) -> "CubicScalar":
        """The element c itself, collapsed to a rational when radicand is a cube."""
        radicand = Fraction(radicand)
        root = rational_cube_root(radicand)
        if root is not None:
            return cls.constant(root, radicand)
        return cls(Fraction(0), Fraction(1), Fraction(0), radicand)

    @property
    def degenerate(self) -> bool:
        return rational_cube_root(self.radicand) is not None

    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0 and self.d == 0

    def is_rational(self) -> bool:
        return self.b == 0 and self.d == 0

    def _coerce(self, other: Scalar) -> "CubicScalar":
        if isinstance(other, CubicScalar):
            if other.radicand != self.radicand:
                raise ValueError(f"mixed radicands {self.radicand} and {other.radicand}")
            return other
        if isinstance(other, (int, Fraction)):
            return CubicScalar.constant(other, self.radicand)
        return NotImplemented

    def __add__(self, other: Scalar) -> "CubicScalar":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return CubicScalar(self.a + other.a, self.b + other.b, self.d + other.d, self.radicand)

    __radd__ = __add__

    def __neg__(self) -> "CubicScalar":
        return CubicScalar(-self.a, -self.b, -self.d, self.radicand)

    def __sub__(self, other: Scalar) -> "CubicScalar":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other: Scalar) -> "CubicScalar":
        return (-self) + other

    def __mul__(self, other: Scalar) -> "CubicScalar":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        v = self.radicand
        a, b, d = self.a, self.b, self.d
        e, g, h = other.a, other.b, other.d
        return CubicScalar(
            a * e + v * (b * h + d * g),
            a * g + b * e + v * d * h,
            a * h + b * g + d * e,
            v,
        )

    __rmul__ = __mul__

    def norm(self) -> Fraction:
        a, b, d, v = self.a, self.b, self.d, self.radicand
        return a ** 3 + v * b ** 3 + v ** 2 * d ** 3 - 3 * v * a * b * d

    def inverse(self) -> "CubicScalar":
        if self.is_zero():
            raise ZeroDivisionError("inverse of zero in cubic field")
        a, b, d, v = self.a, self.b, self.d, self.radicand
        n = self.norm()
        if n == 0:
            raise ZeroDivisionError(f"element has zero norm; x^3 - {v} is reducible")
        return CubicScalar((a * a - v * b * d) / n, (v * d * d - a * b) / n, (b * b - a * d) / n, v)

    def __truediv__(self, other: Scalar) -> "CubicScalar":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self * other.inverse()

    def __rtruediv__(self, other: Scalar) -> "CubicScalar":
        return self.inverse() * other

    def __pow__(self, n: int) -> "CubicScalar":
        if n < 0:
            return self.inverse() ** (-n)
        result = CubicScalar.constant(1, self.radicand)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def to_mpf(self) -> mpmath.mpf:
        """Embed via the real cube root of the radicand at the current mpmath precision."""
        v = mpmath.mpf(self.radicand.numerator) / self.radicand.denominator
        c = mpmath.cbrt(abs(v)) * (1 if v >= 0 else -1)

        def conv(x: Fraction):
            return mpmath.mpf(x.numerator) / x.denominator
        return conv(self.a) + conv(self.b) * c + conv(self.d) * c * c

    def __str__(self) -> str:
        if self.is_rational():
            return str(self.a)
        return f"{self.a} + {self.b}*c + {self.d}*c^2 (c^3 = {self.radicand})"
