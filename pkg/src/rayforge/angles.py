"""Angles on the circle R/Z with exact rational arithmetic where available.

The angle-multiplication map theta -> D*theta (mod 1) is exact on the
rational representation; the float mirror is kept in sync for numerics.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .config import SNAP_TOL


@dataclass(frozen=True, order=True)
class Angle:
    approx: float
    exact: Optional[Fraction] = None

    def __post_init__(self):
        if self.exact is not None:
            e = Fraction(self.exact) % 1
            object.__setattr__(self, "exact", e)
            object.__setattr__(self, "approx", float(e))
        else:
            object.__setattr__(self, "approx", float(self.approx) % 1.0)

    @staticmethod
    def from_fraction(num, den=1) -> "Angle":
        return Angle(0.0, Fraction(num, den))

    @staticmethod
    def parse(text: str) -> "Angle":
        text = text.strip()
        if "/" in text:
            num, den = text.split("/", 1)
            return Angle.from_fraction(int(num), int(den))
        val = float(text)
        frac = Fraction(val).limit_denominator(10**12)
        if frac.denominator <= 10**6 and abs(float(frac) - val) < 1e-15:
            return Angle.from_fraction(frac.numerator, frac.denominator)
        return Angle(val)

    @property
    def is_exact(self) -> bool:
        return self.exact is not None

    def times_d(self, degree: int) -> "Angle":
        """Image under theta -> D*theta mod 1."""
        if self.exact is not None:
            return Angle.from_fraction(self.exact * degree)
        return Angle((self.approx * degree) % 1.0)

    def preimages(self, degree: int) -> list["Angle"]:
        """The D angles mapping onto this one under theta -> D*theta."""
        if self.exact is not None:
            return [Angle.from_fraction((self.exact + j) / degree) for j in range(degree)]
        return [Angle(((self.approx + j) / degree) % 1.0) for j in range(degree)]

    def lifted_fraction(self, factor: int) -> float:
        """frac(factor * theta), exact when the angle is rational."""
        if self.exact is not None:
            num = (self.exact.numerator * factor) % self.exact.denominator
            return num / self.exact.denominator
        return (self.approx * factor) % 1.0

    def period(self, degree: int) -> Optional[int]:
        """Exact period under theta -> D*theta, or None if not purely periodic.

        A rational p/q in lowest terms is purely periodic iff gcd(q, D) == 1,
        with period equal to the multiplicative order of D modulo q.
        """
        if self.exact is None:
            return None
        q = self.exact.denominator
        if q == 1:
            return 1
        import math

        if math.gcd(q, degree) != 1:
            return None
        k, acc = 1, degree % q
        while acc != 1:
            acc = (acc * degree) % q
            k += 1
            if k > 4 * q:
                return None
        return k

    def eventual_period(self, degree: int) -> int:
        """Cycle length of the eventually periodic rational orbit."""
        if self.exact is None:
            raise ValueError("eventual period undefined for float angles")
        seen = {}
        cur = self.exact
        step = 0
        while cur not in seen:
            seen[cur] = step
            cur = (cur * degree) % 1
            step += 1
        return step - seen[cur]

    def circular_distance(self, other: "Angle") -> float:
        d = abs(self.approx - other.approx) % 1.0
        return min(d, 1.0 - d)

    def __str__(self):
        if self.exact is not None:
            return f"{self.exact.numerator}/{self.exact.denominator}"
        return repr(self.approx)


def snap_to_rational(value: float, max_den: int, tol: float = SNAP_TOL) -> Optional[Fraction]:
    """Nearest rational with denominator <= max_den, if within tol."""
    value = value % 1.0
    cand = Fraction(value).limit_denominator(max_den)
    err = abs(float(cand % 1) - value)
    err = min(err, 1.0 - err)
    if err <= tol:
        return cand % 1
    return None


def angles_of_period_dividing(degree: int, q: int) -> list[Angle]:
    """All rationals p/(D^q - 1): exactly the angles whose period divides q."""
    den = degree**q - 1
    return [Angle.from_fraction(p, den) for p in range(den)]


def interval_contains(a: float, b: float, x: float) -> bool:
    """Open interval (a, b) traversed counterclockwise on R/Z."""
    span = (b - a) % 1.0
    off = (x - a) % 1.0
    return 0.0 < off < span
