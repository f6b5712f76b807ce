"""
Truncated formal power series.

``FormalSeries`` is a univariate series whose coefficients live in any ring
the toolkit uses (exact rationals, floats, or ``Poly`` objects), so the
generating functions of polynomial families are series-of-polynomials.
``BivariateSeries`` is the double series in (z1, z2) used for the
harness generating functions.

Arithmetic is closed at a fixed truncation order: the result of a binary
operation is truncated to the smaller of the two orders.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Dict, List, Tuple

from backend.models.errors import SeriesInversionError
from backend.utils.poly import Poly
from backend.utils.scalars import Scalar, reciprocal


def _is_zero(c: Any) -> bool:
    if isinstance(c, (Poly, FormalSeries)):
        return c.is_zero()
    return c == 0


def _unit_inverse(c: Any) -> Any:
    """Inverse of a constant term; only scalars (or constant polynomials) are units."""
    if isinstance(c, Poly):
        if c.degree > 0:
            raise SeriesInversionError(f"constant term {c} is not a unit")
        c = c.coefficient(0)
    if _is_zero(c):
        raise SeriesInversionError("series with zero constant term is not invertible")
    return reciprocal(c)


def _abs(c: Any) -> Scalar:
    if isinstance(c, (Poly, FormalSeries)):
        return c.max_abs_coeff()
    return abs(c)


def _fraction_of(n: int, like: Any) -> Any:
    """1/n in the field of ``like``."""
    if isinstance(like, float):
        return 1.0 / n
    return Fraction(1, n)


@dataclass(frozen=True, eq=False)
class FormalSeries:
    """Truncated series sum(coeffs[n] * var**n), n = 0..order."""

    coeffs: Tuple[Any, ...]
    var: str = "zeta"

    __array_ufunc__ = None

    def __post_init__(self):
        if not self.coeffs:
            raise ValueError("a series needs at least its constant term")
        object.__setattr__(self, "coeffs", tuple(self.coeffs))

    # Constructors

    @classmethod
    def from_coefficients(cls, values, order: int, var: str = "zeta") -> "FormalSeries":
        values = list(values)[: order + 1]
        values += [0] * (order + 1 - len(values))
        return cls(tuple(values), var)

    @classmethod
    def constant(cls, value: Any, order: int, var: str = "zeta") -> "FormalSeries":
        return cls.from_coefficients([value], order, var)

    @classmethod
    def variable(cls, order: int, var: str = "zeta") -> "FormalSeries":
        return cls.from_coefficients([0, 1], order, var)

    # Structure

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, n: int) -> Any:
        return self.coeffs[n]

    def __len__(self) -> int:
        return len(self.coeffs)

    def is_zero(self) -> bool:
        return all(_is_zero(c) for c in self.coeffs)

    def max_abs_coeff(self) -> Scalar:
        return max(_abs(c) for c in self.coeffs)

    def truncate(self, order: int) -> "FormalSeries":
        if order > self.order:
            raise ValueError(f"cannot extend a series of order {self.order} to {order}")
        return FormalSeries(self.coeffs[: order + 1], self.var)

    def map(self, fn: Callable[[Any], Any]) -> "FormalSeries":
        return FormalSeries(tuple(fn(c) for c in self.coeffs), self.var)

    # Arithmetic

    def _check(self, other: "FormalSeries") -> int:
        if other.var != self.var:
            raise ValueError(f"series in {self.var!r} and {other.var!r} do not combine")
        return min(self.order, other.order)

    def __neg__(self) -> "FormalSeries":
        return self.map(lambda c: -c)

    def __add__(self, other: Any) -> "FormalSeries":
        if isinstance(other, FormalSeries):
            order = self._check(other)
            return FormalSeries(
                tuple(self.coeffs[i] + other.coeffs[i] for i in range(order + 1)), self.var
            )
        return FormalSeries((self.coeffs[0] + other,) + self.coeffs[1:], self.var)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "FormalSeries":
        return self + (-other)

    def __rsub__(self, other: Any) -> "FormalSeries":
        return (-self) + other

    def __mul__(self, other: Any) -> "FormalSeries":
        if isinstance(other, FormalSeries):
            order = self._check(other)
            out: List[Any] = [0] * (order + 1)
            for i in range(order + 1):
                a = self.coeffs[i]
                if _is_zero(a):
                    continue
                for j in range(order + 1 - i):
                    out[i + j] = out[i + j] + a * other.coeffs[j]
            return FormalSeries(tuple(out), self.var)
        return self.map(lambda c: c * other)

    __rmul__ = __mul__

    def inverse(self) -> "FormalSeries":
        """Multiplicative inverse; the constant term must be a unit."""
        inv0 = _unit_inverse(self.coeffs[0])
        out: List[Any] = [inv0]
        for n in range(1, self.order + 1):
            acc: Any = 0
            for k in range(1, n + 1):
                acc = acc + self.coeffs[k] * out[n - k]
            out.append(-(acc * inv0))
        return FormalSeries(tuple(out), self.var)

    def __truediv__(self, other: Any) -> "FormalSeries":
        if isinstance(other, FormalSeries):
            return self * other.inverse()
        return self * reciprocal(other)

    def __rtruediv__(self, other: Any) -> "FormalSeries":
        return self.inverse() * other

    def __pow__(self, k: int) -> "FormalSeries":
        result = FormalSeries.constant(1, self.order, self.var)
        for _ in range(k):
            result = result * self
        return result

    # Calculus on series

    def shift_down(self, k: int = 1) -> "FormalSeries":
        """Divide by var**k; the first k coefficients must vanish. The order drops by k."""
        if any(not _is_zero(c) for c in self.coeffs[:k]):
            raise SeriesInversionError(f"series is not divisible by {self.var}^{k}")
        if k > self.order:
            raise SeriesInversionError("nothing left after the shift")
        return FormalSeries(self.coeffs[k:], self.var)

    def derivative(self) -> "FormalSeries":
        if self.order == 0:
            return FormalSeries((0,), self.var)
        return FormalSeries(tuple(k * c for k, c in enumerate(self.coeffs) if k > 0), self.var)

    def compose(self, inner: "FormalSeries") -> "FormalSeries":
        """self(inner(v)); inner must have zero constant term."""
        if not _is_zero(inner.coeffs[0]):
            raise SeriesInversionError("inner series of a composition needs zero constant term")
        order = min(self.order, inner.order)
        inner = inner.truncate(order)
        result = FormalSeries.constant(self.coeffs[order], order, inner.var)
        for c in reversed(self.coeffs[:order]):
            result = result * inner + c
        return result

    def reversion(self) -> "FormalSeries":
        """
        Compositional inverse g with self(g(v)) = v, by Newton iteration.

        Each step doubles the number of correct coefficients.
        """
        if not _is_zero(self.coeffs[0]):
            raise SeriesInversionError("reversion needs zero constant term")
        if self.order < 1:
            raise SeriesInversionError("reversion needs at least the linear term")
        inv1 = _unit_inverse(self.coeffs[1])
        order = self.order
        identity = FormalSeries.variable(order, self.var)
        g = identity * inv1
        derivative = self.derivative()
        steps = max(1, math.ceil(math.log2(order + 1))) + 1
        for _ in range(steps):
            defect = self.compose(g) - identity
            slope = FormalSeries.from_coefficients(derivative.compose(g.truncate(order - 1)).coeffs, order, self.var)
            g = g - defect / slope
        return g

    def lagrange_reversion(self) -> "FormalSeries":
        """Compositional inverse by Lagrange inversion: [v^n]g = (1/n)[u^(n-1)](u/f)^n."""
        if not _is_zero(self.coeffs[0]):
            raise SeriesInversionError("reversion needs zero constant term")
        quotient = self.shift_down(1).inverse()  # u / f(u), order - 1
        power = FormalSeries.constant(1, quotient.order, self.var)
        out: List[Any] = [0]
        for n in range(1, self.order + 1):
            power = power * quotient
            out.append(power.coeffs[n - 1] * _fraction_of(n, self.coeffs[1]))
        return FormalSeries(tuple(out), self.var)


@dataclass(frozen=True, eq=False)
class BivariateSeries:
    """Truncated double series sum(coeffs[n][m] * z1**n * z2**m), 0 <= n, m <= order."""

    coeffs: Tuple[Tuple[Any, ...], ...]

    __array_ufunc__ = None

    def __post_init__(self):
        rows = tuple(tuple(row) for row in self.coeffs)
        size = len(rows)
        if size == 0 or any(len(row) != size for row in rows):
            raise ValueError("bivariate series coefficients must form a square table")
        object.__setattr__(self, "coeffs", rows)

    # Constructors

    @classmethod
    def from_terms(cls, terms: Dict[Tuple[int, int], Any], order: int) -> "BivariateSeries":
        table = [[0] * (order + 1) for _ in range(order + 1)]
        for (n, m), value in terms.items():
            if n <= order and m <= order:
                table[n][m] = table[n][m] + value
        return cls(tuple(tuple(row) for row in table))

    @classmethod
    def constant(cls, value: Any, order: int) -> "BivariateSeries":
        return cls.from_terms({(0, 0): value}, order)

    # Structure

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def coefficient(self, n: int, m: int) -> Any:
        return self.coeffs[n][m]

    def max_abs_coeff(self) -> Scalar:
        return max(_abs(c) for row in self.coeffs for c in row)

    def truncate(self, order: int) -> "BivariateSeries":
        return BivariateSeries(tuple(row[: order + 1] for row in self.coeffs[: order + 1]))

    def _binary(self, other: "BivariateSeries", op) -> "BivariateSeries":
        order = min(self.order, other.order)
        return BivariateSeries(
            tuple(
                tuple(op(self.coeffs[n][m], other.coeffs[n][m]) for m in range(order + 1))
                for n in range(order + 1)
            )
        )

    # Arithmetic

    def __neg__(self) -> "BivariateSeries":
        return BivariateSeries(tuple(tuple(-c for c in row) for row in self.coeffs))

    def __add__(self, other: Any) -> "BivariateSeries":
        if isinstance(other, BivariateSeries):
            return self._binary(other, lambda a, b: a + b)
        rows = [list(row) for row in self.coeffs]
        rows[0][0] = rows[0][0] + other
        return BivariateSeries(tuple(tuple(row) for row in rows))

    __radd__ = __add__

    def __sub__(self, other: Any) -> "BivariateSeries":
        return self + (-other)

    def __rsub__(self, other: Any) -> "BivariateSeries":
        return (-self) + other

    def __mul__(self, other: Any) -> "BivariateSeries":
        if not isinstance(other, BivariateSeries):
            return BivariateSeries(tuple(tuple(c * other for c in row) for row in self.coeffs))
        order = min(self.order, other.order)
        table: List[List[Any]] = [[0] * (order + 1) for _ in range(order + 1)]
        for n1 in range(order + 1):
            for m1 in range(order + 1):
                a = self.coeffs[n1][m1]
                if _is_zero(a):
                    continue
                for n2 in range(order + 1 - n1):
                    row = other.coeffs[n2]
                    target = table[n1 + n2]
                    for m2 in range(order + 1 - m1):
                        b = row[m2]
                        if not _is_zero(b):
                            target[m1 + m2] = target[m1 + m2] + a * b
        return BivariateSeries(tuple(tuple(row) for row in table))

    __rmul__ = __mul__

    def inverse(self) -> "BivariateSeries":
        """Inverse as sum_k (1 - s/c)^k / c, exact because the defect has no constant term."""
        c = self.coeffs[0][0]
        inv0 = _unit_inverse(c)
        defect = 1 - self * inv0  # zero constant term
        result = BivariateSeries.constant(1, self.order)
        power = BivariateSeries.constant(1, self.order)
        for _ in range(2 * self.order):
            power = power * defect
            result = result + power
        return result * inv0

    def __truediv__(self, other: Any) -> "BivariateSeries":
        if isinstance(other, BivariateSeries):
            return self * other.inverse()
        return self * reciprocal(other)

    # z2 manipulations used by the harness generating functions

    def at_z2_zero(self) -> "BivariateSeries":
        """The series with z2 set to 0 (only the m = 0 column survives)."""
        return BivariateSeries(
            tuple(tuple(row[0] if m == 0 else 0 for m in range(len(row))) for row in self.coeffs)
        )

    def shift_z2_down(self) -> "BivariateSeries":
        """Divide by z2; the m = 0 column must vanish. The order drops by one."""
        if any(not _is_zero(row[0]) for row in self.coeffs):
            raise SeriesInversionError("series is not divisible by z2")
        order = self.order - 1
        return BivariateSeries(tuple(tuple(row[1 : order + 2]) for row in self.coeffs[: order + 1]))
