"""
Dense polynomials over a generic coefficient ring.

Coefficients are stored constant term first. A coefficient may itself be a
``Poly`` in an inner variable, which is how bivariate objects such as
Q_n(z; y, u, t) (a polynomial in z whose coefficients are polynomials in y)
are represented. Variables are nested in the fixed order of
``VARIABLE_ORDER``: a polynomial in an outer variable may carry coefficients
in inner variables, never the reverse.
"""

from dataclasses import dataclass
from typing import Any, Iterable, List, Tuple

import numpy as np

from backend.utils.scalars import Scalar, magnitude, reciprocal, scalar_to_json

# outermost first
VARIABLE_ORDER: Tuple[str, ...] = ("z", "y", "x", "w")


def _rank(var: str) -> int:
    try:
        return VARIABLE_ORDER.index(var)
    except ValueError:
        raise ValueError(f"unknown polynomial variable {var!r}") from None


def _is_zero(c: Any) -> bool:
    if isinstance(c, Poly):
        return c.is_zero()
    return c == 0


def _normalize(c: Any) -> Any:
    """Collapse constant inner polynomials to their scalar value."""
    if isinstance(c, Poly) and c.degree <= 0:
        return c.coeffs[0] if c.coeffs else 0
    return c


@dataclass(frozen=True, eq=False)
class Poly:
    """Polynomial sum(coeffs[k] * var**k)."""

    coeffs: Tuple[Any, ...] = ()
    var: str = "x"

    # numpy must defer to our reflected operators
    __array_ufunc__ = None

    def __post_init__(self):
        _rank(self.var)
        coeffs = [_normalize(c) for c in self.coeffs]
        for c in coeffs:
            if isinstance(c, Poly) and _rank(c.var) <= _rank(self.var):
                raise ValueError(
                    f"coefficient in {c.var!r} cannot sit inside a polynomial in {self.var!r}"
                )
        while coeffs and _is_zero(coeffs[-1]):
            coeffs.pop()
        object.__setattr__(self, "coeffs", tuple(coeffs))

    # Constructors

    @classmethod
    def constant(cls, value: Any, var: str = "x") -> "Poly":
        return cls((value,), var)

    @classmethod
    def variable(cls, var: str = "x") -> "Poly":
        return cls((0, 1), var)

    @classmethod
    def monomial(cls, k: int, value: Any = 1, var: str = "x") -> "Poly":
        return cls((0,) * k + (value,), var)

    # Structure

    @property
    def degree(self) -> int:
        """Degree in the outer variable; -1 for the zero polynomial."""
        return len(self.coeffs) - 1

    @property
    def leading(self) -> Any:
        return self.coeffs[-1] if self.coeffs else 0

    def is_zero(self) -> bool:
        return not self.coeffs

    def is_monic(self) -> bool:
        return self.degree >= 0 and self.leading == 1

    def coefficient(self, k: int) -> Any:
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else 0

    def max_abs_coeff(self) -> Scalar:
        """Largest |coefficient| over all nesting levels (0 for the zero polynomial)."""
        best: Scalar = 0
        for c in self.coeffs:
            value = c.max_abs_coeff() if isinstance(c, Poly) else abs(c)
            if value > best:
                best = value
        return best

    # Arithmetic

    def __neg__(self) -> "Poly":
        return Poly(tuple(-c for c in self.coeffs), self.var)

    def __add__(self, other: Any) -> "Poly":
        if isinstance(other, Poly):
            if other.var == self.var:
                n = max(len(self.coeffs), len(other.coeffs))
                return Poly(
                    tuple(self.coefficient(i) + other.coefficient(i) for i in range(n)),
                    self.var,
                )
            if _rank(other.var) < _rank(self.var):
                return other.__add__(self)
        head = self.coeffs[0] if self.coeffs else 0
        return Poly((head + other,) + self.coeffs[1:], self.var)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Poly":
        return self + (-other)

    def __rsub__(self, other: Any) -> "Poly":
        return (-self) + other

    def __mul__(self, other: Any) -> "Poly":
        if isinstance(other, Poly):
            if other.var == self.var:
                if self.is_zero() or other.is_zero():
                    return Poly((), self.var)
                out: List[Any] = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
                for i, a in enumerate(self.coeffs):
                    if _is_zero(a):
                        continue
                    for j, b in enumerate(other.coeffs):
                        out[i + j] = out[i + j] + a * b
                return Poly(tuple(out), self.var)
            if _rank(other.var) < _rank(self.var):
                return other.__mul__(self)
        return Poly(tuple(c * other for c in self.coeffs), self.var)

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> "Poly":
        if isinstance(other, Poly):
            raise TypeError("polynomial division is not supported")
        return self * reciprocal(other)

    def __pow__(self, k: int) -> "Poly":
        if k < 0:
            raise ValueError("negative powers are not polynomials")
        result: Any = Poly.constant(1, self.var)
        for _ in range(k):
            result = result * self
        return result

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, (Poly, int, float)) and not hasattr(other, "denominator"):
            return NotImplemented
        difference = self - other
        return isinstance(difference, Poly) and difference.is_zero()

    __hash__ = None  # type: ignore[assignment]

    # Evaluation

    def __call__(self, value: Any) -> Any:
        """Horner evaluation of the outer variable; works on scalars, Polys and arrays."""
        result: Any = 0
        for c in reversed(self.coeffs):
            result = result * value + c
        return _normalize(result)

    def substitute(self, var: str, value: Any) -> Any:
        """Evaluate the given (outer or inner) variable at value."""
        if var == self.var:
            return self(value)
        return _normalize(
            Poly(
                tuple(c.substitute(var, value) if isinstance(c, Poly) else c for c in self.coeffs),
                self.var,
            )
        )

    def derivative(self) -> "Poly":
        return Poly(tuple(k * c for k, c in enumerate(self.coeffs) if k > 0), self.var)

    # Conversions

    def to_numpy(self) -> np.ndarray:
        """Float coefficient array, constant term first (univariate only)."""
        if any(isinstance(c, Poly) for c in self.coeffs):
            raise TypeError("nested polynomial has no flat coefficient array")
        return np.array([float(c) for c in self.coeffs], dtype=float)

    def to_json(self) -> list:
        if any(isinstance(c, Poly) for c in self.coeffs):
            return [c.to_json() if isinstance(c, Poly) else scalar_to_json(c) for c in self.coeffs]
        return [scalar_to_json(c) for c in self.coeffs]

    def __str__(self) -> str:
        if self.is_zero():
            return "0"
        terms = []
        for k, c in enumerate(self.coeffs):
            if _is_zero(c):
                continue
            text = f"({c})" if isinstance(c, Poly) else str(c)
            if k == 0:
                terms.append(text)
            elif k == 1:
                terms.append(f"{text}*{self.var}")
            else:
                terms.append(f"{text}*{self.var}^{k}")
        return " + ".join(terms)


def residual(lhs: Any, rhs: Any) -> Scalar:
    """Largest absolute coefficient of lhs - rhs (works for scalars and Polys)."""
    difference = lhs - rhs
    if isinstance(difference, Poly):
        return difference.max_abs_coeff()
    return abs(difference)


def from_coefficients(values: Iterable[Any], var: str = "x") -> Poly:
    return Poly(tuple(values), var)


def relative_residual(lhs: Any, rhs: Any) -> float:
    """|lhs - rhs| / max(1, |lhs|) as a float."""
    scale = max(1.0, magnitude(lhs.max_abs_coeff() if isinstance(lhs, Poly) else lhs))
    return magnitude(residual(lhs, rhs)) / scale
