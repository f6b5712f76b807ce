from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis.strategies import fractions, lists

from backend.models.errors import SeriesInversionError
from backend.utils.poly import Poly, relative_residual, residual
from backend.utils.scalars import ScalarMode, parse_scalar, scalar_from_json, scalar_to_json, to_scalar
from backend.utils.series import BivariateSeries, FormalSeries

x = Poly.variable("x")
y = Poly.variable("y")


def test_product_of_linear_factors():
    assert (x + 1) * (x - 1) == x**2 - 1
    assert ((x + 1) * (x - 1)).coeffs == (-1, 0, 1)


def test_trailing_zeros_are_dropped():
    p = Poly((1, 2, 0, 0), "x")
    assert p.degree == 1
    assert Poly((), "x").degree == -1
    assert (x - x).is_zero()


def test_nested_polynomial_substitution():
    # (x + 1) * y + x in y with coefficients in x
    p = (x + 1) * y + x
    assert p.var == "y"
    assert p.substitute("x", Fraction(1, 2)) == Poly((Fraction(1, 2), Fraction(3, 2)), "y")
    assert p.substitute("y", 2) == 3 * x + 2


def test_inner_variable_cannot_wrap_outer():
    with pytest.raises(ValueError):
        Poly((y, 1), "x")


def test_unknown_variable_rejected():
    with pytest.raises(ValueError):
        Poly((1,), "q")


def test_horner_evaluation_and_derivative():
    p = x**3 - 2 * x + 5
    assert p(Fraction(1, 2)) == Fraction(1, 8) - 1 + 5
    assert p.derivative() == 3 * x**2 - 2


def test_residuals():
    assert residual(x**2 + 3, x**2 + 1) == 2
    assert residual(Fraction(1, 3), Fraction(1, 3)) == 0
    assert relative_residual(100.0, 99.0) == pytest.approx(0.01)
    assert relative_residual(0.5, 0.25) == pytest.approx(0.25)


def test_poly_json_keeps_rationals_exact():
    p = Poly((Fraction(-1, 3), 0, 1), "x")
    assert p.to_json() == ["-1/3", "0", "1"]


def test_scalar_parsing_follows_mode():
    assert parse_scalar("1/3", ScalarMode.EXACT) == Fraction(1, 3)
    assert parse_scalar(" 0.25 ", ScalarMode.EXACT) == Fraction(1, 4)
    assert parse_scalar("1/4", ScalarMode.FLOAT) == 0.25
    assert to_scalar(0.1, ScalarMode.EXACT) == Fraction(1, 10)
    with pytest.raises(ValueError):
        parse_scalar("1/0", ScalarMode.EXACT)
    with pytest.raises(ValueError):
        parse_scalar("abc", ScalarMode.FLOAT)


def test_scalar_json_round_trip():
    assert scalar_to_json(Fraction(2, 3)) == "2/3"
    assert scalar_from_json("2/3") == Fraction(2, 3)
    assert scalar_to_json(0.5) == 0.5
    with pytest.raises(TypeError):
        scalar_to_json(True)


def test_geometric_inverse():
    series = FormalSeries.from_coefficients([1, -1], 6)
    assert series.inverse().coeffs == (1,) * 7


def test_reversion_matches_catalan_numbers():
    # f(v) = v + v^2 has inverse v - v^2 + 2v^3 - 5v^4 + 14v^5
    f = FormalSeries.from_coefficients([0, Fraction(1), Fraction(1)], 5, "w")
    g = f.reversion()
    assert list(g.coeffs) == [0, 1, -1, 2, -5, 14]
    assert f.compose(g).coeffs == (0, 1, 0, 0, 0, 0)


def test_newton_and_lagrange_reversion_agree():
    f = FormalSeries.from_coefficients([0, Fraction(2), Fraction(1, 3), Fraction(-1, 5), 1], 8, "w")
    assert f.reversion().coeffs == f.lagrange_reversion().coeffs


@given(lists(fractions(min_value=-3, max_value=3, max_denominator=7), min_size=1, max_size=6))
def test_inverse_is_two_sided(tail):
    series = FormalSeries.from_coefficients([1] + tail, len(tail))
    product = series * series.inverse()
    assert product.coeffs == (1,) + (0,) * len(tail)


def test_series_errors():
    with pytest.raises(SeriesInversionError):
        FormalSeries.from_coefficients([0, 1], 3).inverse()
    with pytest.raises(SeriesInversionError):
        FormalSeries.from_coefficients([1, 1], 3).compose(FormalSeries.from_coefficients([1, 1], 3))
    with pytest.raises(SeriesInversionError):
        FormalSeries.from_coefficients([1, 1], 3).shift_down(1)
    with pytest.raises(ValueError):
        FormalSeries.from_coefficients([1], 2, "w") + FormalSeries.from_coefficients([1], 2, "zeta")


def test_series_of_polynomials():
    # sum_n zeta^n x^n = 1/(1 - x zeta)
    series = FormalSeries.from_coefficients([1, -x], 4).inverse()
    assert series[3] == x**3


def test_bivariate_inverse():
    # 1/(1 - z1 z2) = sum_k (z1 z2)^k
    series = BivariateSeries.from_terms({(0, 0): 1, (1, 1): -1}, 4)
    inverse = series.inverse()
    for n in range(5):
        for m in range(5):
            assert inverse.coefficient(n, m) == (1 if n == m else 0)


def test_bivariate_z2_manipulations():
    series = BivariateSeries.from_terms({(0, 0): 1, (1, 0): 2, (0, 1): 3, (2, 2): 4}, 3)
    assert series.at_z2_zero().coefficient(1, 0) == 2
    assert series.at_z2_zero().coefficient(0, 1) == 0
    shifted = (series - series.at_z2_zero()).shift_z2_down()
    assert shifted.order == 2
    assert shifted.coefficient(0, 0) == 3
    assert shifted.coefficient(2, 1) == 4
    with pytest.raises(SeriesInversionError):
        series.shift_z2_down()
