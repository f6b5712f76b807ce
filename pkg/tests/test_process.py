from fractions import Fraction as F
from io import StringIO

import numpy as np
import pandas as pd
import pytest
from hypothesis import assume, given, settings as hypothesis_settings
from hypothesis.strategies import fractions, tuples

from backend.models.errors import InvalidParametersError
from backend.services import process
from backend.services.recurrences import ProcessParams
from backend.services.spectra import jacobi_of_marginal, moments
from backend.utils.poly import Poly

x = Poly.variable("x")

KERNEL_POINTS = [(0.0, 0.0), (0.5, 1.0), (-1.0, 1.0), (1.0, -0.5), (2.0, 1 / 3)]
KERNEL_TIMES = [(0.0, 0.5, 1.0), (0.5, 1.0, 2.0), (1.0, 3.0, 4.0)]


def test_regression_coefficients():
    coeffs = process.regression_coeffs(1, 2, 4)
    assert (coeffs.a, coeffs.b) == (F(2, 3), F(1, 3))
    assert coeffs.mean(3, 6) == 4


@hypothesis_settings(max_examples=50, deadline=None)
@given(
    tuples(
        fractions(min_value=0, max_value=5, max_denominator=9),
        fractions(min_value=F(1, 9), max_value=5, max_denominator=9),
        fractions(min_value=F(1, 9), max_value=5, max_denominator=9),
    ),
    fractions(min_value=-3, max_value=3, max_denominator=7),
    fractions(min_value=-3, max_value=3, max_denominator=7),
)
def test_general_coefficients_reduce_to_bipoisson(start, eta, theta):
    s, first_gap, second_gap = start
    t, u = s + first_gap, s + first_gap + second_gap
    general = process.variance_coeffs(0, 0, 0, eta, theta, s, t, u)
    assume(1 + eta * theta >= 0)
    specific = process.harness_variance_coeffs(ProcessParams(eta, theta), s, t, u)
    assert general.as_tuple() == specific.as_tuple()


def test_second_moment_minus_mean_is_the_conditional_variance():
    q, sigma, tau, eta, theta = F(1, 2), F(1, 3), F(1, 5), F(1, 2), F(-1, 3)
    s, t, u, xs, xu = F(1), F(2), F(4), F(1, 3), F(-1, 2)
    var = process.variance_coeffs(q, sigma, tau, eta, theta, s, t, u)
    mean = process.regression_coeffs(s, t, u).mean(xs, xu)
    expected = process.q_conditional_variance(q, sigma, tau, eta, theta, s, t, u, xs, xu)
    assert var.second_moment(xs, xu) - mean * mean == expected


def test_bipoisson_conditional_variance():
    params = ProcessParams(F(1, 2), F(1, 3))
    s, t, u, xs, xu = F(1), F(2), F(4), F(1, 2), F(2)
    var = process.harness_variance_coeffs(params, s, t, u)
    mean = process.regression_coeffs(s, t, u).mean(xs, xu)
    assert var.second_moment(xs, xu) - mean * mean == process.conditional_variance(params, s, t, u, xs, xu)


def test_variance_denominator_must_not_vanish():
    with pytest.raises(InvalidParametersError):
        process.variance_coeffs(2, 0, 0, 0, 0, 1, F(3, 2), 2)


def test_residual_scan_keeps_worst_cell():
    scan = process.ResidualScan("demo")
    scan.update(1e-3, n=1)
    scan.update(5e-3, n=2)
    scan.update(2e-3, n=3)
    assert scan.value == 5e-3
    assert scan.cell == {"n": 2}


@pytest.mark.parametrize("eta,theta", KERNEL_POINTS)
@pytest.mark.parametrize("s,t,u", KERNEL_TIMES)
def test_chapman_kolmogorov(eta, theta, s, t, u):
    params = ProcessParams(eta, theta)
    assert process.chapman_kolmogorov_residual(params, s, t, u, 8) < 1e-8


@pytest.mark.parametrize("eta,theta", [(F(1, 2), F(1)), (F(-1), F(1)), (F(2), F(-1, 3)), (F(0), F(0))])
@pytest.mark.parametrize("s,t", [(F(0), F(1)), (F(1, 2), F(2))])
def test_martingale_polynomials_exact(eta, theta, s, t):
    assert process.martingale_residual(ProcessParams(eta, theta), s, t, 8) == 0


@pytest.mark.parametrize("eta,theta", KERNEL_POINTS)
def test_martingale_polynomials_float(eta, theta):
    assert process.martingale_residual(ProcessParams(eta, theta), 0.5, 2.0, 8) < 1e-8


@pytest.mark.parametrize("eta,theta", [(F(1, 2), F(1)), (F(-1), F(1)), (F(2), F(-1, 3)), (F(0), F(0))])
@pytest.mark.parametrize("s,t", [(F(0), F(1)), (F(1, 2), F(2))])
def test_kernel_moments_exact(eta, theta, s, t):
    scan = process.kernel_moment_scan(ProcessParams(eta, theta), s, t)
    assert scan.value == 0
    assert scan.check == "kernel_moments"


@pytest.mark.parametrize("eta,theta", KERNEL_POINTS)
@pytest.mark.parametrize("s,t,u", KERNEL_TIMES)
def test_kernel_moments_float(eta, theta, s, t, u):
    scan = process.kernel_moment_scan(ProcessParams(eta, theta), s, u)
    assert scan.value <= 1e-12
    assert scan.cell["moment"] in {"mean", "variance"}


def test_conditional_moments_exact():
    params = ProcessParams(F(1, 2), F(1, 3))
    s, t = F(1), F(3)
    assert process.conditional_moment_poly(params, s, t, 1) == x
    assert process.conditional_moment_poly(params, s, t, 2) == x**2 + (t - s) * (1 + x * params.eta)
    fifth = process.conditional_moment_poly(params, s, t, 5)
    assert fifth.degree == 5
    assert fifth.leading == 1


@pytest.mark.parametrize("n", range(0, 7))
def test_conditional_moments_float_fit(n):
    params = ProcessParams(F(1, 2), F(1, 2))
    fitted = process.conditional_moment_poly(ProcessParams(0.5, 0.5), 1.0, 2.0, n)
    exact = process.conditional_moment_poly(params, F(1), F(2), n)
    assert fitted.degree == n
    for k in range(n + 1):
        assert float(fitted.coefficient(k)) == pytest.approx(float(exact.coefficient(k)), abs=1e-6)


def test_conditional_moment_from_time_zero():
    # X_0 = 0, so E(X_t^2 | X_0 = x) = x^2 + t(1 + eta x) in exact mode
    params = ProcessParams(F(1), F(1))
    assert process.conditional_moment_poly(params, 0, F(2), 2) == x**2 + 2 * (1 + x)


def test_harness_low_coefficients():
    params = ProcessParams(F(1, 2), F(1, 3))
    s, t, u = F(1), F(2), F(3)
    phi1 = process.phi1_series(params, s, t, 3)
    assert phi1.coefficient(1, 0) == s
    assert phi1.coefficient(0, 1) == t
    phi2 = process.phi2_series(params, s, t, u, 3)
    # E(X_t X_u) = t
    assert phi2.coefficient(0, 0) == t
    assert process.phi0_series(params, s, 3).coefficient(0, 0) == 1
    assert process.phi0_series(params, s, 3).coefficient(1, 0) == 0


@pytest.mark.parametrize("eta,theta", [(F(1, 2), F(1)), (F(-1), F(1)), (F(0), F(0)), (F(2), F(-1, 4)), (F(1), F(1))])
@pytest.mark.parametrize("s,t,u", [(F(1), F(2), F(3)), (F(1, 2), F(1), F(2))])
def test_harness_series_is_exact(eta, theta, s, t, u):
    lr, qv = process.harness_series_scans(ProcessParams(eta, theta), s, t, u, 8)
    assert lr.value == 0
    assert qv.value == 0


def test_harness_series_float():
    lr, qv = process.harness_series_scans(ProcessParams(0.5, 1.0), 1.0, 2.0, 3.0, 8)
    assert lr.value < 1e-10
    assert qv.value < 1e-10


@pytest.mark.parametrize("eta,theta", [(0.5, 1.0), (-1.0, 1.0), (1.0, -0.5)])
def test_generating_functions_match_quadrature(eta, theta):
    params = ProcessParams(eta, theta)
    s, t, u, M = 0.5, 1.0, 2.0, 4
    tables = process.harness_tables(params, s, t, u, M)
    expected = {
        "1": process.phi0_series(params, s, M),
        "s": process.phi1_series(params, s, s, M),
        "t": process.phi1_series(params, s, t, M),
        "u": process.phi1_series(params, s, u, M),
        "ss": process.phi2_series(params, s, s, s, M),
        "su": process.phi2_series(params, s, s, u, M),
        "uu": process.phi2_series(params, s, u, u, M),
        "tt": process.phi2_series(params, s, t, t, M),
    }
    for key, series in expected.items():
        for n in range(M + 1):
            for m in range(M + 1):
                assert tables[key][n, m] == pytest.approx(float(series.coefficient(n, m)), rel=1e-8, abs=1e-8), (key, n, m)


def test_harness_residuals_both_paths():
    result = process.harness_residuals(ProcessParams(F(1, 2), F(1)), F(1), F(2), F(3), 8, quadrature_order=4)
    assert result.series_lr == 0
    assert result.series_qv == 0
    assert result.quadrature_lr < 1e-8
    assert result.quadrature_qv < 1e-8
    assert result.lr_residual == result.quadrature_lr
    skipped = process.harness_residuals(ProcessParams(F(1, 2), F(1)), F(1), F(2), F(3), 4, quadrature_order=0)
    assert skipped.quadrature_lr is None
    assert skipped.worst_cell["path"] == "series"


def test_mixed_moments_exact():
    params = ProcessParams(F(1, 2), F(1, 3))
    s, t = F(1, 2), F(2)
    assert process.mixed_moment(params, (t,), (2,)) == t
    assert process.mixed_moment(params, (s, t), (1, 1)) == s
    assert process.mixed_moment(params, (s, t), (2, 1)) == s * (s * params.eta + params.theta)
    assert process.covariance_check(params, s, t) == 0


def test_mixed_moments_float():
    params = ProcessParams(0.5, 1 / 3)
    assert process.mixed_moment(params, (0.5, 2.0), (2, 1)) == pytest.approx(0.5 * (0.25 + 1 / 3), abs=1e-10)
    assert process.covariance_check(params, 1.0, 3.0) < 1e-10


def test_mixed_moment_needs_one_power_per_time():
    with pytest.raises(InvalidParametersError):
        process.mixed_moment(ProcessParams(0.0, 0.0), (1.0, 2.0), (1,))


@pytest.mark.parametrize("value", [F(1, 2), F(1)])
@pytest.mark.parametrize("times", [(F(1), F(2)), (F(1, 2), F(3))])
def test_time_reversal_exact(value, times):
    assert process.reversal_check(ProcessParams(value, value), times, 4) == 0


def test_time_reversal_float():
    assert process.reversal_check(ProcessParams(0.5, 0.5), (1.0, 2.0), 4) < 1e-8


def test_time_reversal_preconditions():
    with pytest.raises(InvalidParametersError):
        process.reversal_check(ProcessParams(0.5, 0.3), (1.0, 2.0), 4)
    with pytest.raises(InvalidParametersError):
        process.reversal_check(ProcessParams(0.5, 0.5), (1.0, 2.0, 3.0), 4)
    with pytest.raises(InvalidParametersError):
        process.reversal_check(ProcessParams(0.5, 0.5), (2.0, 1.0), 4)


def test_paths_are_deterministic():
    params = ProcessParams(0.5, 1.0)
    first = process.sample_paths(params, (1, 2, 3), seed=7, n=5).to_csv()
    second = process.sample_paths(params, (1, 2, 3), seed=7, n=5).to_csv()
    assert first == second
    assert first.startswith("# seed=7\npath,time,value\n")
    frame = pd.read_csv(StringIO(first), comment="#")
    assert list(frame.columns) == ["path", "time", "value"]
    assert len(frame) == 15


def test_single_path():
    path = process.sample_path(ProcessParams(0.0, 0.0), (0.5, 1.0), seed=1)
    assert path.times == (0.5, 1.0)
    assert len(path.values) == 2
    assert path.seed == 1


def test_degenerate_paths_stay_on_two_points():
    ensemble = process.sample_paths(ProcessParams(-1.0, 1.0), (1.0, 2.0, 3.0), seed=11, n=400)
    for k, t in enumerate(ensemble.times):
        column = ensemble.values[:, k]
        on_support = np.isclose(column, -t, atol=1e-9) | np.isclose(column, 1.0, atol=1e-9)
        assert on_support.all()
    # once at 1 a path stays there
    stuck = np.isclose(ensemble.values[:, 0], 1.0)
    assert np.allclose(ensemble.values[stuck, 2], 1.0)


@pytest.mark.slow
def test_path_moments():
    n = 20_000
    params = ProcessParams(0.5, 0.5)
    ensemble = process.sample_paths(params, (1.0, 2.0), seed=5, n=n)
    first, second = ensemble.values[:, 0], ensemble.values[:, 1]
    # E X_s X_t = min(s, t)
    assert abs((first * second).mean() - 1.0) < 0.1
    for k, t in enumerate(ensemble.times):
        column = ensemble.values[:, k]
        assert np.all(1 + params.eta * column >= -1e-12)
        exact = [float(m) for m in moments(jacobi_of_marginal(params, t), 8)]
        for power in (1, 2, 3, 4):
            spread = np.sqrt((exact[2 * power] - exact[power] ** 2) / n)
            assert abs((column**power).mean() - exact[power]) < 3 * spread, (t, power)


@pytest.mark.slow
def test_path_increments_have_the_kernel_conditional_variance():
    n = 20_000
    params = ProcessParams(0.5, 0.5)
    ensemble = process.sample_paths(params, (1.0, 2.0), seed=13, n=n)
    first, second = ensemble.values[:, 0], ensemble.values[:, 1]
    step = second - first
    # E((X_2 - X_1)^2 | X_1 = x) = (2 - 1)(1 + eta x), compared bin by bin over quantiles of X_1
    excess = step**2 - (1 + params.eta * first)
    for index in np.array_split(np.argsort(first), 10):
        assert abs(step[index].mean()) < 4 * step[index].std() / np.sqrt(len(index))
        assert abs(excess[index].mean()) < 4 * excess[index].std() / np.sqrt(len(index))
