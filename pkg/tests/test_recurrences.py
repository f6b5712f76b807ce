from fractions import Fraction as F

import pytest
from hypothesis import assume, given, settings as hypothesis_settings
from hypothesis.strategies import fractions

from backend.models.errors import IdentityVerificationError, InvalidParametersError
from backend.services.recurrences import (
    IdentityReport,
    ProcessParams,
    b_tilde,
    genfun_phi,
    genfun_psi,
    norm_squared,
    phi_closed_form,
    poly_B,
    poly_p,
    poly_Q,
    psi_closed_form,
    q_family,
    require_index,
    require_times,
    verify_identities,
)
from backend.services.spectra import integrate_poly, jacobi_of_marginal
from backend.utils.poly import Poly
from backend.utils.scalars import ScalarMode

x = Poly.variable("x")
y = Poly.variable("y")

IDENTITY_POINTS = [
    (F(0), F(0)),
    (F(1), F(1)),
    (F(-1), F(1)),
    (F(1, 2), F(-2)),
    (F(3), F(-1, 3)),
    (F(0), F(-2)),
    (F(-2), F(0)),
    (F(2, 3), F(-3, 4)),
]


def exact(eta, theta) -> ProcessParams:
    return ProcessParams(F(eta), F(theta))


def test_params_reject_negative_slack():
    with pytest.raises(InvalidParametersError):
        ProcessParams(F(2), F(-1))
    assert ProcessParams(F(-1), F(1)).is_degenerate
    assert not ProcessParams(F(1), F(1)).is_degenerate
    assert ProcessParams(F(1, 2), F(3)).time_reversed() == ProcessParams(F(3), F(1, 2))


def test_time_and_index_preconditions():
    assert require_times(0, F(1, 2), 1) == (0, F(1, 2), 1)
    with pytest.raises(InvalidParametersError):
        require_times(1, 1)
    with pytest.raises(InvalidParametersError):
        require_times(-1, 2)
    with pytest.raises(InvalidParametersError):
        require_times(0, 1, allow_zero_start=False)
    with pytest.raises(InvalidParametersError):
        require_index(-1)


def test_low_degree_p():
    params = exact(F(1, 2), F(1, 3))
    t = F(2)
    beta = t * params.eta + params.theta
    assert poly_p(params, t, 0) == 1
    assert poly_p(params, t, 1) == x
    assert poly_p(params, t, 2) == x**2 - beta * x - t


def test_low_degree_q_and_b():
    params = exact(F(1, 2), F(1, 3))
    s, t, x0 = F(1), F(3), F(1, 4)
    assert poly_Q(params, x0, t, s, 1) == y - x0
    gap = (t - s) * params.eta + params.theta
    assert poly_Q(params, x0, t, s, 2) == (y - gap) * (y - x0) - (t - s) * (1 + x0 * params.eta)
    assert poly_B(params, x0, t, s, 1) == y - x0 - (t - s) * params.eta


def test_q_from_origin_is_p():
    params = exact(F(-1, 2), F(2))
    t = F(3, 2)
    for n, q in enumerate(q_family(params, 0, t, 0, 6)):
        assert q == poly_p(params, t, n, var="y")


@pytest.mark.parametrize("eta,theta", IDENTITY_POINTS)
def test_orthogonality_and_norms(eta, theta):
    params = exact(eta, theta)
    t = F(3, 2)
    spec = jacobi_of_marginal(params, t)
    family = [poly_p(params, t, n) for n in range(6)]
    for m in range(6):
        for n in range(m + 1):
            value = integrate_poly(spec, family[m] * family[n])
            assert value == (norm_squared(params, t, n) if m == n else 0)
    for n in range(6):
        assert spec.norm_squared(n) == norm_squared(params, t, n)


@hypothesis_settings(max_examples=25, deadline=None)
@given(
    fractions(min_value=-3, max_value=3, max_denominator=5),
    fractions(min_value=-3, max_value=3, max_denominator=5),
    fractions(min_value=F(1, 5), max_value=4, max_denominator=5),
)
def test_p_family_is_orthogonal(eta, theta, t):
    assume(1 + eta * theta >= 0)
    params = ProcessParams(eta, theta)
    spec = jacobi_of_marginal(params, t)
    p3, p4 = poly_p(params, t, 3), poly_p(params, t, 4)
    assert integrate_poly(spec, p3 * p4) == 0
    assert integrate_poly(spec, p4 * p4) == norm_squared(params, t, 4)


def test_b_tilde_is_affine():
    params = exact(F(2), F(-1, 3))
    for k in range(8):
        assert b_tilde(params, F(1, 2), k).degree <= 1
    assert b_tilde(params, F(1, 2), 0) == 1


def test_generating_functions_match_closed_forms():
    params = exact(F(1, 3), F(-1, 2))
    x0, s, t = F(1, 5), F(1, 2), F(2)
    phi = genfun_phi(params, x0, t, s, 8)
    psi = genfun_psi(params, x0, t, s, 8)
    phi_closed = phi_closed_form(params, y, x0, t, s, 8)
    psi_closed = psi_closed_form(params, y, x0, t, s, 8)
    for n in range(9):
        assert phi[n] == phi_closed[n]
        assert psi[n] == psi_closed[n]


def test_psi_swaps_to_its_inverse():
    params = exact(F(3, 2), F(1, 4))
    s, t = F(1, 3), F(5, 2)
    product = psi_closed_form(params, y, x, t, s, 6) * psi_closed_form(params, x, y, s, t, 6)
    assert product[0] == 1
    for n in range(1, 7):
        assert product[n] == 0


@pytest.mark.parametrize("eta,theta", IDENTITY_POINTS)
def test_identity_suite_is_exact(eta, theta):
    report = verify_identities(exact(eta, theta), F(1, 2), F(1), F(2), F(1, 3), 8, exact=True)
    assert report.max_residual == 0
    assert report.passed
    assert {"Q_three_times", "Q_minus_p", "phi_closed_form", "psi_inverse", "phi_inverted"} <= set(report.residuals)


def test_identity_suite_from_time_zero():
    report = verify_identities(exact(F(-1, 3), F(2)), 0, F(1), F(3), F(1, 3), 8, exact=True)
    assert report.max_residual == 0


@pytest.mark.slow
def test_identity_suite_to_order_twelve():
    report = verify_identities(exact(F(1, 2), F(-2)), F(1, 2), F(1), F(2), F(1, 3), 12, exact=True)
    assert report.max_residual == 0


def test_identity_suite_in_floats():
    report = verify_identities(ProcessParams(0.5, 1.0), 0.5, 1.0, 2.0, 0.3, 8, exact=False)
    assert report.mode == ScalarMode.FLOAT
    assert report.tolerance > 0
    assert report.passed


def test_identity_report_raises_first_failure():
    params = exact(F(1), F(1))
    report = IdentityReport(params, (F(0), F(1), F(2)), F(0), 4, ScalarMode.EXACT, 0.0)
    report.record("Q_three_times", 2, F(1), F(1))
    report.record("demo_identity", 3, F(1), F(2))
    assert not report.passed
    with pytest.raises(IdentityVerificationError) as excinfo:
        report.raise_for_failures()
    assert excinfo.value.identity == "demo_identity"
    assert excinfo.value.index == 3
    assert excinfo.value.residual == 1.0
