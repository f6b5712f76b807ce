"""
The bi-Poisson Markov process assembled from its marginals and kernels.

Covers the regression and conditional-variance coefficients of the two-sided
conditional moments, the consistency checks of the kernel family
(Chapman-Kolmogorov, martingale polynomials, polynomial conditional moments),
the harness identities in generating-function and nested-quadrature form,
mixed moments, the time-reversal symmetry and path sampling.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from numpy.polynomial import Chebyshev, Polynomial
from numpy.polynomial import polynomial as P

from backend.models.errors import ConditionalMomentError, InvalidParametersError
from backend.services.recurrences import (
    ProcessParams,
    marginal_coefficients,
    monic_family,
    p_family,
    require_index,
    require_times,
    transition_coefficients,
)
from backend.services.spectra import (
    JacobiSpec,
    KernelFamily,
    QuadratureRule,
    SpectralMeasure,
    gauss_rule,
    integrate_poly,
    jacobi_of_marginal,
    jacobi_of_transition,
    moments,
    sample,
    spectral_measure,
)
from backend.utils.poly import Poly
from backend.utils.scalars import Scalar, ScalarMode, as_field, is_exact, magnitude
from backend.utils.series import BivariateSeries
from config import settings


# Coefficients of the two-sided conditional moments


@dataclass(frozen=True)
class RegressionCoeffs:
    """E(X_t | X_s, X_u) = a X_s + b X_u."""

    a: Scalar
    b: Scalar

    def mean(self, xs: Any, xu: Any) -> Any:
        return self.a * xs + self.b * xu


@dataclass(frozen=True)
class VarCoeffs:
    """E(X_t^2 | X_s, X_u) = A X_s^2 + B X_s X_u + C X_u^2 + D + alpha X_s + beta X_u."""

    A: Scalar
    B: Scalar
    C: Scalar
    D: Scalar
    alpha: Scalar
    beta: Scalar
    q: Scalar = 0
    sigma: Scalar = 0
    tau: Scalar = 0

    def second_moment(self, xs: Any, xu: Any) -> Any:
        return (
            self.A * xs * xs
            + self.B * xs * xu
            + self.C * xu * xu
            + self.D
            + self.alpha * xs
            + self.beta * xu
        )

    def as_tuple(self) -> Tuple[Scalar, ...]:
        return self.A, self.B, self.C, self.D, self.alpha, self.beta


def regression_coeffs(s: Any, t: Any, u: Any) -> RegressionCoeffs:
    """
    Coefficients of the linear two-sided regression.

    Args:
        s, t, u: times with 0 <= s < t < u

    Returns:
        RegressionCoeffs with a = (u-t)/(u-s), b = (t-s)/(u-s)
    """
    s, t, u = require_times(s, t, u)
    return RegressionCoeffs((u - t) / (u - s), (t - s) / (u - s))


def variance_coeffs(q: Any, sigma: Any, tau: Any, eta: Any, theta: Any, s: Any, t: Any, u: Any) -> VarCoeffs:
    """
    Coefficients of the quadratic two-sided conditional second moment of a
    harness with parameters (q, eta, theta, sigma, tau).

    Raises:
        InvalidParametersError: unordered times or u(1 + sigma s) + tau - q s = 0
    """
    s, t, u = require_times(s, t, u)
    q, sigma, tau, eta, theta = (as_field(v) for v in (q, sigma, tau, eta, theta))
    den = u * (1 + sigma * s) + tau - q * s
    if (den == 0) if is_exact(den) else abs(den) <= settings.DEGENERATE_TOL:
        raise InvalidParametersError(
            f"u(1 + sigma*s) + tau - q*s vanishes at q={q}, sigma={sigma}, tau={tau}, s={s}, u={u}"
        )
    width = u - s
    D = (u - t) * (t - s) / den
    return VarCoeffs(
        A=(u - t) * (u * (1 + sigma * t) + tau - q * t) / (width * den),
        B=(u - t) * (t - s) * (1 + q) / (width * den),
        C=(t - s) * (t * (1 + sigma * s) + tau - q * s) / (width * den),
        D=D,
        alpha=D * (u * eta - theta) / width,
        beta=D * (theta - s * eta) / width,
        q=q,
        sigma=sigma,
        tau=tau,
    )


def harness_variance_coeffs(params: ProcessParams, s: Any, t: Any, u: Any) -> VarCoeffs:
    """The bi-Poisson case q = sigma = tau = 0 written out directly."""
    s, t, u = require_times(s, t, u)
    eta, theta = params.eta, params.theta
    width = u - s
    return VarCoeffs(
        A=(u - t) / width,
        B=(t - s) * (u - t) / (width * u),
        C=(t - s) * t / (width * u),
        D=(t - s) * (u - t) / u,
        alpha=(t - s) * (u - t) * (u * eta - theta) / (width * u),
        beta=(t - s) * (t - u) * (s * eta - theta) / (width * u),
    )


def q_conditional_variance(
    q: Any, sigma: Any, tau: Any, eta: Any, theta: Any, s: Any, t: Any, u: Any, xs: Any, xu: Any
) -> Any:
    """Var(X_t | X_s = xs, X_u = xu) for the five-parameter quadratic harness."""
    s, t, u = require_times(s, t, u)
    q, sigma, tau, eta, theta = (as_field(v) for v in (q, sigma, tau, eta, theta))
    width = u - s
    den = u * (1 + sigma * s) + tau - q * s
    forward = u * xs - s * xu
    increment = xu - xs
    bracket = (
        1
        + sigma * forward * forward / (width * width)
        + eta * forward / width
        + tau * increment * increment / (width * width)
        + theta * increment / width
        - (1 - q) * increment * forward / (width * width)
    )
    return (u - t) * (t - s) / den * bracket


def conditional_variance(params: ProcessParams, s: Any, t: Any, u: Any, xs: Any, xu: Any) -> Any:
    """Var(X_t | X_s = xs, X_u = xu) of the bi-Poisson process."""
    return q_conditional_variance(0, 0, 0, params.eta, params.theta, s, t, u, xs, xu)


# Marginals and kernels


def marginal(params: ProcessParams, t: Any) -> SpectralMeasure:
    """The law pi_t of X_t."""
    return spectral_measure(jacobi_of_marginal(params, t), params, "marginal")


def transition(params: ProcessParams, x: Any, s: Any, t: Any) -> SpectralMeasure:
    """The kernel P_{s,t}(x, dy)."""
    return spectral_measure(jacobi_of_transition(params, x, s, t), params, "transition")


def symbolic_transition(params: ProcessParams, s: Any, t: Any) -> JacobiSpec:
    """Jacobi data of P_{s,t}(x, dy) with x kept as a polynomial variable."""
    s, t = require_times(s, t)
    b, a, tail = transition_coefficients(params, Poly.variable("x"), t, s)
    return JacobiSpec(b, a, tail)


def _float_params(params: ProcessParams) -> ProcessParams:
    return ProcessParams.from_values(params.eta, params.theta, ScalarMode.FLOAT)


def _node_count(deg: int) -> int:
    """Gauss nodes per nesting level for integrands of degree deg."""
    return min(max(deg + 2, settings.QUADRATURE_MIN_NODES), settings.MAX_JACOBI_NODES)


def _start_rule(params: ProcessParams, s: float, nodes: int) -> QuadratureRule:
    """Gauss rule of pi_s; X_0 = 0 almost surely."""
    if s == 0:
        return QuadratureRule(np.zeros(1), np.ones(1))
    return gauss_rule(jacobi_of_marginal(params, s), nodes)


def _kernel_rule(params: ProcessParams, x: float, s: float, t: float, nodes: int) -> QuadratureRule:
    return gauss_rule(jacobi_of_transition(params, float(x), s, t), nodes)


def _powers(values: np.ndarray, deg: int) -> np.ndarray:
    return values[:, None] ** np.arange(deg + 1)


def _relative(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return np.abs(lhs - rhs) / np.maximum(1.0, np.abs(lhs))


def _p_polys(params: ProcessParams, t: Scalar, n: int, var: str) -> List[Poly]:
    """p_0..p_n at time t >= 0; at t = 0 they reduce to p_n(0; 0) = 0 for n >= 1."""
    return monic_family(marginal_coefficients(params, t), n, var)


def _as_poly(value: Any, var: str) -> Poly:
    if isinstance(value, Poly):
        return value if value.var == var else Poly(value.coeffs, var)
    return Poly.constant(value, var)


# Grid scans


@dataclass
class ResidualScan:
    """Largest residual over a grid and the cell where it occurred."""

    check: str
    value: float = 0.0
    cell: Optional[Dict[str, Any]] = None

    def update(self, value: float, **cell: Any):
        value = float(value)
        if self.cell is None or value > self.value:
            self.value = value
            self.cell = cell


def chapman_kolmogorov_scan(params: ProcessParams, s: Any, t: Any, u: Any, deg: int) -> ResidualScan:
    """Worst |int y^k P_{s,u}(x, dy) - int int y^k P_{t,u}(z, dy) P_{s,t}(x, dz)| over k <= deg and the nodes x of pi_s."""
    s, t, u = (float(v) for v in require_times(s, t, u))
    deg = require_index(deg, "deg")
    params = _float_params(params)
    nodes = _node_count(deg)
    scan = ResidualScan("chapman")
    for x in _start_rule(params, s, nodes).nodes:
        direct = _kernel_rule(params, x, s, u, nodes)
        lhs = direct.weights @ _powers(direct.nodes, deg)
        middle = _kernel_rule(params, x, s, t, nodes)
        rhs = np.zeros(deg + 1)
        for z, weight in zip(middle.nodes, middle.weights):
            inner = _kernel_rule(params, z, t, u, nodes)
            rhs += weight * (inner.weights @ _powers(inner.nodes, deg))
        errors = _relative(lhs, rhs)
        k = int(np.argmax(errors))
        scan.update(errors[k], x=float(x), k=k)
    logger.debug(f"Chapman-Kolmogorov at (s,t,u)=({s},{t},{u}), deg={deg}: {scan.value:.3e}")
    return scan


def chapman_kolmogorov_residual(params: ProcessParams, s: Any, t: Any, u: Any, deg: int) -> float:
    """
    Consistency of the kernels, P_{s,u} = P_{s,t} P_{t,u}, tested on monomials.

    Args:
        params: process parameters
        s, t, u: times with 0 <= s < t < u
        deg: highest monomial degree

    Returns:
        Largest relative residual
    """
    return chapman_kolmogorov_scan(params, s, t, u, deg).value


def martingale_scan(params: ProcessParams, s: Any, t: Any, N: int, exact: Optional[bool] = None) -> ResidualScan:
    """Worst |int p_n(y; t) P_{s,t}(x, dy) - p_n(x; s)| over n <= N."""
    s, t = require_times(s, t)
    N = require_index(N, "N", minimum=1)
    exact = params.mode == ScalarMode.EXACT if exact is None else exact
    scan = ResidualScan("martingale")

    if exact:
        # x stays symbolic, so the identity is checked for every start point at once
        kernel = symbolic_transition(params, s, t)
        later = p_family(params, t, N, var="y")
        earlier = _p_polys(params, s, N, "x")
        for n in range(N + 1):
            projected = _as_poly(integrate_poly(kernel, later[n]), "x")
            scan.update(magnitude((projected - earlier[n]).max_abs_coeff()), n=n, x="symbolic")
        return scan

    params = _float_params(params)
    s, t = float(s), float(t)
    nodes = _node_count(N)
    later = [p.to_numpy() for p in p_family(params, t, N, var="y")]
    earlier = [p.to_numpy() for p in _p_polys(params, s, N, "x")]
    for x in _start_rule(params, s, nodes).nodes:
        rule = _kernel_rule(params, x, s, t, nodes)
        for n in range(N + 1):
            lhs = float(rule.weights @ P.polyval(rule.nodes, later[n]))
            rhs = float(P.polyval(x, earlier[n]))
            scan.update(abs(lhs - rhs) / max(1.0, abs(lhs)), n=n, x=float(x))
    return scan


def kernel_moment_scan(params: ProcessParams, s: Any, t: Any, exact: Optional[bool] = None) -> ResidualScan:
    """
    Worst residual of the first two kernel moments: mean x and variance
    (t - s)(1 + eta*x).

    Both are single integrals against P_{s,t}(x, dy). Exact mode reads them
    off the symbolic moment functional; float mode runs x over the Gauss
    nodes of pi_s.
    """
    s, t = require_times(s, t)
    exact = params.mode == ScalarMode.EXACT if exact is None else exact
    scan = ResidualScan("kernel_moments")

    if exact:
        kernel = symbolic_transition(params, s, t)
        x, y = Poly.variable("x"), Poly.variable("y")
        mean = _as_poly(integrate_poly(kernel, y), "x")
        second = _as_poly(integrate_poly(kernel, y * y), "x")
        scan.update(magnitude((mean - x).max_abs_coeff()), moment="mean", x="symbolic")
        expected = (1 + x * params.eta) * (t - s)
        scan.update(magnitude((second - mean * mean - expected).max_abs_coeff()), moment="variance", x="symbolic")
        return scan

    params = _float_params(params)
    s, t = float(s), float(t)
    nodes = _node_count(2)
    for x in _start_rule(params, s, nodes).nodes:
        rule = _kernel_rule(params, x, s, t, nodes)
        mean = float(rule.weights @ rule.nodes)
        scan.update(abs(mean - x) / max(1.0, abs(mean)), moment="mean", x=float(x))
        variance = float(rule.weights @ (rule.nodes - x) ** 2)
        expected = (t - s) * (1 + params.eta * x)
        scan.update(abs(variance - expected) / max(1.0, abs(variance)), moment="variance", x=float(x))
    return scan


def martingale_residual(params: ProcessParams, s: Any, t: Any, N: int, exact: Optional[bool] = None) -> float:
    """
    Martingale property of p_n(X_t; t) checked up to degree N.

    In exact mode the kernel integral is computed symbolically in x from the
    moment functional, so the residual is exactly 0 when the property holds.
    In float mode x runs over the Gauss nodes of pi_s.
    """
    return martingale_scan(params, s, t, N, exact).value


# Conditional moments


def _fit_interval(params: ProcessParams, s: float, t: float) -> Tuple[float, float]:
    """Hull of the support of pi_s (of pi_t when s = 0)."""
    points = marginal(params, s if s > 0 else t).support_points()
    return min(points), max(points)


def conditional_moment_poly(params: ProcessParams, s: Any, t: Any, n: int, exact: Optional[bool] = None) -> Poly:
    """
    The polynomial x -> E(X_t^n | X_s = x).

    Exact mode reads it off the symbolic moment functional of the kernel.
    Float mode interpolates Gauss-rule values at n+1 Chebyshev points of the
    support of pi_s and confirms the fit at 2n further points.

    Raises:
        ConditionalMomentError: the result is not monic of degree n or the fit
            does not reproduce the off-grid values
    """
    s, t = require_times(s, t)
    n = require_index(n)
    exact = params.mode == ScalarMode.EXACT if exact is None else exact

    if exact:
        result = _as_poly(moments(symbolic_transition(params, s, t), n)[n], "x")
        if result.degree != n or result.leading != 1:
            raise ConditionalMomentError(f"E(X_t^{n} | X_s = x) = {result} is not monic of degree {n}")
        return result

    if n == 0:
        return Poly.constant(1.0, "x")
    params = _float_params(params)
    s, t = float(s), float(t)
    lo, hi = _fit_interval(params, s, t)
    nodes = _node_count(n)

    def conditional(points: np.ndarray) -> np.ndarray:
        return np.array(
            [_kernel_rule(params, x, s, t, nodes).integrate(lambda y: y**n) for x in points]
        )

    fit_points = Chebyshev.basis(n + 1, domain=[lo, hi]).roots().real
    fit = Chebyshev.fit(fit_points, conditional(fit_points), n, domain=[lo, hi])
    check_points = Chebyshev.basis(2 * n, domain=[lo, hi]).roots().real
    values = conditional(check_points)
    off_grid = float(np.max(_relative(values, fit(check_points))))
    coeffs = fit.convert(kind=Polynomial, domain=[-1, 1], window=[-1, 1]).coef
    leading = float(coeffs[n]) if len(coeffs) > n else 0.0
    logger.debug(f"Conditional moment n={n} at (s,t)=({s},{t}): off-grid {off_grid:.2e}, leading {leading!r}")
    if off_grid > settings.CONDITIONAL_MOMENT_TOL or abs(leading - 1.0) > settings.CONDITIONAL_MOMENT_TOL:
        raise ConditionalMomentError(
            f"E(X_t^{n} | X_s = x) is not a monic degree-{n} polynomial: "
            f"off-grid residual {off_grid:.3e}, leading coefficient {leading!r}"
        )
    return Poly(tuple(float(c) for c in coeffs[: n + 1]), "x")


# Harness identities


def phi0_series(params: ProcessParams, s: Any, order: int) -> BivariateSeries:
    """sum z1^n z2^m E(p_n(X_s; s) p_m(X_u; u))."""
    s = as_field(s)
    eta, theta = params.eta, params.theta
    top = BivariateSeries.from_terms({(0, 0): 1, (1, 1): -eta * theta * s}, order)
    return top * _phi_denominator_inverse(params, s, order)


def phi1_series(params: ProcessParams, s: Any, t: Any, order: int) -> BivariateSeries:
    """sum z1^n z2^m E(p_n(X_s; s) X_t p_m(X_u; u)) for s <= t <= u."""
    s, t = as_field(s), as_field(t)
    top = BivariateSeries.from_terms(
        {(1, 0): s, (0, 1): t, (1, 1): s * (t * params.eta + params.theta)}, order
    )
    return top * _phi_denominator_inverse(params, s, order)


def phi2_series(params: ProcessParams, s: Any, t1: Any, t2: Any, order: int) -> BivariateSeries:
    """sum z1^n z2^m E(p_n(X_s; s) X_{t1} X_{t2} p_m(X_u; u)) for s <= t1 <= t2 <= u."""
    s, t2 = as_field(s), as_field(t2)
    eta, theta = params.eta, params.theta
    phi = phi1_series(params, s, t1, order + 1)
    head = phi - phi.at_z2_zero()
    z2 = BivariateSeries.from_terms({(0, 1): 1}, order)
    return (
        head.shift_z2_down()
        + head.truncate(order) * (t2 * eta + theta)
        + z2 * phi.truncate(order) * (t2 * params.one_plus_eta_theta)
        - BivariateSeries.from_terms({(1, 1): t2 * s * eta * theta}, order)
    )


def _phi_denominator_inverse(params: ProcessParams, s: Scalar, order: int) -> BivariateSeries:
    """1 / (1 - s(1 + eta*theta) z1 z2) as a diagonal series."""
    ratio = s * params.one_plus_eta_theta
    return BivariateSeries.from_terms({(k, k): ratio**k for k in range(order + 1)}, order)


@dataclass
class HarnessResiduals:
    """Residuals of the linear-regression and quadratic-variance identities along both paths."""

    series_lr: float
    series_qv: float
    series_cell: Dict[str, Any]
    quadrature_lr: Optional[float] = None
    quadrature_qv: Optional[float] = None
    quadrature_cell: Optional[Dict[str, Any]] = None

    @property
    def lr_residual(self) -> float:
        return max(v for v in (self.series_lr, self.quadrature_lr) if v is not None)

    @property
    def qv_residual(self) -> float:
        return max(v for v in (self.series_qv, self.quadrature_qv) if v is not None)

    @property
    def worst_cell(self) -> Dict[str, Any]:
        series = max(self.series_lr, self.series_qv)
        quadrature = max(v for v in (self.quadrature_lr, self.quadrature_qv, -1.0) if v is not None)
        return self.quadrature_cell if quadrature > series and self.quadrature_cell else self.series_cell


def _series_scan(lhs: BivariateSeries, rhs: BivariateSeries, exact: bool, scan: ResidualScan):
    for n in range(lhs.order + 1):
        for m in range(lhs.order + 1):
            left, right = lhs.coefficient(n, m), rhs.coefficient(n, m)
            value = abs(left - right) if exact else abs(left - right) / max(1.0, abs(left))
            scan.update(float(value), n=n, m=m)


def harness_series_scans(params: ProcessParams, s: Any, t: Any, u: Any, N: int) -> Tuple[ResidualScan, ResidualScan]:
    """Both harness identities as coefficient identities of the generating functions, to order N."""
    s, t, u = require_times(s, t, u, allow_zero_start=False)
    N = require_index(N, "N", minimum=1)
    exact = params.mode == ScalarMode.EXACT and all(is_exact(v) for v in (s, t, u))
    regression = regression_coeffs(s, t, u)
    var = harness_variance_coeffs(params, s, t, u)

    phi_ss, phi_st, phi_su = (phi1_series(params, s, tt, N) for tt in (s, t, u))
    lr = ResidualScan("harness_lr")
    _series_scan(phi_st, phi_ss * regression.a + phi_su * regression.b, exact, lr)

    lhs = phi2_series(params, s, t, t, N)
    rhs = (
        phi2_series(params, s, s, s, N) * var.A
        + phi2_series(params, s, s, u, N) * var.B
        + phi2_series(params, s, u, u, N) * var.C
        + phi0_series(params, s, N) * var.D
        + phi_ss * var.alpha
        + phi_su * var.beta
    )
    qv = ResidualScan("harness_qv")
    _series_scan(lhs, rhs, exact, qv)
    return lr, qv


def harness_tables(params: ProcessParams, s: float, t: float, u: float, M: int) -> Dict[str, np.ndarray]:
    """
    Tables E(p_n(X_s; s) F p_m(X_u; u)) for n, m <= M by nested Gauss rules.

    Keys name F: "1", "s", "ss", "su", "uu", "u", "t", "tt".
    """
    nodes = _node_count(2 * M + 2)
    p_s = [p.to_numpy() for p in p_family(params, s, M, var="x")]
    p_u = [p.to_numpy() for p in p_family(params, u, M, var="x")]

    def p_values(family: List[np.ndarray], points: np.ndarray) -> np.ndarray:
        return np.stack([P.polyval(points, c) for c in family], axis=-1)

    tables = {key: np.zeros((M + 1, M + 1)) for key in ("1", "s", "ss", "su", "uu", "u", "t", "tt")}
    start = _start_rule(params, s, nodes)
    for x, weight in zip(start.nodes, start.weights):
        left = weight * p_values(p_s, np.array([x]))[0]

        direct = _kernel_rule(params, x, s, u, nodes)
        end = p_values(p_u, direct.nodes) * direct.weights[:, None]
        by_u = {e: (direct.nodes**e) @ end for e in range(3)}
        tables["1"] += np.outer(left, by_u[0])
        tables["s"] += np.outer(left * x, by_u[0])
        tables["ss"] += np.outer(left * x * x, by_u[0])
        tables["su"] += np.outer(left * x, by_u[1])
        tables["u"] += np.outer(left, by_u[1])
        tables["uu"] += np.outer(left, by_u[2])

        middle = _kernel_rule(params, x, s, t, nodes)
        inner = np.zeros((len(middle), M + 1))
        for i, y in enumerate(middle.nodes):
            rule = _kernel_rule(params, y, t, u, nodes)
            inner[i] = rule.weights @ p_values(p_u, rule.nodes)
        weighted = middle.weights[:, None] * inner
        tables["t"] += np.outer(left, middle.nodes @ weighted)
        tables["tt"] += np.outer(left, (middle.nodes**2) @ weighted)
    return tables


def harness_quadrature_scans(params: ProcessParams, s: Any, t: Any, u: Any, M: int) -> Tuple[ResidualScan, ResidualScan]:
    """Both harness identities checked directly on nested-quadrature moment tables."""
    s, t, u = (float(v) for v in require_times(s, t, u, allow_zero_start=False))
    M = require_index(M, "M", minimum=1)
    params = _float_params(params)
    regression = regression_coeffs(s, t, u)
    var = harness_variance_coeffs(params, s, t, u)
    tables = harness_tables(params, s, t, u, M)

    lr_rhs = regression.a * tables["s"] + regression.b * tables["u"]
    qv_rhs = (
        var.A * tables["ss"]
        + var.B * tables["su"]
        + var.C * tables["uu"]
        + var.D * tables["1"]
        + var.alpha * tables["s"]
        + var.beta * tables["u"]
    )
    scans = []
    for check, lhs, rhs in (("harness_lr", tables["t"], lr_rhs), ("harness_qv", tables["tt"], qv_rhs)):
        errors = _relative(lhs, rhs)
        n, m = np.unravel_index(int(np.argmax(errors)), errors.shape)
        scan = ResidualScan(check)
        scan.update(errors[n, m], n=int(n), m=int(m), path="quadrature")
        scans.append(scan)
    return scans[0], scans[1]


def harness_residuals(
    params: ProcessParams,
    s: Any,
    t: Any,
    u: Any,
    N: int,
    quadrature_order: Optional[int] = None,
) -> HarnessResiduals:
    """
    Two-sided linear regression and quadratic conditional variance, verified
    in integrated form against the polynomials p_n(X_s; s) and p_m(X_u; u).

    Args:
        params: process parameters
        s, t, u: times with 0 < s < t < u
        N: series order (exact in rational mode)
        quadrature_order: largest n, m in the nested-quadrature check; 0 skips it

    Returns:
        HarnessResiduals with both paths reported
    """
    lr, qv = harness_series_scans(params, s, t, u, N)
    M = settings.HARNESS_QUADRATURE_ORDER if quadrature_order is None else quadrature_order
    result = HarnessResiduals(lr.value, qv.value, dict(lr.cell if lr.value >= qv.value else qv.cell, path="series"))
    if M > 0:
        q_lr, q_qv = harness_quadrature_scans(params, s, t, u, min(M, N))
        result.quadrature_lr, result.quadrature_qv = q_lr.value, q_qv.value
        result.quadrature_cell = q_lr.cell if q_lr.value >= q_qv.value else q_qv.cell
    logger.info(
        f"Harness at eta={params.eta}, theta={params.theta}, (s,t,u)=({s},{t},{u}): "
        f"lr {result.lr_residual:.3e}, qv {result.qv_residual:.3e}"
    )
    return result


# Mixed moments and symmetries


def _exact_mixed_moment(params: ProcessParams, times: Tuple[Scalar, ...], powers: Tuple[int, ...]) -> Scalar:
    g = Poly.monomial(powers[-1], 1, "y")
    for k in range(len(times) - 1, 0, -1):
        conditional = _as_poly(integrate_poly(symbolic_transition(params, times[k - 1], times[k]), g), "x")
        g = Poly((conditional * Poly.monomial(powers[k - 1], 1, "x")).coeffs, "y")
    return integrate_poly(jacobi_of_marginal(params, times[0]), g)


def _nested_moment(params: ProcessParams, times: Tuple[float, ...], powers: Tuple[int, ...], rule: QuadratureRule, k: int, nodes: int) -> float:
    values = rule.nodes ** powers[k]
    if k + 1 < len(times):
        values = values * np.array(
            [
                _nested_moment(params, times, powers, _kernel_rule(params, y, times[k], times[k + 1], nodes), k + 1, nodes)
                for y in rule.nodes
            ]
        )
    return float(rule.weights @ values)


def mixed_moment(params: ProcessParams, times: Sequence[Any], powers: Sequence[int], exact: Optional[bool] = None) -> Scalar:
    """
    E(X_{t_1}^{j_1} ... X_{t_k}^{j_k}) for increasing positive times.

    Exact mode chains the symbolic conditional moments backwards in time;
    float mode nests Gauss rules of the marginal and the kernels.
    """
    times = require_times(*times, allow_zero_start=False)
    powers = tuple(require_index(j, "power") for j in powers)
    if len(times) != len(powers) or not times:
        raise InvalidParametersError("mixed_moment needs one power per time")
    exact = params.mode == ScalarMode.EXACT and all(is_exact(t) for t in times) if exact is None else exact
    if exact:
        return _exact_mixed_moment(params, times, powers)
    params = _float_params(params)
    times_f = tuple(float(t) for t in times)
    nodes = _node_count(sum(powers))
    rule = gauss_rule(jacobi_of_marginal(params, times_f[0]), nodes)
    return _nested_moment(params, times_f, powers, rule, 0, nodes)


def reversal_scan(params: ProcessParams, times: Sequence[Any], deg: int, exact: Optional[bool] = None) -> ResidualScan:
    if not _equal(params.eta, params.theta):
        raise InvalidParametersError(
            f"time reversal needs eta = theta, got eta={params.eta}, theta={params.theta}"
        )
    if len(times) != 2:
        raise InvalidParametersError(f"time reversal compares two times, got {len(times)}")
    t1, t2 = require_times(*times, allow_zero_start=False)
    deg = require_index(deg, "deg")
    scan = ResidualScan("reversal")
    for total in range(deg + 1):
        for j in range(total + 1):
            k = total - j
            direct = mixed_moment(params, (t1, t2), (j, k), exact)
            reversed_ = t1**j * t2**k * mixed_moment(params, (1 / t2, 1 / t1), (k, j), exact)
            scan.update(magnitude(direct - reversed_), j=j, k=k)
    return scan


def reversal_check(params: ProcessParams, times: Sequence[Any], deg: int, exact: Optional[bool] = None) -> float:
    """
    Largest |E(X_{t1}^j X_{t2}^k) - E((t1 X_{1/t1})^j (t2 X_{1/t2})^k)| over j + k <= deg.

    Raises:
        InvalidParametersError: eta != theta, or times not a strictly increasing pair
    """
    return reversal_scan(params, times, deg, exact).value


def covariance_check(params: ProcessParams, s: Any, t: Any, exact: Optional[bool] = None) -> float:
    """|E(X_s X_t) - min(s, t)| for s < t."""
    s, t = require_times(s, t, allow_zero_start=False)
    return magnitude(mixed_moment(params, (s, t), (1, 1), exact) - s)


def _equal(a: Scalar, b: Scalar) -> bool:
    if is_exact(a) and is_exact(b):
        return a == b
    return abs(float(a) - float(b)) <= settings.DEGENERATE_TOL


# Paths


@dataclass(frozen=True)
class PathSample:
    """One sampled path at the given times."""

    times: Tuple[float, ...]
    values: Tuple[float, ...]
    seed: int


@dataclass(frozen=True)
class PathEnsemble:
    """Many paths drawn with one seed; values has shape (paths, times)."""

    times: Tuple[float, ...]
    values: np.ndarray
    seed: int

    def __len__(self) -> int:
        return self.values.shape[0]

    def path(self, i: int) -> PathSample:
        return PathSample(self.times, tuple(float(v) for v in self.values[i]), self.seed)

    def to_frame(self) -> pd.DataFrame:
        count, width = self.values.shape
        return pd.DataFrame(
            {
                "path": np.repeat(np.arange(count), width),
                "time": np.tile(np.array(self.times), count),
                "value": self.values.ravel(),
            }
        )

    def to_csv(self) -> str:
        """CSV text with a "# seed=<n>" header line."""
        body = self.to_frame().to_csv(index=False, float_format="%.17g", lineterminator="\n")
        return f"# seed={self.seed}\n{body}"


def sample_paths(params: ProcessParams, times: Sequence[Any], seed: int, n: int) -> PathEnsemble:
    """
    Draw n paths of the process at the given times.

    The first value comes from pi_{t_1}, each next one from the kernel at the
    previous value. Kernels are evaluated in vectorized batches of
    PATH_BATCH_SIZE start points. Deterministic given the seed.

    Args:
        params: process parameters
        times: strictly increasing positive times
        seed: integer seed
        n: number of paths

    Returns:
        PathEnsemble
    """
    times_f = tuple(float(t) for t in require_times(*times, allow_zero_start=False))
    n = require_index(n, "n", minimum=1)
    rng = np.random.default_rng(seed)
    values = np.empty((n, len(times_f)))
    values[:, 0] = sample(marginal(params, times_f[0]), rng, n)
    batch = settings.PATH_BATCH_SIZE
    for k in range(1, len(times_f)):
        for start in range(0, n, batch):
            rows = slice(start, min(start + batch, n))
            family = KernelFamily(params, times_f[k - 1], times_f[k], values[rows, k - 1])
            values[rows, k] = family.sample(rng)
    logger.info(f"Sampled {n} paths at {len(times_f)} times with seed {seed}")
    return PathEnsemble(times_f, values, seed)


def sample_path(params: ProcessParams, times: Sequence[Any], seed: int) -> PathSample:
    """One path of the process; see sample_paths."""
    return sample_paths(params, times, seed, 1).path(0)
