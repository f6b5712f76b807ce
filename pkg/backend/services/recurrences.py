"""
Orthogonal polynomial families of the bi-Poisson process.

Builds the monic families
- p_n(x; t): orthogonal for the one-dimensional law pi_t,
- Q_n(y; x, t, s): orthogonal for the transition law P_{s,t}(x, dy),
- B_n(y; x, t, s): the auxiliary family linking Q at three times,
their generating functions, and an exact checker for the algebraic
identities between them.

Every function works in whichever coefficient field its inputs are given in:
Fractions give exact results, floats give double precision.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

from loguru import logger

from backend.models.errors import IdentityVerificationError, InvalidParametersError
from backend.utils.poly import Poly, relative_residual, residual
from backend.utils.scalars import Scalar, ScalarMode, as_field, is_exact, mode_of, to_scalar
from backend.utils.series import FormalSeries
from config import settings

# Jacobi data as (b_0..b_{m-1}), (a_1..a_m), (b_inf, a_inf)
Coefficients = Tuple[Tuple[Any, ...], Tuple[Any, ...], Tuple[Any, Any]]


@dataclass(frozen=True)
class ProcessParams:
    """The pair (eta, theta) defining one bi-Poisson process."""

    eta: Scalar
    theta: Scalar

    def __post_init__(self):
        eta, theta = as_field(self.eta), as_field(self.theta)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "theta", theta)
        slack = 1 + eta * theta
        floor = 0 if is_exact(slack) else -settings.DEGENERATE_TOL
        if slack < floor:
            raise InvalidParametersError(
                f"1 + eta*theta must be >= 0, got eta={eta}, theta={theta}"
            )

    @classmethod
    def from_values(cls, eta: Any, theta: Any, mode: ScalarMode) -> "ProcessParams":
        return cls(to_scalar(eta, mode), to_scalar(theta, mode))

    @property
    def mode(self) -> ScalarMode:
        return mode_of(self.eta, self.theta)

    @property
    def one_plus_eta_theta(self) -> Scalar:
        return 1 + self.eta * self.theta

    @property
    def is_degenerate(self) -> bool:
        """True when 1 + eta*theta vanishes and every pi_t sits on two points."""
        slack = self.one_plus_eta_theta
        if is_exact(slack):
            return slack == 0
        return abs(slack) <= settings.DEGENERATE_TOL

    def time_reversed(self) -> "ProcessParams":
        """Parameters of t*X(1/t), which swaps the roles of eta and theta."""
        return ProcessParams(self.theta, self.eta)

    def to_dict(self) -> Dict[str, Any]:
        return {"eta": self.eta, "theta": self.theta}


def require_times(*times: Any, allow_zero_start: bool = True) -> Tuple[Scalar, ...]:
    """
    Validate that times are strictly increasing and nonnegative.

    Args:
        times: the times in the order they must increase
        allow_zero_start: whether the first time may equal 0

    Returns:
        The times promoted to their coefficient field
    """
    values = tuple(as_field(t) for t in times)
    if values and (values[0] < 0 or (values[0] == 0 and not allow_zero_start)):
        raise InvalidParametersError(f"times must be positive, got {values[0]}")
    for earlier, later in zip(values, values[1:]):
        if not earlier < later:
            raise InvalidParametersError(f"times must be strictly increasing, got {values}")
    return values


def require_index(n: int, name: str = "n", minimum: int = 0) -> int:
    if int(n) != n or n < minimum:
        raise InvalidParametersError(f"{name} must be an integer >= {minimum}, got {n}")
    return int(n)


# Jacobi coefficients


def marginal_coefficients(params: ProcessParams, t: Scalar) -> Coefficients:
    """Recurrence data of p_n(x; t)."""
    beta = t * params.eta + params.theta
    alpha = t * params.one_plus_eta_theta
    return (0, beta), (t,), (beta, alpha)


def transition_coefficients(params: ProcessParams, x: Any, t: Scalar, s: Scalar) -> Coefficients:
    """Recurrence data of Q_n(y; x, t, s); x may be a number or a Poly."""
    beta = t * params.eta + params.theta
    alpha = t * params.one_plus_eta_theta
    return (x, (t - s) * params.eta + params.theta, beta), ((t - s) * (1 + x * params.eta), alpha), (beta, alpha)


def monic_family(coefficients: Coefficients, n: int, var: str) -> List[Poly]:
    """
    Run the three-term recurrence var*P_k = P_{k+1} + b_k P_k + a_k P_{k-1}.

    Args:
        coefficients: (b, a, tail) with a[0] = a_1
        n: highest degree wanted
        var: polynomial variable

    Returns:
        [P_0, ..., P_n]
    """
    b, a, (b_tail, a_tail) = coefficients
    variable = Poly.variable(var)
    family = [Poly.constant(1, var)]
    previous: Any = 0
    for k in range(n):
        b_k = b[k] if k < len(b) else b_tail
        # a_0 multiplies P_{-1} = 0
        a_k = 0 if k == 0 else (a[k - 1] if k - 1 < len(a) else a_tail)
        current = family[-1]
        family.append((variable - b_k) * current - a_k * previous)
        previous = current
    return family


# Polynomial families


def p_family(params: ProcessParams, t: Any, n: int, var: str = "x") -> List[Poly]:
    """[p_0(.; t), ..., p_n(.; t)]."""
    (t,) = require_times(t, allow_zero_start=False)
    return monic_family(marginal_coefficients(params, t), require_index(n), var)


def poly_p(params: ProcessParams, t: Any, n: int, var: str = "x") -> Poly:
    """
    Monic p_n(x; t), orthogonal for the marginal pi_t.

    Args:
        params: process parameters
        t: time, > 0
        n: degree
        var: polynomial variable

    Returns:
        p_n as a Poly in var
    """
    return p_family(params, t, n, var)[-1]


def _q_family(params: ProcessParams, x: Any, t: Scalar, s: Scalar, n: int, var: str) -> List[Poly]:
    return monic_family(transition_coefficients(params, x, t, s), n, var)


def q_family(params: ProcessParams, x: Any, t: Any, s: Any, n: int, var: str = "y") -> List[Poly]:
    """[Q_0, ..., Q_n] in var; x may be a number or a Poly in an inner variable."""
    s, t = require_times(s, t)
    return _q_family(params, _field(x), t, s, require_index(n), var)


def poly_Q(params: ProcessParams, x: Any, t: Any, s: Any, n: int, var: str = "y") -> Poly:
    """
    Monic Q_n(y; x, t, s), orthogonal for the transition law P_{s,t}(x, dy).

    The support condition 1 + x*eta >= 0 is not enforced here since the
    polynomials exist for every x.
    """
    return q_family(params, x, t, s, n, var)[-1]


def _b_family(params: ProcessParams, x: Any, t: Scalar, s: Scalar, n: int, var: str) -> List[Poly]:
    qs = _q_family(params, x, t, s, n, var)
    family = [qs[0]]
    for k in range(1, n + 1):
        damping = (t - s) * params.eta if k == 1 else t * params.eta
        family.append(qs[k] - damping * family[-1])
    return family


def b_family(params: ProcessParams, x: Any, t: Any, s: Any, n: int, var: str = "y") -> List[Poly]:
    """[B_0, ..., B_n] in var."""
    s, t = require_times(s, t)
    return _b_family(params, _field(x), t, s, require_index(n), var)


def poly_B(params: ProcessParams, x: Any, t: Any, s: Any, n: int, var: str = "y") -> Poly:
    """B_n(y; x, t, s): B_0 = 1, B_1 = Q_1 - (t-s)*eta, B_k = Q_k - t*eta*B_{k-1}."""
    return b_family(params, x, t, s, n, var)[-1]


def b_tilde(params: ProcessParams, s: Any, k: int, var: str = "x") -> Poly:
    """
    B~_k(x; s) = B_k(0; x, 0, s) as a polynomial in x (affine for every k).

    The recurrence is run at t = 0 < s, outside the range where Q is a
    transition family, which is why the time-order check is bypassed.
    """
    s = as_field(s)
    k = require_index(k, "k")
    x = Poly.variable(var)
    value = _b_family(params, x, _zero_like(s), s, k, "y")[-1].substitute("y", 0)
    if isinstance(value, Poly):
        return value
    return Poly.constant(value, var)


def norm_squared(params: ProcessParams, t: Any, n: int) -> Scalar:
    """E p_n(X_t; t)^2 = t * (t(1+eta*theta))^(n-1) for n >= 1, and 1 for n = 0."""
    (t,) = require_times(t, allow_zero_start=False)
    n = require_index(n)
    if n == 0:
        return _one_like(t)
    return t * (t * params.one_plus_eta_theta) ** (n - 1)


# Generating functions


def genfun_phi(params: ProcessParams, x: Any, t: Any, s: Any, order: int, var: str = "y") -> FormalSeries:
    """sum_n zeta^n Q_n(y; x, t, s) from the recurrence, truncated at order."""
    return FormalSeries(tuple(q_family(params, x, t, s, order, var)))


def genfun_psi(params: ProcessParams, x: Any, t: Any, s: Any, order: int, var: str = "y") -> FormalSeries:
    """sum_n zeta^n B_n(y; x, t, s) from the recurrence, truncated at order."""
    return FormalSeries(tuple(b_family(params, x, t, s, order, var)))


def _rational_series(numerator: Tuple[Any, Any, Any], denominator: Tuple[Any, Any, Any], order: int) -> FormalSeries:
    top = FormalSeries.from_coefficients(numerator, order)
    bottom = FormalSeries.from_coefficients(denominator, order)
    return top / bottom


def phi_closed_form(params: ProcessParams, y: Any, x: Any, t: Any, s: Any, order: int) -> FormalSeries:
    """
    Rational form of phi(zeta; y, x, t, s) expanded to order.

    y and x may be numbers or Polys; the times may come in either order.
    """
    eta, theta = params.eta, params.theta
    t, s = as_field(t), as_field(s)
    numerator = (1, t * eta + theta - x, s + s * y * eta - t * x * eta + t * eta * theta)
    denominator = (1, t * eta + theta - y, t * params.one_plus_eta_theta)
    return _rational_series(numerator, denominator, order)


def psi_closed_form(params: ProcessParams, y: Any, x: Any, t: Any, s: Any, order: int) -> FormalSeries:
    """Rational form of psi(zeta; y, x, t, s) expanded to order."""
    eta, theta = params.eta, params.theta
    t, s = as_field(t), as_field(s)
    numerator = (1, s * eta + theta - x, s * params.one_plus_eta_theta)
    denominator = (1, t * eta + theta - y, t * params.one_plus_eta_theta)
    return _rational_series(numerator, denominator, order)


# Identity verification


@dataclass
class IdentityResidual:
    """Worst residual of one identity over the checked indices."""

    identity: str
    max_residual: float = 0.0
    worst_index: Optional[int] = None
    checked: int = 0

    def record(self, index: Optional[int], value: float):
        self.checked += 1
        if self.worst_index is None or value > self.max_residual:
            self.max_residual = value
            self.worst_index = index


@dataclass
class IdentityReport:
    """Residuals of the algebraic identity suite at one parameter point."""

    params: ProcessParams
    times: Tuple[Scalar, Scalar, Scalar]
    x: Scalar
    order: int
    mode: ScalarMode
    tolerance: float
    residuals: Dict[str, IdentityResidual] = field(default_factory=dict)

    def _entry(self, identity: str) -> IdentityResidual:
        if identity not in self.residuals:
            self.residuals[identity] = IdentityResidual(identity)
        return self.residuals[identity]

    def record(self, identity: str, index: Optional[int], lhs: Any, rhs: Any):
        if self.mode == ScalarMode.EXACT:
            value = float(residual(lhs, rhs))
        else:
            value = relative_residual(lhs, rhs)
        self._entry(identity).record(index, value)

    @property
    def max_residual(self) -> float:
        return max((r.max_residual for r in self.residuals.values()), default=0.0)

    @property
    def failures(self) -> List[IdentityResidual]:
        return [r for r in self.residuals.values() if r.max_residual > self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures

    def raise_for_failures(self):
        """Raise IdentityVerificationError for the first failing identity."""
        for failure in self.failures:
            raise IdentityVerificationError(failure.identity, failure.worst_index, failure.max_residual)


def verify_identities(
    params: ProcessParams,
    s: Any,
    t: Any,
    u: Any,
    x: Any,
    N: int,
    exact: bool = True,
) -> IdentityReport:
    """
    Check the algebraic identities between p_n, Q_n and B_n up to index N.

    Covered: the three-time expansion of Q_n, the expansion of Q_n in
    differences of p_k, the generating-function form of both, the closed
    forms of phi and psi, psi(zeta; y, x, t, s) psi(zeta; x, y, s, t) = 1,
    affinity of B~_k and monicity.

    Args:
        params: process parameters
        s, t, u: times with 0 <= s < t < u
        x: starting point
        N: largest index checked
        exact: run in rational arithmetic (residuals must be exactly 0)

    Returns:
        IdentityReport with the worst residual per identity
    """
    mode = ScalarMode.EXACT if exact else ScalarMode.FLOAT
    params = ProcessParams.from_values(params.eta, params.theta, mode)
    s, t, u, x = (to_scalar(v, mode) for v in (s, t, u, x))
    require_times(s, t, u)
    N = require_index(N, "N", minimum=1)
    tolerance = 0.0 if exact else settings.FLOAT_IDENTITY_TOL
    report = IdentityReport(params, (s, t, u), x, N, mode, tolerance)

    y_var, x_var = Poly.variable("y"), Poly.variable("x")
    q_xus = _q_family(params, x, u, s, N, "z")
    q_xts = _q_family(params, x, t, s, N, "y")
    b_xts = _b_family(params, x, t, s, N, "y")
    q_ytu = _q_family(params, y_var, u, t, N, "z")

    for n in range(N + 1):
        expansion: Any = q_xts[n]
        for k in range(n):
            expansion = expansion + b_xts[k] * q_ytu[n - k]
        report.record("Q_three_times", n, q_xus[n], expansion)
        report.record("monic_Q", n, q_xus[n].leading, 1)

    # Q_n in differences of p_k, with symbolic x
    q_symbolic = _q_family(params, x_var, t, s, N, "y")
    p_y = monic_family(marginal_coefficients(params, t), N, "y")
    p_x = monic_family(marginal_coefficients(params, s), N, "x")
    tildes = [b_tilde(params, s, k) for k in range(N + 1)]
    for n in range(1, N + 1):
        expansion = 0
        for k in range(n + 1):
            expansion = expansion + tildes[n - k] * (p_y[k] - p_x[k])
        report.record("Q_minus_p", n, q_symbolic[n], expansion)
        report.record("monic_p", n, p_y[n].leading, 1)
    for k, tilde in enumerate(tildes):
        report.record("B_tilde_affine", k, max(tilde.degree - 1, 0), 0)

    # generating functions
    phi_zxus = FormalSeries(tuple(q_xus))
    phi_yxts = FormalSeries(tuple(q_xts))
    psi_yxts = FormalSeries(tuple(b_xts))
    phi_zytu = FormalSeries(tuple(q_ytu))
    _record_series(report, "phi_three_times", phi_zxus - phi_yxts, psi_yxts * (phi_zytu - 1))
    _record_series(report, "phi_closed_form", phi_yxts, phi_closed_form(params, y_var, x, t, s, N))
    _record_series(report, "psi_closed_form", psi_yxts, psi_closed_form(params, y_var, x, t, s, N))
    swapped = psi_closed_form(params, x_var, y_var, s, t, N)
    _record_series(
        report, "psi_inverse", psi_closed_form(params, y_var, x_var, t, s, N) * swapped, 1
    )
    inverted = 1 + swapped * (
        phi_closed_form(params, Poly.variable("z"), x_var, u, s, N)
        - phi_closed_form(params, y_var, x_var, t, s, N)
    )
    _record_series(report, "phi_inverted", phi_closed_form(params, Poly.variable("z"), y_var, u, t, N), inverted)

    logger.info(
        f"Identity suite at eta={params.eta}, theta={params.theta}, (s,t,u)=({s},{t},{u}), "
        f"x={x}, N={N}: max residual {report.max_residual:.3e}"
    )
    for failure in report.failures:
        logger.warning(
            f"Identity {failure.identity} failed at n={failure.worst_index}: {failure.max_residual:.3e}"
        )
    return report


def _record_series(report: IdentityReport, identity: str, lhs: FormalSeries, rhs: Any):
    if not isinstance(rhs, FormalSeries):
        rhs = FormalSeries.constant(rhs, lhs.order)
    for n in range(min(lhs.order, rhs.order) + 1):
        report.record(identity, n, lhs[n], rhs[n])


def _field(value: Any) -> Any:
    return value if isinstance(value, Poly) else as_field(value)


def _zero_like(value: Scalar) -> Scalar:
    return Fraction(0) if is_exact(value) else 0.0


def _one_like(value: Scalar) -> Scalar:
    return Fraction(1) if is_exact(value) else 1.0
