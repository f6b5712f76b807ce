"""
Truncated-series calculus for Cauchy transforms.

Every transform is held as a FormalSeries in one small variable w:

- g(z) = sum m_n z^(-n-1) is stored as g~(w) = g(1/w) = w + m_1 w^2 + ...,
- k(w) = 1/w + r(w) inverts g at infinity and is stored through r,
- R(w) = k_mu(w) - 1/g_nu(k_mu(w)) is the second transform of a pair.

Free convolution adds r, c-convolution of pairs adds (r, R). Everything is
coefficient arithmetic, exact when the moments are rational.
"""

from dataclasses import dataclass
from math import comb
from typing import Any, List, Optional, Tuple

import numpy as np
from loguru import logger

from backend.models.errors import InvalidParametersError, SeriesInversionError
from backend.services.recurrences import ProcessParams, require_index, require_times
from backend.services.spectra import JacobiSpec, jacobi_of_marginal, moments
from backend.utils.scalars import Scalar, as_field, is_exact, magnitude, scalar_to_json
from backend.utils.series import FormalSeries
from config import settings

VAR = "w"


@dataclass(frozen=True)
class MomentSeries:
    """Moments m_0..m_N of a probability measure."""

    moments: Tuple[Scalar, ...]

    def __post_init__(self):
        values = tuple(as_field(m) for m in self.moments)
        if not values:
            raise InvalidParametersError("a moment series needs m_0")
        if not all(is_exact(m) for m in values):
            values = tuple(float(m) for m in values)
        head = values[0]
        if (head != 1) if is_exact(head) else abs(head - 1.0) > settings.MASS_TOL:
            raise InvalidParametersError(f"m_0 must be 1, got {head}")
        object.__setattr__(self, "moments", (head * 0 + 1,) + values[1:])

    @classmethod
    def point_mass(cls, location: Any, order: int) -> "MomentSeries":
        location = as_field(location)
        return cls(tuple(location**n for n in range(order + 1)))

    @classmethod
    def from_jacobi(cls, j: JacobiSpec, order: int) -> "MomentSeries":
        """Moments of the orthogonality measure of j; warns when a Hankel matrix is not PSD."""
        series = cls(tuple(moments(j, order)))
        if not series.hankel_is_psd():
            logger.warning(f"Moments of {j} fail the Hankel positivity check")
        return series

    @property
    def order(self) -> int:
        return len(self.moments) - 1

    def __getitem__(self, n: int) -> Scalar:
        return self.moments[n]

    def truncate(self, order: int) -> "MomentSeries":
        return MomentSeries(self.moments[: order + 1])

    def hankel_is_psd(self, tol: float = 1e-10) -> bool:
        """Whether the Hankel matrices (m_{i+j}) that fit in the series are positive semidefinite."""
        size = self.order // 2 + 1
        hankel = np.array([[float(self.moments[i + j]) for j in range(size)] for i in range(size)])
        for k in range(1, size + 1):
            block = hankel[:k, :k]
            smallest = float(np.linalg.eigvalsh(block)[0])
            if smallest < -tol * max(1.0, float(np.abs(block).max())):
                return False
        return True

    def to_json(self) -> List[Any]:
        return [scalar_to_json(m) for m in self.moments]


@dataclass(frozen=True)
class TransformSeries:
    """
    One transform as a series in w.

    kind "g": series is g(1/w), coefficient n+1 is m_n.
    kind "k": series is k(w) - 1/w (the 1/w term is implied).
    kind "r", "R": series is the transform itself.
    """

    kind: str
    series: FormalSeries

    @property
    def order(self) -> int:
        return self.series.order

    def coefficients(self) -> List[Scalar]:
        return list(self.series.coeffs)

    def to_json(self) -> List[Any]:
        return [scalar_to_json(c) for c in self.series.coeffs]


# Series helpers


def _times_w(series: FormalSeries, order: int) -> FormalSeries:
    """w * series, with the order extended by one."""
    return FormalSeries.from_coefficients([0, *series.coeffs], order, VAR)


def _regular_reciprocal(series: FormalSeries) -> FormalSeries:
    """For f(w) = w + ..., the series 1/f(w) - 1/w (order drops by two)."""
    if series[0] != 0 or series[1] != 1:
        raise SeriesInversionError(f"expected a series w + O(w^2), got leading terms {series[0]}, {series[1]}")
    return (series.shift_down(1).inverse() - 1).shift_down(1)


def _require_kind(transform: TransformSeries, kind: str):
    if transform.kind != kind:
        raise SeriesInversionError(f"expected a {kind}-series, got {transform.kind}")


def _common_order(*series: MomentSeries) -> int:
    orders = {m.order for m in series}
    if len(orders) != 1:
        raise InvalidParametersError(f"moment series must share one order, got {sorted(orders)}")
    return orders.pop()


# Transforms


def g_series(m: MomentSeries) -> TransformSeries:
    """Cauchy transform g(z) = sum m_n / z^(n+1) as a series in w = 1/z."""
    if m.order < 1:
        raise InvalidParametersError("g_series needs at least m_0 and m_1")
    return TransformSeries("g", _times_w(FormalSeries(m.moments, VAR), m.order + 1))


def k_series(g: TransformSeries) -> TransformSeries:
    """
    Inverse of g at infinity, k(w) = 1/w + c_0 + c_1 w + ..., by Newton reversion.

    Raises:
        SeriesInversionError: g does not start with 1/z
    """
    _require_kind(g, "g")
    return TransformSeries("k", _regular_reciprocal(_inverse_at_zero(g.series)))


def lagrange_reversion(g: TransformSeries) -> TransformSeries:
    """k from Lagrange inversion; the oracle for k_series."""
    _require_kind(g, "g")
    if g.series[1] != 1:
        raise SeriesInversionError("g must start with 1/z")
    return TransformSeries("k", _regular_reciprocal(g.series.lagrange_reversion()))


def _inverse_at_zero(series: FormalSeries) -> FormalSeries:
    if series[0] != 0 or series[1] != 1:
        raise SeriesInversionError("g must start with 1/z")
    return series.reversion()


def inversion_residual(g: TransformSeries, k: TransformSeries) -> float:
    """Largest coefficient of g(k(w)) - w and of the reverse composition, in the variable 1/k."""
    _require_kind(g, "g")
    _require_kind(k, "k")
    # 1/k(w) = w / (1 + w r(w))
    order = g.order
    reciprocal_k = _times_w((1 + _times_w(k.series, k.order + 1)).inverse(), order)
    identity = FormalSeries.variable(order, VAR)
    forward = g.series.compose(reciprocal_k) - identity
    backward = reciprocal_k.compose(g.series) - identity
    return max(magnitude(forward.max_abs_coeff()), magnitude(backward.max_abs_coeff()))


def r_transform(m: MomentSeries) -> TransformSeries:
    """r(w) = k(w) - 1/w; its coefficients are the free cumulants kappa_1, kappa_2, ..."""
    return TransformSeries("r", k_series(g_series(m)).series)


def cR_transform(mu: MomentSeries, nu: MomentSeries) -> TransformSeries:
    """R(w) = k_mu(w) - 1/g_nu(k_mu(w)) for the pair (mu, nu)."""
    _common_order(mu, nu)
    reciprocal_k = _inverse_at_zero(g_series(mu).series)  # 1/k_mu(w)
    composed = g_series(nu).series.compose(reciprocal_k)  # g_nu(k_mu(w)) in w
    return TransformSeries("R", r_transform(mu).series - _regular_reciprocal(composed))


def _moments_from_cauchy(series: FormalSeries) -> MomentSeries:
    return MomentSeries(tuple(series.coeffs[1:]))


def free_convolve(m1: MomentSeries, m2: MomentSeries, N: Optional[int] = None) -> MomentSeries:
    """
    Moments of mu1 [+] mu2 from r = r_1 + r_2.

    g is recovered from g = 1/(z - r(g)), iterated as a series fixed point in
    w = 1/z; every pass fixes one more coefficient.
    """
    N = _common_order(m1, m2) if N is None else require_index(N, "N", minimum=1)
    m1, m2 = m1.truncate(N), m2.truncate(N)
    r = r_transform(m1).series + r_transform(m2).series
    g = FormalSeries.variable(N + 1, VAR)
    for _ in range(N + 1):
        g = _times_w((1 - _times_w(r.compose(g), N)).inverse(), N + 1)
    return _moments_from_cauchy(g)


Pair = Tuple[MomentSeries, MomentSeries]


def c_convolve(pair1: Pair, pair2: Pair, N: Optional[int] = None) -> Pair:
    """
    c-convolution of two pairs (mu_i, nu_i).

    The first component is mu1 [+] mu2; the second has
    g_nu(z) = 1/(z - R_1(g_mu(z)) - R_2(g_mu(z))) with g_mu the first
    component's Cauchy transform.
    """
    N = _common_order(*pair1, *pair2) if N is None else require_index(N, "N", minimum=1)
    pair1 = (pair1[0].truncate(N), pair1[1].truncate(N))
    pair2 = (pair2[0].truncate(N), pair2[1].truncate(N))
    first = free_convolve(pair1[0], pair2[0], N)
    g_first = g_series(first).series
    total_R = cR_transform(*pair1).series + cR_transform(*pair2).series
    g_second = _times_w((1 - _times_w(total_R.compose(g_first), N)).inverse(), N + 1)
    return first, _moments_from_cauchy(g_second)


def shift_moments(m: MomentSeries, c: Any) -> MomentSeries:
    """Moments of X + c from those of X (binomial transform)."""
    c = as_field(c)
    return MomentSeries(
        tuple(
            sum((comb(n, k) * m[k] * c ** (n - k) for k in range(n + 1)), 0 * c)
            for n in range(m.order + 1)
        )
    )


def _series_residual(lhs: FormalSeries, rhs: FormalSeries) -> float:
    return magnitude((lhs - rhs).max_abs_coeff())


def r_additivity_residual(m1: MomentSeries, m2: MomentSeries, out: MomentSeries) -> float:
    """max |coefficient| of r_out - r_1 - r_2, recomputed from the output moments."""
    return _series_residual(r_transform(out).series, r_transform(m1).series + r_transform(m2).series)


def R_additivity_residual(pair1: Pair, pair2: Pair, out: Pair) -> float:
    """max |coefficient| of R_out - R_1 - R_2, recomputed from the output moments."""
    return _series_residual(cR_transform(*out).series, cR_transform(*pair1).series + cR_transform(*pair2).series)


def geometric_series(scale: Any, order: int) -> FormalSeries:
    """scale / (1 - w) to the given order."""
    scale = as_field(scale)
    return FormalSeries.from_coefficients([scale] * (order + 1), order, VAR)


# Bi-Poisson pairs


def bipoisson_pair_moments(params: ProcessParams, t: Any, N: int) -> Pair:
    """
    The pair (law of Y_t + t(1+eta), law of X_t + t) for theta = 1.

    Y_t + t(1+eta) is the free Poisson law of rate t(1+eta) (the eta = 0,
    theta = 1 marginal at time t(1+eta), shifted by its mean); it is the point
    mass at 0 when eta = -1. X_t is the bi-Poisson marginal.

    Raises:
        InvalidParametersError: theta != 1
    """
    if params.theta != 1:
        raise InvalidParametersError(f"bi-Poisson pairs need theta = 1, got theta={params.theta}")
    (t,) = require_times(t, allow_zero_start=False)
    N = require_index(N, "N", minimum=1)
    rate = t * (1 + params.eta)
    if rate == 0:
        first = MomentSeries.point_mass(0 * t, N)
    else:
        free_poisson = ProcessParams(0 * params.eta, params.theta)
        first = shift_moments(MomentSeries.from_jacobi(jacobi_of_marginal(free_poisson, rate), N), rate)
    second = shift_moments(MomentSeries.from_jacobi(jacobi_of_marginal(params, t), N), t)
    return first, second


@dataclass
class SemigroupResult:
    """c-convolution of the time-s and time-t pairs against the time-(s+t) pair."""

    convolved: Pair
    expected: Pair
    max_residual: float

    @property
    def passed(self) -> bool:
        exact = all(is_exact(m) for series in self.convolved for m in series.moments)
        return self.max_residual == 0 if exact else self.max_residual <= settings.FLOAT_IDENTITY_TOL


def semigroup_check(params: ProcessParams, s: Any, t: Any, N: int) -> SemigroupResult:
    """
    Whether bi-Poisson pairs at times s and t c-convolve to the pair at s + t.

    Residuals are absolute in exact mode and relative to max(1, |m_n|) in float mode.
    """
    pair_s = bipoisson_pair_moments(params, s, N)
    pair_t = bipoisson_pair_moments(params, t, N)
    expected = bipoisson_pair_moments(params, as_field(s) + as_field(t), N)
    convolved = c_convolve(pair_s, pair_t, N)
    worst = 0.0
    for got, want in zip(convolved, expected):
        for a, b in zip(got.moments, want.moments):
            error = magnitude(a - b)
            if not (is_exact(a) and is_exact(b)):
                error /= max(1.0, magnitude(b))
            worst = max(worst, error)
    logger.info(f"Semigroup check at eta={params.eta}, (s,t)=({s},{t}), N={N}: {worst:.3e}")
    return SemigroupResult(convolved, expected, worst)


def pair_transform_residuals(params: ProcessParams, t: Any, N: int) -> Tuple[float, float]:
    """
    Distance of (r, R) of the time-t pair from t(1+eta)/(1-w) and t/(1-w).

    Returns:
        (r residual, R residual) as max absolute coefficient differences
    """
    first, second = bipoisson_pair_moments(params, t, N)
    t = as_field(t)
    r = r_transform(first).series
    R = cR_transform(first, second).series
    return (
        _series_residual(r, geometric_series(t * (1 + params.eta), r.order)),
        _series_residual(R, geometric_series(t, R.order)),
    )
