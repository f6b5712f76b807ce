"""
Spectral measures of Jacobi recurrences.

Turns three-term recurrence data into concrete probability measures: Cauchy
transforms, absolutely continuous densities, atoms, Gauss rules, exact
moments and samplers. Marginals pi_t use the closed forms of their Cauchy
transform; transition kernels P_{s,t}(x, dy) use the continued fraction
rewritten in the tail variable w, where z = b_inf + a_inf*w + 1/w.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from numpy.polynomial import Polynomial
from scipy import integrate
from scipy.linalg import LinAlgError, eigh_tridiagonal

from backend.models.documents import MeasureDocument
from backend.models.errors import (
    AtomWeightError,
    BranchAmbiguityError,
    EigenSolverError,
    InvalidParametersError,
    SupportViolationError,
)
from backend.services.recurrences import (
    ProcessParams,
    marginal_coefficients,
    require_index,
    require_times,
    transition_coefficients,
)
from backend.utils.poly import Poly
from backend.utils.scalars import Scalar, as_field, is_exact, scalar_to_json
from config import settings

Seed = Union[int, np.random.Generator, None]


@dataclass(frozen=True)
class JacobiSpec:
    """
    Recurrence data x*P_k = P_{k+1} + b_k P_k + a_k P_{k-1}.

    b holds b_0..b_{m-1}, a holds a_1..a_m and tail = (b_inf, a_inf) is used
    for every index past the explicit lists. Entries may be Fractions, floats
    or Polys (for symbolic moment computations).
    """

    b: Tuple[Any, ...]
    a: Tuple[Any, ...]
    tail: Tuple[Any, Any]

    def __post_init__(self):
        object.__setattr__(self, "b", tuple(_snap(v) for v in self.b))
        object.__setattr__(self, "a", tuple(_snap(v) for v in self.a))
        object.__setattr__(self, "tail", tuple(_snap(v) for v in self.tail))
        for k, value in enumerate(self.a + (self.tail[1],), start=1):
            if not isinstance(value, Poly) and value < 0:
                raise InvalidParametersError(f"Jacobi coefficient a_{k} = {value} is negative")

    def b_at(self, k: int) -> Any:
        return self.b[k] if k < len(self.b) else self.tail[0]

    def a_at(self, k: int) -> Any:
        """a_k for k >= 1."""
        return self.a[k - 1] if k - 1 < len(self.a) else self.tail[1]

    @property
    def depth(self) -> int:
        """Number of levels before the recurrence becomes constant."""
        return max(len(self.b), len(self.a))

    @property
    def block_size(self) -> Optional[int]:
        """Size K of the finite block when some a_K vanishes, else None."""
        for k in range(1, self.depth + 2):
            value = self.a_at(k)
            if not isinstance(value, Poly) and value == 0:
                return k
        return None

    @property
    def band(self) -> Optional[Tuple[float, float]]:
        """Support of the absolutely continuous part, or None when a_inf = 0."""
        if self.block_size is not None:
            return None
        b_inf, a_inf = (float(v) for v in self.tail)
        radius = 2.0 * math.sqrt(a_inf)
        return b_inf - radius, b_inf + radius

    def same_as(self, other: "JacobiSpec", tol: float = 0.0) -> bool:
        """Whether both specs define the same recurrence."""
        depth = max(self.depth, other.depth) + 1
        pairs = [(self.b_at(k), other.b_at(k)) for k in range(depth)]
        pairs += [(self.a_at(k), other.a_at(k)) for k in range(1, depth + 1)]
        pairs += list(zip(self.tail, other.tail))
        return all(abs(p - q) <= tol for p, q in pairs)

    def norm_squared(self, n: int) -> Any:
        """||P_n||^2 = a_1 a_2 ... a_n."""
        value: Any = 1
        for k in range(1, n + 1):
            value = value * self.a_at(k)
        return value

    def to_dict(self) -> Dict[str, Any]:
        return {
            "b": [scalar_to_json(v) for v in self.b],
            "a": [scalar_to_json(v) for v in self.a],
            "tail": [scalar_to_json(v) for v in self.tail],
        }


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss rule: nodes and nonnegative weights summing to one."""

    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.nodes)

    def integrate(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(self.weights, fn(self.nodes)))


@dataclass(frozen=True)
class SpectralMeasure:
    """Absolutely continuous density on one interval plus finitely many atoms."""

    jacobi: JacobiSpec
    kind: str
    ac_support: Optional[Tuple[float, float]]
    atoms: Tuple[Tuple[Scalar, Scalar], ...]
    density_fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False, repr=False)

    def density(self, x: Any) -> np.ndarray:
        """Density of the a.c. part; zero outside ac_support."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if self.ac_support is None or self.density_fn is None:
            return out
        lo, hi = self.ac_support
        inside = (x > lo) & (x < hi)
        if np.any(inside):
            out[inside] = np.maximum(self.density_fn(x[inside]), 0.0)
        return out

    @property
    def atom_mass(self) -> Scalar:
        return sum((w for _, w in self.atoms), 0)

    def ac_integral(self, fn: Callable[[np.ndarray], Any] = lambda x: 1.0) -> float:
        """Integral of fn against the a.c. part (adaptive quadrature in the angle variable)."""
        if self.ac_support is None:
            return 0.0
        mid, half = _centre(self.ac_support)

        def integrand(phi: float) -> float:
            y = mid - half * math.cos(phi)
            return float(self.density(np.array([y]))[0] * fn(y)) * half * math.sin(phi)

        value, _ = integrate.quad(integrand, 0.0, math.pi, limit=200, epsabs=1e-13, epsrel=1e-12)
        return value

    @property
    def ac_mass(self) -> float:
        return self.ac_integral()

    @property
    def total_mass(self) -> float:
        return self.ac_mass + float(self.atom_mass)

    def moment(self, k: int) -> float:
        """k-th moment by quadrature on the a.c. part plus the atoms."""
        atoms = sum(float(w) * float(c) ** k for c, w in self.atoms)
        return self.ac_integral(lambda y: y**k) + atoms

    def support_points(self) -> List[float]:
        points = [float(c) for c, _ in self.atoms]
        if self.ac_support is not None:
            points.extend(self.ac_support)
        return points

    def to_document(self, samples: Optional[int] = None) -> MeasureDocument:
        """Serializable form with the density sampled at interior Chebyshev points."""
        samples = samples or settings.DENSITY_SAMPLES
        density_samples: List[List[float]] = []
        if self.ac_support is not None:
            mid, half = _centre(self.ac_support)
            xs = mid - half * np.cos(math.pi * (np.arange(samples) + 0.5) / samples)
            density_samples = [[float(x), float(f)] for x, f in zip(xs, self.density(xs))]
        return MeasureDocument(
            kind=self.kind,
            jacobi=self.jacobi.to_dict(),
            ac_support=list(self.ac_support) if self.ac_support is not None else None,
            density_samples=density_samples,
            atoms=[[scalar_to_json(c), scalar_to_json(w)] for c, w in self.atoms],
        )


# Jacobi data


def jacobi_of_marginal(params: ProcessParams, t: Any) -> JacobiSpec:
    """
    Jacobi data of pi_t: b = (0, t*eta + theta), a = (t), tail (t*eta + theta, t(1 + eta*theta)).

    Args:
        params: process parameters (1 + eta*theta >= 0 is checked on construction)
        t: time, > 0

    Returns:
        JacobiSpec of the marginal law
    """
    (t,) = require_times(t, allow_zero_start=False)
    b, a, tail = marginal_coefficients(params, t)
    return JacobiSpec(b, a, tail)


def jacobi_of_transition(params: ProcessParams, x: Any, s: Any, t: Any) -> JacobiSpec:
    """
    Jacobi data of P_{s,t}(x, dy).

    Raises:
        SupportViolationError: 1 + x*eta < 0, so no probability measure exists
    """
    s, t = require_times(s, t)
    x = as_field(x)
    slack = 1 + x * params.eta
    if slack < (0 if is_exact(slack) else -settings.SUPPORT_TOL):
        raise SupportViolationError(f"x={x} outside support: 1 + x*eta = {slack} < 0")
    b, a, tail = transition_coefficients(params, x, t, s)
    if not is_exact(a[0]) and a[0] < 0:
        a = (0.0,) + a[1:]
    return JacobiSpec(b, a, tail)


# Cauchy transforms


def _tail_root(z: np.ndarray, b_inf: float, a_inf: float) -> np.ndarray:
    """Root of a_inf w^2 - (z - b_inf) w + 1 = 0 with w ~ 1/z at infinity."""
    shifted = z - b_inf
    if a_inf == 0:
        return 1.0 / shifted
    disc = np.sqrt(shifted * shifted - 4.0 * a_inf + 0j)
    # the small root is 2 / (shifted +- disc) with the larger denominator, free of cancellation
    plus, minus = shifted + disc, shifted - disc
    return 2.0 / np.where(np.abs(plus) >= np.abs(minus), plus, minus)


def cauchy_transform(j: JacobiSpec, z: Any) -> Any:
    """
    G(z) = integral of 1/(z - x) by the continued fraction of j.

    The constant tail is summed in closed form, then the explicit levels are
    unwound from the bottom up.

    Args:
        j: Jacobi data
        z: complex point (or array of points) off the real support

    Returns:
        complex value (or array) of the transform

    Raises:
        BranchAmbiguityError: z is real and the tail discriminant vanishes or
            is negative there
    """
    scalar = np.isscalar(z)
    z_arr = np.atleast_1d(np.asarray(z, dtype=complex))
    b_inf, a_inf = float(j.tail[0]), float(j.tail[1])
    if a_inf > 0:
        on_axis = z_arr.imag == 0
        if np.any(on_axis):
            disc = (z_arr.real[on_axis] - b_inf) ** 2 - 4.0 * a_inf
            if np.any(disc < settings.BRANCH_TOL):
                raise BranchAmbiguityError(f"Cauchy transform requested on the real support at {z}")
    g = _tail_root(z_arr, b_inf, a_inf)
    for k in range(j.depth - 1, -1, -1):
        g = 1.0 / (z_arr - float(j.b_at(k)) - float(j.a_at(k + 1)) * g)
    return complex(g[0]) if scalar else g


def _exterior_sqrt(z: np.ndarray, centre: float, radius_sq: float) -> np.ndarray:
    """sqrt((z - centre)^2 - radius_sq) on the branch that behaves like z - centre at infinity."""
    shifted = z - centre
    with np.errstate(divide="ignore", invalid="ignore"):
        root = shifted * np.sqrt(1.0 - radius_sq / (shifted * shifted))
    return np.where(shifted == 0, 1j * math.sqrt(radius_sq), root)


def marginal_cauchy_closed_form(params: ProcessParams, t: Any, z: Any) -> Any:
    """Closed-form Cauchy transform of pi_t."""
    eta, theta, t = float(params.eta), float(params.theta), float(t)
    beta, alpha = t * eta + theta, t * (1 + eta * theta)
    scalar = np.isscalar(z)
    z_arr = np.atleast_1d(np.asarray(z, dtype=complex))
    root = _exterior_sqrt(z_arr, beta, 4.0 * alpha)
    g = (z_arr * (1 + 2 * eta * theta) + beta - root) / (2.0 * (1 + z_arr * eta) * (t + z_arr * theta))
    return complex(g[0]) if scalar else g


def marginal_density_closed_form(params: ProcessParams, t: Any, x: Any) -> np.ndarray:
    """Density of the absolutely continuous part of pi_t (zero off the band)."""
    eta, theta, t = float(params.eta), float(params.theta), float(t)
    beta, alpha = t * eta + theta, t * (1 + eta * theta)
    x = np.asarray(x, dtype=float)
    gap = 4.0 * alpha - (x - beta) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        value = 1 / (2 * math.pi) * np.sqrt(np.maximum(gap, 0.0)) / ((x * eta + 1) * (x * theta + t))
    return np.where(gap > 0, value, 0.0)


# Atom weights


class AtomWeights(NamedTuple):
    """Weights p(t) of -t/theta and q(t) of -1/eta."""

    p: Scalar
    q: Scalar


def atom_weight_closed_form(params: ProcessParams, t: Any) -> AtomWeights:
    """
    Positive-part formulas for the two marginal atoms.

    p(t) = (theta^2 - (1+eta*theta) t)_+ / (theta^2 - t*eta*theta) sits at -t/theta,
    q(t) = (eta^2 t - (1+eta*theta))_+ / (eta^2 t - eta*theta) sits at -1/eta.
    """
    (t,) = require_times(t, allow_zero_start=False)
    eta, theta, slack = params.eta, params.theta, params.one_plus_eta_theta
    zero = _zero_like(t)
    p, q = zero, zero
    if theta != 0:
        top = theta * theta - slack * t
        if top > 0:
            p = top / (theta * theta - t * eta * theta)
    if eta != 0:
        top = eta * eta * t - slack
        if top > 0:
            q = top / (eta * eta * t - eta * theta)
    return AtomWeights(p, q)


@dataclass(frozen=True)
class EpsilonRuleResult:
    """Both sign choices of the epsilon rule and which of them land in [0, 1]."""

    candidates: Dict[int, AtomWeights]
    accepted: Tuple[int, ...]

    @property
    def unique(self) -> bool:
        return len(self.accepted) == 1


def epsilon_rule_weights(params: ProcessParams, t: Any) -> Optional[EpsilonRuleResult]:
    """
    The sign rule for p(t), q(t): evaluate both signs and keep those giving weights in [0, 1].

    Returns None where the formulas are undefined (eta = 0, theta = 0 or theta = eta*t).
    """
    (t,) = require_times(t, allow_zero_start=False)
    eta, theta, slack = params.eta, params.theta, params.one_plus_eta_theta
    if eta == 0 or theta == 0 or theta == eta * t:
        return None
    tol = settings.ATOM_WEIGHT_TOL
    candidates: Dict[int, AtomWeights] = {}
    accepted = []
    for eps in (1, -1):
        gap_p = slack * t - theta * theta
        p = (-gap_p / theta + eps * abs(gap_p) / abs(theta)) / (2 * (theta - eta * t))
        gap_q = t - slack / (eta * eta)
        q = (eta * gap_q + eps * abs(eta) * abs(gap_q)) / (2 * (eta * t - theta))
        candidates[eps] = AtomWeights(p, q)
        if all(-tol <= w <= 1 + tol for w in (p, q)):
            accepted.append(eps)
    return EpsilonRuleResult(candidates, tuple(accepted))


def residue_at(j: JacobiSpec, c: Any, step: float = 1e-7) -> float:
    """Residue of the continued-fraction Cauchy transform at a real point, by a complex step."""
    c = float(c)
    return float((1j * step * cauchy_transform(j, complex(c, step))).real)


def _exact_sqrt(value: Scalar) -> Optional[Fraction]:
    """Square root of a nonnegative rational when it is rational."""
    value = Fraction(value)
    if value < 0:
        return None
    num, den = math.isqrt(value.numerator), math.isqrt(value.denominator)
    if num * num == value.numerator and den * den == value.denominator:
        return Fraction(num, den)
    return None


def _marginal_atoms(params: ProcessParams, t: Scalar) -> List[Tuple[Scalar, Scalar]]:
    """Residues of the closed-form transform at the candidates -t/theta and -1/eta."""
    eta, theta = params.eta, params.theta
    beta, alpha = t * eta + theta, t * params.one_plus_eta_theta
    exact = all(is_exact(v) for v in (eta, theta, t))
    candidates = []
    if theta != 0:
        candidates.append(-t / theta)
    if eta != 0:
        candidates.append(-1 / eta)
    if len(candidates) == 2 and candidates[0] == candidates[1]:
        logger.debug(f"Atom candidates coincide at {candidates[0]}; both weights vanish")
        return []

    atoms = []
    for c in candidates:
        gap = (c - beta) ** 2 - 4 * alpha
        if gap < 0:
            logger.debug(f"Candidate {c} lies inside the band; not an atom")
            continue
        root = _exact_sqrt(gap) if exact else None
        magnitude = root if root is not None else math.sqrt(float(gap))
        # exterior branch: sign of c - beta
        root_value = magnitude if c - beta >= 0 else -magnitude
        numerator = c * (1 + 2 * eta * theta) + beta - root_value
        den_slope = 2 * (eta * (t + c * theta) + theta * (1 + c * eta))
        weight = numerator / den_slope
        _check_weight(c, weight)
        if weight > settings.ATOM_WEIGHT_TOL:
            atoms.append((c, weight))
        else:
            logger.debug(f"Candidate {c} carries weight {weight}; dropped")
    return atoms


def _check_weight(location: Any, weight: Any, tol: Optional[float] = None):
    tol = settings.ATOM_WEIGHT_TOL if tol is None else tol
    if not -tol <= weight <= 1 + tol:
        raise AtomWeightError(f"atom at {location} has weight {weight} outside [0, 1]")


# Measures


def spectral_measure(j: JacobiSpec, params: ProcessParams, kind: str = "transition") -> SpectralMeasure:
    """
    Build the orthogonality measure of j.

    Marginal specs (kind "marginal", time read off a_1) use the closed-form
    density and exact residues at -t/theta and -1/eta. Other specs use the
    continued fraction in the tail variable: atoms at real poles outside the
    band with residues as weights, and the density from boundary values.
    A vanishing a_k makes the measure purely atomic; it is then read off the
    eigen-decomposition of the finite block.

    Args:
        j: Jacobi data
        params: process parameters (used for the marginal closed forms)
        kind: "marginal" or "transition"

    Returns:
        SpectralMeasure
    """
    if kind not in ("marginal", "transition"):
        raise InvalidParametersError(f"unknown measure kind {kind!r}")
    if kind == "marginal":
        measure = _marginal_measure(j, params)
    elif j.block_size is not None:
        measure = _block_measure(j, kind)
    else:
        measure = _continued_fraction_measure(j, kind)

    mass = measure.total_mass
    if abs(mass - 1.0) > settings.MASS_TOL:
        logger.warning(f"{kind} measure has total mass {mass:.12f}")
    logger.debug(f"Built {kind} measure: support {measure.ac_support}, atoms {measure.atoms}")
    return measure


def _marginal_measure(j: JacobiSpec, params: ProcessParams) -> SpectralMeasure:
    t = j.a[0]
    atoms = _marginal_atoms(params, t)
    closed = atom_weight_closed_form(params, t)
    by_location = {c: w for c, w in atoms}
    for location, weight in (
        (-t / params.theta if params.theta != 0 else None, closed.p),
        (-1 / params.eta if params.eta != 0 else None, closed.q),
    ):
        if location is None:
            continue
        if abs(float(by_location.get(location, 0)) - float(weight)) > settings.MASS_TOL:
            logger.warning(f"Residue and closed-form weight disagree at {location}")

    rule = epsilon_rule_weights(params, t)
    if rule is not None and (not rule.unique or not _weights_close(rule.candidates[rule.accepted[0]], closed)):
        logger.warning(
            f"Sign rule for atom weights at eta={params.eta}, theta={params.theta}, t={t} "
            f"is ambiguous or disagrees with the residues (accepted signs {rule.accepted})"
        )

    density_fn = None
    band = None
    if not params.is_degenerate:
        band = j.band
        density_fn = lambda x: marginal_density_closed_form(params, t, x)  # noqa: E731
    return SpectralMeasure(j, "marginal", band, tuple(sorted(atoms, key=lambda a: a[0])), density_fn)


def _block_measure(j: JacobiSpec, kind: str) -> SpectralMeasure:
    size = j.block_size
    rule = gauss_rule(j, size)
    atoms = [(float(c), float(w)) for c, w in zip(rule.nodes, rule.weights) if w > settings.ATOM_WEIGHT_TOL]
    return SpectralMeasure(j, kind, None, tuple(atoms), None)


def _backward_fraction(j: JacobiSpec) -> Tuple[Polynomial, Polynomial]:
    """Numerator and denominator of G in the tail variable w."""
    b_inf, a_inf = float(j.tail[0]), float(j.tail[1])
    top, bottom = Polynomial([0.0, 1.0]), Polynomial([1.0])
    for k in range(j.depth - 1, -1, -1):
        shift = Polynomial([1.0, b_inf - float(j.b_at(k)), a_inf])
        top, bottom = Polynomial([0.0, 1.0]) * bottom, shift * bottom - float(j.a_at(k + 1)) * Polynomial([0.0, 1.0]) * top
    return top, bottom


def _continued_fraction_measure(j: JacobiSpec, kind: str) -> SpectralMeasure:
    b_inf, a_inf = float(j.tail[0]), float(j.tail[1])
    top, bottom = _backward_fraction(j)
    slope = bottom.deriv()

    atoms = []
    for w in bottom.roots():
        if abs(w.imag) > 1e-9 * max(1.0, abs(w)) or abs(w) == 0:
            continue
        w = float(w.real)
        if a_inf * w * w >= 1.0:
            continue
        location = b_inf + a_inf * w + 1.0 / w
        d_bottom = slope(w)
        if abs(d_bottom) < settings.DEGENERATE_TOL:
            logger.debug(f"Double pole candidate at {location}; skipped")
            continue
        weight = float(top(w) * (a_inf - 1.0 / (w * w)) / d_bottom)
        _check_weight(location, weight, settings.MASS_TOL)
        if weight > settings.ATOM_WEIGHT_TOL:
            atoms.append((location, weight))

    def density_fn(y: np.ndarray) -> np.ndarray:
        w = _boundary_w(y, b_inf, a_inf)
        return -(top(w) / bottom(w)).imag / math.pi

    return SpectralMeasure(j, kind, j.band, tuple(sorted(atoms)), density_fn)


def _boundary_w(y: np.ndarray, b_inf: float, a_inf: float) -> np.ndarray:
    """Tail variable at y + i0 for y inside the band."""
    shifted = y - b_inf
    return (shifted - 1j * np.sqrt(np.maximum(4.0 * a_inf - shifted * shifted, 0.0))) / (2.0 * a_inf)


# Quadrature and moments


def gauss_rule(j: JacobiSpec, N: int) -> QuadratureRule:
    """
    N-node Gauss rule from the symmetric tridiagonal Jacobi matrix.

    N is capped at the block size when the measure has finitely many points.

    Raises:
        EigenSolverError: the tridiagonal eigen-solve failed
    """
    N = require_index(N, "N", minimum=1)
    if N > settings.MAX_JACOBI_NODES:
        raise InvalidParametersError(f"N={N} exceeds MAX_JACOBI_NODES={settings.MAX_JACOBI_NODES}")
    if j.block_size is not None:
        N = min(N, j.block_size)
    diagonal = np.array([float(j.b_at(k)) for k in range(N)])
    off = np.sqrt(np.array([float(j.a_at(k)) for k in range(1, N)]))
    if N == 1:
        return QuadratureRule(diagonal, np.ones(1))
    try:
        nodes, vectors = eigh_tridiagonal(diagonal, off)
    except (LinAlgError, ValueError) as e:
        logger.error(f"Tridiagonal eigen-solve failed for N={N}: {str(e)}")
        raise EigenSolverError(str(e)) from e
    weights = vectors[0, :] ** 2
    return QuadratureRule(nodes, weights / weights.sum())


def moments(j: JacobiSpec, N: int) -> List[Any]:
    """
    Moments m_0..m_N as the (0,0) entries of powers of the monic Jacobi matrix.

    Exact for rational and polynomial entries.
    """
    N = require_index(N, "N")
    size = N // 2 + 2
    vector: List[Any] = [1] + [0] * (size - 1)
    out = [vector[0]]
    for _ in range(N):
        vector = [
            (j.a_at(k) * vector[k - 1] if k > 0 else 0)
            + j.b_at(k) * vector[k]
            + (vector[k + 1] if k + 1 < size else 0)
            for k in range(size)
        ]
        out.append(vector[0])
    return out


def integrate_poly(j: JacobiSpec, poly: Poly) -> Any:
    """Exact integral of a polynomial (in its outer variable) against the measure of j."""
    values = moments(j, max(poly.degree, 0))
    total: Any = 0
    for c, m in zip(poly.coeffs, values):
        total = total + c * m
    return total


# Sampling


def _centre(support: Tuple[float, float]) -> Tuple[float, float]:
    lo, hi = support
    return 0.5 * (lo + hi), 0.5 * (hi - lo)


def _cdf_table(
    density: Callable[[np.ndarray], np.ndarray],
    support: Tuple[float, float],
    min_size: Optional[int] = None,
    max_size: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Angle grid and normalized CDF of the a.c. part, refined by doubling.

    The density may return one row per kernel; the CDF then runs along the
    last axis and refinement stops when every row is within SAMPLER_CDF_TOL.

    Returns:
        (phi, cdf) with y = mid - half*cos(phi)
    """
    mid, half = _centre(support)

    def tabulate(size: int) -> Tuple[np.ndarray, np.ndarray]:
        phi = np.linspace(0.0, math.pi, size)
        values = density(mid - half * np.cos(phi)) * half * np.sin(phi)
        cdf = integrate.cumulative_simpson(values, x=phi, axis=-1, initial=0.0)
        cdf = np.maximum.accumulate(cdf, axis=-1)
        return phi, cdf / cdf[..., -1:]

    size = settings.SAMPLER_MIN_GRID if min_size is None else min_size
    max_size = settings.SAMPLER_MAX_GRID if max_size is None else max_size
    phi, cdf = tabulate(size)
    while size < max_size:
        finer_phi, finer_cdf = tabulate(2 * size - 1)
        # linear interpolation of the coarse table at the new midpoints
        error = float(np.max(np.abs(finer_cdf[..., 1::2] - 0.5 * (cdf[..., :-1] + cdf[..., 1:]))))
        phi, cdf, size = finer_phi, finer_cdf, 2 * size - 1
        if error < settings.SAMPLER_CDF_TOL:
            break
        logger.debug(f"CDF table refined to {size} points (interpolation error {error:.2e})")
    return phi, cdf


def sample(m: SpectralMeasure, seed: Seed, n: int) -> np.ndarray:
    """
    Draw n independent values from m.

    An atom is chosen with probability equal to its weight, otherwise the
    value comes from the inverse CDF of the a.c. part. Deterministic given
    the seed.

    Args:
        m: measure to sample
        seed: integer seed or numpy Generator
        n: number of draws

    Returns:
        float array of length n
    """
    n = require_index(n)
    rng = np.random.default_rng(seed)
    uniforms = rng.random(n)
    out = np.empty(n)
    locations = np.array([float(c) for c, _ in m.atoms])
    cumulative = np.cumsum([float(w) for _, w in m.atoms])
    atom_mass = float(cumulative[-1]) if len(cumulative) else 0.0
    if m.ac_support is None or m.density_fn is None:
        # purely atomic: renormalize away rounding
        cumulative = cumulative / atom_mass
        atom_mass = 1.0
    is_atom = uniforms < atom_mass
    if np.any(is_atom):
        index = np.searchsorted(cumulative, uniforms[is_atom], side="right")
        out[is_atom] = locations[np.minimum(index, len(locations) - 1)]
    rest = ~is_atom
    if np.any(rest):
        phi, cdf = _cdf_table(m.density, m.ac_support)
        mid, half = _centre(m.ac_support)
        levels = (uniforms[rest] - atom_mass) / (1.0 - atom_mass)
        out[rest] = mid - half * np.cos(np.interp(levels, cdf, phi))
    return out


# Vectorized transition kernels


class KernelFamily:
    """
    Transition kernels P_{s,t}(x, dy) for many start points at once.

    Poles of the continued fraction solve the monic cubic
    v^3 + c1 v^2 + c2 v + c3 = 0 in v = 1/w; the a.c. parts share the band
    [b_inf - 2 sqrt(a_inf), b_inf + 2 sqrt(a_inf)] and are tabulated on one
    angle grid.
    """

    def __init__(self, params: ProcessParams, s: Any, t: Any, xs: Sequence[float]):
        s, t = require_times(s, t)
        self.params = params
        self.s, self.t = float(s), float(t)
        self.xs = np.asarray(xs, dtype=float)
        eta, theta = float(params.eta), float(params.theta)
        slack = 1.0 + self.xs * eta
        if np.any(slack < -settings.SUPPORT_TOL):
            bad = self.xs[slack < -settings.SUPPORT_TOL][0]
            raise SupportViolationError(f"x={bad} outside support: 1 + x*eta < 0")
        self.beta = self.t * eta + theta
        self.alpha = self.t * (1.0 + eta * theta)
        if params.is_degenerate:
            self.alpha = 0.0
        self.a1 = np.maximum((self.t - self.s) * slack, 0.0)
        self.b1 = (self.t - self.s) * eta + theta
        self.point_mass = self.a1 <= settings.DEGENERATE_TOL
        self.locations, self.weights = self._atoms()

    @property
    def band(self) -> Optional[Tuple[float, float]]:
        if self.alpha <= settings.DEGENERATE_TOL:
            return None
        radius = 2.0 * math.sqrt(self.alpha)
        return self.beta - radius, self.beta + radius

    def _atoms(self) -> Tuple[np.ndarray, np.ndarray]:
        count = len(self.xs)
        locations = np.zeros((count, 3))
        weights = np.zeros((count, 3))
        if self.band is None:
            # two-point kernels from the 2x2 block [[x, sqrt(a1)], [sqrt(a1), b1]]
            centre = 0.5 * (self.xs + self.b1)
            spread = np.sqrt((0.5 * (self.xs - self.b1)) ** 2 + self.a1)
            for col, sign in enumerate((-1.0, 1.0)):
                lam = centre + sign * spread
                with np.errstate(divide="ignore", invalid="ignore"):
                    weight = self.a1 / (self.a1 + (lam - self.xs) ** 2)
                locations[:, col] = lam
                weights[:, col] = np.where(self.point_mass, 0.0, weight)
        else:
            eta = float(self.params.eta)
            s_eta = self.s * eta
            c1 = self.beta - self.xs + s_eta
            c2 = self.alpha + s_eta * (self.beta - self.xs) - self.a1
            c3 = np.full(count, s_eta * self.alpha)
            companion = np.zeros((count, 3, 3))
            companion[:, 0, :] = -np.stack([c1, c2, c3], axis=1)
            companion[:, 1, 0] = 1.0
            companion[:, 2, 1] = 1.0
            roots = np.linalg.eigvals(companion)
            for col in range(3):
                v = roots[:, col]
                real = np.abs(v.imag) <= 1e-9 * np.maximum(1.0, np.abs(v))
                v = v.real
                valid = real & (np.abs(v) > 1e-300) & (v * v > self.alpha)
                with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                    w = 1.0 / v
                    top = w * (1.0 + s_eta * w)
                    slope = 3.0 * c3 * w * w + 2.0 * c2 * w + c1
                    weight = top * (self.alpha - v * v) / slope
                valid &= np.isfinite(weight) & (weight > settings.ATOM_WEIGHT_TOL)
                locations[:, col] = np.where(valid, self.beta + self.alpha * w + v, 0.0)
                weights[:, col] = np.where(valid, weight, 0.0)
        locations[self.point_mass, 0] = self.xs[self.point_mass]
        weights[self.point_mass] = 0.0
        weights[self.point_mass, 0] = 1.0
        return locations, weights

    def density(self, y: Any) -> np.ndarray:
        """Densities of the a.c. parts, shape (len(xs), len(y))."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.zeros((len(self.xs), len(y)))
        band = self.band
        if band is None:
            return out
        inside = (y > band[0]) & (y < band[1])
        w = _boundary_w(y[inside], self.beta, self.alpha)[None, :]
        s_eta = self.s * float(self.params.eta)
        x = self.xs[:, None]
        a1 = self.a1[:, None]
        top = w * (1.0 + s_eta * w)
        bottom = (self.alpha * w * w + (self.beta - x) * w + 1.0) * (1.0 + s_eta * w) - a1 * w * w
        values = np.maximum(-(top / bottom).imag / math.pi, 0.0)
        values[self.point_mass, :] = 0.0
        out[:, inside] = values
        return out

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One draw from each kernel."""
        count = len(self.xs)
        uniforms = rng.random(count)
        cumulative = np.cumsum(self.weights, axis=1)
        atom_mass = cumulative[:, -1]
        out = np.empty(count)
        if self.band is None:
            atom_mass = np.where(atom_mass > 0, atom_mass, 1.0)
            cumulative = cumulative / atom_mass[:, None]
            atom_mass = np.ones(count)
        is_atom = uniforms < atom_mass
        if np.any(is_atom):
            chosen = (uniforms[is_atom, None] >= cumulative[is_atom]).sum(axis=1)
            chosen = np.minimum(chosen, 2)
            out[is_atom] = self.locations[is_atom, chosen]
        rest = np.flatnonzero(~is_atom)
        if len(rest):
            levels = (uniforms[rest] - atom_mass[rest]) / (1.0 - atom_mass[rest])
            out[rest] = self._inverse_cdf(rest, levels)
        return out

    def _inverse_cdf(self, rows: np.ndarray, levels: np.ndarray) -> np.ndarray:
        mid, half = _centre(self.band)
        phi, cdf = _cdf_table(self._rows(rows).density, self.band, settings.PATH_GRID_POINTS, settings.PATH_GRID_MAX_POINTS)
        # row-wise interpolation on one sorted array: row i is shifted by 2i
        offsets = 2.0 * np.arange(len(rows))
        flat = (cdf + offsets[:, None]).ravel()
        targets = np.clip(levels, 0.0, 1.0) + offsets
        index = np.clip(np.searchsorted(flat, targets, side="right"), 1, flat.size - 1)
        lo, hi = flat[index - 1], flat[index]
        frac = np.where(hi > lo, (targets - lo) / np.where(hi > lo, hi - lo, 1.0), 0.0)
        size = len(phi)
        phi_lo = phi[(index - 1) % size]
        phi_hi = phi[index % size]
        # a step across a row boundary lands on the row's last grid point
        phi_hi = np.where(index % size == 0, math.pi, phi_hi)
        angle = phi_lo + frac * (phi_hi - phi_lo)
        return mid - half * np.cos(angle)

    def _rows(self, rows: np.ndarray) -> "KernelFamily":
        subset = KernelFamily.__new__(KernelFamily)
        subset.__dict__.update(self.__dict__)
        subset.xs = self.xs[rows]
        subset.a1 = self.a1[rows]
        subset.point_mass = self.point_mass[rows]
        subset.locations = self.locations[rows]
        subset.weights = self.weights[rows]
        return subset


def _snap(value: Any) -> Any:
    """Float coefficients within DEGENERATE_TOL of zero become exactly zero."""
    if isinstance(value, float) and abs(value) <= settings.DEGENERATE_TOL:
        return 0.0
    return value


def _zero_like(value: Scalar) -> Scalar:
    return Fraction(0) if is_exact(value) else 0.0


def _weights_close(first: AtomWeights, second: AtomWeights) -> bool:
    return all(abs(float(u) - float(v)) <= settings.MASS_TOL for u, v in zip(first, second))
