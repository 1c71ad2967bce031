"""Chart-based Riemannian geometry.

Everything in this module works in a single open coordinate chart. Points
carry their chart coordinates, tangent vectors carry their components in the
coordinate basis, and the metric is supplied as a function of the coordinates.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple, Optional, Union

import numpy as np
from scipy.optimize import least_squares

from .exceptions import (
    ChartBoundaryError,
    InvalidMetricError,
    NoGeodesicError,
    ShapeError,
)

logger = logging.getLogger(__name__)

### ---- NUMERICAL DEFAULTS ---- ###
FD_STEP = 1e-5
TRANSPORT_STEP = 1e-3
GEODESIC_STEP = 1e-2
SHOOTING_TOL = 1e-8
SHOOTING_MAX_ITER = 100
QUADRATURE_POINTS = 64


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ChartDomain(object):
    """An open box in chart coordinates.

    Attributes
    ----------
    lower: np.ndarray
        Lower bound of every coordinate, ``-inf`` allowed.
    upper: np.ndarray
        Upper bound of every coordinate, ``inf`` allowed.
    """
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lower = _frozen(np.atleast_1d(self.lower))
        upper = _frozen(np.atleast_1d(self.upper))
        if lower.shape != upper.shape:
            raise ShapeError(r"Domain bounds must have the same length.")
        if np.any(lower >= upper):
            raise ValueError(r"Every lower domain bound must be below its upper bound.")
        object.__setattr__(self, 'lower', lower)
        object.__setattr__(self, 'upper', upper)

    @classmethod
    def unbounded(cls, dim: int) -> "ChartDomain":
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, coords: np.ndarray, margin: float = 0.0) -> bool:
        """Check if ``coords`` lies at least ``margin`` inside the open box."""
        coords = np.asarray(coords, dtype=float)
        return bool(
            np.all(coords > self.lower + margin) and np.all(coords < self.upper - margin)
        )


@dataclass(frozen=True, eq=False)
class ChartPoint(object):
    """A point of the manifold in chart coordinates.

    Attributes
    ----------
    coords: np.ndarray
        The chart coordinates (read-only).
    domain: ChartDomain, optional
        The chart domain the point was validated against.
    """
    coords: np.ndarray
    domain: Optional[ChartDomain] = None

    def __post_init__(self) -> None:
        coords = _frozen(np.atleast_1d(self.coords))
        if coords.ndim != 1:
            raise ShapeError(r"Chart coordinates must be a vector.")
        if not np.all(np.isfinite(coords)):
            raise ValueError(r"Chart coordinates must be finite.")
        if self.domain is not None:
            if self.domain.dim != coords.size:
                raise ShapeError(
                    f"Point has {coords.size} coordinates, chart has {self.domain.dim}."
                )
            if not self.domain.contains(coords):
                raise ChartBoundaryError(f"Point {coords} is outside the chart domain.")
        object.__setattr__(self, 'coords', coords)

    @property
    def dim(self) -> int:
        return self.coords.size

    def same_as(self, other: "ChartPoint") -> bool:
        return np.array_equal(self.coords, other.coords)


@dataclass(frozen=True, eq=False)
class TangentVector(object):
    """A tangent vector with its base point.

    Attributes
    ----------
    base: ChartPoint
        The point the vector is attached to.
    components: np.ndarray
        Components in the coordinate basis at ``base``.
    """
    base: ChartPoint
    components: np.ndarray

    def __post_init__(self) -> None:
        components = _frozen(np.atleast_1d(self.components))
        if components.shape != (self.base.dim,):
            raise ShapeError(
                f"Tangent vector has shape {components.shape}, base point has dimension {self.base.dim}."
            )
        if not np.all(np.isfinite(components)):
            raise ValueError(r"Tangent vector components must be finite.")
        object.__setattr__(self, 'components', components)


Vector = Union[TangentVector, np.ndarray]


def as_components(v: Vector) -> np.ndarray:
    if isinstance(v, TangentVector):
        return v.components
    return np.asarray(v, dtype=float)


def _coords(x: Union[ChartPoint, np.ndarray]) -> np.ndarray:
    if isinstance(x, ChartPoint):
        return x.coords
    return np.asarray(x, dtype=float)


class Connection(Enum):
    """Affine connections available for transport and differentiation."""
    LEVI_CIVITA = "levi_civita"
    FLAT = "flat"


@dataclass(frozen=True, eq=False)
class MetricField(object):
    """A Riemannian metric given as a function of chart coordinates.

    Attributes
    ----------
    metric: callable
        Maps a coordinate vector to the n x n metric tensor H.
    inverse: callable, optional
        Maps a coordinate vector to H^-1. Numerical inversion when absent.
    christoffel_fn: callable, optional
        Analytic Christoffel symbols, returning an (n, n, n) array indexed
        ``[k, i, j]``. Finite differences are used when absent.
    is_flat: bool
        If the Christoffel symbols are known to vanish identically.
    fd_step: float
        Central-difference step in chart units.
    """
    metric: Callable[[np.ndarray], np.ndarray]
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None
    christoffel_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    is_flat: bool = False
    fd_step: float = FD_STEP

    @classmethod
    def euclidean(cls, dim: int) -> "MetricField":
        eye = np.eye(dim)
        return cls(
            metric=lambda x: eye,
            inverse=lambda x: eye,
            christoffel_fn=lambda x: np.zeros((dim, dim, dim)),
            is_flat=True,
        )

    def evaluate(self, x: Union[ChartPoint, np.ndarray]):
        """Return ``(H, H_inv)`` at ``x``."""
        coords = _coords(x)
        H = np.asarray(self.metric(coords), dtype=float)
        if self.inverse is not None:
            H_inv = np.asarray(self.inverse(coords), dtype=float)
        else:
            H_inv = np.linalg.inv(H)
        return H, H_inv


@dataclass(frozen=True, eq=False)
class Curve(object):
    """A parameterized curve on [0, 1].

    Attributes
    ----------
    position: callable
        Maps t to chart coordinates.
    velocity_fn: callable
        Maps t to the components of the curve velocity.
    domain: ChartDomain, optional
        Domain the points are validated against.
    is_geodesic: bool
        If the curve is known to be a geodesic.
    """
    position: Callable[[float], np.ndarray]
    velocity_fn: Callable[[float], np.ndarray]
    domain: Optional[ChartDomain] = None
    is_geodesic: bool = False

    @classmethod
    def segment(
        cls,
        start: Union[ChartPoint, np.ndarray],
        end: Union[ChartPoint, np.ndarray],
        domain: Optional[ChartDomain] = None,
        is_geodesic: bool = False,
    ) -> "Curve":
        """The straight line between two points in chart coordinates."""
        a = np.array(_coords(start))
        b = np.array(_coords(end))
        delta = b - a
        return cls(
            position=lambda t: a + t * delta,
            velocity_fn=lambda t: delta,
            domain=domain,
            is_geodesic=is_geodesic,
        )

    def point(self, t: float) -> ChartPoint:
        return ChartPoint(self.position(t), self.domain)

    def velocity(self, t: float) -> TangentVector:
        return TangentVector(self.point(t), self.velocity_fn(t))


class NormFactors(NamedTuple):
    vec_lo: float
    vec_hi: float
    mat_lo: float
    mat_hi: float


### ---- NORMS ---- ###
def riemannian_vec_norm(v: Vector, H: np.ndarray) -> float:
    """Riemannian norm of a tangent vector.

    Parameters
    ----------
    v : TangentVector or np.ndarray
        The vector, as components in the coordinate basis.
    H : np.ndarray
        The metric tensor at the base point of ``v``.

    Returns
    -------
    float
        sqrt(v^T H v).

    Raises
    ------
    InvalidMetricError
        If the quadratic form is negative.
    """
    comps = as_components(v)
    H = np.asarray(H, dtype=float)
    if H.shape != (comps.size, comps.size):
        raise ShapeError(f"Metric of shape {H.shape} does not match vector of size {comps.size}.")
    quad = float(comps @ H @ comps)
    scale = float(np.abs(H).max() * (comps @ comps)) if comps.size else 0.0
    if quad < -1e-12 * max(scale, 1.0):
        raise InvalidMetricError(r"Metric yields a negative squared norm.")
    return float(np.sqrt(max(quad, 0.0)))


def _metric_sqrt(H: np.ndarray):
    eigvals, eigvecs = np.linalg.eigh(H)
    if np.any(eigvals <= 0):
        raise InvalidMetricError(r"Metric is not positive definite.")
    root = np.sqrt(eigvals)
    H_half = (eigvecs * root) @ eigvecs.T
    H_inv_half = (eigvecs / root) @ eigvecs.T
    return H_half, H_inv_half


def riemannian_mat_norm(A: np.ndarray, H: np.ndarray) -> float:
    """Riemannian norm of a matrix whose columns are tangent vectors.

    For a square matrix this is the operator norm with respect to the
    Riemannian norm on both sides, i.e. the largest singular value of
    H^{1/2} A H^{-1/2}. For a rectangular matrix the input side carries
    the Euclidean norm, giving the largest singular value of H^{1/2} A.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    if A.shape[0] != n:
        raise ShapeError(f"Matrix with {A.shape[0]} rows does not match metric of size {n}.")
    H_half, H_inv_half = _metric_sqrt(H)
    if A.shape[1] == n:
        B = H_half @ A @ H_inv_half
    else:
        B = H_half @ A
    if B.size == 0:
        return 0.0
    return float(np.linalg.norm(B, 2))


def norm_equivalence_factors(H: np.ndarray) -> NormFactors:
    """Constants relating Riemannian and Euclidean norms.

    With lambda_min and lambda_max the extreme eigenvalues of ``H``,

    vec_lo * |v| <= |v|_h <= vec_hi * |v|
    mat_lo * |A| <= |A|_h <= mat_hi * |A|

    where vec_lo = ||H^-1||^(-1/2), vec_hi = ||H||^(1/2) and
    mat_lo = (||H^-1||^-1 / ||H||)^(1/2) = 1 / mat_hi.
    """
    eigvals = np.linalg.eigvalsh(np.asarray(H, dtype=float))
    lam_min, lam_max = float(eigvals[0]), float(eigvals[-1])
    if lam_min <= 0:
        raise InvalidMetricError(r"Metric is not positive definite.")
    mat_lo = np.sqrt(lam_min / lam_max)
    return NormFactors(
        vec_lo=float(np.sqrt(lam_min)),
        vec_hi=float(np.sqrt(lam_max)),
        mat_lo=float(mat_lo),
        mat_hi=float(1 / mat_lo),
    )


### ---- CONNECTION ---- ###
def _check_stencil(coords: np.ndarray, step: float, domain: Optional[ChartDomain]) -> None:
    if domain is not None and not domain.contains(coords, margin=step):
        raise ChartBoundaryError(
            f"Finite-difference stencil of size {step} at {coords} leaves the chart domain."
        )


def christoffel(
    x: ChartPoint,
    metric_field: MetricField,
    mode: str = "analytic",
    step: Optional[float] = None,
) -> np.ndarray:
    """Christoffel symbols of the Levi-Civita connection.

    Parameters
    ----------
    x : ChartPoint
        Evaluation point.
    metric_field : MetricField
        The metric.
    mode : str, optional
        ``"analytic"`` uses the metric's own Christoffel function when it has
        one and falls back to finite differences otherwise;
        ``"finite_difference"`` always differentiates the metric numerically.
    step : float, optional
        Central-difference step, by default ``metric_field.fd_step``.

    Returns
    -------
    np.ndarray
        Array ``gamma`` of shape (n, n, n) with ``gamma[k, i, j]`` the
        coefficient of the k-th basis vector in the derivative of the j-th
        basis vector along the i-th.

    Raises
    ------
    ChartBoundaryError
        If the difference stencil leaves the chart domain.
    """
    if mode not in ("analytic", "finite_difference"):
        raise ValueError(f"Unknown Christoffel mode '{mode}'.")
    coords = x.coords
    n = coords.size

    if mode == "analytic" and metric_field.christoffel_fn is not None:
        return np.asarray(metric_field.christoffel_fn(coords), dtype=float)
    if mode == "analytic":
        logger.debug("No analytic Christoffel symbols, differentiating the metric at %s", coords)

    h = metric_field.fd_step if step is None else step
    _check_stencil(coords, h, x.domain)

    # dH[l, i, j] = dH_ij / dx^l
    dH = np.empty((n, n, n))
    for l in range(n):
        e = np.zeros(n)
        e[l] = h
        dH[l] = (metric_field.metric(coords + e) - metric_field.metric(coords - e)) / (2 * h)
    _, H_inv = metric_field.evaluate(coords)

    lowered = np.einsum('jli->lij', dH) + np.einsum('ilj->lij', dH) - dH
    gamma = 0.5 * np.einsum('kl,lij->kij', H_inv, lowered)
    return 0.5 * (gamma + gamma.transpose(0, 2, 1))


def _connection_coefficients(
    coords: np.ndarray,
    connection: Connection,
    metric_field: Optional[MetricField],
    domain: Optional[ChartDomain],
) -> Optional[np.ndarray]:
    if connection is Connection.FLAT:
        return None
    if metric_field is None:
        raise ValueError(r"The Levi-Civita connection needs a metric field.")
    if metric_field.is_flat:
        return None
    return christoffel(ChartPoint(coords, domain), metric_field)


def covariant_derivative(
    f_field: Callable[[np.ndarray], np.ndarray],
    gamma_dot: TangentVector,
    connection: Connection,
    metric_field: Optional[MetricField] = None,
    step: float = FD_STEP,
) -> TangentVector:
    """Covariant derivative of a vector field along a direction.

    Parameters
    ----------
    f_field : callable
        Vector field, mapping coordinates to components.
    gamma_dot : TangentVector
        Direction of differentiation, attached to the evaluation point.
    connection : Connection
        The affine connection.
    metric_field : MetricField, optional
        Required for the Levi-Civita connection.
    step : float, optional
        Central-difference step for the field Jacobian.

    Returns
    -------
    TangentVector
        sum_i gamma_dot^i (df^k/dx^i + f^j Gamma^k_ij), at the base of
        ``gamma_dot``.
    """
    x = gamma_dot.base
    coords = x.coords
    n = coords.size
    _check_stencil(coords, step, x.domain)

    jac = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        jac[:, i] = (np.asarray(f_field(coords + e)) - np.asarray(f_field(coords - e))) / (2 * step)

    result = jac @ gamma_dot.components
    gamma = _connection_coefficients(coords, connection, metric_field, x.domain)
    if gamma is not None:
        f = np.asarray(f_field(coords), dtype=float)
        result = result + np.einsum('kij,i,j->k', gamma, gamma_dot.components, f)
    return TangentVector(x, result)


def parallel_transport(
    V: Union[TangentVector, np.ndarray],
    curve: Curve,
    connection: Connection,
    metric_field: Optional[MetricField] = None,
    step: float = TRANSPORT_STEP,
):
    """Transport tangent vectors from ``curve(0)`` to ``curve(1)``.

    Solves dV^k/dt = -sum_ij gamma_dot^i Gamma^k_ij V^j with a fixed-step
    fourth-order Runge-Kutta scheme. Under the flat connection the
    components are returned unchanged.

    Parameters
    ----------
    V : TangentVector or np.ndarray
        A single vector, or an (n, m) matrix whose columns are vectors at
        ``curve(0)``.
    curve : Curve
        The transport path.
    connection : Connection
        The affine connection.
    metric_field : MetricField, optional
        Required for the Levi-Civita connection.
    step : float, optional
        Fixed step in curve-parameter units, by default 1e-3.

    Returns
    -------
    TangentVector or np.ndarray
        Same kind as ``V``, expressed at ``curve(1)``.
    """
    if step <= 0:
        raise ValueError(r"Transport step must be positive.")
    V0 = np.array(as_components(V), dtype=float)
    end = curve.point(1.0)

    def _wrap(out):
        if isinstance(V, TangentVector):
            return TangentVector(end, out)
        return out

    if connection is Connection.FLAT or (metric_field is not None and metric_field.is_flat):
        return _wrap(V0)

    def rhs(t, W):
        gamma = _connection_coefficients(
            curve.point(t).coords, connection, metric_field, curve.domain
        )
        if gamma is None:
            return np.zeros_like(W)
        A = np.einsum('i,kij->kj', curve.velocity_fn(t), gamma)
        return -A @ W

    n_steps = int(np.ceil(1.0 / step))
    h = 1.0 / n_steps
    W = V0
    for k in range(n_steps):
        t = k * h
        k1 = rhs(t, W)
        k2 = rhs(t + h / 2, W + h / 2 * k1)
        k3 = rhs(t + h / 2, W + h / 2 * k2)
        k4 = rhs(t + h, W + h * k3)
        W = W + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return _wrap(W)


### ---- LENGTH AND DISTANCE ---- ###
def curve_length(
    curve: Curve,
    metric_field: MetricField,
    quadrature_points: int = QUADRATURE_POINTS,
) -> float:
    """Length of a curve by Gauss-Legendre quadrature of its Riemannian speed."""
    if quadrature_points < 1:
        raise ValueError(r"At least one quadrature point is needed.")
    nodes, weights = np.polynomial.legendre.leggauss(quadrature_points)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    speeds = [
        riemannian_vec_norm(curve.velocity_fn(t), metric_field.evaluate(curve.point(t))[0])
        for t in nodes
    ]
    return float(np.dot(weights, speeds))


def integrate_geodesic(
    x: ChartPoint,
    v: Vector,
    metric_field: MetricField,
    domain: Optional[ChartDomain] = None,
    step: float = GEODESIC_STEP,
) -> ChartPoint:
    """Follow the geodesic through ``x`` with velocity ``v`` for unit time.

    Integrates the geodesic equation with fixed-step fourth-order
    Runge-Kutta.

    Raises
    ------
    ChartBoundaryError
        If the geodesic leaves the chart, with the exit parameter attached.
    """
    domain = x.domain if domain is None else domain
    n = x.dim

    def rhs(state):
        q, qdot = state[:n], state[n:]
        if domain is not None and not domain.contains(q):
            raise ChartBoundaryError(r"Geodesic left the chart domain.")
        if metric_field.is_flat:
            return np.concatenate([qdot, np.zeros(n)])
        gamma = christoffel(ChartPoint(q), metric_field)
        return np.concatenate([qdot, -np.einsum('kij,i,j->k', gamma, qdot, qdot)])

    n_steps = int(np.ceil(1.0 / step))
    h = 1.0 / n_steps
    state = np.concatenate([x.coords, as_components(v)])
    for k in range(n_steps):
        try:
            k1 = rhs(state)
            k2 = rhs(state + h / 2 * k1)
            k3 = rhs(state + h / 2 * k2)
            k4 = rhs(state + h * k3)
        except ChartBoundaryError as err:
            raise ChartBoundaryError(str(err), exit_parameter=k * h) from err
        state = state + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if domain is not None and not domain.contains(state[:n]):
        raise ChartBoundaryError(r"Geodesic left the chart domain.", exit_parameter=1.0)
    return ChartPoint(state[:n], domain)


def _shoot(x: ChartPoint, y: ChartPoint, manifold) -> np.ndarray:
    """Initial velocity of the geodesic from ``x`` to ``y`` by shooting."""
    metric_field = manifold.metric_field
    if metric_field.is_flat:
        return y.coords - x.coords

    miss = 1e3 * np.ones(x.dim)

    def residual(v):
        try:
            return integrate_geodesic(
                x, v, metric_field, manifold.domain, manifold.geodesic_step
            ).coords - y.coords
        except ChartBoundaryError:
            return miss

    sol = least_squares(
        residual,
        y.coords - x.coords,
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
        max_nfev=SHOOTING_MAX_ITER,
    )
    if np.linalg.norm(sol.fun) > SHOOTING_TOL:
        raise NoGeodesicError(
            f"Geodesic shooting from {x.coords} to {y.coords} missed by {np.linalg.norm(sol.fun):.3g}."
        )
    return sol.x


def _exit_parameter(manifold, x: ChartPoint, comps: np.ndarray) -> float:
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        try:
            inside = manifold.domain.contains(manifold.exp_fn(x.coords, mid * comps))
        except ValueError:
            inside = False
        if inside:
            lo = mid
        else:
            hi = mid
    return hi


def distance(x: ChartPoint, y: ChartPoint, manifold) -> float:
    """Geodesic distance between two points of ``manifold``.

    Uses the manifold's closed form when it has one. Otherwise the
    connecting geodesic is found by shooting and its length, the Riemannian
    norm of its initial velocity, is returned.

    Raises
    ------
    NoGeodesicError
        If shooting does not converge.
    """
    if x.same_as(y):
        return 0.0
    if manifold.distance_fn is not None:
        return float(manifold.distance_fn(x.coords, y.coords))
    v = _shoot(x, y, manifold)
    H, _ = manifold.metric_field.evaluate(x)
    return riemannian_vec_norm(v, H)


def exp_map(x: ChartPoint, v: Vector, manifold) -> ChartPoint:
    """Exponential map: the point reached after unit time along the geodesic.

    Raises
    ------
    ChartBoundaryError
        If the geodesic leaves the chart domain.
    """
    comps = as_components(v)
    if not np.any(comps):
        return x
    if manifold.exp_fn is None:
        return integrate_geodesic(
            x, comps, manifold.metric_field, manifold.domain, manifold.geodesic_step
        )
    coords = manifold.exp_fn(x.coords, comps)
    if not manifold.domain.contains(coords):
        raise ChartBoundaryError(
            f"Exponential map from {x.coords} leaves the chart domain.",
            exit_parameter=_exit_parameter(manifold, x, comps),
        )
    return ChartPoint(coords, manifold.domain)


def log_map(x: ChartPoint, y: ChartPoint, manifold) -> TangentVector:
    """Inverse of :func:`exp_map` at ``x``."""
    if x.same_as(y):
        return TangentVector(x, np.zeros(x.dim))
    if manifold.log_fn is not None:
        return TangentVector(x, manifold.log_fn(x.coords, y.coords))
    return TangentVector(x, _shoot(x, y, manifold))


def unit_geodesic_velocity(x0: ChartPoint, x: ChartPoint, manifold) -> TangentVector:
    """Velocity at ``x`` of the unit-speed geodesic running from ``x0`` to ``x``.

    The zero vector is returned when the two points coincide.
    """
    d = distance(x0, x, manifold)
    if d == 0.0:
        return TangentVector(x, np.zeros(x.dim))
    back = log_map(x, x0, manifold)
    return TangentVector(x, -back.components / d)
