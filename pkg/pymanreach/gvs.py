"""The guaranteed velocity set and the true available velocities.

At a point x the guaranteed velocity set is approximated from inside by a
ball of radius alpha(x0, x) around f(x0), intersected with the image of
G(x0). Both are carried to x by flat transport, so their components are the
same as at x0.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional

import numpy as np

from .bounds import BoundEnvelope, LocalData, SPAN_TOL, evaluate_bounds
from .exceptions import ChartBoundaryError, EmptySetError, ShapeError
from .geometry import ChartPoint, TangentVector, Vector, as_components

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class VelocityBall(object):
    """Ball of guaranteed velocities at ``base``.

    The ball uses the Euclidean norm on chart components and lives in the
    subspace spanned by ``image_basis``. A negative radius is the empty set.

    Attributes
    ----------
    base: ChartPoint
        The point the set is attached to.
    center: TangentVector
        Ball center, the flat transport of f(x0).
    radius: float
        alpha(x0, base).
    image_basis: np.ndarray
        n x r orthonormal basis of the image of G(x0).
    """
    base: ChartPoint
    center: TangentVector
    radius: float
    image_basis: np.ndarray

    def __post_init__(self) -> None:
        basis = np.asarray(self.image_basis, dtype=float)
        if basis.ndim != 2 or basis.shape[0] != self.base.dim:
            raise ShapeError(r"image_basis must have one row per coordinate.")
        comps = self.center.components
        projected = basis @ (basis.T @ comps)
        off_image = np.linalg.norm(comps - projected)
        if off_image > SPAN_TOL * max(1.0, np.linalg.norm(comps)):
            raise ValueError(f"Ball center is off the image subspace by {off_image:.3g}.")
        # Snap the center onto the subspace so samples pass tight membership tests
        object.__setattr__(self, 'center', TangentVector(self.base, projected))
        object.__setattr__(self, 'radius', float(self.radius))
        object.__setattr__(self, 'image_basis', basis)

    @property
    def is_empty(self) -> bool:
        return self.radius < 0

    @property
    def rank(self) -> int:
        return self.image_basis.shape[1]

    def velocity(self, u: np.ndarray) -> np.ndarray:
        """Components center + radius * B u for subspace coordinates ``u``."""
        return self.center.components + self.radius * (self.image_basis @ u)


def require_in_chart(x: ChartPoint, manifold) -> None:
    """Raise :class:`ChartBoundaryError` unless ``x`` lies in the chart of ``manifold``."""
    if not manifold.domain.contains(x.coords):
        raise ChartBoundaryError(f"Point {x.coords} is outside the chart domain of '{manifold.name}'.")


def gvs_at(
    local: LocalData,
    x: ChartPoint,
    manifold,
    env: Optional[BoundEnvelope] = None,
) -> VelocityBall:
    """Guaranteed velocity ball at ``x``.

    Parameters
    ----------
    local : LocalData
        Local data at x0.
    x : ChartPoint
        Query point in the chart of ``manifold``.
    manifold : ManifoldSpec
        The state manifold.
    env : BoundEnvelope, optional
        Neighbourhood bounds on the metric; pointwise at ``x`` when absent.

    Returns
    -------
    VelocityBall
        Empty (negative radius) beyond the admissible distance from x0.

    Raises
    ------
    ChartBoundaryError
        If ``x`` is outside the chart domain.
    """
    require_in_chart(x, manifold)
    bounds = evaluate_bounds(local, x, manifold, env)
    if bounds.alpha < 0:
        logger.debug("Empty guaranteed velocity set at %s (alpha = %.3g)", x.coords, bounds.alpha)
    return VelocityBall(
        base=x,
        center=TangentVector(x, local.f0.components),
        radius=bounds.alpha,
        image_basis=local.image_basis,
    )


def contains_velocity(ball: VelocityBall, v: Vector, tol: float = 1e-9) -> bool:
    """Check if ``v`` is in the ball, up to ``tol``.

    Raises
    ------
    ValueError
        If ``v`` is attached to a different point than the ball.
    """
    if isinstance(v, TangentVector) and not v.base.same_as(ball.base):
        raise ValueError(r"Velocity and ball are attached to different points.")
    if ball.is_empty:
        return False
    comps = as_components(v)
    B = ball.image_basis
    off_image = np.linalg.norm(comps - B @ (B.T @ comps))
    offset = np.linalg.norm(comps - ball.center.components)
    return bool(off_image <= tol and offset <= ball.radius + tol)


def _unit_directions(rng: np.random.Generator, k: int, r: int) -> np.ndarray:
    z = rng.standard_normal((k, r))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    # guard all-zero draws
    norms[norms == 0] = 1.0
    return z / norms


def sample_unit_ball(rng: np.random.Generator, k: int, r: int, mode: str) -> np.ndarray:
    """``k`` points of the unit ball of R^r, uniform inside or on the sphere."""
    if mode not in ('uniform_ball', 'boundary'):
        raise ValueError(f"Unknown sampling mode '{mode}'.")
    directions = _unit_directions(rng, k, r)
    if mode == 'boundary':
        return directions
    radii = rng.random(k) ** (1.0 / r)
    return directions * radii[:, None]


def sample_velocities(
    ball: VelocityBall,
    k: int,
    seed,
    mode: str = 'uniform_ball',
) -> List[TangentVector]:
    """Draw ``k`` velocities from a nonempty ball.

    Parameters
    ----------
    ball : VelocityBall
        The set to sample.
    k : int
        Number of samples.
    seed : int or np.random.SeedSequence
        Seed of the generator; equal seeds give equal samples.
    mode : str, optional
        ``"uniform_ball"`` draws uniformly from the ball within the image
        subspace, ``"boundary"`` from its bounding sphere.

    Returns
    -------
    list of TangentVector
        The samples, attached to ``ball.base``.

    Raises
    ------
    EmptySetError
        If the ball is empty.
    """
    if ball.is_empty:
        raise EmptySetError(f"Cannot sample an empty velocity ball (radius {ball.radius:.3g}).")
    if k == 0:
        return []
    rng = np.random.default_rng(seed)
    controls = sample_unit_ball(rng, k, ball.rank, mode)
    return [TangentVector(ball.base, ball.velocity(u)) for u in controls]


class ControlFit(NamedTuple):
    control: np.ndarray
    control_norm: float
    residual: float


@dataclass(frozen=True, eq=False)
class AvailableVelocityOracle(object):
    """The true available velocities {f(x) + G(x) u : |u| <= 1}.

    Only used for validation: the true dynamics are unknown to the bound
    computations.

    Attributes
    ----------
    f: callable
        True drift, mapping coordinates to an n-vector.
    G: callable
        True input matrix, mapping coordinates to an n x m matrix.
    """
    f: Callable[[np.ndarray], np.ndarray]
    G: Callable[[np.ndarray], np.ndarray]

    def velocity(self, x: ChartPoint, u: np.ndarray) -> np.ndarray:
        G = np.atleast_2d(self.G(x.coords))
        return np.asarray(self.f(x.coords), dtype=float).ravel() + G @ np.asarray(u, dtype=float)

    def solve_control(self, x: ChartPoint, v: Vector) -> ControlFit:
        """Least-squares control reproducing ``v`` at ``x``."""
        G = np.atleast_2d(self.G(x.coords))
        target = as_components(v) - np.asarray(self.f(x.coords), dtype=float).ravel()
        u, *_ = np.linalg.lstsq(G, target, rcond=None)
        residual = float(np.linalg.norm(G @ u - target))
        return ControlFit(u, float(np.linalg.norm(u)), residual)

    def contains(self, x: ChartPoint, v: Vector, tol: float = 1e-6) -> bool:
        fit = self.solve_control(x, v)
        return fit.control_norm <= 1 + tol and fit.residual <= tol
