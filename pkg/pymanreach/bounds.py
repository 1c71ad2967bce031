"""Lipschitz aggregation, Christoffel corrections and the guaranteed radius.

Given the local data at x0, this module evaluates how fast the guaranteed
velocity set shrinks away from x0: the aggregate Lipschitz constant L_G, the
correction terms from transporting f(x0) and G(x0) with a curved connection,
the radius alpha(x0, x) of the guaranteed velocity ball and the distances up
to which the ball is nonempty and the image of G is preserved.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import qr

from .exceptions import DegenerateInputError, ShapeError
from .geometry import (
    ChartPoint,
    TangentVector,
    christoffel,
    distance,
    unit_geodesic_velocity,
)

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
SPAN_TOL = 1e-9


def image_basis(G0: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column space of ``G0``.

    Computed with a column-pivoted QR decomposition; columns with a
    diagonal entry of R below ``tol`` are dropped. The signs are chosen so
    that R has a positive diagonal, which makes the first basis vector
    point along the largest column of ``G0``.
    """
    G0 = np.atleast_2d(np.asarray(G0, dtype=float))
    if G0.size == 0:
        return np.zeros((G0.shape[0], 0))
    Q, R, _ = qr(G0, mode='economic', pivoting=True)
    diag = np.diag(R)
    rank = int(np.sum(np.abs(diag) > tol))
    signs = np.where(diag[:rank] < 0, -1.0, 1.0)
    return Q[:, :rank] * signs


def min_singular_value(G0: np.ndarray, tol: float = RANK_TOL) -> float:
    """Smallest nonzero singular value of ``G0``, i.e. 1 / ||G0^+||.

    Raises
    ------
    DegenerateInputError
        If ``G0`` has no singular value above ``tol``.
    """
    sing = np.linalg.svd(np.atleast_2d(G0), compute_uv=False)
    sing = sing[sing > tol]
    if sing.size == 0:
        raise DegenerateInputError(r"G(x0) has no nonzero singular value.")
    return float(sing.min())


@dataclass(frozen=True, eq=False)
class LocalData(object):
    """Everything known about the dynamics: their value at x0 and growth bounds.

    Attributes
    ----------
    x0: ChartPoint
        The point the dynamics were observed at.
    f0: TangentVector
        Drift f(x0).
    G0: np.ndarray
        Input matrix G(x0), n x m.
    L_f: float
        Riemannian Lipschitz constant of f.
    L_g: np.ndarray
        Riemannian Lipschitz constant of every column of G, length m.
    image_basis: np.ndarray
        Orthonormal basis of Im(G0), n x rank. Computed on construction.

    Examples
    --------
    The pendulum linearised at theta = pi/4:

    >>> x0 = circle().point([np.pi / 4])
    >>> local = LocalData(x0, TangentVector(x0, [-np.sqrt(2) / 4]), [[1.0]], 1.5, [0.0])
    """
    x0: ChartPoint
    f0: TangentVector
    G0: np.ndarray
    L_f: float
    L_g: np.ndarray
    image_basis: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        n = self.x0.dim
        G0 = np.atleast_2d(np.asarray(self.G0, dtype=float))
        if G0.shape[0] != n:
            raise ShapeError(f"G0 has {G0.shape[0]} rows, the manifold has dimension {n}.")
        L_g = np.atleast_1d(np.asarray(self.L_g, dtype=float))
        if L_g.shape != (G0.shape[1],):
            raise ShapeError(f"Expected {G0.shape[1]} column Lipschitz constants, got {L_g.size}.")
        if self.L_f < 0 or np.any(L_g < 0):
            raise ValueError(r"Lipschitz constants must be nonnegative.")
        if not self.f0.base.same_as(self.x0):
            raise ValueError(r"f0 must be attached to x0.")

        basis = image_basis(G0)
        f0 = self.f0.components
        off_image = np.linalg.norm(f0 - basis @ (basis.T @ f0))
        if off_image > SPAN_TOL * max(1.0, np.linalg.norm(f0)):
            raise ValueError(f"f0 is not in the image of G0 (off by {off_image:.3g}).")

        G0.setflags(write=False)
        L_g.setflags(write=False)
        basis.setflags(write=False)
        object.__setattr__(self, 'G0', G0)
        object.__setattr__(self, 'L_g', L_g)
        object.__setattr__(self, 'L_f', float(self.L_f))
        object.__setattr__(self, 'image_basis', basis)
        try:
            sigma = min_singular_value(G0)
        except DegenerateInputError:
            sigma = None
        object.__setattr__(self, '_sigma', sigma)

    @property
    def rank(self) -> int:
        return self.image_basis.shape[1]

    @property
    def sigma(self) -> float:
        """Smallest nonzero singular value of G0."""
        if self._sigma is None:
            raise DegenerateInputError(r"G(x0) has no nonzero singular value.")
        return self._sigma


class EnvelopeSource(Enum):
    POINTWISE = "pointwise"
    USER_SUPPLIED = "user_supplied"


@dataclass(frozen=True)
class BoundEnvelope(object):
    """Upper bounds on ||H|| and ||H^-1|| valid where they are used.

    Attributes
    ----------
    H_norm_hi: float
        Upper bound on the spectral norm of the metric.
    H_inv_norm_hi: float
        Upper bound on the spectral norm of the inverse metric.
    source: EnvelopeSource
        Whether the bounds were evaluated at a point or supplied for a
        whole neighbourhood.
    """
    H_norm_hi: float
    H_inv_norm_hi: float
    source: EnvelopeSource = EnvelopeSource.USER_SUPPLIED

    def __post_init__(self) -> None:
        if not (self.H_norm_hi > 0 and self.H_inv_norm_hi > 0):
            raise ValueError(r"Envelope bounds must be positive.")
        # ||H|| >= 1 / ||H^-1|| for any SPD matrix
        if self.H_norm_hi * self.H_inv_norm_hi < 1 - 1e-12:
            raise ValueError(r"Envelope is inconsistent: ||H|| * ||H^-1|| < 1.")

    @classmethod
    def pointwise(cls, H: np.ndarray) -> "BoundEnvelope":
        eigvals = np.linalg.eigvalsh(H)
        return cls(float(eigvals[-1]), float(1 / eigvals[0]), EnvelopeSource.POINTWISE)

    @property
    def cond_root(self) -> float:
        """(||H^-1|| ||H||)^(1/2)."""
        return float(np.sqrt(self.H_inv_norm_hi * self.H_norm_hi))


def resolve_envelope(env: Optional[BoundEnvelope], H: np.ndarray) -> BoundEnvelope:
    """The user envelope when supplied, else the pointwise one at ``H``."""
    return env if env is not None else BoundEnvelope.pointwise(H)


def aggregate_LG(local: LocalData, env: BoundEnvelope, n: int) -> float:
    """Lipschitz constant of G from those of its columns.

    L_G = n ||H^-1|| ||H||^(1/2) max_l L_{g_l}.
    """
    if local.L_g.size == 0:
        return 0.0
    return float(n * env.H_inv_norm_hi * np.sqrt(env.H_norm_hi) * local.L_g.max())


class GammaCorrections(NamedTuple):
    gG: np.ndarray
    gF: np.ndarray


def gamma_corrections(
    local: LocalData,
    x: ChartPoint,
    geodesic_velocity: TangentVector,
    gamma: Optional[np.ndarray],
) -> GammaCorrections:
    """Connection terms separating Levi-Civita from flat transport.

    Parameters
    ----------
    local : LocalData
        Local data at x0.
    x : ChartPoint
        Query point.
    geodesic_velocity : TangentVector
        Velocity at ``x`` of the unit-speed geodesic from x0.
    gamma : np.ndarray or None
        Christoffel symbols at ``x``; None for a flat metric.

    Returns
    -------
    GammaCorrections
        ``gG[k, l] = sum_ij gdot^i Gamma^k_ij G0[j, l]`` and
        ``gF[k] = sum_ij gdot^i Gamma^k_ij f0^j``.
    """
    n, m = local.G0.shape
    if gamma is None or x.same_as(local.x0):
        return GammaCorrections(np.zeros((n, m)), np.zeros(n))
    gdot = geodesic_velocity.components
    gG = np.einsum('i,kij,jl->kl', gdot, gamma, local.G0)
    gF = np.einsum('i,kij,j->k', gdot, gamma, local.f0.components)
    return GammaCorrections(gG, gF)


class DomainRadii(NamedTuple):
    lemma4_radius: float
    theorem1_radius: float


def _ratio(numerator: float, denominator: float) -> float:
    if denominator > 0:
        return numerator / denominator
    if numerator > 0:
        return np.inf
    return -np.inf if numerator < 0 else 0.0


def domain_radius(
    local: LocalData,
    env: BoundEnvelope,
    corrections: GammaCorrections,
    L_G: Optional[float] = None,
) -> DomainRadii:
    """Distances from x0 within which the guaranteed set keeps its structure.

    Returns
    -------
    DomainRadii
        ``lemma4_radius``: below it rank G(x) = rank G(x0).
        ``theorem1_radius``: below it the guaranteed velocity ball is
        nonempty, i.e. alpha >= 0. An unbounded radius is ``inf``.
    """
    sigma = local.sigma
    n = local.x0.dim
    L_G = aggregate_LG(local, env, n) if L_G is None else L_G
    s = env.cond_root
    gG_norm = float(np.linalg.norm(corrections.gG, 2)) if corrections.gG.size else 0.0
    gF_norm = float(np.linalg.norm(corrections.gF))

    a = s * np.sqrt(env.H_norm_hi) * gG_norm
    b = s * gF_norm
    c = s * (L_G + local.L_f / np.sqrt(env.H_norm_hi))
    theorem1 = _ratio(sigma - a - b, c)

    lemma4 = _ratio(sigma - np.sqrt(env.H_inv_norm_hi) * env.H_norm_hi * gG_norm, s * L_G)
    return DomainRadii(float(lemma4), float(theorem1))


def alpha(
    local: LocalData,
    env: BoundEnvelope,
    corrections: GammaCorrections,
    d: float,
    L_G: Optional[float] = None,
) -> float:
    """Radius of the guaranteed velocity ball at distance ``d`` from x0.

    alpha = sigma - (||H^-1|| ||H||)^(1/2) (||H||^(1/2) ||gG|| + ||gF||
            + (L_G + ||H||^(-1/2) L_f) d),

    with sigma the smallest nonzero singular value of G(x0). A negative
    value means the ball is empty.
    """
    sigma = local.sigma
    L_G = aggregate_LG(local, env, local.x0.dim) if L_G is None else L_G
    gG_norm = float(np.linalg.norm(corrections.gG, 2)) if corrections.gG.size else 0.0
    gF_norm = float(np.linalg.norm(corrections.gF))
    bracket = (
        np.sqrt(env.H_norm_hi) * gG_norm
        + gF_norm
        + (L_G + local.L_f / np.sqrt(env.H_norm_hi)) * d
    )
    return float(sigma - env.cond_root * bracket)


class BoundsAtPoint(NamedTuple):
    distance: float
    L_G: float
    envelope: BoundEnvelope
    corrections: GammaCorrections
    radii: DomainRadii
    alpha: float


def evaluate_bounds(
    local: LocalData,
    x: ChartPoint,
    manifold,
    env: Optional[BoundEnvelope] = None,
) -> BoundsAtPoint:
    """All bound quantities at ``x`` in one pass.

    Christoffel symbols and the geodesic velocity are only computed on
    curved metrics.
    """
    metric_field = manifold.metric_field
    H, _ = metric_field.evaluate(x)
    envelope = resolve_envelope(env, H)
    d = distance(local.x0, x, manifold)

    gamma = None if metric_field.is_flat else christoffel(x, metric_field)
    if gamma is None or d == 0.0:
        n, m = local.G0.shape
        corrections = GammaCorrections(np.zeros((n, m)), np.zeros(n))
    else:
        velocity = unit_geodesic_velocity(local.x0, x, manifold)
        corrections = gamma_corrections(local, x, velocity, gamma)

    L_G = aggregate_LG(local, envelope, x.dim)
    radii = domain_radius(local, envelope, corrections, L_G)
    value = alpha(local, envelope, corrections, d, L_G)
    return BoundsAtPoint(d, L_G, envelope, corrections, radii, value)
