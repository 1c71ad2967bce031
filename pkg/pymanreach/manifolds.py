"""Built-in manifolds and the manifold registry.

Three manifolds ship with the package: flat R^n, the circle S^1 in its angle
chart, and SO(3) in a z-x-z Euler-angle chart. Others can be described in a
definition file (see :func:`load_manifold`) and registered by name.

SO(3) convention
----------------
Coordinates ``(psi, theta, phi)`` map to X = Rz(psi) Rx(theta) Rz(phi). The
point (0, pi/2, 0) is then the rotation by pi/2 about the x axis. The chart
covers psi, phi in (-pi, pi) and theta in (0, pi), where the metric

    H = [[1, 0, cos(theta)], [0, 1, 0], [cos(theta), 0, 1]]

induced by the bi-invariant metric of SO(3) is positive definite.
"""
import logging
from configparser import ConfigParser, ExtendedInterpolation
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from pymlg import SO3

from .exceptions import ConfigError, InvalidRotationError
from .expressions import compile_entries, parse_expression
from .geometry import (
    GEODESIC_STEP,
    ChartDomain,
    ChartPoint,
    MetricField,
    TangentVector,
)

logger = logging.getLogger(__name__)

CoordFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ManifoldSpec(object):
    """A manifold in a single chart.

    Attributes
    ----------
    name: str
        Registry name.
    dim: int
        Manifold dimension.
    domain: ChartDomain
        Open chart domain.
    metric_field: MetricField
        The Riemannian metric.
    distance_fn: callable, optional
        Closed-form geodesic distance between two coordinate vectors.
        Geodesic shooting is used when absent.
    exp_fn: callable, optional
        Closed-form exponential map ``(coords, components) -> coords``.
        The geodesic equation is integrated when absent.
    log_fn: callable, optional
        Closed-form inverse of ``exp_fn``.
    embed_fn: callable, optional
        Map from coordinates to an ambient vector used for output.
        Identity when absent.
    coord_names: tuple of str
        Column names of the chart coordinates.
    embed_names: tuple of str
        Column names of the embedded coordinates.
    geodesic_step: float
        Step of the numerical geodesic integrator.
    """
    name: str
    dim: int
    domain: ChartDomain
    metric_field: MetricField
    distance_fn: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    exp_fn: Optional[CoordFn] = None
    log_fn: Optional[CoordFn] = None
    embed_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    coord_names: Tuple[str, ...] = ()
    embed_names: Tuple[str, ...] = ()
    geodesic_step: float = GEODESIC_STEP

    def __post_init__(self) -> None:
        if self.domain.dim != self.dim:
            raise ConfigError("MANIFOLD.dim", f"domain has {self.domain.dim} coordinates, dim is {self.dim}.")
        if not self.coord_names:
            object.__setattr__(self, 'coord_names', tuple(f"x{i + 1}" for i in range(self.dim)))
        if not self.embed_names:
            object.__setattr__(self, 'embed_names', tuple(f"e_{c}" for c in self.coord_names))

    def point(self, coords) -> ChartPoint:
        return ChartPoint(coords, self.domain)

    def vector(self, x: ChartPoint, components) -> TangentVector:
        return TangentVector(x, components)

    def embed(self, x: Union[ChartPoint, np.ndarray]) -> np.ndarray:
        coords = x.coords if isinstance(x, ChartPoint) else np.asarray(x, dtype=float)
        if self.embed_fn is None:
            return np.array(coords, dtype=float)
        return np.asarray(self.embed_fn(coords), dtype=float)


### ---- EUCLIDEAN ---- ###
def euclidean(dim: int) -> ManifoldSpec:
    """Flat R^n with the identity metric."""
    return ManifoldSpec(
        name="euclidean",
        dim=dim,
        domain=ChartDomain.unbounded(dim),
        metric_field=MetricField.euclidean(dim),
        distance_fn=lambda x, y: float(np.linalg.norm(y - x)),
        exp_fn=lambda x, v: x + v,
        log_fn=lambda x, y: y - x,
        coord_names=tuple(f"x{i + 1}" for i in range(dim)),
        embed_names=tuple(f"e{i + 1}" for i in range(dim)),
    )


### ---- CIRCLE ---- ###
def wrap_angle(angle):
    """Wrap angles to [-pi, pi)."""
    return (np.asarray(angle) + np.pi) % (2 * np.pi) - np.pi


def circle_embed(theta: Union[ChartPoint, np.ndarray, float]) -> np.ndarray:
    """Embed an angle on the unit circle as (cos(theta), sin(theta))."""
    if isinstance(theta, ChartPoint):
        theta = theta.coords
    angle = float(np.ravel(theta)[0])
    return np.array([np.cos(angle), np.sin(angle)])


def circle() -> ManifoldSpec:
    """The unit circle in the angle chart theta in (-pi, pi).

    Distances wrap around, the exponential map adds the velocity to the
    angle without wrapping.
    """
    return ManifoldSpec(
        name="circle",
        dim=1,
        domain=ChartDomain([-np.pi], [np.pi]),
        metric_field=MetricField.euclidean(1),
        distance_fn=lambda x, y: float(np.abs(wrap_angle(y[0] - x[0]))),
        exp_fn=lambda x, v: x + v,
        log_fn=lambda x, y: np.atleast_1d(wrap_angle(y[0] - x[0])),
        embed_fn=circle_embed,
        coord_names=("theta",),
        embed_names=("x1", "x2"),
    )


### ---- SO(3) ---- ###
@dataclass(frozen=True, eq=False)
class RotationMatrix(object):
    """A validated element of SO(3).

    Attributes
    ----------
    entries: np.ndarray
        The 3 x 3 matrix, orthonormal with unit determinant to 1e-9.
    """
    entries: np.ndarray

    def __post_init__(self) -> None:
        C = np.array(self.entries, dtype=float)
        if C.shape != (3, 3):
            raise InvalidRotationError(f"Rotation must be 3 x 3, got {C.shape}.")
        if not np.allclose(C.T @ C, np.eye(3), atol=1e-9, rtol=0):
            raise InvalidRotationError(r"Rotation matrix is not orthonormal.")
        if abs(np.linalg.det(C) - 1.0) > 1e-9:
            raise InvalidRotationError(r"Rotation matrix does not have unit determinant.")
        C.setflags(write=False)
        object.__setattr__(self, 'entries', C)


_E = np.eye(3)


def _so3_coords(x) -> np.ndarray:
    return x.coords if isinstance(x, ChartPoint) else np.asarray(x, dtype=float)


def _euler_matrix(coords: np.ndarray) -> np.ndarray:
    psi, theta, phi = coords
    return SO3.Exp(psi * _E[2]) @ SO3.Exp(theta * _E[0]) @ SO3.Exp(phi * _E[2])


def euler_to_rotation(x: Union[ChartPoint, np.ndarray]) -> RotationMatrix:
    """Rotation matrix Rz(psi) Rx(theta) Rz(phi) of Euler coordinates."""
    return RotationMatrix(_euler_matrix(_so3_coords(x)))


def rotation_to_euler(
    X: Union[RotationMatrix, np.ndarray],
    near: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Euler coordinates of a rotation, inverse of :func:`euler_to_rotation`.

    Parameters
    ----------
    X : RotationMatrix or np.ndarray
        The rotation.
    near : np.ndarray, optional
        Reference coordinates. The two periodic angles are shifted by
        multiples of 2 pi to lie within pi of it, so that a short step stays
        continuous. Angles are wrapped to [-pi, pi) otherwise.

    Returns
    -------
    np.ndarray
        ``(psi, theta, phi)``.
    """
    C = X.entries if isinstance(X, RotationMatrix) else np.asarray(X, dtype=float)
    theta = np.arctan2(np.hypot(C[0, 2], C[1, 2]), C[2, 2])
    psi = np.arctan2(C[0, 2], -C[1, 2])
    phi = np.arctan2(C[2, 0], C[2, 1])
    coords = np.array([psi, theta, phi])
    if near is None:
        coords[[0, 2]] = wrap_angle(coords[[0, 2]])
    else:
        ref = np.asarray(near, dtype=float)
        coords[[0, 2]] = ref[[0, 2]] + wrap_angle(coords[[0, 2]] - ref[[0, 2]])
    return coords


def so3_misorientation(
    X0: Union[RotationMatrix, np.ndarray],
    X: Union[RotationMatrix, np.ndarray],
) -> float:
    """Rotation angle of X0 X^T, the geodesic distance on SO(3).

    Returns
    -------
    float
        arccos(Tr(X0 X^T) / 2 - 1 / 2) in [0, pi], with the argument clamped
        to [-1, 1].
    """
    if not isinstance(X0, RotationMatrix):
        X0 = RotationMatrix(X0)
    if not isinstance(X, RotationMatrix):
        X = RotationMatrix(X)
    cos_angle = 0.5 * np.trace(X0.entries @ X.entries.T) - 0.5
    return float(np.arccos(np.clip(cos_angle, -1.0, 1.0)))


def so3_angular_jacobian(coords: np.ndarray) -> np.ndarray:
    """Matrix J with spatial angular velocity omega = J(x) xdot.

    Its columns are the rotation axes of the three elementary rotations,
    expressed in the fixed frame, and J^T J equals the chart metric.
    """
    psi, theta, _ = coords
    cpsi, spsi = np.cos(psi), np.sin(psi)
    cth, sth = np.cos(theta), np.sin(theta)
    return np.array([
        [0.0, cpsi, spsi * sth],
        [0.0, spsi, -cpsi * sth],
        [1.0, 0.0, cth],
    ])


def so3_metric(coords: np.ndarray) -> np.ndarray:
    c = np.cos(coords[1])
    return np.array([
        [1.0, 0.0, c],
        [0.0, 1.0, 0.0],
        [c, 0.0, 1.0],
    ])


def so3_metric_inverse(coords: np.ndarray) -> np.ndarray:
    c = np.cos(coords[1])
    s2 = np.sin(coords[1]) ** 2
    return np.array([
        [1.0 / s2, 0.0, -c / s2],
        [0.0, 1.0, 0.0],
        [-c / s2, 0.0, 1.0 / s2],
    ])


def so3_christoffel(coords: np.ndarray) -> np.ndarray:
    """Analytic Levi-Civita symbols of the Euler-angle metric."""
    c, s = np.cos(coords[1]), np.sin(coords[1])
    gamma = np.zeros((3, 3, 3))
    gamma[0, 0, 1] = gamma[0, 1, 0] = c / (2 * s)
    gamma[0, 1, 2] = gamma[0, 2, 1] = -1 / (2 * s)
    gamma[1, 0, 2] = gamma[1, 2, 0] = s / 2
    gamma[2, 0, 1] = gamma[2, 1, 0] = -1 / (2 * s)
    gamma[2, 1, 2] = gamma[2, 2, 1] = c / (2 * s)
    return gamma


def _so3_distance(x: np.ndarray, y: np.ndarray) -> float:
    return so3_misorientation(_euler_matrix(x), _euler_matrix(y))


def _so3_exp(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    omega = so3_angular_jacobian(x) @ v
    return rotation_to_euler(SO3.Exp(omega) @ _euler_matrix(x), near=x)


def _so3_log(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    X = _euler_matrix(x)
    omega = np.ravel(SO3.Log(_euler_matrix(y) @ X.T))
    return np.linalg.solve(so3_angular_jacobian(x), omega)


def so3_lift_velocity(
    x: Union[ChartPoint, np.ndarray],
    xdot: Union[TangentVector, np.ndarray],
) -> np.ndarray:
    """Lift chart velocity components to Xdot = (xdot_1 Kx + xdot_2 Ky + xdot_3 Kz) X.

    Used for display; the bound computations stay in Euler coordinates.
    """
    comps = xdot.components if isinstance(xdot, TangentVector) else np.asarray(xdot, dtype=float)
    return SO3.wedge(comps) @ _euler_matrix(_so3_coords(x))


def so3_euler() -> ManifoldSpec:
    """SO(3) in the z-x-z Euler-angle chart, embedded as its row-major matrix."""
    return ManifoldSpec(
        name="so3",
        dim=3,
        domain=ChartDomain([-np.pi, 0.0, -np.pi], [np.pi, np.pi, np.pi]),
        metric_field=MetricField(
            metric=so3_metric,
            inverse=so3_metric_inverse,
            christoffel_fn=so3_christoffel,
        ),
        distance_fn=_so3_distance,
        exp_fn=_so3_exp,
        log_fn=_so3_log,
        embed_fn=lambda x: _euler_matrix(x).ravel(),
        coord_names=("psi", "theta", "phi"),
        embed_names=tuple(f"r{i}{j}" for i in range(1, 4) for j in range(1, 4)),
    )


### ---- REGISTRY ---- ###
_BUILTINS: Dict[str, Callable[..., ManifoldSpec]] = {
    'euclidean': euclidean,
    'circle': circle,
    'so3': so3_euler,
}
_REGISTRY: Dict[str, ManifoldSpec] = {}


def register_manifold(spec: ManifoldSpec, replace: bool = False) -> ManifoldSpec:
    """Register a manifold under its name.

    An existing entry is only overwritten when ``replace`` is set.
    """
    if spec.name in _BUILTINS:
        raise ValueError(f"'{spec.name}' is a built-in manifold name.")
    if spec.name in _REGISTRY and not replace:
        raise ValueError(f"A manifold named '{spec.name}' is already registered.")
    _REGISTRY[spec.name] = spec
    logger.info("Registered manifold '%s' (dim %d)", spec.name, spec.dim)
    return spec


def get_manifold(name: str, dim: Optional[int] = None) -> ManifoldSpec:
    """Look up a built-in or registered manifold.

    ``dim`` is only used by ``euclidean``.
    """
    if name == 'euclidean':
        if dim is None:
            raise ValueError(r"The euclidean manifold needs a dimension.")
        return euclidean(dim)
    if name in _BUILTINS:
        return _BUILTINS[name]()
    if name in _REGISTRY:
        return _REGISTRY[name]
    raise KeyError(f"Unknown manifold '{name}'.")


### ---- DEFINITION FILES ---- ###
_DISTANCE_DESIGNATORS = {
    'numeric': None,
    'euclidean': lambda x, y: float(np.linalg.norm(y - x)),
    'circle': lambda x, y: float(np.abs(wrap_angle(y[0] - x[0]))),
    'misorientation': _so3_distance,
}
_EXP_DESIGNATORS = {
    'numeric': (None, None),
    'euclidean': (lambda x, v: x + v, lambda x, y: y - x),
    'circle': (lambda x, v: x + v, lambda x, y: np.atleast_1d(wrap_angle(y[0] - x[0]))),
    'so3': (_so3_exp, _so3_log),
}


def _read_bound(text: str, field: str) -> float:
    text = text.strip()
    if text in ('inf', '+inf'):
        return np.inf
    if text == '-inf':
        return -np.inf
    return float(parse_expression(text, (), field))


def manifold_from_parser(parser: ConfigParser) -> ManifoldSpec:
    """Build a manifold from the MANIFOLD, DOMAIN, METRIC and EMBEDDING sections.

    Parameters
    ----------
    parser : ConfigParser
        A parser holding the definition sections.

    Returns
    -------
    ManifoldSpec
        The described manifold.

    Raises
    ------
    ConfigError
        If an entry is missing or malformed.
    """
    for section in ('MANIFOLD', 'DOMAIN', 'METRIC'):
        if section not in parser:
            raise ConfigError(section, r"section is missing.")
    info = parser['MANIFOLD']
    try:
        name = info['name'].strip()
        dim = int(info['dim'])
        names = tuple(s.strip() for s in info['coordinates'].split(','))
    except KeyError as err:
        raise ConfigError(f"MANIFOLD.{err.args[0]}", r"entry is missing.") from err
    except ValueError as err:
        raise ConfigError("MANIFOLD.dim", r"must be an integer.") from err
    if len(names) != dim:
        raise ConfigError("MANIFOLD.coordinates", f"expected {dim} names, got {len(names)}.")

    # Domain, one bracketed interval per coordinate
    lower, upper = [], []
    for coord in names:
        field = f"DOMAIN.{coord}"
        if coord not in parser['DOMAIN']:
            raise ConfigError(field, r"interval is missing.")
        bounds = parser['DOMAIN'][coord].strip().strip('()[]').split(',')
        if len(bounds) != 2:
            raise ConfigError(field, r"expected an interval (lo, hi).")
        lower.append(_read_bound(bounds[0], field))
        upper.append(_read_bound(bounds[1], field))
    try:
        domain = ChartDomain(lower, upper)
    except ValueError as err:
        raise ConfigError("DOMAIN", str(err)) from err

    # Metric entries, keyed "i,j". A missing off-diagonal entry mirrors its
    # transpose, or is zero when both are missing.
    entries = [[None] * dim for _ in range(dim)]
    for key, text in parser['METRIC'].items():
        field = f"METRIC.{key}"
        try:
            i, j = (int(k) for k in key.split(','))
        except ValueError as err:
            raise ConfigError(field, r"keys must read 'i,j'.") from err
        if not (0 <= i < dim and 0 <= j < dim):
            raise ConfigError(field, r"index out of range.")
        entries[i][j] = parse_expression(text, names, field)
    for i in range(dim):
        if entries[i][i] is None:
            raise ConfigError(f"METRIC.{i},{i}", r"diagonal entry is missing.")
        for j in range(dim):
            if entries[i][j] is None:
                entries[i][j] = entries[j][i] if entries[j][i] is not None else parse_expression('0')
    for i in range(dim):
        for j in range(i):
            if (entries[i][j] - entries[j][i]).simplify() != 0:
                raise ConfigError(f"METRIC.{i},{j}", r"metric must be symmetric.")
    metric = compile_entries([e for row in entries for e in row], names, (dim, dim))

    embed_fn, embed_names = None, ()
    if 'EMBEDDING' in parser:
        embed_names = tuple(parser['EMBEDDING'].keys())
        embed_exprs = [
            parse_expression(text, names, f"EMBEDDING.{key}")
            for key, text in parser['EMBEDDING'].items()
        ]
        embed_fn = compile_entries(embed_exprs, names, (len(embed_exprs),))

    distance_key = info.get('distance', 'numeric').strip()
    exp_key = info.get('exp', 'numeric').strip()
    if distance_key not in _DISTANCE_DESIGNATORS:
        raise ConfigError("MANIFOLD.distance", f"unknown designator '{distance_key}'.")
    if exp_key not in _EXP_DESIGNATORS:
        raise ConfigError("MANIFOLD.exp", f"unknown designator '{exp_key}'.")
    exp_fn, log_fn = _EXP_DESIGNATORS[exp_key]

    return ManifoldSpec(
        name=name,
        dim=dim,
        domain=domain,
        metric_field=MetricField(
            metric=metric,
            fd_step=float(info.get('fd_step', '1e-5')),
        ),
        distance_fn=_DISTANCE_DESIGNATORS[distance_key],
        exp_fn=exp_fn,
        log_fn=log_fn,
        embed_fn=embed_fn,
        coord_names=names,
        embed_names=embed_names,
        geodesic_step=float(info.get('geodesic_step', str(GEODESIC_STEP))),
    )


def load_manifold(path: str, register: bool = True, replace: bool = False) -> ManifoldSpec:
    """Read a manifold definition file and, by default, register it.

    ``replace`` is passed on to :func:`register_manifold`.

    Examples
    --------
    A flat plane in polar coordinates::

        [MANIFOLD]
        name = polar
        dim = 2
        coordinates = r, a
        distance = numeric
        exp = numeric

        [DOMAIN]
        r = (0.1, 10)
        a = (-pi, pi)

        [METRIC]
        0,0 = 1
        1,1 = r^2

        [EMBEDDING]
        x = r*cos(a)
        y = r*sin(a)
    """
    parser = ConfigParser(interpolation=ExtendedInterpolation(), inline_comment_prefixes=(";",))
    parser.optionxform = str
    if not parser.read(path):
        raise ConfigError("MANIFOLD", f"cannot read '{path}'.")
    spec = manifold_from_parser(parser)
    if register:
        register_manifold(spec, replace)
    return spec
