"""Exceptions raised by pymanreach.

Every error derives from :class:`ReachError` so that callers can catch the
whole family at once, while the more specific classes also subclass the
matching builtin (``ValueError`` or ``RuntimeError``).
"""
from typing import Optional


class ReachError(Exception):
    """Base class for all pymanreach errors."""


class InvalidMetricError(ReachError, ValueError):
    """The metric tensor is not symmetric positive definite."""


class ShapeError(ReachError, ValueError):
    """Array dimensions are inconsistent with each other."""


class ChartBoundaryError(ReachError, ValueError):
    """A point left the open chart domain.

    Attributes
    ----------
    exit_parameter : float or None
        Curve parameter in [0, 1] at which the domain was left, if known.
    """
    def __init__(self, message: str, exit_parameter: Optional[float] = None) -> None:
        super().__init__(message)
        self.exit_parameter = exit_parameter


class NoGeodesicError(ReachError, RuntimeError):
    """Two-point geodesic shooting did not converge."""


class InvalidRotationError(ReachError, ValueError):
    """A matrix is not a member of SO(3)."""


class DegenerateInputError(ReachError, ValueError):
    """Local data carries no usable information, e.g. G(x0) = 0."""


class EmptySetError(ReachError, ValueError):
    """An operation needs a nonempty velocity set."""


class TrajectoryTerminated(ReachError, RuntimeError):
    """Propagation cannot continue past the current state.

    Attributes
    ----------
    reason : str
        Either ``"empty_gvs"`` or ``"chart_exit"``.
    """
    def __init__(self, message: str, reason: str) -> None:
        super().__init__(message)
        self.reason = reason


class ConfigError(ReachError, ValueError):
    """A configuration entry is missing or invalid.

    Attributes
    ----------
    field : str
        Dotted path of the offending entry, e.g. ``"LOCAL_DATA.L_g"``.
    """
    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field
