from .geometry import (
    ChartDomain,
    ChartPoint,
    Connection,
    Curve,
    MetricField,
    TangentVector,
    distance,
    exp_map,
    log_map,
)
from .manifolds import ManifoldSpec, circle, euclidean, get_manifold, load_manifold, so3_euler
from .bounds import BoundEnvelope, LocalData, evaluate_bounds
from .gvs import AvailableVelocityOracle, VelocityBall, gvs_at
from .reach import SurrogateSystem, ReachCloud, reach_cloud, true_reach_cloud, containment_check
