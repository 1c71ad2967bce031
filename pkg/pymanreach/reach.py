"""Propagation of the surrogate control system and of the true dynamics.

The surrogate system moves with velocity f(x0) + alpha(x0, x) B u, where B is
an orthonormal basis of Im G(x0) and u ranges over the unit ball. Every such
velocity lies in the guaranteed velocity set, so every state it reaches is
reachable by the true system. Clouds of sampled trajectories of either system
are collected into a :class:`ReachCloud`.

Trajectories are independent. Trajectory ``i`` of a cloud with master seed
``s`` draws its controls from
``np.random.default_rng(np.random.SeedSequence(s).spawn(n_traj)[i])``,
so results do not depend on how trajectories are split across workers.
"""
import logging
import multiprocessing
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .bounds import BoundEnvelope, LocalData, evaluate_bounds
from .exceptions import ChartBoundaryError, TrajectoryTerminated
from .geometry import ChartPoint, TangentVector, Vector, as_components, exp_map
from .gvs import AvailableVelocityOracle, VelocityBall, require_in_chart, sample_unit_ball

logger = logging.getLogger(__name__)

POLICIES = {
    'piecewise_constant_random': 'uniform_ball',
    'boundary_bang': 'boundary',
}
DEFAULT_DT = 1e-3


@dataclass(frozen=True, eq=False)
class SurrogateSystem(object):
    """The control system whose velocities are all guaranteed.

    Attributes
    ----------
    local: LocalData
        Local data at x0.
    manifold: ManifoldSpec
        The state manifold.
    env: BoundEnvelope, optional
        Metric bounds; evaluated pointwise when absent.
    alpha_gain: float
        Multiplier on alpha. Values above one void the guarantee and are
        only meant to produce counterexamples.
    """
    local: LocalData
    manifold: object
    env: Optional[BoundEnvelope] = None
    alpha_gain: float = 1.0

    def __post_init__(self) -> None:
        alpha0 = self.alpha_at(self.local.x0)
        if not alpha0 > 0:
            raise ValueError(f"The guaranteed velocity set is empty at x0 (alpha = {alpha0:.3g}).")

    @property
    def control_dim(self) -> int:
        return self.local.rank

    def alpha_at(self, x: ChartPoint) -> float:
        return self.alpha_gain * evaluate_bounds(self.local, x, self.manifold, self.env).alpha

    def ball_at(self, x: ChartPoint) -> VelocityBall:
        require_in_chart(x, self.manifold)
        return VelocityBall(
            base=x,
            center=TangentVector(x, self.local.f0.components),
            radius=self.alpha_at(x),
            image_basis=self.local.image_basis,
        )


def surrogate_velocity(sys: SurrogateSystem, x: ChartPoint, u: np.ndarray) -> TangentVector:
    """Velocity of the surrogate system at ``x`` under control ``u``.

    Parameters
    ----------
    sys : SurrogateSystem
        The surrogate system.
    x : ChartPoint
        Current state.
    u : np.ndarray
        Control in image-subspace coordinates, of norm at most one.

    Returns
    -------
    TangentVector
        f(x0) + alpha(x0, x) B u.

    Raises
    ------
    TrajectoryTerminated
        If the guaranteed velocity set at ``x`` is empty.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (sys.control_dim,):
        raise ValueError(f"Control must have {sys.control_dim} entries, got {u.size}.")
    if np.linalg.norm(u) > 1 + 1e-12:
        raise ValueError(r"Control is outside the unit ball.")
    ball = sys.ball_at(x)
    if ball.is_empty:
        raise TrajectoryTerminated(
            f"Guaranteed velocity set is empty at {x.coords} (alpha = {ball.radius:.3g}).",
            reason="empty_gvs",
        )
    return TangentVector(x, ball.velocity(u))


def integrate_step(x: ChartPoint, v: Vector, dt: float, manifold) -> ChartPoint:
    """Explicit Euler step retracted with the exponential map, exp_x(v dt).

    Raises
    ------
    TrajectoryTerminated
        If the step leaves the chart domain.
    """
    if dt <= 0:
        raise ValueError(r"Time step must be positive.")
    try:
        return exp_map(x, dt * as_components(v), manifold)
    except ChartBoundaryError as err:
        raise TrajectoryTerminated(str(err), reason="chart_exit") from err


class Trajectory(NamedTuple):
    states: np.ndarray
    velocities: np.ndarray
    halted: Optional[str]


def simulate(
    velocity_fn: Callable[[ChartPoint, np.ndarray], np.ndarray],
    x0: ChartPoint,
    controls: Sequence[np.ndarray],
    dt: float,
    manifold,
) -> Trajectory:
    """Propagate one trajectory under an explicit control sequence.

    Parameters
    ----------
    velocity_fn : callable
        Maps (state, control) to velocity components. May raise
        :class:`TrajectoryTerminated`.
    x0 : ChartPoint
        Initial state.
    controls : sequence of np.ndarray
        One control per step.
    dt : float
        Step length, in seconds.
    manifold : ManifoldSpec
        The state manifold.

    Returns
    -------
    Trajectory
        ``states`` holds x0 and every state reached, ``velocities`` the
        velocity applied from each state (NaN for the last one), and
        ``halted`` the reason propagation stopped early, if it did.
    """
    states = [x0.coords]
    velocities = []
    halted = None
    x = x0
    for u in controls:
        try:
            v = np.asarray(as_components(velocity_fn(x, u)), dtype=float)
            x = integrate_step(x, v, dt, manifold)
        except TrajectoryTerminated as err:
            halted = err.reason
            break
        velocities.append(v)
        states.append(x.coords)
    velocities.append(np.full(x0.dim, np.nan))
    return Trajectory(np.array(states), np.array(velocities), halted)


### ---- CLOUDS ---- ###
@dataclass(frozen=True)
class CloudMeta(object):
    T_horizon: float
    dt: float
    n_trajectories: int
    seed: int
    policy: str
    source: str
    n_halted: int = 0


@dataclass(frozen=True, eq=False)
class ReachCloud(object):
    """Time-stamped states of sampled trajectories.

    Rows are sorted by trajectory id, then time.

    Attributes
    ----------
    traj_ids: np.ndarray
        Trajectory id of every row.
    times: np.ndarray
        Time of every row, in seconds.
    coords: np.ndarray
        Chart coordinates, one row per state.
    embedded: np.ndarray
        Ambient coordinates of the same states.
    velocities: np.ndarray
        Velocity applied from each state, NaN on the last state of a
        trajectory.
    meta: CloudMeta
        How the cloud was generated.
    coord_names: tuple of str
    embed_names: tuple of str
    """
    traj_ids: np.ndarray
    times: np.ndarray
    coords: np.ndarray
    embedded: np.ndarray
    velocities: np.ndarray
    meta: CloudMeta
    coord_names: Tuple[str, ...]
    embed_names: Tuple[str, ...]

    def __len__(self) -> int:
        return self.times.size

    @property
    def points(self) -> List[Tuple[float, ChartPoint, np.ndarray]]:
        return [
            (float(t), ChartPoint(c), e)
            for t, c, e in zip(self.times, self.coords, self.embedded)
        ]

    def final_states(self) -> np.ndarray:
        """Coordinates of the last recorded state of every trajectory."""
        last = np.flatnonzero(np.diff(self.traj_ids, append=self.traj_ids[-1] + 1))
        return self.coords[last]

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame({'traj_id': self.traj_ids, 't': self.times})
        for i, name in enumerate(self.coord_names):
            df[name] = self.coords[:, i]
        for i, name in enumerate(self.embed_names):
            df[name] = self.embedded[:, i]
        return df

    def to_csv(self, path: str) -> None:
        """Write the cloud with 12 significant digits."""
        self.to_dataframe().to_csv(path, index=False, float_format='%.12g')


@dataclass(frozen=True, eq=False)
class _CloudJob(object):
    velocity_fn: Callable[[ChartPoint, np.ndarray], np.ndarray]
    control_dim: int
    x0: ChartPoint
    manifold: object
    n_steps: int
    dt: float
    mode: str


def _run_trajectory(job: _CloudJob, seed_seq: np.random.SeedSequence) -> Trajectory:
    rng = np.random.default_rng(seed_seq)
    # One draw per step, so shorter horizons see a prefix of the same controls
    controls = (
        sample_unit_ball(rng, 1, job.control_dim, job.mode)[0] for _ in range(job.n_steps)
    )
    return simulate(job.velocity_fn, job.x0, controls, job.dt, job.manifold)


_WORKER_JOB = {}


def _init_worker(job: _CloudJob) -> None:
    _WORKER_JOB['job'] = job


def _worker(task) -> Trajectory:
    _, seed_seq = task
    return _run_trajectory(_WORKER_JOB['job'], seed_seq)


def _simulate_cloud(
    job: _CloudJob,
    n_traj: int,
    seed: int,
    n_workers: int,
) -> List[Trajectory]:
    tasks = list(enumerate(np.random.SeedSequence(seed).spawn(n_traj)))
    if n_workers > 1 and 'fork' in multiprocessing.get_all_start_methods():
        ctx = multiprocessing.get_context('fork')
        chunksize = max(1, n_traj // (4 * n_workers))
        with ctx.Pool(processes=n_workers, initializer=_init_worker, initargs=(job,)) as pool:
            return pool.map(_worker, tasks, chunksize=chunksize)
    if n_workers > 1:
        logger.warning("'fork' start method unavailable, simulating %d trajectories serially", n_traj)
    return [_run_trajectory(job, seed_seq) for _, seed_seq in tasks]


def _n_steps(T: float, dt: float) -> int:
    if T < 0:
        raise ValueError(r"Horizon must be nonnegative.")
    if dt <= 0:
        raise ValueError(r"Time step must be positive.")
    # the last recorded state never lies past T
    return int(np.floor(T / dt + 1e-9))


def _check_n_traj(n_traj: int) -> int:
    if n_traj < 1:
        raise ValueError(f"At least one trajectory is needed, got {n_traj}.")
    return int(n_traj)


def _assemble(
    trajectories: List[Trajectory],
    manifold,
    meta: CloudMeta,
) -> ReachCloud:
    traj_ids = np.concatenate([np.full(len(tr.states), i) for i, tr in enumerate(trajectories)])
    times = np.concatenate([np.arange(len(tr.states)) * meta.dt for tr in trajectories])
    coords = np.concatenate([tr.states for tr in trajectories])
    velocities = np.concatenate([tr.velocities for tr in trajectories])
    embedded = np.array([manifold.embed(c) for c in coords])
    return ReachCloud(
        traj_ids=traj_ids,
        times=times,
        coords=coords,
        embedded=embedded,
        velocities=velocities,
        meta=meta,
        coord_names=tuple(manifold.coord_names),
        embed_names=tuple(manifold.embed_names),
    )


def _check_policy(policy: str) -> str:
    if policy not in POLICIES:
        raise ValueError(f"Unknown control policy '{policy}', expected one of {sorted(POLICIES)}.")
    return POLICIES[policy]


def reach_cloud(
    sys: SurrogateSystem,
    T: float,
    dt: float = DEFAULT_DT,
    n_traj: int = 100,
    seed: int = 0,
    policy: str = 'piecewise_constant_random',
    n_workers: int = 1,
) -> ReachCloud:
    """Sample the guaranteed reachable set of the surrogate system.

    Parameters
    ----------
    sys : SurrogateSystem
        The surrogate system.
    T : float
        Horizon, in seconds.
    dt : float, optional
        Step length, by default 0.001 s.
    n_traj : int, optional
        Number of trajectories.
    seed : int, optional
        Master seed.
    policy : str, optional
        ``"piecewise_constant_random"`` holds a uniform draw from the unit
        ball over each step, ``"boundary_bang"`` a draw from its sphere.
    n_workers : int, optional
        Worker processes. The output does not depend on it.

    Returns
    -------
    ReachCloud
        Every state visited, including those of trajectories halted by an
        empty guaranteed velocity set or by leaving the chart.
    """
    n_traj = _check_n_traj(n_traj)
    job = _CloudJob(
        velocity_fn=lambda x, u: surrogate_velocity(sys, x, u).components,
        control_dim=sys.control_dim,
        x0=sys.local.x0,
        manifold=sys.manifold,
        n_steps=_n_steps(T, dt),
        dt=dt,
        mode=_check_policy(policy),
    )
    trajectories = _simulate_cloud(job, n_traj, seed, n_workers)
    n_halted = sum(tr.halted is not None for tr in trajectories)
    if n_halted:
        logger.info("%d of %d surrogate trajectories halted before T = %g", n_halted, n_traj, T)
    meta = CloudMeta(T, dt, n_traj, seed, policy, 'surrogate', n_halted)
    return _assemble(trajectories, sys.manifold, meta)


def true_reach_cloud(
    f_true: Callable[[np.ndarray], np.ndarray],
    G_true: Callable[[np.ndarray], np.ndarray],
    x0: ChartPoint,
    T: float,
    dt: float,
    n_traj: int,
    seed: int,
    manifold,
    policy: str = 'piecewise_constant_random',
    n_workers: int = 1,
) -> ReachCloud:
    """Sample the reachable set of the true dynamics xdot = f(x) + G(x) u."""
    oracle = AvailableVelocityOracle(f_true, G_true)
    m = np.atleast_2d(G_true(x0.coords)).shape[1]
    n_traj = _check_n_traj(n_traj)
    job = _CloudJob(
        velocity_fn=oracle.velocity,
        control_dim=m,
        x0=x0,
        manifold=manifold,
        n_steps=_n_steps(T, dt),
        dt=dt,
        mode=_check_policy(policy),
    )
    trajectories = _simulate_cloud(job, n_traj, seed, n_workers)
    n_halted = sum(tr.halted is not None for tr in trajectories)
    meta = CloudMeta(T, dt, n_traj, seed, policy, 'truth', n_halted)
    return _assemble(trajectories, manifold, meta)


### ---- CONTAINMENT ---- ###
class ContainmentReport(NamedTuple):
    n_checked: int
    n_violations: int
    worst_excess_control_norm: float
    worst_velocity_residual: float

    @property
    def passed(self) -> bool:
        return self.n_violations == 0


def containment_check(
    sys: SurrogateSystem,
    f_true: Callable[[np.ndarray], np.ndarray],
    G_true: Callable[[np.ndarray], np.ndarray],
    cloud: ReachCloud,
    tol: float = 1e-6,
) -> ContainmentReport:
    """Check every recorded surrogate velocity against the true dynamics.

    At each recorded state x with velocity v, the least-squares control
    u = G_true(x)^+ (v - f_true(x)) is computed. A violation is a control
    norm above 1 + tol or a reconstruction residual above tol.

    Returns
    -------
    ContainmentReport
        ``worst_excess_control_norm`` is max(|u| - 1) over checked rows.
    """
    oracle = AvailableVelocityOracle(f_true, G_true)
    n_checked, n_violations = 0, 0
    worst_excess, worst_residual = -1.0, 0.0
    for coords, v in zip(cloud.coords, cloud.velocities):
        if not np.all(np.isfinite(v)):
            continue
        fit = oracle.solve_control(ChartPoint(coords, sys.manifold.domain), v)
        n_checked += 1
        worst_excess = max(worst_excess, fit.control_norm - 1)
        worst_residual = max(worst_residual, fit.residual)
        if fit.control_norm > 1 + tol or fit.residual > tol:
            n_violations += 1
    if n_violations:
        logger.warning(
            "%d of %d surrogate velocities are not available to the true system",
            n_violations,
            n_checked,
        )
    return ContainmentReport(n_checked, n_violations, float(worst_excess), float(worst_residual))
