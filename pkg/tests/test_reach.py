from dataclasses import replace

import numpy as np
import pytest

from pymanreach.bounds import BoundEnvelope, LocalData
from pymanreach.exceptions import ChartBoundaryError, TrajectoryTerminated
from pymanreach.geometry import ChartPoint, TangentVector
from pymanreach.gvs import AvailableVelocityOracle, contains_velocity
from pymanreach.manifolds import circle, euclidean, so3_euler
from pymanreach.reach import (
    SurrogateSystem,
    containment_check,
    integrate_step,
    reach_cloud,
    simulate,
    surrogate_velocity,
    true_reach_cloud,
)

SO3_ENV = BoundEnvelope(1.2, 1 / 0.8)


def pendulum_f(coords):
    return np.array([-np.sin(coords[0]) / 2])


def pendulum_G(coords):
    return np.array([[1.0]])


def so3_f(coords):
    return np.zeros(3)


def so3_G(coords):
    return np.array([[0.0, 0.0], [0.0, 1.0], [1.0 + 0.5 * coords[2], 0.0]])


@pytest.fixture(scope='module')
def pendulum():
    S1 = circle()
    x0 = S1.point([np.pi / 4])
    local = LocalData(x0, TangentVector(x0, [-np.sqrt(2) / 4]), [[1.0]], 1.5, [0.0])
    return SurrogateSystem(local, S1)


@pytest.fixture(scope='module')
def so3():
    manifold = so3_euler()
    x0 = manifold.point([0.0, np.pi / 2, 0.0])
    local = LocalData(x0, TangentVector(x0, np.zeros(3)), so3_G(x0.coords), 0.0, [0.65, 0.0])
    return SurrogateSystem(local, manifold, SO3_ENV)


### ---- STEPPING ---- ###
def test_surrogate_velocity_examples(pendulum, so3):
    x0 = pendulum.local.x0
    assert surrogate_velocity(pendulum, x0, [0.0]).components[0] == pytest.approx(-np.sqrt(2) / 4)
    assert surrogate_velocity(pendulum, x0, [1.0]).components[0] == pytest.approx((4 - np.sqrt(2)) / 4)

    x = pendulum.manifold.point([np.pi / 4 - 0.2])
    assert surrogate_velocity(pendulum, x, [0.0]).components[0] == pytest.approx(-np.sqrt(2) / 4)
    assert surrogate_velocity(pendulum, x, [1.0]).components[0] == pytest.approx(-np.sqrt(2) / 4 + 0.7)

    v = surrogate_velocity(so3, so3.local.x0, [1.0, 0.0])
    assert np.allclose(v.components, [0.0, 0.0, 1.0], atol=1e-12)


def test_surrogate_velocity_rejects_bad_controls(pendulum):
    x0 = pendulum.local.x0
    with pytest.raises(ValueError):
        surrogate_velocity(pendulum, x0, [1.5])
    with pytest.raises(ValueError):
        surrogate_velocity(pendulum, x0, [0.1, 0.1])


def test_surrogate_velocity_halts_on_empty_set(pendulum):
    x = pendulum.manifold.point([np.pi / 4 + 0.7])
    with pytest.raises(TrajectoryTerminated) as err:
        surrogate_velocity(pendulum, x, [0.0])
    assert err.value.reason == 'empty_gvs'


def test_surrogate_ball_outside_chart(so3):
    with pytest.raises(ChartBoundaryError):
        so3.ball_at(ChartPoint([0.0, -0.05, 0.0]))
    with pytest.raises(ChartBoundaryError):
        surrogate_velocity(so3, ChartPoint([0.0, np.pi, 0.0]), [0.0, 0.0])


def test_surrogate_requires_nonempty_set_at_x0():
    R1 = euclidean(1)
    x0 = R1.point([0.0])
    local = LocalData(x0, TangentVector(x0, [0.0]), [[1.0]], 0.0, [1.0])
    with pytest.raises(ValueError):
        SurrogateSystem(local, R1, alpha_gain=0.0)


def test_integrate_step():
    S1 = circle()
    x = S1.point([0.5])
    assert integrate_step(x, np.zeros(1), 0.1, S1) is x
    assert integrate_step(x, np.array([2.0]), 0.1, S1).coords[0] == pytest.approx(0.7)

    R2 = euclidean(2)
    y = integrate_step(R2.point([1.0, 1.0]), np.array([1.0, -2.0]), 0.5, R2)
    assert np.allclose(y.coords, [1.5, 0.0])

    with pytest.raises(TrajectoryTerminated) as err:
        integrate_step(S1.point([3.1]), np.array([1.0]), 0.1, S1)
    assert err.value.reason == 'chart_exit'
    with pytest.raises(ValueError):
        integrate_step(x, np.zeros(1), 0.0, S1)


def test_simulate_records_halts():
    S1 = circle()
    oracle = AvailableVelocityOracle(lambda c: np.array([1.0]), pendulum_G)
    trajectory = simulate(oracle.velocity, S1.point([3.0]), [np.zeros(1)] * 10, 0.05, S1)
    assert trajectory.halted == 'chart_exit'
    assert len(trajectory.states) == len(trajectory.velocities) == 3
    assert np.all(np.isnan(trajectory.velocities[-1]))
    assert np.allclose(trajectory.states[:, 0], [3.0, 3.05, 3.1])


### ---- CLOUDS ---- ###
def test_zero_horizon_cloud(pendulum):
    cloud = reach_cloud(pendulum, 0.0, n_traj=4, seed=0)
    assert len(cloud) == 4
    assert np.all(cloud.times == 0.0)
    assert np.allclose(cloud.coords, np.pi / 4)
    assert np.allclose(cloud.embedded, [np.cos(np.pi / 4), np.sin(np.pi / 4)])


def test_cloud_layout(pendulum):
    cloud = reach_cloud(pendulum, 0.05, dt=0.001, n_traj=3, seed=1)
    assert len(cloud) == 3 * 51
    df = cloud.to_dataframe()
    assert list(df.columns) == ['traj_id', 't', 'theta', 'x1', 'x2']
    assert np.all(np.diff(df['traj_id']) >= 0)
    assert cloud.meta.source == 'surrogate'
    assert cloud.meta.n_halted == 0
    assert cloud.final_states().shape == (3, 1)
    assert np.allclose(cloud.times[:51], np.arange(51) * 0.001)
    assert np.all(np.isnan(cloud.velocities[50]))


def test_horizon_between_steps(pendulum):
    cloud = reach_cloud(pendulum, 0.0015, dt=0.001, n_traj=2, seed=0)
    assert cloud.times.max() <= 0.0015
    assert np.allclose(np.unique(cloud.times), [0.0, 0.001])

    S1 = pendulum.manifold
    truth = true_reach_cloud(pendulum_f, pendulum_G, S1.point([0.0]), 0.0299, 0.01, 2, 0, S1)
    assert truth.times.max() <= 0.0299
    assert len(truth) == 2 * 3

    # horizons that are multiples of dt keep their final step
    assert reach_cloud(pendulum, 0.3, dt=0.001, n_traj=1, seed=0).times.max() == pytest.approx(0.3)


def test_cloud_needs_trajectories(pendulum):
    for n_traj in (0, -3):
        with pytest.raises(ValueError, match='trajectory'):
            reach_cloud(pendulum, 0.01, n_traj=n_traj)
        with pytest.raises(ValueError, match='trajectory'):
            true_reach_cloud(pendulum_f, pendulum_G, pendulum.local.x0, 0.01, 0.001, n_traj, 0, pendulum.manifold)


def test_unknown_policy(pendulum):
    with pytest.raises(ValueError):
        reach_cloud(pendulum, 0.01, n_traj=1, policy='greedy')


def test_shorter_horizon_is_prefix(pendulum):
    short = reach_cloud(pendulum, 0.05, dt=0.001, n_traj=5, seed=3).to_dataframe()
    long = reach_cloud(pendulum, 0.1, dt=0.001, n_traj=5, seed=3).to_dataframe()
    head = long[long['t'] <= 0.05 + 1e-12].reset_index(drop=True)
    assert short.equals(head)


def test_cloud_does_not_depend_on_workers(pendulum, tmp_path):
    serial = reach_cloud(pendulum, 0.1, n_traj=24, seed=11, n_workers=1)
    parallel = reach_cloud(pendulum, 0.1, n_traj=24, seed=11, n_workers=8)
    serial.to_csv(tmp_path / 'serial.csv')
    parallel.to_csv(tmp_path / 'parallel.csv')
    assert (tmp_path / 'serial.csv').read_bytes() == (tmp_path / 'parallel.csv').read_bytes()


def test_halted_states_are_kept():
    S1 = circle()
    x0 = S1.point([0.0])
    local = LocalData(x0, TangentVector(x0, [0.5]), [[1.0]], 5.0, [0.0])
    sys = SurrogateSystem(local, S1)
    cloud = reach_cloud(sys, 1.0, dt=0.01, n_traj=10, seed=0)
    assert cloud.meta.n_halted == 10
    assert len(cloud) < 10 * 101
    # alpha reaches zero at d = 0.2, after which the drift of 0.5 is the only velocity
    assert np.all(np.abs(cloud.coords[:, 0]) <= 0.2 + 0.5 * 0.01 + 1e-12)


def test_recorded_velocities_are_guaranteed(so3):
    cloud = reach_cloud(so3, 0.05, n_traj=5, seed=2, policy='boundary_bang')
    for coords, v in zip(cloud.coords, cloud.velocities):
        if np.all(np.isfinite(v)):
            x = so3.manifold.point(coords)
            assert contains_velocity(so3.ball_at(x), v, tol=1e-9)


### ---- CONTAINMENT ---- ###
def test_true_cloud_examples():
    S1 = circle()
    x0 = S1.point([np.pi / 4])
    truth = true_reach_cloud(pendulum_f, pendulum_G, x0, 0.5, 0.01, 1, 0, S1)
    assert truth.meta.source == 'truth'

    free = AvailableVelocityOracle(pendulum_f, pendulum_G)
    drift = simulate(free.velocity, x0, [np.zeros(1)] * 100, 0.01, S1)
    assert np.all(np.diff(drift.states[:, 0]) < 0)

    R2 = euclidean(2)
    frozen = true_reach_cloud(
        lambda c: np.zeros(2), lambda c: np.zeros((2, 1)), R2.point([1.0, 2.0]), 0.1, 0.01, 3, 0, R2
    )
    assert np.allclose(frozen.coords, [1.0, 2.0])


def test_pendulum_cloud_between_extreme_controls(pendulum):
    T, dt = 1.0, 0.001
    cloud = reach_cloud(pendulum, T, dt=dt, n_traj=500, seed=0, n_workers=4)

    oracle = AvailableVelocityOracle(pendulum_f, pendulum_G)
    x0 = pendulum.local.x0
    n_steps = int(round(T / dt))
    lower = simulate(oracle.velocity, x0, [np.array([-1.0])] * n_steps, dt, pendulum.manifold).states[:, 0]
    upper = simulate(oracle.velocity, x0, [np.array([1.0])] * n_steps, dt, pendulum.manifold).states[:, 0]

    k = np.rint(cloud.times / dt).astype(int)
    theta = cloud.coords[:, 0]
    assert np.all(theta >= lower[k] - 1e-12)
    assert np.all(theta <= upper[k] + 1e-12)

    # the guaranteed arc at T sits strictly inside the true one
    final = cloud.final_states()[:, 0]
    assert final.min() > lower[-1] and final.max() < upper[-1]

    report = containment_check(pendulum, pendulum_f, pendulum_G, cloud)
    assert report.passed
    assert report.n_checked == 500 * n_steps


def test_so3_cloud_is_contained(so3):
    cloud = reach_cloud(so3, 0.3, dt=0.001, n_traj=200, seed=0, n_workers=4)
    for T in (0.1, 0.2, 0.3):
        mask = cloud.times <= T + 1e-12
        report = containment_check(so3, so3_f, so3_G, _subset(cloud, mask), tol=1e-6)
        assert report.n_violations == 0
        assert report.n_checked > 0


def _subset(cloud, mask):
    velocities = cloud.velocities[mask].copy()
    # rows that end the truncated horizon carry no applied velocity
    last = np.flatnonzero(np.diff(cloud.traj_ids[mask], append=-1))
    velocities[last] = np.nan
    return replace(
        cloud,
        traj_ids=cloud.traj_ids[mask],
        times=cloud.times[mask],
        coords=cloud.coords[mask],
        embedded=cloud.embedded[mask],
        velocities=velocities,
    )


def test_inflated_radius_is_caught(so3):
    inflated = SurrogateSystem(so3.local, so3.manifold, SO3_ENV, alpha_gain=2.0)
    cloud = reach_cloud(inflated, 0.05, n_traj=20, seed=0)
    report = containment_check(inflated, so3_f, so3_G, cloud)
    assert report.n_violations > 0
    assert report.worst_excess_control_norm > 0.1


def test_surrogate_equal_to_truth():
    R1 = euclidean(1)
    x0 = R1.point([0.0])
    local = LocalData(x0, TangentVector(x0, [0.3]), [[2.0]], 0.0, [0.0])
    sys = SurrogateSystem(local, R1)
    cloud = reach_cloud(sys, 0.2, dt=0.01, n_traj=10, seed=5)
    report = containment_check(sys, lambda c: np.array([0.3]), lambda c: np.array([[2.0]]), cloud, tol=1e-9)
    assert report.n_violations == 0
    assert report.n_checked == 10 * 20

