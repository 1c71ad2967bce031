from configparser import ConfigParser

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt
import numpy as np
import pytest

from pymanreach.bounds import LocalData
from pymanreach.exceptions import ConfigError
from pymanreach.geometry import TangentVector
from pymanreach.manifolds import circle
from pymanreach.reach import SurrogateSystem, reach_cloud, true_reach_cloud
from pymanreach.utils import plot_reach_clouds, read_array, read_float, read_int


@pytest.fixture
def parser():
    parser = ConfigParser()
    parser.optionxform = str
    parser.read_string(
        "[ENVELOPE]\nH_inv_norm_hi = 1/0.8\n"
        "[SIMULATION]\ntrajectories = 5\ndt = 0.5\n"
        "[LOCAL_DATA]\nG0 = [[1, 0], [0, 2]]\n"
    )
    return parser


def test_read_scalars(parser):
    assert read_float(parser, 'ENVELOPE', 'H_inv_norm_hi') == pytest.approx(1.25)
    assert read_float(parser, 'ENVELOPE', 'H_norm_hi', 2.0) == 2.0
    assert read_int(parser, 'SIMULATION', 'trajectories') == 5
    with pytest.raises(ConfigError) as err:
        read_int(parser, 'SIMULATION', 'dt')
    assert err.value.field == 'SIMULATION.dt'
    with pytest.raises(ConfigError) as err:
        read_float(parser, 'ENVELOPE', 'H_norm_hi')
    assert err.value.field == 'ENVELOPE.H_norm_hi'


def test_read_array(parser):
    assert np.array_equal(read_array(parser, 'LOCAL_DATA', 'G0'), [[1.0, 0.0], [0.0, 2.0]])


def test_plot_reach_clouds():
    S1 = circle()
    x0 = S1.point([np.pi / 4])
    local = LocalData(x0, TangentVector(x0, [-np.sqrt(2) / 4]), [[1.0]], 1.5, [0.0])
    surrogate = reach_cloud(SurrogateSystem(local, S1), 0.05, dt=0.01, n_traj=4, seed=0)
    truth = true_reach_cloud(
        lambda c: np.array([-np.sin(c[0]) / 2]), lambda c: np.array([[1.0]]),
        x0, 0.05, 0.01, 4, 0, S1,
    )

    ax = plot_reach_clouds(surrogate, truth)
    assert len(ax.collections) == 2
    assert ax.get_xlabel() == 'x1'

    ax = plot_reach_clouds(surrogate, final_only=True)
    assert len(ax.collections[0].get_offsets()) == 4

    with pytest.raises(ValueError):
        plot_reach_clouds(surrogate, columns=['x1'])
    plt.close('all')
