import matplotlib.pyplot as plt
import numpy as np
import seaborn as sns
from configparser import ConfigParser
from typing import Optional, Sequence

from .exceptions import ConfigError
from .expressions import compile_array, evaluate_array, parse_expression


def _entry(parser: ConfigParser, section: str, key: str) -> str:
    if section not in parser or key not in parser[section]:
        raise ConfigError(f"{section}.{key}", r"entry is missing.")
    return parser[section][key]


def read_float(
    parser: ConfigParser,
    section: str,
    key: str,
    default: Optional[float] = None,
) -> float:
    """Read a scalar entry, which may be an expression such as ``1/0.8``.

    Parameters
    ----------
    parser : ConfigParser
        The configuration parser.
    section : str
        Section name.
    key : str
        Entry name.
    default : float, optional
        Returned when the entry is absent. The entry is required otherwise.

    Returns
    -------
    float
        The value of the entry.
    """
    if default is not None and (section not in parser or key not in parser[section]):
        return default
    field = f"{section}.{key}"
    try:
        return float(parse_expression(_entry(parser, section, key), (), field))
    except TypeError as err:
        raise ConfigError(field, r"must evaluate to a real number.") from err


def read_int(
    parser: ConfigParser,
    section: str,
    key: str,
    default: Optional[int] = None,
) -> int:
    value = read_float(parser, section, key, default)
    if value != int(value):
        raise ConfigError(f"{section}.{key}", r"must be an integer.")
    return int(value)


def read_array(
    parser: ConfigParser,
    section: str,
    key: str,
) -> np.ndarray:
    """Read a constant array literal, e.g. ``[0, pi/2, 0]``."""
    field = f"{section}.{key}"
    try:
        return evaluate_array(_entry(parser, section, key), field)
    except TypeError as err:
        raise ConfigError(field, r"entries must evaluate to real numbers.") from err


def read_function(
    parser: ConfigParser,
    section: str,
    key: str,
    names: Sequence[str],
):
    """Read an array literal over the coordinate ``names`` as a function."""
    return compile_array(_entry(parser, section, key), names, f"{section}.{key}")


def set_plotting_env(usetex: bool = False) -> None:
    """Set the plotting environment.

    Parameters
    ----------
    usetex : bool, optional
        Render text with LaTeX, by default False.
    """
    sns.set_palette("colorblind")
    sns.set_style('whitegrid')

    plt.rc('figure', figsize=(16, 9))
    plt.rc('lines', linewidth=2)
    plt.rc('axes', grid=True)
    plt.rc('grid', linestyle='--')
    plt.rc('text', usetex=usetex)
    plt.rc('font', family='serif', size=35)
    if usetex:
        plt.rc('text.latex', preamble=r'\usepackage{amsmath}')
    plt.rc('legend', facecolor=[1,1,1])
    plt.rc('legend', fontsize=30)
    plt.rcParams['figure.constrained_layout.use'] = True


def plot_reach_clouds(
    surrogate,
    truth=None,
    columns: Optional[Sequence[str]] = None,
    ax=None,
    final_only: bool = False,
):
    """Scatter embedded reach clouds, the truth in blue below the surrogate in red.

    Parameters
    ----------
    surrogate : ReachCloud
        The guaranteed reachable set samples.
    truth : ReachCloud, optional
        Samples of the true reachable set.
    columns : sequence of str, optional
        Two or three embedded columns to plot, by default the first two.
    ax : matplotlib axes, optional
        Axes to draw on; a new figure is created when absent.
    final_only : bool, optional
        Only plot the state of every trajectory at the horizon.

    Returns
    -------
    matplotlib axes
    """
    columns = list(columns) if columns is not None else list(surrogate.embed_names[:2])
    if len(columns) not in (2, 3):
        raise ValueError(r"Plot either two or three embedded columns.")
    if ax is None:
        fig = plt.figure()
        ax = fig.add_subplot(projection='3d' if len(columns) == 3 else None)

    for cloud, color, label in ((truth, 'tab:blue', 'True'), (surrogate, 'tab:red', 'Guaranteed')):
        if cloud is None:
            continue
        df = cloud.to_dataframe()
        if final_only:
            df = df.groupby('traj_id').tail(1)
        data = [df[c].to_numpy() for c in columns]
        ax.scatter(*data, s=4, color=color, label=label)

    ax.set_xlabel(columns[0])
    ax.set_ylabel(columns[1])
    if len(columns) == 3:
        ax.set_zlabel(columns[2])
    else:
        ax.set_aspect('equal')
    ax.legend()
    return ax
