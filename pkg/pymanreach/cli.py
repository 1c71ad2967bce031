"""Command-line front end.

Usage::

    pymanreach {gvs,reach,validate} --config config/pendulum.config --out results/

Scenario files are INI documents (schema version 1)::

    [SCENARIO]
    schema_version = 1
    manifold = circle          ; built-in name, definition file path, or inline

    [LOCAL_DATA]
    x0 = [pi/4]
    f0 = [-sqrt(2)/4]
    G0 = [[1]]
    L_f = 1.5
    L_g = [0]

    [ENVELOPE]                 ; optional
    H_norm_hi = 1.2
    H_inv_norm_hi = 1/0.8

    [SIMULATION]
    horizon = 1
    dt = 0.001
    trajectories = 500
    seed = 0
    policy = piecewise_constant_random
    workers = 1
    gvs_samples = 100
    gvs_radius = 0.5           ; optional

    [TRUTH]                    ; required by validate
    f = [-sin(theta)/2]
    G = [[1]]

Keys are case sensitive. ``manifold = euclidean`` also needs ``dim`` in
``[SCENARIO]``; ``manifold = inline`` reads the MANIFOLD, DOMAIN, METRIC and
EMBEDDING sections of the scenario file itself.
"""
import argparse
import json
import logging
import os
import sys
import time
from configparser import ConfigParser, ExtendedInterpolation
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from .bounds import BoundEnvelope, LocalData, evaluate_bounds
from .exceptions import ChartBoundaryError, ConfigError, NoGeodesicError, ReachError
from .geometry import TangentVector, exp_map, riemannian_vec_norm
from .manifolds import ManifoldSpec, get_manifold, load_manifold, manifold_from_parser
from .reach import (
    POLICIES,
    SurrogateSystem,
    containment_check,
    reach_cloud,
    true_reach_cloud,
)
from .utils import read_array, read_float, read_function, read_int

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SUBCOMMANDS = ('gvs', 'reach', 'validate')


@dataclass
class Scenario(object):
    """A parsed and validated scenario file.

    Attributes
    ----------
    manifold: ManifoldSpec
        The state manifold.
    x0, f0: np.ndarray
        Initial point and drift at it.
    G0: np.ndarray
        Input matrix at x0.
    L_f: float
    L_g: np.ndarray
        Lipschitz constants of f and of the columns of G.
    env: BoundEnvelope, optional
        Neighbourhood bounds on the metric.
    horizon, dt: float
        Propagation horizon and step, in seconds.
    n_traj, seed, n_workers: int
    policy: str
    gvs_samples: int
        Number of points sampled by the ``gvs`` subcommand.
    gvs_radius: float, optional
        Riemannian radius of the sampled neighbourhood of x0.
    f_true, G_true: callable, optional
        True dynamics, for validation.
    """
    manifold: ManifoldSpec
    x0: np.ndarray
    f0: np.ndarray
    G0: np.ndarray
    L_f: float
    L_g: np.ndarray
    env: Optional[BoundEnvelope] = None
    horizon: float = 1.0
    dt: float = 1e-3
    n_traj: int = 100
    seed: int = 0
    policy: str = 'piecewise_constant_random'
    n_workers: int = 1
    gvs_samples: int = 100
    gvs_radius: Optional[float] = None
    f_true: Optional[Callable[[np.ndarray], np.ndarray]] = None
    G_true: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def has_truth(self) -> bool:
        return self.f_true is not None and self.G_true is not None

    def local_data(self) -> LocalData:
        x0 = self.manifold.point(self.x0)
        return LocalData(x0, TangentVector(x0, self.f0), self.G0, self.L_f, self.L_g)

    def parameters(self) -> Dict[str, Any]:
        """Plain-type copy of the recorded parameters."""
        env = None
        if self.env is not None:
            env = {'H_norm_hi': self.env.H_norm_hi, 'H_inv_norm_hi': self.env.H_inv_norm_hi}
        return {
            'manifold': self.manifold.name,
            'x0': self.x0.tolist(),
            'f0': self.f0.tolist(),
            'G0': self.G0.tolist(),
            'L_f': self.L_f,
            'L_g': self.L_g.tolist(),
            'env': env,
            'horizon': self.horizon,
            'dt': self.dt,
            'n_traj': self.n_traj,
            'seed': self.seed,
            'policy': self.policy,
        }


def _resolve_manifold(parser: ConfigParser, config_dir: str) -> ManifoldSpec:
    name = parser['SCENARIO'].get('manifold', '').strip()
    if not name:
        raise ConfigError("SCENARIO.manifold", r"entry is missing.")
    if name == 'inline':
        return manifold_from_parser(parser)
    if name == 'euclidean':
        return get_manifold(name, read_int(parser, 'SCENARIO', 'dim'))
    path = os.path.join(config_dir, name)
    if os.path.isfile(path):
        return load_manifold(path, register=False)
    try:
        return get_manifold(name)
    except KeyError as err:
        raise ConfigError("SCENARIO.manifold", f"unknown manifold '{name}'.") from err


def load_scenario(path: str, overrides: Optional[Dict[str, Any]] = None) -> Scenario:
    """Parse and validate a scenario file.

    Parameters
    ----------
    path : str
        Path of the scenario file.
    overrides : dict, optional
        Values replacing the file's ``horizon``, ``dt``, ``n_traj``,
        ``seed`` or ``n_workers``. None values are ignored.

    Returns
    -------
    Scenario
        The scenario.

    Raises
    ------
    ConfigError
        With the dotted path of the first offending entry.
    """
    parser = ConfigParser(interpolation=ExtendedInterpolation(), inline_comment_prefixes=(";",))
    parser.optionxform = str
    if not parser.read(path):
        raise ConfigError("SCENARIO", f"cannot read '{path}'.")
    if 'SCENARIO' not in parser:
        raise ConfigError("SCENARIO", r"section is missing.")
    if read_int(parser, 'SCENARIO', 'schema_version') != SCHEMA_VERSION:
        raise ConfigError("SCENARIO.schema_version", f"only version {SCHEMA_VERSION} is supported.")

    manifold = _resolve_manifold(parser, os.path.dirname(os.path.abspath(path)))
    n = manifold.dim

    # Local data
    x0 = read_array(parser, 'LOCAL_DATA', 'x0').ravel()
    if x0.size != n:
        raise ConfigError("LOCAL_DATA.x0", f"expected {n} entries, got {x0.size}.")
    if not manifold.domain.contains(x0):
        raise ConfigError("LOCAL_DATA.x0", r"point is outside the chart domain.")
    f0 = read_array(parser, 'LOCAL_DATA', 'f0').ravel()
    if f0.size != n:
        raise ConfigError("LOCAL_DATA.f0", f"expected {n} entries, got {f0.size}.")
    G0 = read_array(parser, 'LOCAL_DATA', 'G0')
    if G0.ndim != 2 or G0.shape[0] != n:
        raise ConfigError("LOCAL_DATA.G0", f"expected a matrix with {n} rows, got shape {G0.shape}.")
    m = G0.shape[1]
    L_f = read_float(parser, 'LOCAL_DATA', 'L_f')
    if L_f < 0:
        raise ConfigError("LOCAL_DATA.L_f", r"must be nonnegative.")
    L_g = read_array(parser, 'LOCAL_DATA', 'L_g').ravel()
    if L_g.size != m:
        raise ConfigError("LOCAL_DATA.L_g", f"expected {m} entries (columns of G0), got {L_g.size}.")
    if np.any(L_g < 0):
        raise ConfigError("LOCAL_DATA.L_g", r"entries must be nonnegative.")

    env = None
    if 'ENVELOPE' in parser:
        try:
            env = BoundEnvelope(
                read_float(parser, 'ENVELOPE', 'H_norm_hi'),
                read_float(parser, 'ENVELOPE', 'H_inv_norm_hi'),
            )
        except ValueError as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError("ENVELOPE", str(err)) from err

    policy = parser['SIMULATION'].get('policy', 'piecewise_constant_random').strip() \
        if 'SIMULATION' in parser else 'piecewise_constant_random'
    if policy not in POLICIES:
        raise ConfigError("SIMULATION.policy", f"unknown policy '{policy}'.")

    gvs_radius = None
    if 'SIMULATION' in parser and 'gvs_radius' in parser['SIMULATION']:
        gvs_radius = read_float(parser, 'SIMULATION', 'gvs_radius')

    scenario = Scenario(
        manifold=manifold,
        x0=x0,
        f0=f0,
        G0=G0,
        L_f=L_f,
        L_g=L_g,
        env=env,
        horizon=read_float(parser, 'SIMULATION', 'horizon'),
        dt=read_float(parser, 'SIMULATION', 'dt', 1e-3),
        n_traj=read_int(parser, 'SIMULATION', 'trajectories'),
        seed=read_int(parser, 'SIMULATION', 'seed', 0),
        policy=policy,
        n_workers=read_int(parser, 'SIMULATION', 'workers', 1),
        gvs_samples=read_int(parser, 'SIMULATION', 'gvs_samples', 100),
        gvs_radius=gvs_radius,
    )

    if 'TRUTH' in parser:
        names = manifold.coord_names
        scenario.f_true = read_function(parser, 'TRUTH', 'f', names)
        scenario.G_true = read_function(parser, 'TRUTH', 'G', names)
        f_val = np.ravel(scenario.f_true(x0))
        G_val = scenario.G_true(x0)
        if f_val.size != n:
            raise ConfigError("TRUTH.f", f"expected {n} entries, got {f_val.size}.")
        if G_val.ndim != 2 or G_val.shape[0] != n:
            raise ConfigError("TRUTH.G", f"expected a matrix with {n} rows, got shape {G_val.shape}.")
        f_true = scenario.f_true
        scenario.f_true = lambda x: np.ravel(f_true(x))

    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(scenario, key, value)

    if not scenario.horizon >= 0:
        raise ConfigError("SIMULATION.horizon", r"must be nonnegative.")
    if not scenario.dt > 0:
        raise ConfigError("SIMULATION.dt", r"must be positive.")
    if scenario.n_traj < 1:
        raise ConfigError("SIMULATION.trajectories", r"must be at least one.")
    if scenario.n_workers < 1:
        raise ConfigError("SIMULATION.workers", r"must be at least one.")

    try:
        scenario.local_data()
    except ValueError as err:
        raise ConfigError("LOCAL_DATA", str(err)) from err
    return scenario


@dataclass
class RunSummary(object):
    """What a run computed, written to ``summary.json``."""
    subcommand: str
    parameters: Dict[str, Any]
    alpha_at_x0: float
    L_G: float
    theorem1_radius_at_samples: Dict[str, Optional[float]]
    n_points: int = 0
    violations: Optional[int] = None
    containment: Optional[Dict[str, float]] = None
    wall_time: float = 0.0
    outputs: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def write(self, path: str) -> None:
        with open(path, 'w') as file:
            json.dump(self.to_dict(), file, indent=2)


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def gvs_samples(scenario: Scenario, local: LocalData) -> pd.DataFrame:
    """Evaluate the bounds at points sampled around x0.

    Points are exp_{x0}(v) with v uniform in the Riemannian ball of radius
    ``gvs_radius``, by default 1.5 times the admissible radius at x0 capped
    at one. Samples leaving the chart are skipped.
    """
    manifold = scenario.manifold
    x0 = local.x0
    at_x0 = evaluate_bounds(local, x0, manifold, scenario.env)
    radius = scenario.gvs_radius
    if radius is None:
        radius = min(1.5 * at_x0.radii.theorem1_radius, 1.0)

    rng = np.random.default_rng(scenario.seed)
    H0, _ = manifold.metric_field.evaluate(x0)
    rows = []
    for sample_id in range(scenario.gvs_samples):
        direction = rng.standard_normal(x0.dim)
        scale = radius * rng.random() ** (1.0 / x0.dim)
        v = direction * scale / riemannian_vec_norm(direction, H0)
        try:
            x = exp_map(x0, v, manifold)
            bounds = evaluate_bounds(local, x, manifold, scenario.env)
        except ChartBoundaryError:
            continue
        except NoGeodesicError as err:
            logger.warning("Skipping GVS sample %d: %s", sample_id, err)
            continue
        row = {'sample_id': sample_id}
        row.update(dict(zip(manifold.coord_names, x.coords)))
        row.update(
            distance=bounds.distance,
            alpha=bounds.alpha,
            theorem1_radius=bounds.radii.theorem1_radius,
            lemma4_radius=bounds.radii.lemma4_radius,
            admissible=bounds.alpha >= 0,
            image_preserving=bounds.distance < bounds.radii.lemma4_radius,
        )
        rows.append(row)
    columns = ['sample_id', *manifold.coord_names, 'distance', 'alpha',
               'theorem1_radius', 'lemma4_radius', 'admissible', 'image_preserving']
    return pd.DataFrame(rows, columns=columns)


def _radius_stats(samples: pd.DataFrame) -> Dict[str, Optional[float]]:
    radii = samples['theorem1_radius'].to_numpy(dtype=float)
    if radii.size == 0:
        return {'min': None, 'mean': None, 'max': None, 'n': 0}
    return {
        'min': _finite_or_none(radii.min()),
        'mean': _finite_or_none(radii.mean()),
        'max': _finite_or_none(radii.max()),
        'n': int(radii.size),
    }


def run_scenario(
    config_path: str,
    subcommand: str,
    out_dir: str,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunSummary:
    """Run a subcommand on a scenario file and write its artifacts.

    Parameters
    ----------
    config_path : str
        Scenario file.
    subcommand : str
        ``"gvs"`` samples the bounds around x0 into ``gvs_samples.csv``;
        ``"reach"`` writes the surrogate cloud to ``cloud.csv``;
        ``"validate"`` also writes the true cloud to ``truth_cloud.csv`` and
        checks containment. All write ``summary.json``.
    out_dir : str
        Output directory, created if needed.
    overrides : dict, optional
        See :func:`load_scenario`.

    Returns
    -------
    RunSummary
        The summary also written to ``summary.json``.

    Raises
    ------
    ConfigError
        If the scenario is invalid, or ``validate`` lacks truth dynamics.
    """
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"Unknown subcommand '{subcommand}'.")
    start = time.perf_counter()
    scenario = load_scenario(config_path, overrides)
    if subcommand == 'validate' and not scenario.has_truth:
        raise ConfigError("TRUTH", r"validate needs the true dynamics f and G.")
    os.makedirs(out_dir, exist_ok=True)

    local = scenario.local_data()
    at_x0 = evaluate_bounds(local, local.x0, scenario.manifold, scenario.env)
    samples = gvs_samples(scenario, local)
    summary = RunSummary(
        subcommand=subcommand,
        parameters=scenario.parameters(),
        alpha_at_x0=at_x0.alpha,
        L_G=at_x0.L_G,
        theorem1_radius_at_samples=_radius_stats(samples),
    )

    if subcommand == 'gvs':
        samples.to_csv(os.path.join(out_dir, 'gvs_samples.csv'), index=False, float_format='%.12g')
        summary.n_points = len(samples)
        summary.outputs.append('gvs_samples.csv')
    else:
        sys_ = SurrogateSystem(local, scenario.manifold, scenario.env)
        cloud = reach_cloud(
            sys_,
            scenario.horizon,
            scenario.dt,
            scenario.n_traj,
            scenario.seed,
            scenario.policy,
            scenario.n_workers,
        )
        cloud.to_csv(os.path.join(out_dir, 'cloud.csv'))
        summary.n_points = len(cloud)
        summary.outputs.append('cloud.csv')

        if subcommand == 'validate':
            truth = true_reach_cloud(
                scenario.f_true,
                scenario.G_true,
                local.x0,
                scenario.horizon,
                scenario.dt,
                scenario.n_traj,
                scenario.seed,
                scenario.manifold,
                scenario.policy,
                scenario.n_workers,
            )
            truth.to_csv(os.path.join(out_dir, 'truth_cloud.csv'))
            summary.outputs.append('truth_cloud.csv')
            report = containment_check(sys_, scenario.f_true, scenario.G_true, cloud)
            summary.violations = report.n_violations
            summary.containment = {
                'n_checked': report.n_checked,
                'worst_excess_control_norm': report.worst_excess_control_norm,
                'worst_velocity_residual': report.worst_velocity_residual,
            }

    summary.wall_time = time.perf_counter() - start
    summary.outputs.append('summary.json')
    summary.write(os.path.join(out_dir, 'summary.json'))
    logger.info("%s finished in %.2f s, %d points", subcommand, summary.wall_time, summary.n_points)
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='pymanreach',
        description="Guaranteed reachable sets of unknown control-affine systems on manifolds.",
    )
    parser.add_argument('subcommand', choices=SUBCOMMANDS)
    parser.add_argument('--config', required=True, help="Scenario file.")
    parser.add_argument('--out', required=True, help="Output directory.")
    parser.add_argument('--seed', type=int, default=None)
    parser.add_argument('--dt', type=float, default=None, help="Step length [s].")
    parser.add_argument('--horizon', type=float, default=None, help="Horizon [s].")
    parser.add_argument('--trajectories', type=int, default=None)
    parser.add_argument('--workers', type=int, default=None)
    parser.add_argument('-v', '--verbose', action='count', default=0)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s")

    overrides = {
        'seed': args.seed,
        'dt': args.dt,
        'horizon': args.horizon,
        'n_traj': args.trajectories,
        'n_workers': args.workers,
    }
    try:
        summary = run_scenario(args.config, args.subcommand, args.out, overrides)
    except ConfigError as err:
        logger.error("Invalid configuration: %s", err)
        return 2
    except ReachError as err:
        logger.error("%s", err)
        return 3
    if summary.violations:
        logger.error("%d containment violations", summary.violations)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
