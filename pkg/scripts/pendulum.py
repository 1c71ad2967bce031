# %%
from pymanreach.cli import load_scenario
from pymanreach.reach import SurrogateSystem, reach_cloud, true_reach_cloud
from pymanreach.utils import plot_reach_clouds, set_plotting_env
import matplotlib.pyplot as plt
import numpy as np

# Set the plotting environment
set_plotting_env()

# The scenario file
scenario = load_scenario('config/pendulum.config')
local = scenario.local_data()

# Sample the guaranteed reachable set from the local data only
surrogate = reach_cloud(
    SurrogateSystem(local, scenario.manifold, scenario.env),
    scenario.horizon,
    scenario.dt,
    scenario.n_traj,
    scenario.seed,
    n_workers=4,
)

# Sample the true reachable set for comparison
truth = true_reach_cloud(
    scenario.f_true,
    scenario.G_true,
    local.x0,
    scenario.horizon,
    scenario.dt,
    scenario.n_traj,
    scenario.seed,
    scenario.manifold,
    n_workers=4,
)
# %%
# Plot the final states on the unit circle
ax = plot_reach_clouds(surrogate, truth, final_only=True)
angles = np.linspace(-np.pi, np.pi, 200)
ax.plot(np.cos(angles), np.sin(angles), 'k--', linewidth=1)
ax.scatter(*scenario.manifold.embed(local.x0), color='k', marker='x', s=200)

plt.show()
# %%
