# %%
from pymanreach.cli import load_scenario
from pymanreach.reach import (
    SurrogateSystem,
    containment_check,
    reach_cloud,
    true_reach_cloud,
)
from pymanreach.utils import plot_reach_clouds, set_plotting_env
import matplotlib.pyplot as plt

# Set the plotting environment
set_plotting_env()

# The scenario file
scenario = load_scenario('config/so3.config')
local = scenario.local_data()
system = SurrogateSystem(local, scenario.manifold, scenario.env)

# Sample both reachable sets
surrogate = reach_cloud(
    system,
    scenario.horizon,
    scenario.dt,
    scenario.n_traj,
    scenario.seed,
    n_workers=4,
)
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

# Every velocity of the surrogate must be available to the true system
report = containment_check(system, scenario.f_true, scenario.G_true, surrogate)
print(report)
# %%
# Plot the tip of the rotated z axis, i.e. the third column of X
plot_reach_clouds(surrogate, truth, columns=['r13', 'r23', 'r33'])

plt.show()
# %%
