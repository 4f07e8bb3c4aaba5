# %% [markdown]
# The limiting equation d_t rho = Laplacian Phi(rho), solved on a periodic grid,
# and compared in weak form with particle runs.

# %%
import numpy as np
from zrplab.thermo import JumpRateSpec, ThermoProfile
from zrplab.pde import initial_grid, self_convergence, solve
from zrplab.lattice import Lattice
from zrplab.ensembles import InitialCondition
from zrplab.verify import Experiment, hydro_weak_error


def rho0(u):
    return 0.5 + 0.3 * np.sin(2 * np.pi * u)


prof = ThermoProfile(JumpRateSpec.evans(0.0))
res = self_convergence(rho0, prof, 0.05, grids=(64, 128, 256))
print("observed order", res["order"], "mass drift", res["max_mass_drift"])

# %% with b = 4 anything above rho_c = 1/2 is a flat plateau for the flux
p4 = ThermoProfile(JumpRateSpec.evans(4.0))
sol = solve(initial_grid(lambda u: 0.2 + 0 * u, 128, condensate=(0.5, 0.3)), p4, 0.01, 128)
print("mass", sol.masses[-1], "peak", sol.rho.max())

# %% particles against the grid solution (small run)
exp = Experiment(JumpRateSpec.evans(0.0), Lattice(128), InitialCondition.product(rho0), 0.05, seed=5)
r = hydro_weak_error(exp, 10, rho0, G=256, workers=1)
for name, e in zip(r["tests"], r["errors"]):
    print(f"{name:8s} {e:.4f}")
