# %% [markdown]
# Event-driven simulation on the torus, then the empirical fields and a
# generalized Young measure of the final configuration.

# %%
import numpy as np
from zrplab.lattice import Lattice
from zrplab.thermo import JumpRateSpec, ThermoProfile
from zrplab.ensembles import InitialCondition, sample_initial
from zrplab.sim import ZeroRangeProcess
from zrplab.empirical import TestFunction, build_young, extract_fields
from zrplab.rng import stream

spec = JumpRateSpec.evans(4.0)
lat = Lattice(128)
ic = InitialCondition.with_condensate(0.4, 0.5, 0.5)
occ = sample_initial(ic, lat, ThermoProfile(spec), stream(1))
proc = ZeroRangeProcess(spec, lat, occ, seed=1, record=True)
proc.run_until(0.01)
print(proc.event_count, "events; largest site holds", proc.occ.max(), "of", proc.occ.sum())

# %%
f = extract_fields(proc.occ, lat, spec)
print("mass", f.total_mass(), " mean jump rate", f.jump_rate.sum())

# %% the condensate shows up in the singular part once blocks exceed M
ym = build_young(proc.occ, lat, 2, 4.0)
print("singular mass", ym.singular.sum())
bary = TestFunction(lambda u, lam: lam, lambda u: np.ones(len(u)), "asymptotically_linear")
print("barycenter pairing", ym.pair(bary), "=", proc.occ.sum() / 128)

# %% time integrals are exact along the recorded path
tr = proc.trajectory()
I = tr.integrate([0.005, 0.01], psi=spec.table[: occ.sum() + 2])
print("time-integrated jump rate per site:", I[-1].sum() / 128)
