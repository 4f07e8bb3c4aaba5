# %% [markdown]
# Canonical measures: n sites, K particles, weights prod 1/g!(eta_x).
# The table is built by a dynamic program and sampled site by site.

# %%
import numpy as np
from zrplab.rng import stream
from zrplab.ensembles import build_canonical_table, canonical_expectation_g, sample_canonical
from zrplab.thermo import JumpRateSpec

spec = JumpRateSpec.evans(4.0)
table = build_canonical_table(spec, 4, 8)
print("Z(4, 8) =", table.Z(4, 8))

draws = sample_canonical(table, stream(0), size=20_000)
print("empirical marginal:", np.bincount(draws[:, 0], minlength=9)[:5] / len(draws))
print("exact marginal:    ", table.marginal()[:5])

# %% [markdown]
# Above rho_c the canonical mean jump rate creeps down to phi_c = 1 as n grows.

# %%
for n in (50, 100, 200, 400):
    t = build_canonical_table(spec, n, n)
    print(n, canonical_expectation_g(t))
