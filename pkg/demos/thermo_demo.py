# %% [markdown]
# Stationary thermodynamics of the Evans rates g(k) = 1 + b/k.
#
# For b > 2 the fugacity saturates at phi_c = 1 once the density passes
# rho_c = 1/(b-2); past that point the extra mass has nowhere to go but a condensate.

# %%
import numpy as np
from zrplab.thermo import JumpRateSpec, ThermoProfile, rate_function

prof = ThermoProfile(JumpRateSpec.evans(4.0))
print("phi_c =", prof.phi_c, " rho_c =", prof.rho_c)

# %%
rho = np.array([0.1, 0.25, 0.45, 0.5, 1.0, 3.0])
for r, p in zip(rho, prof.Phi(rho)):
    print(f"rho={r:5.2f}  Phi={p:.6f}")

# %% [markdown]
# b = 0 has the closed form Phi(rho) = rho/(1+rho) and no critical density.

# %%
p0 = ThermoProfile(JumpRateSpec.evans(0.0))
print(p0.rho_c, np.max(np.abs(p0.Phi(rho) - rho / (1 + rho))))

# %% rate function of the stationary product law, zero at the reference density
print([round(rate_function(prof, 0.3, r), 6) for r in (0.1, 0.3, 0.5, 2.0)])
