# %% [markdown]
# Statistics behind the limit theorem, computed on replicated runs.
# Each returns per-replica values so means and standard errors come for free.

# %%
from zrplab.lattice import Lattice
from zrplab.thermo import CylinderObservable, JumpRateSpec
from zrplab.ensembles import InitialCondition
from zrplab.verify import (DiscreteTestField, Experiment, continuity_residuals, martingale_qv_check,
                           one_block_stat)

spec = JumpRateSpec.evans(0.0)
for N, ell in ((32, 1), (64, 2)):
    exp = Experiment(spec, Lattice(N), InitialCondition.grand_canonical(0.5), 0.02, seed=3)
    s = one_block_stat(exp, 10, CylinderObservable.jump_rate(spec), ell, workers=1)
    print(f"one-block N={N}: {s.mean:.5f} +- {s.se:.5f}")

# %% martingale variance against its quadratic-variation bound
exp = Experiment(spec, Lattice(64), InitialCondition.grand_canonical(0.5), 0.05, seed=7)
r = martingale_qv_check(exp, 30, DiscreteTestField.fourier("cos", 1), workers=1)
print("Var(A_T) =", r["var"], " bound =", r["bound"], " pass:", r["pass"])

# %% the weak-form residuals shrink with N
G = DiscreteTestField.fourier("cos", 1)
for N in (32, 64):
    exp = Experiment(spec, Lattice(N), InitialCondition.grand_canonical(0.5), 0.02, seed=4)
    v1, v2 = continuity_residuals(exp, 8, G, [0.01, 0.02])
    print(N, v1.mean, v2.mean)
