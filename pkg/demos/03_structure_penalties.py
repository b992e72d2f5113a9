"""The banded constraint reference and the two structure penalties.

C0 stacks [A B -I] blocks so that C0 @ tau = 0 exactly on any noiseless
trajectory tau = (x0, u0, x1, ..., xN). The deviation penalty charges a
masked 1-norm for moving the learned C away from C0; the system-identification
penalty charges beta * ||C tau||^2 on observed trajectories, which pulls C
toward whatever dynamics actually generated the data.
"""

import numpy as np

from qprl import env_pointmass as pm
from qprl import (
    MaskSpec,
    band_metrics,
    build_banded_c,
    build_c_mask,
    deviation_penalty_value,
    si_penalty_value,
)
from qprl.env_pointmass import NoiseModel, PointMassEnv, PointMassParams, corrupt_model

band = build_banded_c(pm.TRUE_A, pm.TRUE_B, 10)
print("C0 shape:", band.C0.shape)
print("band footprint entries:", int(band.band_pattern().sum()),
      "of", band.C0.size)

# --- annihilation on a noiseless rollout ------------------------------------
rng = np.random.default_rng(0)
env = PointMassEnv(PointMassParams(), NoiseModel("none"))
s = env.reset(rng)
tau = [s]
for _ in range(10):
    a = rng.uniform(pm.ACTION_LB, pm.ACTION_UB)
    s, _ = env.step(a, rng)
    tau.extend([a, s])
tau = np.concatenate(tau)
print("\nnoiseless rollout: ||C0 tau||_inf =", np.max(np.abs(band.C0 @ tau)))
print("SI penalty at C0 on that trajectory (exactly zero, block-wise product):",
      si_penalty_value(band.C0, [tau], beta=1e-6, layout=band.layout))

# --- deviation penalty under a mask -----------------------------------------
mask = build_c_mask(MaskSpec(c1=1.0, c2=1e-4, c3=0.0), band)
print("\nmask values present:", sorted(set(np.round(mask.ravel(), 6))))

A_hat, B_hat = corrupt_model(pm.TRUE_A, pm.TRUE_B, delta=0.05,
                             rng=np.random.default_rng(3))
C_corrupted = build_banded_c(A_hat, B_hat, 10).C0
print("deviation penalty of the corrupted model's C vs true C0:",
      f"{deviation_penalty_value(C_corrupted, band, mask):.6f}")

# --- band metrics ------------------------------------------------------------
C_dense = C_corrupted + 0.01 * np.random.default_rng(1).normal(size=C_corrupted.shape)
for name, C in (("true C0", band.C0), ("corrupted banded", C_corrupted),
                ("dense perturbation", C_dense)):
    m = band_metrics(C, band)
    print(f"{name:20s} on-band L1 {m['on_band_l1']:8.2f}   "
          f"off-band L1 {m['off_band_l1']:8.2f}")
