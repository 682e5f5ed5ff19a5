"""Small-noise behaviour of the shell model.

The same increments drive u^eps for every eps and the Gaussian limit V0, so the
pathwise distances below are coupled, not just distributional.
"""

import numpy as np

from hydroscale.asymptotics import clt_experiment
from hydroscale.models import build_model
from hydroscale.stochastics import CovarianceSpec, TimeGrid

model = build_model("shell")
cov = CovarianceSpec.power_law(model.noise_dim)
xi = np.zeros(model.dimension)
xi[:2] = [1.0, 0.5]

res = clt_experiment(model, cov, xi, TimeGrid(1.0, 1000), [1e-2, 1e-3, 1e-4, 1e-5], n_rep=256, seed=7, jobs=4)

print(f"{'eps':>8s} {'E dist(u^eps, u0)':>20s} {'E dist(V^eps, V0)':>20s}")
for s, f in zip(res.stats, res.first_order):
    print(f"{s.eps:8.0e} {f.D:14.4e} +- {f.D_se:.1e} {s.D:14.4e} +- {s.D_se:.1e}")
print(f"first-order slope {res.slope_first_order.slope:.3f}  (distance ~ eps)")
print(f"fluctuation slope {res.slope_D.slope:.3f}  (V^eps -> V0 in mean square)")
