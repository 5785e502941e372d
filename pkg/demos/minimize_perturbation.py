"""Relax a perturbed constant structure and watch E2 and the residuals fall.

Run: python demos/minimize_perturbation.py [n]
"""
import sys

from bhacs.energy import energy_e2
from bhacs.geometry import Grid
from bhacs.minimize import OptimizerConfig, minimize
from bhacs.topology import perturbation_seed

n = int(sys.argv[1]) if len(sys.argv) > 1 else 8
seed = perturbation_seed(Grid(n), eps=0.2)
print(f"n={n}  seed E2 = {energy_e2(seed.values).e2:.3e}")

res = minimize(seed.values, cfg=OptimizerConfig(max_iters=60, grad_tol=1e-10))
for row in res.rows[:: max(1, len(res.rows) // 8)]:
    print(f"  it {row.iteration:3d}  E2 {row.e2:.3e}  |grad| {row.grad_norm:.2e}  step {row.step:.2e}")

rep = energy_e2(res.J_final.values)
print(f"status {res.status} after {res.iterations} iterations")
print(f"final E2 {rep.e2:.3e}  strong residual {rep.residual_strong:.2e}  weak residual {rep.residual_weak_max:.2e}")
