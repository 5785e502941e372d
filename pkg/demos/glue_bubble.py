"""Glue a constant structure into a perturbed one across an annulus.

Run: python demos/glue_bubble.py
"""
from bhacs.acs import J0, constant_field
from bhacs.geometry import Grid
from bhacs.glue import GlueProfile, MollifierKernel, glue
from bhacs.topology import perturbation_seed

grid = Grid(16)
outer = perturbation_seed(grid, eps=0.05).values
inner = constant_field(J0, 16)
for j in (2, 3, 4):
    res = glue(outer, inner, GlueProfile.build(j), MollifierKernel(), center=(8, 8, 8, 8), scale=0.4)
    print(f"j={j}  ring points {res.ring_points:5d}  annulus energy {res.annulus_energy:.3e}  "
          f"mu {res.mu_neighborhood:.3e}  constant {res.constant:.3f}")
