"""Chern periods of sphere-map seeds, and how they approach twice the degree.

Run: python demos/chern_periods.py
"""
import numpy as np

from bhacs.geometry import Grid
from bhacs.topology import periods, sphere_map_seed

for degrees in ((1, 0, 0, 0, 0, 0), (1, 1, 0, 0, 0, 0)):
    for n in (8, 16):
        J = sphere_map_seed(degrees, Grid(n))
        p = periods(J.values)
        err = np.max(np.abs(p - 2 * np.array(degrees)))
        print(f"deg {degrees}  n={n:2d}  periods {np.array2string(p, precision=4)}  max error vs 2*deg {err:.3e}")
