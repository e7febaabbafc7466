"""Spherical anchor grid: the detector's search space.

Circumcenters of a point's adjacent triangles live in a bounded shell around
the point once the patch is normalized. Splitting (rho, theta, phi) uniformly
gives a fixed set of anchor cells; detection then predicts per-cell occupancy
plus a small offset instead of searching over all neighbor pairs.
"""

import numpy as np

from circumtri import to_spherical
from circumtri.anchors import build_grid

grid = build_grid()  # defaults: steps (0.02, pi/6, pi/6), radial range 0.2
print(f"splits: rho x theta x phi = {grid.t_rho} x {grid.t_theta} x {grid.t_phi}"
      f" -> t = {grid.t} anchors")
print("vs. pairwise candidate count at K=50:", 50 * 50)

first = grid.anchor((0, 0, 0))
print(f"\nfirst anchor: rho={first.rho:.3f} theta={first.theta:.4f} "
      f"phi={first.phi:.4f}")

# a circumcenter in the normalized frame, matched and encoded
local_center = np.array([0.02, 0.015, 0.005])
s = to_spherical(local_center)
cell = grid.match_cell(s)
offsets = grid.encode_offsets(cell, s)
print(f"\nlocal center {local_center} -> spherical "
      f"(rho={s.rho:.4f}, theta={s.theta:.4f}, phi={s.phi:.4f})")
print(f"matched cell {cell}, offsets {np.round(offsets, 4)} (all in [-1/2, 1/2])")

back = grid.decode_offsets(cell, offsets)
print("decode(encode) error:",
      max(abs(back.rho - s.rho), abs(back.theta - s.theta), abs(back.phi - s.phi)))

# out of radial range -> unmatchable, the label would be dropped and counted
print("\nrho = 0.25 matches:", grid.match_cell((0.25, 0.0, 0.0)))
