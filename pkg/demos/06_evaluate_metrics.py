"""Scoring a reconstruction: Chamfer, F-score, normals, edge metrics, angles.

Metrics compare dense area-weighted samplings of two meshes; the edge
variants restrict to points near sharp creases, and the angle report breaks
detection accuracy down by each face's maximum interior angle (wide, obtuse
triangles have far-away circumcenters and are the hard cases).
"""

import numpy as np

from circumtri import (IndexedMesh, angle_accuracy_report, chamfer,
                       edge_metrics, f_score, normal_metrics, sample_surface)
from circumtri.metrics import max_interior_angles
from circumtri.synthetic import icosphere, wavy_delaunay_sheet

gt = wavy_delaunay_sheet(n_side=10, seed=3)

# a damaged "reconstruction": drop the widest-angle faces
angles = max_interior_angles(gt)
recon = IndexedMesh(gt.vertices, gt.faces[angles <= 100.0])
print(f"reference {gt.n_faces} faces; reconstruction keeps {recon.n_faces}")

n = 50000
gt_s = sample_surface(gt, n, seed=0)
rec_s = sample_surface(recon, n, seed=0)

cd1, cd2 = chamfer(gt_s.points, rec_s.points)
f1, recall, precision = f_score(gt_s.points, rec_s.points, eps=0.05)
nc, nr = normal_metrics(gt_s, rec_s)
print(f"CD1 = {cd1:.5f}   CD2 = {cd2:.6f}")
print(f"F1 = {f1:.4f} (recall {recall:.4f}, precision {precision:.4f})")
print(f"NC = {nc:.4f}   NR = {nr:.3f} degrees")

ecd1, ef1 = edge_metrics(gt, recon, dihedral_threshold_deg=30.0, eps=0.05,
                         n_points=20000)
print(f"edge-restricted: ECD1 = {ecd1:.5f}   EF1 = {ef1:.4f}")

print("\ndetection accuracy by max interior angle:")
for row in angle_accuracy_report(gt, recon, bin_width_deg=15):
    if row["gt"]:
        print(f"  [{row['lo']:5.0f}, {row['hi']:5.0f}) deg: "
              f"{row['recovered']:3d}/{row['gt']:3d}  "
              f"accuracy {row['accuracy']:.2f}")

# sanity: a mesh against itself is perfect under the same sampling seed
sphere = icosphere(2)
a = sample_surface(sphere, 20000, seed=1)
b = sample_surface(sphere, 20000, seed=1)
print("\nself-comparison: CD1 =", chamfer(a.points, b.points)[0],
      " F1 =", f_score(a.points, b.points, 0.005)[0])
