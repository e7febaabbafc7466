"""Train a small detector on synthetic patches, then triangulate a cloud.

A scaled-down network (narrow layers, coarse angular grid) learns the
circumcenter patterns of jittered planes and a sphere in a couple of minutes
on one CPU core. For the full-width desk-scale run see the acceptance suite.
"""

import os
import tempfile
import time

import numpy as np

from circumtri import (AdamState, Detector, DetectorConfig, PointCloud,
                       load_checkpoint, mesh_samples, normalize_mesh,
                       run_training, save_checkpoint, triangulate)
from circumtri.anchors import build_grid
from circumtri.pipeline import patch_detection_metrics
from circumtri.synthetic import grid_plane, icosphere

K, ETA0 = 10, 0.01
grid = build_grid(0.02, np.pi / 4, np.pi / 4, 0.2)  # t = 320

planes = [grid_plane(12, 12, jitter=0.15, seed=s) for s in (1, 2, 3)]
samples = sum((mesh_samples(p, grid, K, ETA0) for p in planes), [])
samples += mesh_samples(normalize_mesh(icosphere(2)), grid, K, ETA0)
print(f"{len(samples)} training samples")

config = DetectorConfig(pe_levels=8, depth_multiplier=4, point_mlp=(32, 64),
                        conv_out=128, head_mlp=(128,))
model = Detector(config, grid, ETA0, K, seed=0)
print("parameters:", sum(p.data.size for _, p in model.parameter_items()))

t0 = time.perf_counter()
history = run_training(model, samples, n_iters=800, batch_size=32, seed=0,
                       state=AdamState(lr=1e-3, decay_every=300),
                       log_every=200,
                       on_log=lambda r: print(
                           f"  iter {r['step']:4d}  loss {r['loss']:.4f}  "
                           f"(bce {r['bce']:.4f}, loc {r['loc']:.4f})"))
print(f"trained in {time.perf_counter() - t0:.0f}s; "
      f"loss {history[0]['loss']:.3f} -> {history[-1]['loss']:.3f}")

held_out = grid_plane(12, 12, jitter=0.15, seed=77)
hold_samples = mesh_samples(held_out, grid, K, ETA0)
metrics = patch_detection_metrics(model, hold_samples,
                                  PointCloud(held_out.vertices), 0.5)
print(f"held-out plane: mAcc {metrics['macc']:.3f}, mIoU {metrics['miou']:.3f}")

with tempfile.TemporaryDirectory() as tmp:
    ckpt = os.path.join(tmp, "toy.circ")
    save_checkpoint(ckpt, model)
    model2 = load_checkpoint(ckpt)
    print(f"checkpoint round trip: {os.path.getsize(ckpt)} bytes")

    cloud = PointCloud(held_out.vertices)
    mesh, stats = triangulate(cloud, model2, conf_threshold=0.5)
    print(f"triangulated {stats.n_points} points -> {mesh.n_faces} faces "
          f"({held_out.n_faces} in the reference), "
          f"non-manifold after post-processing: {stats.nonmanifold_after:.1%}")
