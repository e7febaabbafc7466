"""End-to-end triangulation: patches -> detections -> recovery -> mesh.

Two entry points: `triangulate` runs the trained detector over every point of
a cloud; `oracle_triangulate` bypasses the network and feeds exact
circumcenters computed from a reference mesh through the same recovery path,
verifying the geometric pipeline independently of any training.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .anchors import AnchorGrid
from .autodiff import sigmoid
from .dataset import adjacent_triangles
from .detector import Detector
from .duality import (DetectedCenter, recover_all, recover_triangle,
                      recover_triangle_local)
from .geometry import (PointCloud, build_knn_index, circumcenters,
                       extract_all_patches, from_spherical_array,
                       to_spherical_array)
from .mesh import IndexedMesh
from .postprocess import enforce_edge_manifold, fill_small_holes, non_manifold_edge_fraction


@dataclass
class TriangulationStats:
    """Counters and timings reported by the inference pipeline."""

    n_points: int = 0
    n_detections: int = 0
    n_primitive_faces: int = 0
    n_final_faces: int = 0
    nonmanifold_before: float = 0.0
    nonmanifold_after: float = 0.0
    stage_seconds: dict = field(default_factory=dict)


def decode_detections(output: np.ndarray, grid: AnchorGrid, patch,
                      conf_threshold: float):
    """Turn one patch's (t, s, 4) network output into DetectedCenters.

    Each slot's confidence gates its own detection; offsets are decoded in
    the normalized frame and mapped back to model coordinates through the
    patch transform.
    """
    probs = sigmoid(output[..., 0])
    cell_idx, slot_idx = np.nonzero(probs >= conf_threshold)
    if len(cell_idx) == 0:
        return []
    offsets = output[cell_idx, slot_idx, 1:4]
    sph = grid.decode_offsets_array(cell_idx, offsets)
    local = from_spherical_array(sph)
    model_pos = patch.to_model(local)
    return [DetectedCenter(position=model_pos[i],
                           confidence=float(probs[cell_idx[i], slot_idx[i]]),
                           source_point=patch.center_index)
            for i in range(len(cell_idx))]


def triangulate(cloud: PointCloud, model: Detector, k: int | None = None,
                conf_threshold: float = 0.5, batch_size: int = 256,
                postprocess: bool = True, max_hole_edges: int = 4):
    """Triangulate a point cloud with a trained detector.

    Returns (mesh, stats). The output mesh's vertex array is exactly the
    input cloud; only faces are added.
    """
    k = model.k if k is None else k
    stats = TriangulationStats(n_points=len(cloud))
    t0 = time.perf_counter()
    index = build_knn_index(cloud)
    patches = extract_all_patches(cloud, index, k, model.eta0)
    stats.stage_seconds["patches"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    detections = []
    for start in range(0, len(patches), batch_size):
        chunk = patches[start:start + batch_size]
        nbrs = np.stack([p.normalized_neighbors for p in chunk])
        out = model.forward(nbrs).data
        for p, o in zip(chunk, out):
            detections.extend(decode_detections(o, model.grid, p, conf_threshold))
    stats.n_detections = len(detections)
    stats.stage_seconds["detect"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    recovered = recover_all(detections, cloud, patches, conf_threshold)
    faces = np.array([t.indices for t in recovered], dtype=np.int64).reshape(-1, 3)
    priorities = [(t.multiplicity, t.confidence) for t in recovered]
    primitive = IndexedMesh(cloud.points, faces)
    stats.n_primitive_faces = primitive.n_faces
    stats.nonmanifold_before = non_manifold_edge_fraction(primitive)
    stats.stage_seconds["recover"] = time.perf_counter() - t0

    if not postprocess:
        stats.n_final_faces = primitive.n_faces
        stats.nonmanifold_after = stats.nonmanifold_before
        return primitive, stats

    t0 = time.perf_counter()
    mesh = enforce_edge_manifold(primitive, priorities)
    mesh = fill_small_holes(mesh, max_hole_edges)
    stats.n_final_faces = mesh.n_faces
    stats.nonmanifold_after = non_manifold_edge_fraction(mesh)
    stats.stage_seconds["postprocess"] = time.perf_counter() - t0
    return mesh, stats


@dataclass
class OracleStats:
    """Label coverage report for the exact-circumcenter round trip."""

    n_labels: int = 0
    dropped_out_of_range: int = 0
    dropped_not_covered: int = 0
    n_gt_faces: int = 0
    n_recovered_faces: int = 0
    n_spurious_faces: int = 0

    @property
    def recovered_fraction(self) -> float:
        return self.n_recovered_faces / self.n_gt_faces if self.n_gt_faces else 1.0


def oracle_triangulate(reference: IndexedMesh, k: int, grid: AnchorGrid,
                       eta0: float = 0.01):
    """Recover the reference mesh from its own exact circumcenters.

    For every vertex, the circumcenters of its incident faces are computed
    exactly and fed to duality recovery, skipping (and counting) labels whose
    normalized circumcenter is outside the anchor range or whose face is not
    covered by the vertex's K nearest neighbors.

    Returns (primitive mesh, OracleStats).
    """
    cloud = PointCloud(reference.vertices)
    index = build_knn_index(cloud)
    patches = extract_all_patches(cloud, index, k, eta0)
    stats = OracleStats(n_gt_faces=reference.n_faces)
    proposals = {}
    sources = {}
    for v in range(reference.n_vertices):
        patch = patches[v]
        faces = adjacent_triangles(reference, v)
        if not len(faces):
            continue
        stats.n_labels += len(faces)
        neighbor_set = set(patch.neighbor_indices.tolist())
        neighbor_set.add(v)
        corners = reference.vertices[faces]
        centers = circumcenters(corners[:, 0], corners[:, 1], corners[:, 2])
        rho = np.linalg.norm(patch.to_local(centers), axis=1)
        for f, x, r in zip(faces, centers, rho):
            if not all(u in neighbor_set for u in f.tolist()):
                stats.dropped_not_covered += 1
                continue
            if r > grid.r_max:
                stats.dropped_out_of_range += 1
                continue
            tri = recover_triangle(v, x, patch, cloud)
            proposals[tri] = 1.0
            sources.setdefault(tri, set()).add(v)

    faces = np.array(sorted(proposals), dtype=np.int64).reshape(-1, 3)
    primitive = IndexedMesh(reference.vertices, faces)
    gt = reference.face_set()
    got = primitive.face_set()
    stats.n_recovered_faces = len(gt & got)
    stats.n_spurious_faces = len(got - gt)
    return primitive, stats


def patch_detection_metrics(model: Detector, samples, cloud: PointCloud,
                            conf_threshold: float = 0.5, batch_size: int = 256):
    """Per-patch detection quality: mean accuracy and mean IoU.

    Every triangle is one prediction element: for each patch, the triangles
    recovered from its own detections are compared with the patch's
    ground-truth adjacent faces. Accuracy is |P & G| / |G| (patches without
    ground truth are skipped); IoU is |P & G| / |P | G|.
    """
    accs, ious = [], []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        nbrs = np.stack([s.patch.normalized_neighbors for s in chunk])
        out = model.forward(nbrs).data
        for s, o in zip(chunk, out):
            dets = decode_detections(o, model.grid, s.patch, conf_threshold)
            pred = {recover_triangle(s.patch.center_index, d.position, s.patch, cloud)
                    for d in dets}
            gt = {tuple(f) for f in s.gt_faces.tolist()}
            if gt:
                accs.append(len(pred & gt) / len(gt))
            union = pred | gt
            ious.append(len(pred & gt) / len(union) if union else 1.0)
    return {"macc": float(np.mean(accs)) if accs else 0.0,
            "miou": float(np.mean(ious)) if ious else 0.0}


def record_detection_metrics(model: Detector, records,
                             conf_threshold: float = 0.5,
                             batch_size: int = 256):
    """mAcc / mIoU for serialized sample records, without the source cloud.

    Ground-truth triangles are re-derived by decoding the records' positive
    offsets and recovering in the normalized frame (exact by the label/
    recovery round-trip property); predictions follow the same path.
    """
    accs, ious = [], []
    grid = model.grid
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        nbrs = np.stack([r.normalized_neighbors for r in chunk])
        out = model.forward(nbrs).data
        for r, o in zip(chunk, out):
            gt = set()
            for cell, offs in r.positive_cells.items():
                sph = grid.decode_offsets_array(np.full(len(offs), cell), offs)
                for x in from_spherical_array(sph):
                    gt.add(recover_triangle_local(r.center_index, x,
                                                  r.neighbor_indices,
                                                  r.normalized_neighbors))
            probs = sigmoid(o[..., 0])
            cell_idx, slot_idx = np.nonzero(probs >= conf_threshold)
            pred = set()
            if len(cell_idx):
                sph = grid.decode_offsets_array(cell_idx, o[cell_idx, slot_idx, 1:4])
                for x in from_spherical_array(sph):
                    pred.add(recover_triangle_local(r.center_index, x,
                                                    r.neighbor_indices,
                                                    r.normalized_neighbors))
            if gt:
                accs.append(len(pred & gt) / len(gt))
            union = pred | gt
            ious.append(len(pred & gt) / len(union) if union else 1.0)
    return {"macc": float(np.mean(accs)) if accs else 0.0,
            "miou": float(np.mean(ious)) if ious else 0.0}
