"""Reconstruction quality metrics.

Meshes are compared through dense area-weighted surface samplings: Chamfer
distances (CD1 plain / CD2 squared), F-score at a distance threshold, normal
consistency / reconstruction error, and edge-restricted variants (ECD1, EF1)
computed on points sampled near sharp creases. Normals are compared
unoriented (absolute cosine) because triangulated outputs carry no canonical
winding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyMesh
from .mesh import IndexedMesh

DEFAULT_F1_EPS = 0.005
DEFAULT_DIHEDRAL_DEG = 30.0


@dataclass(frozen=True)
class SurfaceSamples:
    """Points sampled on a mesh with their source-face unit normals."""

    points: np.ndarray
    normals: np.ndarray
    face_indices: np.ndarray


def face_areas_normals(mesh: IndexedMesh):
    """(areas, unit normals) per face; zero-area faces get a zero normal."""
    corners = mesh.face_corners()
    cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    norms = np.linalg.norm(cross, axis=1)
    areas = norms / 2.0
    unit = np.zeros_like(cross)
    ok = norms > 0
    unit[ok] = cross[ok] / norms[ok, None]
    return areas, unit


def sample_surface(mesh: IndexedMesh, n_points: int, seed: int = 0) -> SurfaceSamples:
    """Area-weighted uniform sampling of a mesh surface.

    Deterministic given the seed. Raises EmptyMesh when no face has positive
    area.
    """
    areas, normals = face_areas_normals(mesh)
    total = areas.sum()
    if mesh.n_faces == 0 or total <= 0:
        raise EmptyMesh("cannot sample a mesh without positive-area faces")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(mesh.n_faces, size=n_points, p=areas / total)
    uv = rng.random((n_points, 2))
    flip = uv.sum(axis=1) > 1.0
    uv[flip] = 1.0 - uv[flip]
    corners = mesh.face_corners()[chosen]
    pts = (corners[:, 0]
           + uv[:, :1] * (corners[:, 1] - corners[:, 0])
           + uv[:, 1:] * (corners[:, 2] - corners[:, 0]))
    return SurfaceSamples(points=pts, normals=normals[chosen], face_indices=chosen)


# -- point-set metrics ------------------------------------------------------

def chamfer(q: np.ndarray, q_hat: np.ndarray):
    """(CD1, CD2): symmetric mean nearest-neighbor distance and its squared form."""
    q = np.asarray(q, dtype=np.float64)
    q_hat = np.asarray(q_hat, dtype=np.float64)
    if len(q) == 0 or len(q_hat) == 0:
        raise ValueError("chamfer requires non-empty point sets")
    d_fwd, _ = cKDTree(q_hat).query(q)
    d_bwd, _ = cKDTree(q).query(q_hat)
    cd1 = d_fwd.mean() + d_bwd.mean()
    cd2 = (d_fwd ** 2).mean() + (d_bwd ** 2).mean()
    return float(cd1), float(cd2)


def f_score(q: np.ndarray, q_hat: np.ndarray, eps: float = DEFAULT_F1_EPS):
    """(F1, recall, precision) at distance threshold eps."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    q = np.asarray(q, dtype=np.float64)
    q_hat = np.asarray(q_hat, dtype=np.float64)
    d_fwd, _ = cKDTree(q_hat).query(q)
    d_bwd, _ = cKDTree(q).query(q_hat)
    recall = float(np.mean(d_fwd < eps))
    precision = float(np.mean(d_bwd < eps))
    if recall + precision == 0:
        return 0.0, recall, precision
    f1 = 2 * recall * precision / (recall + precision)
    return float(f1), recall, precision


def normal_metrics(gt: SurfaceSamples, recon: SurfaceSamples):
    """(NC, NR in degrees), both symmetric and unoriented.

    Each sample pairs with the nearest sample of the other set; NC averages
    the |cos| of the paired normal angles, NR averages arccos(|cos|).
    """
    def one_way(src, dst):
        _, idx = cKDTree(dst.points).query(src.points)
        cos = np.abs(np.einsum("ij,ij->i", src.normals, dst.normals[idx]))
        return np.clip(cos, 0.0, 1.0)

    cos_fwd = one_way(gt, recon)
    cos_bwd = one_way(recon, gt)
    nc = (cos_fwd.mean() + cos_bwd.mean()) / 2
    nr = (np.degrees(np.arccos(cos_fwd)).mean()
          + np.degrees(np.arccos(cos_bwd)).mean()) / 2
    return float(nc), float(nr)


# -- edge-restricted metrics -------------------------------------------------

def sharp_edges(mesh: IndexedMesh, dihedral_threshold_deg: float = DEFAULT_DIHEDRAL_DEG):
    """Edges whose two faces meet at more than the threshold angle, plus
    boundary edges (both are genuine creases of the surface). Returns (E, 2)."""
    areas, normals = face_areas_normals(mesh)
    edge_faces: dict = {}
    for fi, f in enumerate(mesh.faces.tolist()):
        a, b, c = f
        for e in ((a, b), (a, c), (b, c)):
            edge_faces.setdefault(e, []).append(fi)
    cos_thresh = math.cos(math.radians(dihedral_threshold_deg))
    out = []
    for e, fs in edge_faces.items():
        if len(fs) == 1:
            out.append(e)
        elif len(fs) == 2:
            cos = abs(float(np.dot(normals[fs[0]], normals[fs[1]])))
            if cos < cos_thresh:
                out.append(e)
    return np.array(sorted(out), dtype=np.int64).reshape(-1, 2)


def _near_edge_mask(samples: SurfaceSamples, mesh: IndexedMesh,
                    edges: np.ndarray, eps: float):
    """Samples on a sharp-edge face or within eps of a sharp edge segment."""
    if len(edges) == 0:
        return np.zeros(len(samples.points), dtype=bool)
    sharp_faces = set()
    face_edge_sets = [set(((f[0], f[1]), (f[0], f[2]), (f[1], f[2])))
                      for f in mesh.faces.tolist()]
    edge_set = {tuple(e) for e in edges.tolist()}
    for fi, es in enumerate(face_edge_sets):
        if es & edge_set:
            sharp_faces.add(fi)
    mask = np.isin(samples.face_indices, sorted(sharp_faces))
    far = ~mask
    if np.any(far):
        d = _distance_to_segments(samples.points[far], mesh.vertices[edges])
        mask[np.nonzero(far)[0][d < eps]] = True
    return mask


def _distance_to_segments(points: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Min distance from each point to any segment; segments (E, 2, 3)."""
    a, b = segments[:, 0], segments[:, 1]
    ab = b - a
    ab2 = np.einsum("ij,ij->i", ab, ab)
    ab2 = np.where(ab2 > 0, ab2, 1.0)
    best = np.full(len(points), np.inf)
    for start in range(0, len(points), 1024):
        p = points[start:start + 1024]
        ap = p[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("pej,ej->pe", ap, ab) / ab2, 0.0, 1.0)
        closest = a[None] + t[..., None] * ab[None]
        d = np.linalg.norm(p[:, None, :] - closest, axis=2).min(axis=1)
        best[start:start + 1024] = d
    return best


def edge_metrics(gt_mesh: IndexedMesh, recon_mesh: IndexedMesh,
                 dihedral_threshold_deg: float = DEFAULT_DIHEDRAL_DEG,
                 eps: float = DEFAULT_F1_EPS, n_points: int = 100000,
                 seed: int = 0):
    """(ECD1, EF1): Chamfer / F-score restricted to near-edge sample points.

    If both meshes have no edge points the pair is trivially consistent
    (ECD1 = 0, EF1 = 1); if exactly one side is empty the result is the
    worst case (ECD1 = inf, EF1 = 0). Both meshes are sampled with the same
    seed, so identical meshes compare as exactly identical point sets.
    """
    gt_s = sample_surface(gt_mesh, n_points, seed)
    rec_s = sample_surface(recon_mesh, n_points, seed)
    gt_pts = gt_s.points[_near_edge_mask(gt_s, gt_mesh,
                                         sharp_edges(gt_mesh, dihedral_threshold_deg), eps)]
    rec_pts = rec_s.points[_near_edge_mask(rec_s, recon_mesh,
                                           sharp_edges(recon_mesh, dihedral_threshold_deg), eps)]
    if len(gt_pts) == 0 and len(rec_pts) == 0:
        return 0.0, 1.0
    if len(gt_pts) == 0 or len(rec_pts) == 0:
        return float("inf"), 0.0
    ecd1, _ = chamfer(gt_pts, rec_pts)
    ef1, _, _ = f_score(gt_pts, rec_pts, eps)
    return ecd1, ef1


# -- detection-accuracy report -------------------------------------------------

def max_interior_angles(mesh: IndexedMesh) -> np.ndarray:
    """Largest interior angle of each face, in degrees."""
    corners = mesh.face_corners()
    angles = np.empty((mesh.n_faces, 3))
    for i in range(3):
        a = corners[:, i]
        b = corners[:, (i + 1) % 3]
        c = corners[:, (i + 2) % 3]
        u, v = b - a, c - a
        cos = np.einsum("ij,ij->i", u, v) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        angles[:, i] = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return angles.max(axis=1)


def angle_accuracy_report(gt_mesh: IndexedMesh, recon_mesh: IndexedMesh,
                          bin_width_deg: float = 10.0):
    """Detection accuracy binned by each GT face's maximum interior angle.

    Both meshes must index the same vertex set (the recon is a triangulation
    of the GT's vertices). Returns a list of dicts with bin bounds, GT count,
    recovered count, and accuracy.
    """
    if bin_width_deg <= 0:
        raise ValueError("bin width must be positive")
    angles = max_interior_angles(gt_mesh)
    recon_set = recon_mesh.face_set()
    hit = np.array([tuple(f) in recon_set for f in gt_mesh.faces.tolist()])
    n_bins = int(math.ceil(180.0 / bin_width_deg))
    report = []
    for b in range(n_bins):
        lo, hi = b * bin_width_deg, (b + 1) * bin_width_deg
        in_bin = (angles >= lo) & (angles < hi) if b < n_bins - 1 else \
            (angles >= lo) & (angles <= hi)
        total = int(in_bin.sum())
        correct = int(hit[in_bin].sum())
        report.append({"lo": lo, "hi": min(hi, 180.0), "gt": total,
                       "recovered": correct,
                       "accuracy": correct / total if total else None})
    return report
