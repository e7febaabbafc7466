"""Triangle recovery from detected circumcenters.

A triangle's three vertices are equidistant from its circumcenter. Given a
detected center X near a patch center p, the two neighbors whose distance to
X is closest to |p - X| complete the triangle. All distances are evaluated in
original model coordinates (centers are un-normalized before recovery).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Patch, PointCloud


@dataclass(frozen=True)
class DetectedCenter:
    """One detected circumcenter in model coordinates."""

    position: np.ndarray
    confidence: float
    source_point: int

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class RecoveredTriangle:
    """A canonical triangle with its recovery provenance."""

    indices: tuple
    confidence: float   # max over proposing detections
    multiplicity: int   # distinct source points that proposed it (1..3)


def recover_triangle(p_idx: int, center, patch: Patch,
                     cloud: PointCloud) -> tuple:
    """Recover the canonical vertex triplet for one detected center.

    Selects the two neighbors with the smallest |d(q_k) - d(p)|; ties are
    broken by ascending point index. Always returns a triplet; filtering bad
    detections is the detector's job, not recovery's. `center` may be a
    DetectedCenter or a bare position.
    """
    pos = np.asarray(getattr(center, "position", center), dtype=np.float64)
    p = cloud.points[p_idx]
    d_p = np.linalg.norm(p - pos)
    d_q = np.linalg.norm(cloud.points[patch.neighbor_indices] - pos, axis=1)
    delta = np.abs(d_q - d_p)
    order = np.lexsort((patch.neighbor_indices, delta))
    u = int(patch.neighbor_indices[order[0]])
    v = int(patch.neighbor_indices[order[1]])
    return tuple(sorted((p_idx, u, v)))


def recover_triangle_local(center_index: int, local_position,
                           neighbor_indices, normalized_neighbors) -> tuple:
    """`recover_triangle` in a patch's normalized frame (center at origin).

    The uniform patch scaling preserves distance ordering, so this selects
    the same triangle as model-frame recovery; it lets serialized samples be
    scored without the original cloud.
    """
    pos = np.asarray(local_position, dtype=np.float64)
    d_p = np.linalg.norm(pos)
    d_q = np.linalg.norm(np.asarray(normalized_neighbors) - pos, axis=1)
    delta = np.abs(d_q - d_p)
    neighbor_indices = np.asarray(neighbor_indices, dtype=np.int64)
    order = np.lexsort((neighbor_indices, delta))
    u = int(neighbor_indices[order[0]])
    v = int(neighbor_indices[order[1]])
    return tuple(sorted((center_index, u, v)))


def recover_all(detections, cloud: PointCloud, patches,
                conf_threshold: float = 0.5):
    """Union of triangles recovered from all detections above the threshold.

    Args:
        detections: iterable of DetectedCenter (any order).
        patches: per-point patches, indexable by source point index.
        conf_threshold: minimum confidence for a detection to participate.

    Returns:
        list of RecoveredTriangle, deduplicated by canonical triplet and
        sorted by triplet, so the result is independent of detection order.
    """
    if not 0.0 <= conf_threshold <= 1.0:
        raise ValueError("conf_threshold must be in [0, 1]")
    best: dict = {}
    sources: dict = {}
    for det in detections:
        if det.confidence < conf_threshold:
            continue
        tri = recover_triangle(det.source_point, det.position,
                               patches[det.source_point], cloud)
        prev = best.get(tri)
        if prev is None or det.confidence > prev:
            best[tri] = det.confidence
        sources.setdefault(tri, set()).add(det.source_point)
    return [RecoveredTriangle(indices=tri, confidence=best[tri],
                              multiplicity=len(sources[tri]))
            for tri in sorted(best)]
