"""Geometric primitives: point clouds, KNN patches, spherical coordinates, circumcenters.

Conventions used throughout the package:
  * positions are float64 arrays of shape (3,) or (N, 3)
  * spherical coordinates are (rho, theta, phi) with rho >= 0,
    theta in (-pi, pi] (azimuth, atan2(y, x)) and
    phi in [-pi/2, pi/2] (inclination, asin(z / rho))
  * neighbor lists are sorted by distance, ties broken by ascending index
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegeneratePatch, DegenerateTriangle, DuplicatePoints

DEGENERATE_AREA_TOL = 1e-12


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of distinct 3D points.

    The triangulation pipeline preserves these points exactly; vertices are
    never interpolated or moved.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        if pts.shape[0] < 4:
            raise ValueError(f"need at least 4 points, got {pts.shape[0]}")
        dup = _find_duplicates(pts)
        if dup:
            raise DuplicatePoints(dup)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


def _find_duplicates(pts):
    """Return index pairs of exactly coincident rows (empty list if none)."""
    order = np.lexsort(pts.T)
    eq = np.all(pts[order[1:]] == pts[order[:-1]], axis=1)
    where = np.nonzero(eq)[0]
    return [(int(min(order[i], order[i + 1])), int(max(order[i], order[i + 1])))
            for i in where]


class KnnIndex:
    """Exact k-nearest-neighbor index over a set of points.

    Backed by a k-d tree; results are made deterministic by re-sorting
    candidates on (squared distance, index), so equidistant neighbors are
    returned in ascending index order. Safe for concurrent read-only queries.
    Accepts a PointCloud or a bare (N, 3) array.
    """

    def __init__(self, points):
        if isinstance(points, PointCloud):
            points = points.points
        self.points = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
        self._tree = cKDTree(self.points)

    def query_point(self, position, k: int, exclude: int = -1):
        """k nearest neighbors of an arbitrary position.

        Args:
            position: query location, shape (3,).
            k: number of neighbors.
            exclude: index to leave out of the result (-1 for none).

        Returns:
            (indices, distances) both of length k, sorted by distance with
            index tie-breaking.
        """
        pts = self.points
        n_avail = len(pts) - (1 if exclude >= 0 else 0)
        if k > n_avail:
            raise ValueError(f"k={k} exceeds available points {n_avail}")
        position = np.asarray(position, dtype=np.float64)
        fetch = min(len(pts), k + (2 if exclude >= 0 else 1))
        while True:
            _, idx = self._tree.query(position, k=fetch)
            idx = np.atleast_1d(idx)
            if exclude >= 0:
                idx = idx[idx != exclude]
            d2 = np.einsum("ij,ij->i", pts[idx] - position, pts[idx] - position)
            order = np.lexsort((idx, d2))
            idx, d2 = idx[order], d2[order]
            # A tie at the cut boundary may hide lower-index candidates just
            # outside the fetched set; widen until the boundary is strict.
            if len(idx) >= k and (fetch == len(pts) or len(idx) == k
                                  or d2[k - 1] < d2[k]):
                return idx[:k].copy(), np.sqrt(d2[:k])
            fetch = min(len(pts), fetch * 2)

    def query_index(self, point_idx: int, k: int):
        """k nearest neighbors of indexed point `point_idx`, excluding itself."""
        return self.query_point(self.points[point_idx], k, exclude=point_idx)

    def neighbors_for_all(self, k: int):
        """Neighbor indices for every indexed point at once, self excluded.

        Returns an (N, k) int array; rows follow the same (distance, index)
        ordering as `query_index`.
        """
        pts = self.points
        n = len(pts)
        if k + 1 > n:
            raise ValueError(f"k={k} exceeds available points {n - 1}")
        dist, idx = self._tree.query(pts, k=k + 1)
        out = np.empty((n, k), dtype=np.int64)
        for i in range(n):
            row = idx[i][idx[i] != i]
            if len(row) != k or (k + 1 < n and dist[i][-1] == dist[i][-2]):
                row, _ = self.query_index(i, k)
            else:
                d2 = np.einsum("ij,ij->i", pts[row] - pts[i], pts[row] - pts[i])
                row = row[np.lexsort((row, d2))]
            out[i] = row[:k]
        return out


def build_knn_index(cloud: PointCloud) -> KnnIndex:
    """Build the spatial index used for patch extraction."""
    return KnnIndex(cloud)


@dataclass(frozen=True)
class Patch:
    """A point with its K nearest neighbors in the normalized local frame.

    `normalized_neighbors[k] = scale * (points[neighbor_indices[k]] - center)`
    where `scale = eta0 / nn_distance`, so the nearest neighbor sits at
    distance exactly eta0 regardless of the sampling density around the point.
    """

    center: np.ndarray
    center_index: int
    neighbor_indices: np.ndarray
    normalized_neighbors: np.ndarray
    scale: float
    nn_distance: float
    eta0: float

    @property
    def k(self) -> int:
        return len(self.neighbor_indices)

    def to_local(self, positions):
        """Map positions from model coordinates into the normalized frame."""
        return (np.asarray(positions, dtype=np.float64) - self.center) * self.scale

    def to_model(self, local_positions):
        """Inverse of `to_local`."""
        return np.asarray(local_positions, dtype=np.float64) / self.scale + self.center


def extract_patch(cloud: PointCloud, index: KnnIndex, point_idx: int,
                  k: int, eta0: float) -> Patch:
    """Extract and normalize the KNN patch around one cloud point.

    Raises:
        DegeneratePatch: if the nearest-neighbor distance is zero (a
            duplicate point survived load).
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    if eta0 <= 0:
        raise ValueError("eta0 must be positive")
    nbr_idx, nbr_dist = index.query_index(point_idx, k)
    return _assemble_patch(cloud, point_idx, nbr_idx, nbr_dist[0], eta0)


def _assemble_patch(cloud, point_idx, nbr_idx, d0, eta0):
    if d0 == 0.0:
        raise DegeneratePatch(f"point {point_idx} has a coincident neighbor")
    center = cloud.points[point_idx]
    scale = eta0 / d0
    normalized = (cloud.points[nbr_idx] - center) * scale
    return Patch(center=center, center_index=int(point_idx),
                 neighbor_indices=np.asarray(nbr_idx, dtype=np.int64),
                 normalized_neighbors=normalized,
                 scale=float(scale), nn_distance=float(d0), eta0=float(eta0))


def extract_all_patches(cloud: PointCloud, index: KnnIndex, k: int, eta0: float):
    """Patches for every cloud point (order follows the cloud)."""
    nbrs = index.neighbors_for_all(k)
    patches = []
    for i in range(len(cloud)):
        d0 = float(np.linalg.norm(cloud.points[nbrs[i, 0]] - cloud.points[i]))
        patches.append(_assemble_patch(cloud, i, nbrs[i], d0, eta0))
    return patches


@dataclass(frozen=True)
class Spherical:
    """Spherical coordinates (rho, theta, phi); see module docstring for ranges."""

    rho: float
    theta: float
    phi: float

    def as_array(self):
        return np.array([self.rho, self.theta, self.phi], dtype=np.float64)


def to_spherical(v) -> Spherical:
    """Convert a 3D vector to spherical coordinates.

    theta = atan2(y, x) mapped onto (-pi, pi]; phi = asin(z / rho).
    The zero vector and the poles use theta = 0 by convention.
    """
    arr = to_spherical_array(np.asarray(v, dtype=np.float64).reshape(1, 3))[0]
    return Spherical(float(arr[0]), float(arr[1]), float(arr[2]))


def from_spherical(s) -> np.ndarray:
    """Inverse of `to_spherical`; accepts a Spherical or an (rho, theta, phi) triple."""
    if isinstance(s, Spherical):
        arr = s.as_array()
    else:
        arr = np.asarray(s, dtype=np.float64)
    return from_spherical_array(arr.reshape(1, 3))[0]


def to_spherical_array(v: np.ndarray) -> np.ndarray:
    """Vectorized `to_spherical`: (N, 3) xyz -> (N, 3) columns (rho, theta, phi)."""
    v = np.asarray(v, dtype=np.float64)
    rho = np.linalg.norm(v, axis=-1)
    theta = np.arctan2(v[..., 1], v[..., 0])
    # atan2 yields -pi for (x < 0, y = -0.0); fold onto the (-pi, pi] range
    theta = np.where(theta == -np.pi, np.pi, theta)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(rho > 0, v[..., 2] / np.where(rho > 0, rho, 1.0), 0.0)
    phi = np.arcsin(np.clip(ratio, -1.0, 1.0))
    theta = np.where(rho == 0, 0.0, theta)
    return np.stack([rho, theta, phi], axis=-1)


def from_spherical_array(s: np.ndarray) -> np.ndarray:
    """Vectorized `from_spherical`: (N, 3) (rho, theta, phi) -> (N, 3) xyz."""
    s = np.asarray(s, dtype=np.float64)
    rho, theta, phi = s[..., 0], s[..., 1], s[..., 2]
    cp = np.cos(phi)
    return np.stack([rho * cp * np.cos(theta),
                     rho * cp * np.sin(theta),
                     rho * np.sin(phi)], axis=-1)


def circumcenter(a, b, c) -> np.ndarray:
    """Circumcenter of the triangle (a, b, c) in 3D.

    The returned point lies in the triangle's plane and is equidistant from
    the three vertices (the defining property used for triangle recovery).

    Raises:
        DegenerateTriangle: if the triangle is numerically collinear
            (normalized area below 1e-12).
    """
    out = circumcenters(np.asarray(a, dtype=np.float64).reshape(1, 3),
                        np.asarray(b, dtype=np.float64).reshape(1, 3),
                        np.asarray(c, dtype=np.float64).reshape(1, 3))
    return out[0]


def circumcenters(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Vectorized circumcenters for stacked triangles of shape (N, 3).

    Uses the barycentric closed form

        X = alpha*a + beta*b + gamma*c,
        alpha = |b-c|^2 ((a-b).(a-c)) / (2 |(a-b) x (b-c)|^2),  etc.

    which solves the perpendicular-bisector system in the triangle's plane.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    ab, ac, bc = a - b, a - c, b - c
    cross = np.cross(ab, bc)
    denom = 2.0 * np.einsum("...i,...i->...", cross, cross)

    e2 = np.stack([np.einsum("...i,...i->...", bc, bc),
                   np.einsum("...i,...i->...", ac, ac),
                   np.einsum("...i,...i->...", ab, ab)], axis=-1)
    longest2 = np.max(e2, axis=-1)
    area2 = np.sqrt(np.einsum("...i,...i->...", cross, cross))  # 2x area
    degenerate = np.where(longest2 > 0, area2 / np.where(longest2 > 0, longest2, 1.0), 0.0)
    if np.any(degenerate < DEGENERATE_AREA_TOL):
        bad = int(np.argmin(degenerate))
        raise DegenerateTriangle(
            f"triangle {bad} is collinear (normalized area {degenerate.flat[bad]:.3e})")

    alpha = e2[..., 0] * np.einsum("...i,...i->...", ab, ac) / denom
    beta = e2[..., 1] * np.einsum("...i,...i->...", -ab, bc) / denom
    gamma = e2[..., 2] * np.einsum("...i,...i->...", -ac, -bc) / denom
    return (alpha[..., None] * a + beta[..., None] * b + gamma[..., None] * c)


def circumradii(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Circumradii of stacked triangles (distance from vertex to circumcenter)."""
    x = circumcenters(a, b, c)
    return np.linalg.norm(np.asarray(a, dtype=np.float64) - x, axis=-1)
