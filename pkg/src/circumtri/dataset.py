"""Training-label generation from reference meshes.

For each mesh vertex p, the ground truth is the set of circumcenters of p's
incident faces, expressed in the eta0-normalized local frame of p's KNN
patch, converted to spherical coordinates, matched to anchor cells and
encoded as step-normalized offsets. Labels whose face is not fully inside
the patch's K neighbors, or whose circumcenter falls outside the radial
anchor range, are dropped and counted.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .anchors import AnchorGrid, build_grid
from .geometry import (KnnIndex, Patch, PointCloud, circumcenters,
                       extract_patch, to_spherical_array)
from .mesh import IndexedMesh, vertex_face_map

RECORD_MAGIC = b"CTRS"
RECORD_VERSION = 1


# -- mesh preparation -------------------------------------------------------

def normalize_mesh(mesh: IndexedMesh) -> IndexedMesh:
    """Translate the vertex centroid to the origin and scale so max |v| = 1."""
    v = mesh.vertices
    centered = v - v.mean(axis=0)
    extent = np.linalg.norm(centered, axis=1).max()
    if extent == 0:
        raise ValueError("mesh has zero extent")
    return IndexedMesh(centered / extent, mesh.faces)


def voxel_decimate(mesh: IndexedMesh, voxel: float) -> IndexedMesh:
    """Vertex-clustering decimation on a uniform voxel grid.

    Vertices sharing a voxel merge to their mean; faces are reindexed and
    those collapsing to fewer than 3 distinct vertices are dropped.
    """
    if voxel <= 0:
        raise ValueError("voxel must be positive")
    origin = mesh.vertices.min(axis=0)
    keys = np.floor((mesh.vertices - origin) / voxel).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    n_clusters = len(uniq)
    sums = np.zeros((n_clusters, 3))
    counts = np.zeros(n_clusters)
    np.add.at(sums, inverse, mesh.vertices)
    np.add.at(counts, inverse, 1.0)
    new_verts = sums / counts[:, None]

    remapped = inverse[mesh.faces]
    keep = ((remapped[:, 0] != remapped[:, 1]) &
            (remapped[:, 0] != remapped[:, 2]) &
            (remapped[:, 1] != remapped[:, 2]))
    return IndexedMesh(new_verts, remapped[keep])


def adjacent_triangles(mesh: IndexedMesh, vertex: int) -> np.ndarray:
    """All faces incident to `vertex` (its 1-ring faces), canonical order."""
    if not 0 <= vertex < mesh.n_vertices:
        raise IndexError(f"vertex {vertex} out of range")
    mask = np.any(mesh.faces == vertex, axis=1)
    return mesh.faces[mask]


# -- samples ------------------------------------------------------------------

@dataclass(frozen=True)
class TrainingSample:
    """One patch with its positive anchor cells and ground-truth offsets.

    positive_cells maps flat cell index -> (tau, 3) offset array, rows sorted
    by (rho, theta, phi). Every cell of the grid not listed is a negative.
    dropped_count tallies ground-truth circumcenters that were out of anchor
    range or whose face was not covered by the patch's K neighbors.
    """

    patch: Patch
    positive_cells: dict
    dropped_count: int
    gt_faces: np.ndarray = field(default=None)


def make_sample(mesh: IndexedMesh, vertex: int, grid: AnchorGrid,
                k: int, eta0: float, index: KnnIndex | None = None,
                cloud: PointCloud | None = None,
                patch: Patch | None = None) -> TrainingSample:
    """Build the training sample for one mesh vertex.

    The mesh's vertices double as the point cloud. Pass `index`/`cloud` (and
    optionally a precomputed `patch`) when generating many samples from the
    same mesh to avoid rebuilding the KNN structure.
    """
    if cloud is None:
        cloud = PointCloud(mesh.vertices)
    if index is None:
        index = KnnIndex(cloud)
    if patch is None:
        patch = extract_patch(cloud, index, vertex, k, eta0)

    faces = adjacent_triangles(mesh, vertex)
    dropped = 0
    kept_centers = []
    kept_faces = []
    if len(faces):
        neighbor_set = set(patch.neighbor_indices.tolist())
        neighbor_set.add(vertex)
        corners = mesh.vertices[faces]
        centers = circumcenters(corners[:, 0], corners[:, 1], corners[:, 2])
        for f, x in zip(faces, centers):
            if not all(v in neighbor_set for v in f.tolist()):
                dropped += 1
                continue
            kept_centers.append(x)
            kept_faces.append(f)

    positive: dict = {}
    if kept_centers:
        local = patch.to_local(np.asarray(kept_centers))
        sph = to_spherical_array(local)
        cells, in_range = grid.match_cells(sph)
        final_faces = []
        per_cell: dict = {}
        for row, (cell, ok, s) in enumerate(zip(cells, in_range, sph)):
            if not ok:
                dropped += 1
                continue
            flat = grid.flat_index(tuple(cell))
            per_cell.setdefault(flat, []).append(grid.encode_offsets(tuple(cell), s))
            final_faces.append(kept_faces[row])
        for flat, offs in per_cell.items():
            offs = np.asarray(offs)
            order = np.lexsort((offs[:, 2], offs[:, 1], offs[:, 0]))
            positive[flat] = offs[order]
        kept_faces = final_faces

    gt = np.asarray(kept_faces, dtype=np.int64).reshape(-1, 3)
    return TrainingSample(patch=patch, positive_cells=positive,
                          dropped_count=dropped, gt_faces=gt)


def mesh_samples(mesh: IndexedMesh, grid: AnchorGrid, k: int, eta0: float,
                 vertices=None):
    """Samples for many vertices of one mesh, sharing a single KNN index."""
    cloud = PointCloud(mesh.vertices)
    index = KnnIndex(cloud)
    if vertices is None:
        vertices = range(mesh.n_vertices)
    return [make_sample(mesh, v, grid, k, eta0, index=index, cloud=cloud)
            for v in vertices]


# -- augmentation -----------------------------------------------------------

def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix (quaternion method)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def mean_nn_distance(vertices: np.ndarray) -> float:
    """Mean distance from each vertex to its nearest other vertex."""
    from scipy.spatial import cKDTree
    d, _ = cKDTree(vertices).query(vertices, k=2)
    return float(d[:, 1].mean())


def augment(mesh: IndexedMesh, seed: int, scale_range=(0.5, 2.0),
            rotate: bool = True, noise_sigma: float = 0.0) -> IndexedMesh:
    """Random scale, rotation and vertex jitter; deterministic given seed.

    noise_sigma is expressed in multiples of the mesh's mean nearest-neighbor
    distance, so the perturbation level is density-relative.
    """
    rng = np.random.default_rng(seed)
    v = mesh.vertices.copy()
    lo, hi = scale_range
    s = lo if lo == hi else rng.uniform(lo, hi)
    v = v * s
    if rotate:
        v = v @ random_rotation(rng).T
    if noise_sigma > 0:
        sigma = noise_sigma * mean_nn_distance(v)
        v = v + rng.normal(scale=sigma, size=v.shape)
    return IndexedMesh(v, mesh.faces)


# -- record stream -------------------------------------------------------------
#
# Binary layout (little-endian):
#   header:  magic "CTRS" | u32 version | u32 k |
#            f64 delta_rho | f64 delta_theta | f64 delta_phi | f64 R | f64 eta0 |
#            u64 sample count
#   record:  u32 center index | u32*k neighbor indices | f32*3k normalized xyz |
#            u32 dropped count | u32 n_cells |
#            per cell: u32 flat cell index | u32 tau | f32*3tau offsets

def write_samples(path, samples, k: int, grid: AnchorGrid, eta0: float):
    """Serialize training samples to the binary record stream."""
    with open(path, "wb") as fh:
        fh.write(RECORD_MAGIC)
        fh.write(struct.pack("<II", RECORD_VERSION, k))
        fh.write(struct.pack("<5d", grid.delta_rho, grid.delta_theta,
                             grid.delta_phi, grid.r_max, eta0))
        fh.write(struct.pack("<Q", len(samples)))
        for s in samples:
            if s.patch.k != k:
                raise ValueError("sample k does not match stream header")
            fh.write(struct.pack("<I", s.patch.center_index))
            fh.write(s.patch.neighbor_indices.astype("<u4").tobytes())
            fh.write(s.patch.normalized_neighbors.astype("<f4").tobytes())
            fh.write(struct.pack("<II", s.dropped_count, len(s.positive_cells)))
            for flat in sorted(s.positive_cells):
                offs = s.positive_cells[flat]
                fh.write(struct.pack("<II", flat, len(offs)))
                fh.write(np.asarray(offs).astype("<f4").tobytes())


@dataclass(frozen=True)
class SampleRecord:
    """One deserialized training record (positions only, no cloud handle)."""

    center_index: int
    neighbor_indices: np.ndarray
    normalized_neighbors: np.ndarray
    dropped_count: int
    positive_cells: dict


def read_samples(path):
    """Read a record stream; returns (records, k, grid, eta0)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != RECORD_MAGIC:
            raise ValueError(f"{path}: not a training record stream")
        version, k = struct.unpack("<II", fh.read(8))
        if version != RECORD_VERSION:
            raise ValueError(f"{path}: unsupported record version {version}")
        d_rho, d_theta, d_phi, r_max, eta0 = struct.unpack("<5d", fh.read(40))
        grid = build_grid(d_rho, d_theta, d_phi, r_max)
        (count,) = struct.unpack("<Q", fh.read(8))
        records = []
        for _ in range(count):
            (center,) = struct.unpack("<I", fh.read(4))
            nbr = np.frombuffer(fh.read(4 * k), dtype="<u4").astype(np.int64)
            pos = np.frombuffer(fh.read(12 * k), dtype="<f4").astype(np.float64)
            dropped, n_cells = struct.unpack("<II", fh.read(8))
            cells = {}
            for _ in range(n_cells):
                flat, tau = struct.unpack("<II", fh.read(8))
                offs = np.frombuffer(fh.read(12 * tau), dtype="<f4")
                cells[flat] = offs.astype(np.float64).reshape(tau, 3)
            records.append(SampleRecord(center_index=center,
                                        neighbor_indices=nbr,
                                        normalized_neighbors=pos.reshape(k, 3),
                                        dropped_count=dropped,
                                        positive_cells=cells))
    return records, k, grid, eta0
