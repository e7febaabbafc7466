"""Indexed triangle meshes with canonical faces.

A face is stored as a sorted index triplet (i < j < k), so each unordered
triangle has exactly one representation and face sets compare by value.
Winding/orientation is deliberately not tracked: triangulated outputs have no
globally consistent orientation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def canonical_faces(faces) -> np.ndarray:
    """Sort each face's indices ascending and drop duplicate faces.

    Output rows are sorted lexicographically, making face arrays directly
    comparable regardless of input order.
    """
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if faces.size == 0:
        return faces.reshape(0, 3)
    faces = np.sort(faces, axis=1)
    if np.any(faces[:, 0] == faces[:, 1]) or np.any(faces[:, 1] == faces[:, 2]):
        bad = np.nonzero((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]))[0]
        raise ValueError(f"face {bad[0]} has repeated vertex indices")
    return np.unique(faces, axis=0)


@dataclass(frozen=True)
class IndexedMesh:
    """Vertices plus canonical triangle faces."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        verts = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise ValueError(f"vertices must have shape (N, 3), got {verts.shape}")
        faces = canonical_faces(self.faces)
        if faces.size and (faces.min() < 0 or faces.max() >= len(verts)):
            raise ValueError("face index out of range")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def face_set(self):
        return {tuple(f) for f in self.faces.tolist()}

    def face_corners(self):
        """Corner positions of all faces, shape (F, 3, 3)."""
        return self.vertices[self.faces]


def mesh_edges(faces: np.ndarray) -> np.ndarray:
    """Unique undirected edges (i < j) of a canonical face array, shape (E, 2)."""
    faces = np.asarray(faces, dtype=np.int64)
    if faces.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [0, 2]], faces[:, [1, 2]]])
    return np.unique(e, axis=0)


def edge_face_counts(faces: np.ndarray):
    """Map undirected edge -> number of incident faces.

    Returns (edges (E, 2), counts (E,)). Canonical faces already have each
    edge as (low, high).
    """
    faces = np.asarray(faces, dtype=np.int64)
    if faces.size == 0:
        return np.empty((0, 2), dtype=np.int64), np.empty((0,), dtype=np.int64)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [0, 2]], faces[:, [1, 2]]])
    edges, counts = np.unique(e, axis=0, return_counts=True)
    return edges, counts


def vertex_face_map(faces: np.ndarray, n_vertices: int):
    """List of incident face indices per vertex."""
    v2f = [[] for _ in range(n_vertices)]
    for fi, f in enumerate(np.asarray(faces, dtype=np.int64)):
        for v in f:
            v2f[v].append(fi)
    return v2f
