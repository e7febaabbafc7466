"""Synthetic test meshes: grid planes, icospheres, cylinders, random sheets.

These generators back the oracle round-trip checks and the desk-scale
training experiments; they are small, deterministic per seed, and produce
edge-manifold meshes whose circumcenters are well within the default anchor
range.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import Delaunay

from .geometry import circumradii
from .mesh import IndexedMesh


def grid_plane(nx: int = 5, ny: int = 5, spacing: float = 1.0,
               jitter: float = 0.0, seed: int = 0) -> IndexedMesh:
    """A triangulated rectangular grid in the z=0 plane.

    Each quad is split along the same diagonal, giving 2*(nx-1)*(ny-1) faces.
    `jitter` displaces vertices uniformly in [-jitter, jitter] * spacing along
    x and y (z stays 0), keeping the triangulation valid for jitter < ~0.3.
    """
    xs, ys = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    verts = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(nx * ny)]).astype(np.float64)
    verts *= spacing
    if jitter > 0:
        rng = np.random.default_rng(seed)
        verts[:, :2] += rng.uniform(-jitter, jitter, size=(nx * ny, 2)) * spacing
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            faces.append((a, b, a + 1))
            faces.append((b, b + 1, a + 1))
    return IndexedMesh(verts, np.array(faces))


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> IndexedMesh:
    """An icosahedron subdivided `subdivisions` times, vertices on the sphere."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = verts.tolist()
    for _ in range(subdivisions):
        midpoint = {}

        def midpoint_index(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoint:
                m = np.array(verts[i]) + np.array(verts[j])
                m /= np.linalg.norm(m)
                midpoint[key] = len(verts)
                verts.append(m.tolist())
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab = midpoint_index(a, b)
            bc = midpoint_index(b, c)
            ca = midpoint_index(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return IndexedMesh(np.asarray(verts) * radius, np.array(faces))


def open_cylinder(n_around: int = 16, n_along: int = 6, radius: float = 1.0,
                  height: float = 2.0) -> IndexedMesh:
    """An uncapped cylinder tube; its two rims are genuine boundary loops."""
    angles = np.linspace(0, 2 * np.pi, n_around, endpoint=False)
    zs = np.linspace(-height / 2, height / 2, n_along)
    verts = []
    for z in zs:
        for a in angles:
            verts.append((radius * np.cos(a), radius * np.sin(a), z))
    faces = []
    for row in range(n_along - 1):
        for i in range(n_around):
            a = row * n_around + i
            b = row * n_around + (i + 1) % n_around
            c = (row + 1) * n_around + i
            d = (row + 1) * n_around + (i + 1) % n_around
            faces.append((a, b, c))
            faces.append((b, d, c))
    return IndexedMesh(np.asarray(verts), np.array(faces))


def wavy_delaunay_sheet(n_side: int = 9, seed: int = 0, jitter: float = 0.25,
                        amplitude: float = 0.15,
                        max_circumradius: float = 1.5) -> IndexedMesh:
    """A Delaunay-triangulated jittered grid lifted by a smooth height field.

    Hull slivers (near-collinear boundary faces with huge circumcircles) are
    pruned, alpha-shape style, so every kept face has a circumradius small
    relative to the unit point spacing and the sheet satisfies the coverage
    assumptions of oracle recovery at the default anchor range.
    """
    rng = np.random.default_rng(seed)
    xs, ys = np.meshgrid(np.arange(n_side, dtype=np.float64),
                         np.arange(n_side, dtype=np.float64), indexing="ij")
    pts2 = np.column_stack([xs.ravel(), ys.ravel()])
    pts2 += rng.uniform(-jitter, jitter, size=pts2.shape)
    tri = Delaunay(pts2)
    z = amplitude * n_side * (
        np.sin(2 * np.pi * pts2[:, 0] / n_side) * np.cos(2 * np.pi * pts2[:, 1] / n_side))
    verts = np.column_stack([pts2, z])
    corners = verts[tri.simplices]
    radii = circumradii(corners[:, 0], corners[:, 1], corners[:, 2])
    return IndexedMesh(verts, tri.simplices[radii <= max_circumradius])
