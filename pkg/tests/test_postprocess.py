import numpy as np
import pytest

from circumtri.mesh import IndexedMesh
from circumtri.postprocess import (boundary_loops, enforce_edge_manifold,
                                   fill_small_holes, is_edge_manifold,
                                   non_manifold_edge_fraction)
from circumtri.synthetic import grid_plane, icosphere, open_cylinder


def edge_scan(mesh):
    """Independent full scan: edge -> incident face count."""
    counts = {}
    for f in mesh.faces.tolist():
        a, b, c = f
        for e in ((a, b), (a, c), (b, c)):
            counts[e] = counts.get(e, 0) + 1
    return counts


class TestEnforceEdgeManifold:
    def test_manifold_input_is_identity(self):
        mesh = icosphere(1)
        out = enforce_edge_manifold(mesh)
        assert out.face_set() == mesh.face_set()

    def test_three_faces_on_one_edge_keeps_top_two(self):
        verts = np.array([[0.0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, -1, 0],
                          [0.5, 0, 1]])
        faces = np.array([(0, 1, 2), (0, 1, 3), (0, 1, 4)])
        mesh = IndexedMesh(verts, faces)
        priorities = [(3, 0.9), (2, 0.9), (1, 0.9)]
        out = enforce_edge_manifold(mesh, priorities)
        assert out.face_set() == {(0, 1, 2), (0, 1, 3)}

    def test_priority_order_decides_survivors(self):
        verts = np.array([[0.0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, -1, 0],
                          [0.5, 0, 1]])
        faces = np.array([(0, 1, 2), (0, 1, 3), (0, 1, 4)])
        mesh = IndexedMesh(verts, faces)
        priorities = [(1, 0.1), (3, 0.9), (2, 0.5)]
        out = enforce_edge_manifold(mesh, priorities)
        assert out.face_set() == {(0, 1, 3), (0, 1, 4)}

    def test_random_overcomplete_meshes_become_manifold(self):
        rng = np.random.default_rng(0)
        for trial in range(8):
            n = 30
            verts = rng.normal(size=(n, 3))
            faces = set()
            while len(faces) < 90:
                tri = tuple(sorted(rng.choice(n, 3, replace=False).tolist()))
                faces.add(tri)
            mesh = IndexedMesh(verts, np.array(sorted(faces)))
            priorities = [(int(rng.integers(1, 4)), float(rng.random()))
                          for _ in range(mesh.n_faces)]
            out = enforce_edge_manifold(mesh, priorities)
            assert all(v <= 2 for v in edge_scan(out).values())
            assert out.face_set() <= mesh.face_set()

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        verts = rng.normal(size=(20, 3))
        faces = {tuple(sorted(rng.choice(20, 3, replace=False).tolist()))
                 for _ in range(60)}
        mesh = IndexedMesh(verts, np.array(sorted(faces)))
        once = enforce_edge_manifold(mesh)
        twice = enforce_edge_manifold(once)
        assert once.face_set() == twice.face_set()


class TestFillSmallHoles:
    def test_deleted_grid_face_restored(self):
        mesh = grid_plane(5, 5, jitter=0.05, seed=1)
        counts = edge_scan(mesh)
        interior_face = next(
            i for i, (a, b, c) in enumerate(mesh.faces.tolist())
            if all(counts[e] == 2 for e in ((a, b), (a, c), (b, c))))
        punctured = IndexedMesh(mesh.vertices,
                                np.delete(mesh.faces, interior_face, axis=0))
        healed = fill_small_holes(punctured, max_hole_edges=4)
        assert healed.face_set() == mesh.face_set()

    def test_open_cylinder_rims_preserved(self):
        mesh = open_cylinder(n_around=16, n_along=5)
        out = fill_small_holes(mesh, max_hole_edges=6)
        assert out.face_set() == mesh.face_set()
        loops = boundary_loops(out.faces)
        assert sorted(len(l) for l in loops) == [16, 16]

    def test_watertight_mesh_untouched(self):
        mesh = icosphere(2)
        out = fill_small_holes(mesh, max_hole_edges=10)
        assert out.face_set() == mesh.face_set()

    def test_never_removes_faces_and_stays_manifold(self):
        mesh = grid_plane(6, 6, jitter=0.1, seed=2)
        kept = np.array([f for i, f in enumerate(mesh.faces.tolist())
                         if i % 7 != 0])
        ragged = IndexedMesh(mesh.vertices, kept)
        ragged = enforce_edge_manifold(ragged)
        healed = fill_small_holes(ragged, max_hole_edges=4)
        assert ragged.face_set() <= healed.face_set()
        assert is_edge_manifold(healed)
        assert all(v <= 2 for v in edge_scan(healed).values())

    def test_idempotent(self):
        mesh = grid_plane(6, 6, jitter=0.1, seed=5)
        kept = np.array([f for i, f in enumerate(mesh.faces.tolist())
                         if i % 5 != 0])
        ragged = enforce_edge_manifold(IndexedMesh(mesh.vertices, kept))
        once = fill_small_holes(ragged, max_hole_edges=4)
        twice = fill_small_holes(once, max_hole_edges=4)
        assert once.face_set() == twice.face_set()

    def test_large_holes_preserved_with_small_limit(self):
        mesh = grid_plane(7, 7)
        # remove a 2x2 block of quads -> an 8-edge hole
        removed = []
        for i, f in enumerate(mesh.faces.tolist()):
            xs = [v // 7 for v in f]
            ys = [v % 7 for v in f]
            if all(2 <= x <= 4 for x in xs) and all(2 <= y <= 4 for y in ys):
                removed.append(i)
        holed = IndexedMesh(mesh.vertices, np.delete(mesh.faces, removed, axis=0))
        out = fill_small_holes(holed, max_hole_edges=4)
        assert out.face_set() == holed.face_set()


class TestScans:
    def test_non_manifold_fraction(self):
        verts = np.array([[0.0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, -1, 0],
                          [0.5, 0, 1]])
        faces = np.array([(0, 1, 2), (0, 1, 3), (0, 1, 4)])
        mesh = IndexedMesh(verts, faces)
        frac = non_manifold_edge_fraction(mesh)
        counts = edge_scan(mesh)
        assert frac == pytest.approx(
            sum(1 for v in counts.values() if v > 2) / len(counts))
        assert not is_edge_manifold(mesh)

    def test_boundary_loops_of_plane(self):
        mesh = grid_plane(4, 4)
        loops = boundary_loops(mesh.faces)
        assert len(loops) == 1
        assert len(loops[0]) == 12
