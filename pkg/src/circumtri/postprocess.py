"""Topology cleanup: edge-manifold enforcement and small-hole filling.

An edge-manifold mesh has at most two faces on every edge; edges with exactly
one face form the boundary. Enforcement inserts faces greedily in descending
priority, accepting a face only when none of its edges would exceed two
incident faces, so the invariant holds by construction. Hole filling closes
short boundary loops under the same constraint and leaves long boundaries
(open surfaces) untouched.
"""

from __future__ import annotations

import numpy as np

from .mesh import IndexedMesh, edge_face_counts


def non_manifold_edge_fraction(mesh: IndexedMesh) -> float:
    """Fraction of edges with more than two incident faces."""
    edges, counts = edge_face_counts(mesh.faces)
    if len(edges) == 0:
        return 0.0
    return float(np.mean(counts > 2))


def is_edge_manifold(mesh: IndexedMesh) -> bool:
    _, counts = edge_face_counts(mesh.faces)
    return bool(np.all(counts <= 2)) if len(counts) else True


def _face_edges(face):
    a, b, c = face
    return ((a, b), (a, c), (b, c))


def enforce_edge_manifold(mesh: IndexedMesh, priorities=None) -> IndexedMesh:
    """Keep a maximal prefix of faces, by priority, that stays edge-manifold.

    Args:
        mesh: primitive mesh (canonical faces).
        priorities: per-face sort keys, higher first (e.g. (multiplicity,
            confidence) from recovery). Ties, and the default when None,
            fall back to lexicographic face order.

    Already-manifold input is returned with all faces intact.
    """
    faces = [tuple(f) for f in mesh.faces.tolist()]
    if priorities is None:
        order = range(len(faces))
    else:
        if len(priorities) != len(faces):
            raise ValueError("priorities length must match face count")
        order = sorted(range(len(faces)),
                       key=lambda i: (tuple(-np.asarray(priorities[i], dtype=float)
                                            .reshape(-1)), faces[i]))
    edge_load: dict = {}
    kept = []
    for i in order:
        f = faces[i]
        es = _face_edges(f)
        if all(edge_load.get(e, 0) < 2 for e in es):
            for e in es:
                edge_load[e] = edge_load.get(e, 0) + 1
            kept.append(f)
    return IndexedMesh(mesh.vertices, np.array(kept, dtype=np.int64).reshape(-1, 3))


def boundary_loops(faces: np.ndarray):
    """Closed loops of boundary edges (edges with exactly one face).

    Returns a list of vertex cycles. Components where some vertex touches
    more than two boundary edges are skipped: their boundary is not a simple
    loop and filling it would be ambiguous.
    """
    edges, counts = edge_face_counts(faces)
    boundary = edges[counts == 1]
    adj: dict = {}
    for a, b in boundary.tolist():
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    visited = set()
    loops = []
    for start in sorted(adj):
        if start in visited or len(adj[start]) != 2:
            continue
        loop = [start]
        prev, cur = None, start
        ok = True
        while True:
            nxt = [v for v in adj[cur] if v != prev]
            if len(adj[cur]) != 2 or not nxt:
                ok = False
                break
            prev, cur = cur, nxt[0]
            if cur == start:
                break
            if cur in visited or len(adj[cur]) != 2:
                ok = False
                break
            loop.append(cur)
        visited.update(loop)
        if ok and len(loop) >= 3:
            loops.append(loop)
    return loops


def fill_small_holes(mesh: IndexedMesh, max_hole_edges: int = 4) -> IndexedMesh:
    """Close boundary loops of length <= max_hole_edges.

    Three boundary edges forming a triangle get the closing face (this also
    catches 3-holes whose vertices sit on another boundary, e.g. a deleted
    face at a mesh rim); longer simple loops up to the limit are
    fan-triangulated from their lowest-index vertex. Every insertion is
    checked against the two-faces-per-edge budget, and the pass repeats until
    no face can be added, so the operation is idempotent. Loops longer than
    the limit are genuine open boundaries and stay untouched.
    """
    faces = {tuple(f) for f in mesh.faces.tolist()}
    edge_load: dict = {}
    for f in faces:
        for e in _face_edges(f):
            edge_load[e] = edge_load.get(e, 0) + 1

    def try_add(tri):
        tri = tuple(sorted(tri))
        if len(set(tri)) != 3 or tri in faces:
            return False
        es = _face_edges(tri)
        if any(edge_load.get(e, 0) >= 2 for e in es):
            return False
        faces.add(tri)
        for e in es:
            edge_load[e] = edge_load.get(e, 0) + 1
        return True

    def boundary_graph():
        adj: dict = {}
        for e, n in edge_load.items():
            if n == 1:
                adj.setdefault(e[0], set()).add(e[1])
                adj.setdefault(e[1], set()).add(e[0])
        return adj

    while True:
        added = 0
        adj = boundary_graph()
        # triangular holes: three boundary edges forming a 3-cycle
        for a in sorted(adj):
            for b in sorted(adj[a]):
                if b < a:
                    continue
                for c in sorted(adj[a] & adj[b]):
                    if c > b and try_add((a, b, c)):
                        added += 1
        # larger (simple) loops: fan from the lowest-index vertex
        current = np.array(sorted(faces), dtype=np.int64).reshape(-1, 3)
        for loop in boundary_loops(current):
            if 3 < len(loop) <= max_hole_edges:
                pivot_pos = int(np.argmin(loop))
                cycle = loop[pivot_pos:] + loop[:pivot_pos]
                for j in range(1, len(cycle) - 1):
                    if try_add((cycle[0], cycle[j], cycle[j + 1])):
                        added += 1
        if added == 0:
            break
    return IndexedMesh(mesh.vertices, np.array(sorted(faces), dtype=np.int64).reshape(-1, 3))
