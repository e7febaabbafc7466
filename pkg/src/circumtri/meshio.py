"""Mesh and point-cloud file I/O: ASCII OBJ, binary little-endian PLY, XYZ.

Text formats write floats with `repr`, so OBJ/XYZ round trips reproduce
float64 values exactly; PLY stores float32 vertices. Face sets survive all
round trips exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import IndexOutOfRange, ParseError
from .mesh import IndexedMesh


# -- OBJ -------------------------------------------------------------------

def read_obj(path) -> IndexedMesh:
    """Read `v x y z` / `f i j k` lines; indices are 1-based, `f a/b/c` allowed."""
    verts, faces = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            if tokens[0] == "v":
                if len(tokens) < 4:
                    raise ParseError(path, lineno, "vertex needs 3 coordinates")
                try:
                    verts.append([float(t) for t in tokens[1:4]])
                except ValueError as exc:
                    raise ParseError(path, lineno, f"bad vertex: {exc}") from None
            elif tokens[0] == "f":
                if len(tokens) != 4:
                    raise ParseError(path, lineno, "only triangle faces are supported")
                try:
                    idx = [int(t.split("/")[0]) for t in tokens[1:]]
                except ValueError as exc:
                    raise ParseError(path, lineno, f"bad face: {exc}") from None
                for i in idx:
                    if i == 0:
                        raise IndexOutOfRange(path, lineno, "OBJ indices are 1-based")
                faces.append(idx)
            # other line types (vn, vt, s, o, ...) are ignored
    resolved = []
    for idx in faces:
        tri = []
        for i in idx:
            j = i - 1 if i > 0 else len(verts) + i
            if not 0 <= j < len(verts):
                raise IndexOutOfRange(path, 0, f"face index {i} out of range")
            tri.append(j)
        resolved.append(tri)
    return IndexedMesh(np.asarray(verts, dtype=np.float64).reshape(-1, 3),
                       np.asarray(resolved, dtype=np.int64).reshape(-1, 3))


def write_obj(path, mesh: IndexedMesh):
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# -- XYZ --------------------------------------------------------------------

def read_xyz(path) -> np.ndarray:
    """One `x y z` per line; blank lines and `#` comments are skipped."""
    pts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            if len(tokens) < 3:
                raise ParseError(path, lineno, "point needs 3 coordinates")
            try:
                pts.append([float(t) for t in tokens[:3]])
            except ValueError as exc:
                raise ParseError(path, lineno, f"bad point: {exc}") from None
    return np.asarray(pts, dtype=np.float64).reshape(-1, 3)


def write_xyz(path, points: np.ndarray):
    points = np.asarray(points, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for p in points:
            fh.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")


# -- PLY --------------------------------------------------------------------

_PLY_SCALARS = {
    "char": "b", "int8": "b", "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h", "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i", "uint": "I", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def write_ply(path, mesh: IndexedMesh):
    """Binary little-endian PLY with float32 vertices and int32 face lists."""
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {mesh.n_vertices}\n"
        "property float x\nproperty float y\nproperty float z\n"
        f"element face {mesh.n_faces}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(mesh.vertices.astype("<f4").tobytes())
        for f in mesh.faces:
            fh.write(struct.pack("<B3i", 3, int(f[0]), int(f[1]), int(f[2])))


def read_ply(path) -> IndexedMesh:
    """Read binary little-endian PLY with xyz vertex properties and triangle faces."""
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError(path, 1, "not a PLY file")
    header_lines = data[:end].decode("ascii", errors="replace").splitlines()
    body = memoryview(data)[end + len(b"end_header\n"):]

    elements = []  # (name, count, [(kind, fmt...)...])
    fmt_le = False
    for lineno, line in enumerate(header_lines, start=1):
        tokens = line.split()
        if not tokens or tokens[0] in ("ply", "comment", "obj_info"):
            continue
        if tokens[0] == "format":
            if tokens[1] != "binary_little_endian":
                raise ParseError(path, lineno, f"unsupported format {tokens[1]}")
            fmt_le = True
        elif tokens[0] == "element":
            elements.append([tokens[1], int(tokens[2]), []])
        elif tokens[0] == "property":
            if not elements:
                raise ParseError(path, lineno, "property before element")
            if tokens[1] == "list":
                elements[-1][2].append(("list", tokens[2], tokens[3], tokens[4]))
            else:
                elements[-1][2].append(("scalar", tokens[1], tokens[2]))
    if not fmt_le:
        raise ParseError(path, 1, "missing binary_little_endian format line")

    offset = 0
    verts = np.empty((0, 3))
    faces: list = []

    def scalar_size(name):
        if name not in _PLY_SCALARS:
            raise ParseError(path, 0, f"unsupported PLY type {name}")
        return struct.calcsize(_PLY_SCALARS[name])

    for name, count, props in elements:
        if name == "vertex":
            names = [p[2] for p in props if p[0] == "scalar"]
            if any(p[0] == "list" for p in props) or not {"x", "y", "z"} <= set(names):
                raise ParseError(path, 0, "vertex element must have scalar x y z")
            fmt = "<" + "".join(_PLY_SCALARS[p[1]] for p in props)
            stride = struct.calcsize(fmt)
            rows = np.array([struct.unpack_from(fmt, body, offset + i * stride)
                             for i in range(count)], dtype=np.float64).reshape(count, len(props))
            cols = [names.index(c) for c in ("x", "y", "z")]
            verts = rows[:, cols]
            offset += stride * count
        elif name == "face":
            lists = [p for p in props if p[0] == "list"]
            if len(props) != 1 or not lists:
                raise ParseError(path, 0, "face element must be a single index list")
            _, count_t, index_t, _ = lists[0]
            cfmt, ifmt = _PLY_SCALARS[count_t], _PLY_SCALARS[index_t]
            csz, isz = scalar_size(count_t), scalar_size(index_t)
            for _ in range(count):
                (n,) = struct.unpack_from("<" + cfmt, body, offset)
                offset += csz
                idx = struct.unpack_from(f"<{n}{ifmt}", body, offset)
                offset += n * isz
                if n != 3:
                    raise ParseError(path, 0, "only triangle faces are supported")
                faces.append(idx)
        else:
            # skip unknown fixed-stride elements
            if any(p[0] == "list" for p in props):
                raise ParseError(path, 0, f"cannot skip list element {name}")
            stride = sum(scalar_size(p[1]) for p in props)
            offset += stride * count

    faces_arr = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if faces_arr.size and (faces_arr.min() < 0 or faces_arr.max() >= len(verts)):
        raise IndexOutOfRange(path, 0, "face index out of range")
    return IndexedMesh(verts, faces_arr)


# -- dispatch ------------------------------------------------------------------

def read_mesh(path) -> IndexedMesh:
    p = str(path)
    if p.endswith(".obj"):
        return read_obj(p)
    if p.endswith(".ply"):
        return read_ply(p)
    raise ValueError(f"unsupported mesh format: {p}")


def write_mesh(path, mesh: IndexedMesh):
    p = str(path)
    if p.endswith(".obj"):
        write_obj(p, mesh)
    elif p.endswith(".ply"):
        write_ply(p, mesh)
    else:
        raise ValueError(f"unsupported mesh format: {p}")


def read_cloud(path) -> np.ndarray:
    """Point positions from .xyz, .obj or .ply."""
    p = str(path)
    if p.endswith(".xyz"):
        return read_xyz(p)
    return read_mesh(p).vertices


def write_cloud(path, points: np.ndarray):
    write_xyz(path, points)
