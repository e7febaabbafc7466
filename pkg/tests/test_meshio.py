import numpy as np
import pytest

from circumtri.errors import IndexOutOfRange, ParseError
from circumtri.mesh import IndexedMesh
from circumtri.meshio import (read_cloud, read_obj, read_ply, read_xyz,
                              write_obj, write_ply, write_xyz)
from circumtri.synthetic import icosphere


class TestObj:
    def test_single_triangle_round_trip(self, tmp_path):
        mesh = IndexedMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]),
                           np.array([[0, 1, 2]]))
        path = tmp_path / "tri.obj"
        write_obj(path, mesh)
        back = read_obj(path)
        assert np.array_equal(back.vertices, mesh.vertices)
        assert np.array_equal(back.faces, mesh.faces)

    def test_float64_values_survive_exactly(self, tmp_path):
        rng = np.random.default_rng(0)
        mesh = IndexedMesh(rng.normal(size=(50, 3)) * rng.uniform(1e-8, 1e8),
                           np.array([[0, 1, 2], [3, 4, 5]]))
        path = tmp_path / "mesh.obj"
        write_obj(path, mesh)
        back = read_obj(path)
        assert np.array_equal(back.vertices, mesh.vertices)

    def test_zero_index_rejected(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n")
        with pytest.raises(IndexOutOfRange):
            read_obj(path)

    def test_out_of_range_index_rejected(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
        with pytest.raises(IndexOutOfRange):
            read_obj(path)

    def test_parse_error_carries_line_number(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nv 1 oops 0\n")
        with pytest.raises(ParseError) as exc:
            read_obj(path)
        assert exc.value.line == 2

    def test_slash_faces_and_comments(self, tmp_path):
        path = tmp_path / "mesh.obj"
        path.write_text("# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\n"
                        "vn 0 0 1\nf 1/1/1 2/2/1 3/3/1\n")
        mesh = read_obj(path)
        assert mesh.n_faces == 1
        assert mesh.faces[0].tolist() == [0, 1, 2]


class TestXyz:
    def test_round_trip_is_float64_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(10000, 3)) * rng.uniform(1e-6, 1e6, (10000, 1))
        path = tmp_path / "cloud.xyz"
        write_xyz(path, pts)
        back = read_xyz(path)
        assert np.array_equal(back, pts)

    def test_bad_line_reports_position(self, tmp_path):
        path = tmp_path / "cloud.xyz"
        path.write_text("0 0 0\n1 2\n")
        with pytest.raises(ParseError) as exc:
            read_xyz(path)
        assert exc.value.line == 2

    def test_read_cloud_dispatch(self, tmp_path):
        mesh = icosphere(1)
        obj = tmp_path / "m.obj"
        write_obj(obj, mesh)
        assert np.array_equal(read_cloud(obj), mesh.vertices)


class TestPly:
    def test_round_trip_f32_and_faces_exact(self, tmp_path):
        mesh = icosphere(2)
        path = tmp_path / "mesh.ply"
        write_ply(path, mesh)
        back = read_ply(path)
        assert np.array_equal(back.vertices,
                              mesh.vertices.astype(np.float32).astype(np.float64))
        assert np.array_equal(back.faces, mesh.faces)

    def test_rejects_non_ply(self, tmp_path):
        path = tmp_path / "junk.ply"
        path.write_bytes(b"not a ply at all")
        with pytest.raises(ParseError):
            read_ply(path)

    def test_rejects_ascii_format(self, tmp_path):
        path = tmp_path / "ascii.ply"
        path.write_bytes(b"ply\nformat ascii 1.0\nelement vertex 0\n"
                         b"property float x\nproperty float y\nproperty float z\n"
                         b"end_header\n")
        with pytest.raises(ParseError):
            read_ply(path)

    def test_reads_double_vertices_and_extra_props(self, tmp_path):
        import struct
        header = ("ply\nformat binary_little_endian 1.0\n"
                  "element vertex 3\n"
                  "property double x\nproperty double y\nproperty double z\n"
                  "property float quality\n"
                  "element face 1\n"
                  "property list uchar uint vertex_indices\nend_header\n")
        body = b""
        for v in [(0, 0, 0), (1, 0, 0), (0, 1, 0)]:
            body += struct.pack("<3df", *v, 0.5)
        body += struct.pack("<B3I", 3, 0, 1, 2)
        path = tmp_path / "mesh.ply"
        path.write_bytes(header.encode() + body)
        mesh = read_ply(path)
        assert mesh.n_vertices == 3 and mesh.n_faces == 1

    def test_rejects_quad_faces(self, tmp_path):
        import struct
        header = ("ply\nformat binary_little_endian 1.0\n"
                  "element vertex 4\n"
                  "property float x\nproperty float y\nproperty float z\n"
                  "element face 1\n"
                  "property list uchar int vertex_indices\nend_header\n")
        body = np.zeros((4, 3), dtype="<f4")
        body[1, 0] = 1; body[2, 1] = 1; body[3, 2] = 1
        quad = struct.pack("<B4i", 4, 0, 1, 2, 3)
        path = tmp_path / "quad.ply"
        path.write_bytes(header.encode() + body.tobytes() + quad)
        with pytest.raises(ParseError):
            read_ply(path)
