import math

import numpy as np
import pytest

from circumtri.errors import DegeneratePatch, DegenerateTriangle, DuplicatePoints
from circumtri.geometry import (KnnIndex, PointCloud, build_knn_index,
                                circumcenter, circumcenters, extract_patch,
                                from_spherical, from_spherical_array,
                                to_spherical, to_spherical_array)


def brute_force_knn(points, query_idx, k):
    """Independent O(N^2) oracle: sort by (squared distance, index)."""
    diff = points - points[query_idx]
    d2 = np.einsum("ij,ij->i", diff, diff)
    order = np.lexsort((np.arange(len(points)), d2))
    order = order[order != query_idx]
    return order[:k]


class TestKnnIndex:
    def test_two_point_cloud(self):
        idx = KnnIndex(np.array([[0.0, 0, 0], [1.0, 0, 0]]))
        nbr, dist = idx.query_index(0, 1)
        assert nbr.tolist() == [1]
        assert dist[0] == pytest.approx(1.0)

    def test_collinear_points_sorted_by_distance(self):
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [4.0, 0, 0]])
        idx = KnnIndex(pts)
        nbr, _ = idx.query_index(0, 3)
        assert nbr.tolist() == [1, 2, 3]

    def test_matches_brute_force_on_random_cloud(self):
        rng = np.random.default_rng(7)
        pts = rng.uniform(-1, 1, (200, 3))
        idx = KnnIndex(pts)
        for qi in range(0, 200, 17):
            nbr, _ = idx.query_index(qi, 10)
            assert nbr.tolist() == brute_force_knn(pts, qi, 10).tolist()

    @pytest.mark.parametrize("n", [10, 60, 300, 500])
    def test_matches_brute_force_exhaustively(self, n):
        rng = np.random.default_rng(n)
        pts = rng.normal(size=(n, 3))
        idx = KnnIndex(pts)
        k = min(12, n - 1)
        all_nbrs = idx.neighbors_for_all(k)
        for qi in range(n):
            expected = brute_force_knn(pts, qi, k)
            assert all_nbrs[qi].tolist() == expected.tolist()
            single, _ = idx.query_index(qi, k)
            assert single.tolist() == expected.tolist()

    def test_ties_broken_by_ascending_index(self):
        # integer grid: many exactly equidistant neighbors
        xs, ys = np.meshgrid(np.arange(5.0), np.arange(5.0), indexing="ij")
        pts = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(25)])
        idx = KnnIndex(pts)
        for qi in range(25):
            for k in (4, 8, 12):
                nbr, _ = idx.query_index(qi, k)
                assert nbr.tolist() == brute_force_knn(pts, qi, k).tolist()


class TestPointCloud:
    def test_rejects_duplicates_with_indices(self):
        pts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 0, 0], [2, 2, 2]])
        with pytest.raises(DuplicatePoints) as exc:
            PointCloud(pts)
        assert (1, 3) in exc.value.pairs

    def test_rejects_tiny_clouds(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((3, 3)) + np.arange(3)[:, None])


class TestExtractPatch:
    def make_grid_cloud(self, spacing=1.0):
        xs, ys = np.meshgrid(np.arange(4.0), np.arange(4.0), indexing="ij")
        pts = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(16)]) * spacing
        return PointCloud(pts)

    def test_unit_grid_default_resolution(self):
        cloud = self.make_grid_cloud()
        index = build_knn_index(cloud)
        patch = extract_patch(cloud, index, 5, k=4, eta0=0.01)
        lengths = np.linalg.norm(patch.normalized_neighbors, axis=1)
        assert lengths.min() == pytest.approx(0.01, abs=1e-15)
        assert patch.scale == pytest.approx(0.01)
        assert patch.nn_distance == pytest.approx(1.0)

    def test_cloud_already_at_eta0_spacing(self):
        cloud = self.make_grid_cloud(spacing=0.01)
        index = build_knn_index(cloud)
        patch = extract_patch(cloud, index, 5, k=4, eta0=0.01)
        assert patch.scale == pytest.approx(1.0)
        expected = cloud.points[patch.neighbor_indices] - cloud.points[5]
        assert np.allclose(patch.normalized_neighbors, expected, atol=1e-15)

    def test_nonuniform_density_normalizes_to_same_length(self):
        # two clusters with nn-distances 0.5 and 2.0
        pts = np.array([
            [0.0, 0, 0], [0.5, 0, 0], [0, 0.5, 0], [0.5, 0.5, 0],
            [100.0, 0, 0], [102.0, 0, 0], [100, 2.0, 0], [102, 2.0, 0],
        ])
        cloud = PointCloud(pts)
        index = build_knn_index(cloud)
        for center in (0, 4):
            patch = extract_patch(cloud, index, center, k=3, eta0=0.01)
            nearest = np.linalg.norm(patch.normalized_neighbors, axis=1).min()
            assert nearest == pytest.approx(0.01, rel=1e-12)
        direct = extract_patch(cloud, index, 0, k=3, eta0=0.01)
        eta = 0.01 / 0.5
        manual = eta * (pts[direct.neighbor_indices] - pts[0])
        assert np.allclose(direct.normalized_neighbors, manual, atol=1e-15)

    def test_scale_invariance_of_normalization(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(size=(30, 3))
        for s in (1e-3, 0.7, 42.0):
            c1 = PointCloud(pts)
            c2 = PointCloud(pts * s)
            p1 = extract_patch(c1, build_knn_index(c1), 11, k=8, eta0=0.01)
            p2 = extract_patch(c2, build_knn_index(c2), 11, k=8, eta0=0.01)
            assert p1.neighbor_indices.tolist() == p2.neighbor_indices.tolist()
            assert np.allclose(p1.normalized_neighbors, p2.normalized_neighbors,
                               rtol=1e-12, atol=1e-14)

    def test_duplicate_point_raises_degenerate(self):
        # a duplicate that slipped past load must still be caught at patch time
        pts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0],
                        [0.0, 0, 0]])
        index = KnnIndex(pts)
        hacked = PointCloud.__new__(PointCloud)
        object.__setattr__(hacked, "points", pts)
        with pytest.raises(DegeneratePatch):
            extract_patch(hacked, index, 0, k=3, eta0=0.01)


class TestCircumcenter:
    def test_equilateral_centered_at_origin(self):
        x = circumcenter((1, 0, 0), (-0.5, math.sqrt(3) / 2, 0),
                         (-0.5, -math.sqrt(3) / 2, 0))
        assert np.allclose(x, 0.0, atol=1e-12)

    def test_right_triangle_hypotenuse_midpoint(self):
        x = circumcenter((0, 0, 0), (2, 0, 0), (0, 2, 0))
        assert np.allclose(x, [1, 1, 0], atol=1e-12)

    def test_random_triangles_postconditions(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(1000, 3))
        b = rng.normal(size=(1000, 3))
        c = rng.normal(size=(1000, 3))
        x = circumcenters(a, b, c)
        da = np.linalg.norm(a - x, axis=1)
        db = np.linalg.norm(b - x, axis=1)
        dc = np.linalg.norm(c - x, axis=1)
        spread = np.maximum(np.abs(da - db), np.maximum(np.abs(db - dc),
                                                        np.abs(da - dc)))
        assert np.all(spread < 1e-9 * da)
        # coplanarity: (x - a) . n = 0 relative to triangle scale
        n = np.cross(b - a, c - a)
        n /= np.linalg.norm(n, axis=1)[:, None]
        off_plane = np.abs(np.einsum("ij,ij->i", x - a, n))
        assert np.all(off_plane < 1e-9 * da)

    def test_collinear_raises(self):
        with pytest.raises(DegenerateTriangle):
            circumcenter((0, 0, 0), (1, 0, 0), (2, 0, 0))
        with pytest.raises(DegenerateTriangle):
            circumcenter((0, 0, 0), (1, 0, 0), (2, 1e-13, 0))


class TestSpherical:
    def test_axis_cases(self):
        s = to_spherical((1, 0, 0))
        assert (s.rho, s.theta, s.phi) == pytest.approx((1, 0, 0))
        pole = to_spherical((0, 0, 1))
        assert pole.rho == pytest.approx(1)
        assert pole.theta == 0.0
        assert pole.phi == pytest.approx(math.pi / 2)
        zero = to_spherical((0, 0, 0))
        assert (zero.rho, zero.theta, zero.phi) == (0, 0, 0)

    def test_theta_maps_onto_half_open_range(self):
        s = to_spherical((-1, 0, 0))
        assert s.theta == pytest.approx(math.pi)
        s2 = to_spherical((-1, -1e-300, 0))
        assert -math.pi < s2.theta <= math.pi

    def test_round_trip_random(self):
        rng = np.random.default_rng(5)
        v = rng.normal(size=(10000, 3)) * rng.uniform(1e-3, 1e3, (10000, 1))
        back = from_spherical_array(to_spherical_array(v))
        err = np.linalg.norm(back - v, axis=1) / np.linalg.norm(v, axis=1)
        assert err.max() < 1e-12

    def test_round_trip_scalar_api(self):
        v = np.array([0.3, -0.2, 0.9])
        assert np.allclose(from_spherical(to_spherical(v)), v, rtol=1e-13)

    def test_ranges_hold_everywhere(self):
        rng = np.random.default_rng(9)
        sph = to_spherical_array(rng.normal(size=(5000, 3)))
        assert np.all(sph[:, 0] >= 0)
        assert np.all((sph[:, 1] > -math.pi) & (sph[:, 1] <= math.pi))
        assert np.all((sph[:, 2] >= -math.pi / 2) & (sph[:, 2] <= math.pi / 2))
