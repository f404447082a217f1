import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trivc.errors import DegenerateError
from trivc.geometry import essential_from_pose, symmetric_epipolar_error
from trivc.virtual import (
    VirtualCorrespondence,
    barycentric_grid,
    barycentric_point,
    delta_shifts,
    line_triangle_distance,
    mean_correspondence,
    mean_point,
    oracle_correspondence,
    project_onto_epipolar_line,
)

from conftest import make_two_view


class TestMeanPoint:
    def test_simple_triangle(self):
        assert np.allclose(mean_point([(0, 0), (2, 0), (0, 2)]), (2 / 3, 2 / 3))

    def test_equilateral_centered(self):
        c = np.array([1.5, -2.0])
        tri = c + np.array(
            [[np.cos(a), np.sin(a)] for a in (0, 2 * np.pi / 3, 4 * np.pi / 3)]
        )
        assert np.allclose(mean_point(tri), c, atol=1e-12)

    def test_equals_uniform_barycentric(self, rng):
        tri = rng.normal(size=(3, 2))
        bc = np.array([1 / 3, 1 / 3, 1 / 3])
        assert np.allclose(mean_point(tri), barycentric_point(tri, bc), atol=1e-14)


class TestDeltaShifts:
    def test_wide_bbox(self):
        tri = np.array([(0.0, 0.0), (10.0, 4.0), (5.0, 0.0)])
        plus, minus = delta_shifts((1.0, 1.0), tri, 0.15)
        assert np.allclose(plus, (2.5, 1.0))
        assert np.allclose(minus, (-0.5, 1.0))

    def test_square_bbox_ties_to_x(self):
        tri = np.array([(0.0, 0.0), (2.0, 2.0), (0.0, 2.0)])
        plus, minus = delta_shifts((0.0, 0.0), tri, 0.5)
        assert plus[1] == 0.0 and minus[1] == 0.0
        assert plus[0] == 1.0 and minus[0] == -1.0

    def test_zero_factor(self):
        tri = np.array([(0.0, 0.0), (3.0, 1.0), (1.0, 2.0)])
        plus, minus = delta_shifts((0.5, 0.5), tri, 0.0)
        assert np.allclose(plus, (0.5, 0.5)) and np.allclose(minus, (0.5, 0.5))

    def test_degenerate_triangle(self):
        tri = np.full((3, 2), 0.25)
        with pytest.raises(DegenerateError):
            delta_shifts((0.0, 0.0), tri, 0.15)

    @given(st.integers(0, 2 ** 31 - 1), st.floats(0.01, 0.5))
    @settings(max_examples=30, deadline=None)
    def test_symmetric_and_axis_aligned(self, seed, factor):
        r = np.random.default_rng(seed)
        tri = r.normal(size=(3, 2))
        m = r.normal(size=2)
        plus, minus = delta_shifts(m, tri, factor)
        assert np.allclose(0.5 * (plus + minus), m, atol=1e-12)
        moved_axes = np.nonzero(np.abs(plus - minus) > 0)[0]
        assert moved_axes.size == 1


class TestOracleCorrespondence:
    def test_satisfies_gt_epipolar(self, rng):
        from trivc.geometry import sampson_error

        for _ in range(20):
            pose, _, x1, x2 = make_two_view(rng, 3)
            m1 = mean_point(x1)
            vc = oracle_correspondence(pose, m1, x2)
            E = essential_from_pose(pose)
            assert sampson_error(E, vc.p1, vc.p2) <= 1e-12

    def test_projection_fixed_point(self, rng):
        pose, _, x1, x2 = make_two_view(rng, 3)
        E = essential_from_pose(pose)
        m1 = mean_point(x1)
        on_line = project_onto_epipolar_line(E, m1, mean_point(x2))
        vc = oracle_correspondence(pose, m1, np.tile(on_line, (3, 1)) + [[0, 0], [1e-3, 0], [0, 1e-3]])
        # the mean of that tiny triangle is approximately on the line already
        assert np.linalg.norm(vc.p2 - mean_point(vc.p2[None])) <= 1e-12

    def test_stays_within_vertex_distance(self, rng):
        for _ in range(50):
            pose, _, x1, x2 = make_two_view(rng, 3)
            vc = oracle_correspondence(pose, mean_point(x1), x2)
            m2 = mean_point(x2)
            max_vertex = np.max(np.linalg.norm(x2 - m2, axis=1))
            assert np.linalg.norm(vc.p2 - m2) <= max_vertex + 1e-9


class TestBarycentric:
    def test_vertex(self):
        tri = np.array([(1.0, 2.0), (3.0, 4.0), (5.0, -1.0)])
        assert np.allclose(barycentric_point(tri, (1, 0, 0)), tri[0])

    def test_centroid(self):
        tri = np.array([(1.0, 2.0), (3.0, 4.0), (5.0, -1.0)])
        assert np.allclose(barycentric_point(tri, (1 / 3, 1 / 3, 1 / 3)), tri.mean(axis=0))

    def test_edge_midpoint(self):
        tri = np.array([(0.0, 0.0), (2.0, 2.0), (9.0, 9.0)])
        assert np.allclose(barycentric_point(tri, (0.5, 0.5, 0.0)), (1.0, 1.0))

    def test_grid_n2(self):
        g = barycentric_grid(2)
        assert sorted(map(tuple, g.tolist())) == [
            (0.0, 0.0, 1.0),
            (0.0, 1.0, 0.0),
            (1.0, 0.0, 0.0),
        ]

    def test_grid_19_has_190_cells(self):
        g = barycentric_grid(19)
        assert g.shape == (190, 3)

    def test_grid_weights_valid(self):
        g = barycentric_grid(19)
        assert np.allclose(g.sum(axis=1), 1.0, atol=1e-12)
        assert np.all((g >= 0) & (g <= 1))


class TestMeanCorrespondence:
    def test_identity_pose_identical_triangles(self):
        # same triangle in both views under identity-rotation sideways motion
        tri = np.array([(0.1, 0.0), (0.2, 0.1), (0.0, 0.2)])
        vc = mean_correspondence(tri, tri)
        assert vc.provenance == "mean"
        assert np.allclose(vc.p1, vc.p2)

    def test_error_bounded_by_vertex_distance(self, rng):
        # the epipolar line crosses the triangle, so the distance from the
        # view-2 mean to the line cannot exceed its distance to a vertex
        for _ in range(100):
            pose, _, x1, x2 = make_two_view(rng, 3)
            vc = mean_correspondence(x1, x2)
            E = essential_from_pose(pose)
            err = symmetric_epipolar_error(E, vc.p1, vc.p2)
            bound = np.max(np.linalg.norm(x2 - vc.p2, axis=1))
            bound1 = np.max(np.linalg.norm(x1 - vc.p1, axis=1))
            assert err <= max(bound, bound1) + 1e-9


class TestLemmaLineThroughTriangle:
    def test_epipolar_line_of_mean_crosses_triangle(self, rng):
        # quick version; the acceptance suite runs the full 10^4
        for _ in range(2000):
            pose, _, x1, x2 = make_two_view(rng, 3)
            E = essential_from_pose(pose)
            m1 = mean_point(x1)
            line = E @ np.array([m1[0], m1[1], 1.0])
            assert line_triangle_distance(line, x2) <= 1e-9

    def test_distance_positive_when_line_is_outside(self):
        tri = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])
        line = np.array([0.0, 1.0, -5.0])  # y = 5
        assert line_triangle_distance(line, tri) == pytest.approx(4.0)


class TestVirtualCorrespondenceType:
    def test_rejects_bad_provenance(self):
        with pytest.raises(ValueError):
            VirtualCorrespondence(np.zeros(2), np.zeros(2), "guess")

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            VirtualCorrespondence(np.array([np.nan, 0.0]), np.zeros(2), "mean")
