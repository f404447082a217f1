import math

import numpy as np
import pytest

from trivc.errors import CheiralityError, DegenerateError
from trivc.geometry import (
    RelativePose,
    UNDEFINED_RESIDUAL,
    decompose_essential,
    essential_from_pose,
    is_essential,
    project_to_essential,
    sampson_error,
    sampson_errors,
    symmetric_epipolar_error,
    triangulate,
)
from trivc.metrics import rotation_error, translation_angle_error

from conftest import make_two_view, project_points, random_pose


class TestRelativePose:
    def test_accepts_valid(self, rng):
        p = random_pose(rng)
        assert np.allclose(p.rotation @ p.rotation.T, np.eye(3), atol=1e-12)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            RelativePose(np.eye(3) + 1e-3, np.array([1.0, 0.0, 0.0]))

    def test_rejects_non_unit_translation(self):
        with pytest.raises(ValueError):
            RelativePose(np.eye(3), np.array([1.0, 1.0, 0.0]))

    def test_rejects_reflection(self):
        R = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            RelativePose(R, np.array([1.0, 0.0, 0.0]))


class TestEssentialFromPose:
    def test_translation_x(self):
        E = essential_from_pose(RelativePose(np.eye(3), np.array([1.0, 0.0, 0.0])))
        assert np.allclose(E, [[0, 0, 0], [0, 0, -1], [0, 1, 0]])

    def test_translation_z(self):
        E = essential_from_pose(RelativePose(np.eye(3), np.array([0.0, 0.0, 1.0])))
        assert np.allclose(E, [[0, -1, 0], [1, 0, 0], [0, 0, 0]])

    def test_epipolar_constraint_on_projections(self, rng):
        pose, _, x1, x2 = make_two_view(rng, 20)
        E = essential_from_pose(pose)
        p1 = np.concatenate([x1, np.ones((20, 1))], axis=1)
        p2 = np.concatenate([x2, np.ones((20, 1))], axis=1)
        residuals = np.abs(np.einsum("ni,ij,nj->n", p2, E, p1))
        assert residuals.max() <= 1e-10

    def test_invariants_hold(self, rng):
        for _ in range(20):
            assert is_essential(essential_from_pose(random_pose(rng)))


class TestSampsonError:
    def test_zero_on_true_projection(self, rng):
        pose, _, x1, x2 = make_two_view(rng, 10)
        E = essential_from_pose(pose)
        for a, b in zip(x1, x2):
            assert sampson_error(E, a, b) <= 1e-10

    def test_point_on_epipolar_line(self, rng):
        pose, _, x1, x2 = make_two_view(rng, 1)
        E = essential_from_pose(pose)
        # slide x2 along its epipolar line: the numerator stays zero
        line = E @ np.array([x1[0, 0], x1[0, 1], 1.0])
        d = np.array([line[1], -line[0]]) / math.hypot(line[0], line[1])
        moved = x2[0] + 0.05 * d
        assert sampson_error(E, x1[0], moved) <= 1e-12

    def test_first_order_matches_exact_correction(self, rng):
        # A 0.01 perpendicular offset of x2: the Sampson value must agree
        # within 10% with the exact smallest joint correction of (x1, x2)
        # restoring the epipolar constraint, found numerically.
        from scipy.optimize import minimize

        pose, _, x1, x2 = make_two_view(rng, 1)
        E = essential_from_pose(pose)
        line = E @ np.array([x1[0, 0], x1[0, 1], 1.0])
        nrm = math.hypot(line[0], line[1])
        perp = np.array([line[0], line[1]]) / nrm
        moved = x2[0] + 0.01 * perp

        def cost(a):
            la = E @ np.array([a[0], a[1], 1.0])
            d2 = (la[0] * moved[0] + la[1] * moved[1] + la[2]) / math.hypot(la[0], la[1])
            return (a[0] - x1[0, 0]) ** 2 + (a[1] - x1[0, 1]) ** 2 + d2 * d2

        res = minimize(cost, x1[0], method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-18})
        exact = math.sqrt(res.fun)
        err = sampson_error(E, x1[0], moved)
        assert err == pytest.approx(exact, rel=0.1)
        # and the correction never exceeds the raw single-image offset
        assert err <= 0.01 + 1e-9

    def test_degenerate_returns_sentinel(self):
        E = np.zeros((3, 3))
        E[2, 2] = 1.0
        # E x1 and E^T x2 have zero leading components at the origin.
        assert sampson_error(E, (0.0, 0.0), (0.0, 0.0)) == UNDEFINED_RESIDUAL

    def test_vectorized_matches_scalar(self, rng):
        pose, _, x1, x2 = make_two_view(rng, 15)
        E = essential_from_pose(pose)
        noisy = x2 + rng.normal(0, 0.01, x2.shape)
        vec = sampson_errors(E, x1, noisy)
        scal = [sampson_error(E, a, b) for a, b in zip(x1, noisy)]
        assert np.allclose(vec, scal, atol=1e-14)


class TestSymmetricEpipolarError:
    def test_zero_on_exact(self, rng):
        pose, _, x1, x2 = make_two_view(rng, 5)
        E = essential_from_pose(pose)
        for a, b in zip(x1, x2):
            assert symmetric_epipolar_error(E, a, b) <= 1e-12

    def test_inline_shift_keeps_image2_distance_zero(self, rng):
        pose, _, x1, x2 = make_two_view(rng, 1)
        E = essential_from_pose(pose)
        line = E @ np.array([x1[0, 0], x1[0, 1], 1.0])
        nrm = math.hypot(line[0], line[1])
        d = np.array([line[1], -line[0]]) / nrm
        moved = x2[0] + 0.02 * d
        dist2 = abs(line[0] * moved[0] + line[1] * moved[1] + line[2]) / nrm
        assert dist2 <= 1e-12

    def test_matches_brute_force_distances(self, rng):
        pose, _, x1, x2 = make_two_view(rng, 10)
        E = essential_from_pose(pose)
        noisy = x2 + rng.normal(0, 0.02, x2.shape)
        for a, b in zip(x1, noisy):
            p1 = np.array([a[0], a[1], 1.0])
            p2 = np.array([b[0], b[1], 1.0])
            l2 = E @ p1
            l1 = E.T @ p2
            d2 = abs(l2 @ p2) / math.hypot(l2[0], l2[1])
            d1 = abs(l1 @ p1) / math.hypot(l1[0], l1[1])
            expected = 0.5 * (d1 + d2)
            assert symmetric_epipolar_error(E, a, b) == pytest.approx(expected, abs=1e-14)


class TestTriangulate:
    def test_recovers_point(self, rng):
        pose, X, x1, x2 = make_two_view(rng, 8)
        for i in range(8):
            rec = triangulate(pose, x1[i], x2[i])
            assert np.linalg.norm(rec - X[i]) <= 1e-8 * max(1.0, np.linalg.norm(X[i]))

    def test_reprojects(self, rng):
        pose, _, x1, x2 = make_two_view(rng, 5)
        for i in range(5):
            X = triangulate(pose, x1[i], x2[i])
            c2 = pose.rotation @ X + pose.translation
            assert np.allclose(X[:2] / X[2], x1[i], atol=1e-8)
            assert np.allclose(c2[:2] / c2[2], x2[i], atol=1e-8)

    def test_parallel_rays_degenerate(self):
        pose = RelativePose(np.eye(3), np.array([1.0, 0.0, 0.0]))
        with pytest.raises(DegenerateError):
            triangulate(pose, (0.3, 0.2), (0.3, 0.2))

    def test_behind_camera_reports_negative_depth(self, rng):
        pose = random_pose(rng, 0.2)
        X = np.array([0.5, -0.3, -25.0])  # behind camera 1
        c2 = pose.rotation @ X + pose.translation
        if c2[2] >= -0.1:
            pose = RelativePose(pose.rotation, -pose.translation)
            c2 = pose.rotation @ X + pose.translation
        x1 = X[:2] / X[2]
        x2 = c2[:2] / c2[2]
        rec = triangulate(pose, x1, x2)
        assert rec[2] < 0


class TestDecomposeEssential:
    def test_round_trip(self, rng):
        # tolerance of 1e-8 rad on both angles
        for _ in range(25):
            pose, _, x1, x2 = make_two_view(rng, 4)
            E = essential_from_pose(pose)
            rec = decompose_essential(E, np.stack([x1, x2], axis=1))
            assert math.radians(rotation_error(rec.rotation, pose.rotation)) <= 1e-8
            assert (
                math.radians(translation_angle_error(rec.translation, pose.translation))
                <= 1e-8
            )

    def test_single_support(self, rng):
        pose, _, x1, x2 = make_two_view(rng, 1)
        E = essential_from_pose(pose)
        rec = decompose_essential(E, np.stack([x1, x2], axis=1))
        assert math.radians(rotation_error(rec.rotation, pose.rotation)) <= 1e-8

    def test_epipole_supports_fail_cheirality(self):
        pose = RelativePose(np.eye(3), np.array([0.0, 0.0, 1.0]))
        E = essential_from_pose(pose)
        # A point on the baseline projects to the epipole in both views.
        sup = np.array([[[0.0, 0.0], [0.0, 0.0]]])
        with pytest.raises(CheiralityError):
            decompose_essential(E, sup)


class TestProjectToEssential:
    def test_output_is_essential(self, rng):
        M = rng.normal(size=(3, 3))
        assert is_essential(project_to_essential(M))

    def test_fixes_valid_essential(self, rng):
        E = essential_from_pose(random_pose(rng))
        assert np.allclose(project_to_essential(E), E, atol=1e-12)
