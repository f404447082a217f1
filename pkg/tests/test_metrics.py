import numpy as np
import pytest
from hypothesis import given, strategies as st

from trivc.geometry import CameraConfiguration, RelativePose, TripletHypothesis
from trivc.metrics import (
    auc,
    check_minimal_configuration,
    rotation_error,
    translation_angle_error,
    triplet_pose_error,
)

from conftest import rotation_from_rotvec


class TestRotationError:
    def test_identity(self):
        R = rotation_from_rotvec([0.3, -0.2, 0.1])
        assert rotation_error(R, R) == pytest.approx(0.0, abs=1e-9)

    def test_five_degrees_about_any_axis(self, rng):
        for _ in range(10):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            R = rotation_from_rotvec(rng.uniform(-1, 1, 3))
            delta = rotation_from_rotvec(np.radians(5.0) * axis)
            assert rotation_error(R @ delta, R) == pytest.approx(5.0, abs=1e-9)


class TestTranslationAngleError:
    def test_same_vector(self):
        assert translation_angle_error([1, 0, 0], [2, 0, 0]) == pytest.approx(0.0)

    def test_opposite_is_180(self):
        assert translation_angle_error([0, 1, 0], [0, -1, 0]) == pytest.approx(180.0)

    def test_not_folded(self):
        assert translation_angle_error([1, 0, 0], [-1, 1e-8, 0]) > 170.0


def _hyp(r12, t12, r13, t13):
    return TripletHypothesis(
        RelativePose(rotation_from_rotvec(r12), np.asarray(t12, dtype=float) / np.linalg.norm(t12)),
        RelativePose(rotation_from_rotvec(r13), np.asarray(t13, dtype=float) / np.linalg.norm(t13)),
    )


class TestTripletPoseError:
    def test_zero_for_identical(self):
        h = _hyp([0.1, 0, 0], [1, 0, 0], [0, 0.2, 0], [0, 1, 0])
        assert triplet_pose_error(h, h) == pytest.approx(0.0, abs=1e-9)

    def test_rotation_average_dominates(self):
        h = TripletHypothesis(
            RelativePose(rotation_from_rotvec([np.radians(2), 0, 0]), np.array([1.0, 0, 0])),
            RelativePose(rotation_from_rotvec([np.radians(4), 0, 0]), np.array([0.0, 1, 0])),
        )
        gt = TripletHypothesis(
            RelativePose(np.eye(3), np.array([1.0, 0, 0])),
            RelativePose(np.eye(3), np.array([0.0, 1, 0])),
        )
        # eR = (2, 4) -> avg 3; et small -> max is 3
        assert triplet_pose_error(h, gt) == pytest.approx(3.0, abs=1e-6)

    def test_translation_average_dominates(self):
        gt = TripletHypothesis(
            RelativePose(np.eye(3), np.array([1.0, 0, 0])),
            RelativePose(np.eye(3), np.array([0.0, 1, 0])),
        )
        t12 = np.array([np.cos(np.radians(10)), np.sin(np.radians(10)), 0.0])
        t13 = np.array([np.sin(np.radians(2)), np.cos(np.radians(2)), 0.0])
        h = TripletHypothesis(
            RelativePose(np.eye(3), t12), RelativePose(np.eye(3), t13)
        )
        # eR = (0, 0); et = (10, 2) -> 6
        assert triplet_pose_error(h, gt) == pytest.approx(6.0, abs=1e-9)

    def test_symmetric_in_views_2_and_3(self, rng):
        h = _hyp(rng.uniform(-1, 1, 3), rng.normal(size=3), rng.uniform(-1, 1, 3), rng.normal(size=3))
        g = _hyp(rng.uniform(-1, 1, 3), rng.normal(size=3), rng.uniform(-1, 1, 3), rng.normal(size=3))
        swapped_h = TripletHypothesis(h.pose13, h.pose12)
        swapped_g = TripletHypothesis(g.pose13, g.pose12)
        assert triplet_pose_error(h, g) == pytest.approx(
            triplet_pose_error(swapped_h, swapped_g), abs=1e-12
        )


class TestAuc:
    def test_all_zero_errors(self):
        assert auc([0.0, 0.0, 0.0], 10.0) == pytest.approx(100.0)

    def test_all_beyond_threshold(self):
        assert auc([11.0, 50.0], 10.0) == pytest.approx(0.0)

    def test_hand_integrated_step(self):
        # recall steps 0.5 at 0 deg, 1.0 at 5 deg: integral = (10*0.5 + 5*0.5)/10
        assert auc([0.0, 5.0], 10.0) == pytest.approx(75.0)

    def test_non_finite_never_recalled(self):
        assert auc([0.0, np.inf], 10.0) == pytest.approx(50.0)

    @given(
        st.lists(st.floats(min_value=0, max_value=100), min_size=1, max_size=40),
        st.floats(min_value=0.5, max_value=50),
        st.floats(min_value=0.5, max_value=50),
    )
    def test_monotone_in_threshold(self, errors, t1, t2):
        lo, hi = sorted((t1, t2))
        assert auc(errors, lo) <= auc(errors, hi) + 1e-9

    @given(
        st.lists(st.floats(min_value=0, max_value=100), min_size=2, max_size=30),
        st.randoms(use_true_random=False),
    )
    def test_permutation_invariant(self, errors, rnd):
        shuffled = list(errors)
        rnd.shuffle(shuffled)
        assert auc(errors, 20.0) == pytest.approx(auc(shuffled, 20.0), abs=1e-9)


class TestMinimalConfiguration:
    def test_mixed5_is_minimal(self):
        cfg = CameraConfiguration(3, (3, 3, 3, 2, 2))
        assert check_minimal_configuration(cfg) == ("minimal", 0)

    def test_full4_is_over_by_one(self):
        cfg = CameraConfiguration(3, (3, 3, 3, 3))
        assert check_minimal_configuration(cfg) == ("over", 1)

    def test_full4_with_focal_is_minimal(self):
        cfg = CameraConfiguration(3, (3, 3, 3, 3))
        assert check_minimal_configuration(cfg, unknown_focal=True) == ("minimal", 0)

    def test_matches_enumeration(self):
        # exhaustive small configurations against the direct count
        for n_cams in (2, 3, 4):
            for n_pts in range(1, 6):
                for pattern in range(3 ** n_pts):
                    vis = []
                    p = pattern
                    for _ in range(n_pts):
                        vis.append(2 + p % min(2, n_cams - 1))
                        p //= 3
                    if any(v > n_cams for v in vis):
                        continue
                    cfg = CameraConfiguration(n_cams, tuple(vis))
                    lhs = sum(2 * v - 3 for v in vis)
                    for focal in (False, True):
                        rhs = 6 * n_cams - (6 if focal else 7)
                        verdict, amount = check_minimal_configuration(cfg, focal)
                        if lhs < rhs:
                            assert (verdict, amount) == ("under", rhs - lhs)
                        elif lhs == rhs:
                            assert (verdict, amount) == ("minimal", 0)
                        else:
                            assert (verdict, amount) == ("over", lhs - rhs)

    def test_rejects_invalid_visibility(self):
        with pytest.raises(ValueError):
            CameraConfiguration(3, (1, 3))
