"""Shared synthetic-scene helpers for the test suite.

These generators are deliberately independent of trivc.synth: tests build
their own scenes with explicit projection code so solver checks do not
trust the module under test.
"""

import numpy as np
import pytest

from trivc.geometry import RelativePose, TripletHypothesis


def rotation_from_rotvec(v):
    """Rodrigues formula; independent of scipy for oracle duty."""
    v = np.asarray(v, dtype=np.float64)
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        return np.eye(3)
    k = v / angle
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


def random_pose(rng, max_angle=0.5):
    R = rotation_from_rotvec(rng.uniform(-max_angle, max_angle, size=3))
    t = rng.normal(size=3)
    return RelativePose(R, t / np.linalg.norm(t))


def project_points(pose, X):
    """Normalized projections in camera 1 (identity) and camera 2 (pose)."""
    X = np.atleast_2d(X)
    x1 = X[:, :2] / X[:, 2:]
    C2 = X @ pose.rotation.T + pose.translation
    x2 = C2[:, :2] / C2[:, 2:]
    return x1, x2, C2[:, 2]


def scene_in_front(rng, pose, n, depth_offset=30.0, spread=5.0):
    """n random points visible in both cameras."""
    pts = []
    while len(pts) < n:
        X = rng.uniform(-spread, spread, size=3) + np.array([0.0, 0.0, depth_offset])
        c2 = pose.rotation @ X + pose.translation
        if X[2] > 0.1 and c2[2] > 0.1:
            pts.append(X)
    return np.array(pts)


def make_two_view(rng, n, max_angle=0.5):
    pose = random_pose(rng, max_angle)
    X = scene_in_front(rng, pose, n)
    x1, x2, _ = project_points(pose, X)
    return pose, X, x1, x2


def make_three_view(rng, n, max_angle=0.4):
    """Random triplet with all points in front of all three cameras."""
    while True:
        pose12 = random_pose(rng, max_angle)
        pose13 = random_pose(rng, max_angle)
        X = []
        tries = 0
        while len(X) < n and tries < 500:
            tries += 1
            P = rng.uniform(-5.0, 5.0, size=3) + np.array([0.0, 0.0, 30.0])
            c2 = pose12.rotation @ P + pose12.translation
            c3 = pose13.rotation @ P + pose13.translation
            if P[2] > 0.1 and c2[2] > 0.1 and c3[2] > 0.1:
                X.append(P)
        if len(X) == n:
            break
    X = np.array(X)
    x1 = X[:, :2] / X[:, 2:]
    C2 = X @ pose12.rotation.T + pose12.translation
    C3 = X @ pose13.rotation.T + pose13.translation
    gt = TripletHypothesis(pose12, pose13)
    return gt, X, x1, C2[:, :2] / C2[:, 2:], C3[:, :2] / C3[:, 2:]


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)
