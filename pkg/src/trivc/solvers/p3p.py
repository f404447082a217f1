"""Absolute pose from three 2D-3D correspondences (Lambda-Twist method).

Solves for depths along the three bearing rays via a cubic root, an
eigendecomposition of a singular 3x3 form, and per-branch quadratics,
followed by a short Gauss-Newton refinement of the depths. Returns
world-to-camera poses (R, t) with x_cam = R @ X + t.

The arithmetic is deliberately scalar: the solver sits inside RANSAC inner
loops where small-array overhead dominates.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DegenerateError

MAX_SOLUTIONS = 4


def _single_cubic_root(c3, c2, c1, c0):
    """One real root of c3*g^3 + c2*g^2 + c1*g + c0."""
    if abs(c3) < 1e-14:
        if abs(c2) < 1e-14:
            if abs(c1) < 1e-14:
                return 0.0
            return -c0 / c1
        disc = c1 * c1 - 4.0 * c2 * c0
        if disc >= 0.0:
            return (-c1 + math.sqrt(disc)) / (2.0 * c2)
        return -c1 / (2.0 * c2)
    a = c2 / c3
    b = c1 / c3
    c = c0 / c3
    p = b - a * a / 3.0
    q = c - a * b / 3.0 + 2.0 * a * a * a / 27.0
    disc = q * q / 4.0 + p * p * p / 27.0
    if disc >= 0.0:
        sq = math.sqrt(disc)
        u = -q / 2.0 + sq
        v = -q / 2.0 - sq
        t = math.copysign(abs(u) ** (1.0 / 3.0), u) + math.copysign(
            abs(v) ** (1.0 / 3.0), v
        )
    else:
        m = 2.0 * math.sqrt(-p / 3.0)
        theta = math.acos(max(-1.0, min(1.0, 3.0 * q / (p * m)))) / 3.0
        t = m * math.cos(theta)
    root = t - a / 3.0
    for _ in range(6):
        f = ((c3 * root + c2) * root + c1) * root + c0
        df = (3.0 * c3 * root + 2.0 * c2) * root + c1
        if abs(df) < 1e-300:
            break
        d = f / df
        root -= d
        if abs(d) < 1e-14 * max(1.0, abs(root)):
            break
    return root


def _cross(a, b):
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _norm(a):
    return math.sqrt(_dot(a, a))


def _unit(a):
    n = _norm(a)
    return (a[0] / n, a[1] / n, a[2] / n)


def _eig_with_zero(M):
    """Eigen-structure of a symmetric 3x3 matrix (tuple of row tuples) with
    one zero eigenvalue: two eigenvector/eigenvalue pairs (|s1| >= |s2|)."""
    p1 = -(M[0][0] + M[1][1] + M[2][2])
    p0 = (
        M[0][0] * M[1][1]
        + M[0][0] * M[2][2]
        + M[1][1] * M[2][2]
        - M[0][1] * M[0][1]
        - M[0][2] * M[0][2]
        - M[1][2] * M[1][2]
    )
    disc = max(p1 * p1 - 4.0 * p0, 0.0)
    sq = math.sqrt(disc)
    s1 = 0.5 * (-p1 + sq)
    s2 = 0.5 * (-p1 - sq)
    if abs(s1) < abs(s2):
        s1, s2 = s2, s1

    def eigvec(sigma):
        r0 = (M[0][0] - sigma, M[0][1], M[0][2])
        r1 = (M[0][1], M[1][1] - sigma, M[1][2])
        r2 = (M[0][2], M[1][2], M[2][2] - sigma)
        best = None
        best_n = -1.0
        for a, b in ((r0, r1), (r0, r2), (r1, r2)):
            v = _cross(a, b)
            n = _dot(v, v)
            if n > best_n:
                best_n = n
                best = v
        if best_n <= 1e-30:
            return None
        return _unit(best)

    b1 = eigvec(s1)
    b2 = eigvec(s2)
    return b1, b2, s1, s2


def solve_p3p(world, obs):
    """Absolute poses from three world points and three image observations.

    world: (3, 3) array of 3D points; obs: (3, 2) array of normalized image
    points. Returns up to four (R, t) tuples (numpy arrays) with
    x_cam = R @ X + t. Raises DegenerateError for collinear world points or
    repeated bearings.
    """
    X = np.asarray(world, dtype=np.float64)
    x = np.asarray(obs, dtype=np.float64)
    if X.shape != (3, 3) or x.shape != (3, 2):
        raise ValueError("solve_p3p expects three world points and three observations")

    y = []
    for i in range(3):
        v = (float(x[i, 0]), float(x[i, 1]), 1.0)
        y.append(_unit(v))
    y0, y1, y2 = y

    X0 = (float(X[0, 0]), float(X[0, 1]), float(X[0, 2]))
    X1 = (float(X[1, 0]), float(X[1, 1]), float(X[1, 2]))
    X2 = (float(X[2, 0]), float(X[2, 1]), float(X[2, 2]))
    d12 = (X0[0] - X1[0], X0[1] - X1[1], X0[2] - X1[2])
    d13 = (X0[0] - X2[0], X0[1] - X2[1], X0[2] - X2[2])
    d23 = (X1[0] - X2[0], X1[1] - X2[1], X1[2] - X2[2])
    a12 = _dot(d12, d12)
    a13 = _dot(d13, d13)
    a23 = _dot(d23, d23)
    if min(a12, a13, a23) < 1e-20:
        raise DegenerateError("degenerate sample: repeated world points")
    cr = _cross(d12, d13)
    if _dot(cr, cr) < 1e-16 * a12 * a13:
        raise DegenerateError("degenerate sample: collinear world points")

    b12 = _dot(y0, y1)
    b13 = _dot(y0, y2)
    b23 = _dot(y1, y2)
    if max(abs(b12), abs(b13), abs(b23)) > 1.0 - 1e-14:
        raise DegenerateError("degenerate sample: repeated bearings")

    # D1 = M12*a23 - M23*a12, D2 = M13*a23 - M23*a13 (symmetric).
    D1 = (
        (a23, -b12 * a23, 0.0),
        (-b12 * a23, a23 - a12, b23 * a12),
        (0.0, b23 * a12, -a12),
    )
    D2 = (
        (a23, 0.0, -b13 * a23),
        (0.0, -a13, b23 * a13),
        (-b13 * a23, b23 * a13, a23 - a13),
    )

    def det3(c0, c1, c2):
        return _dot(c0, _cross(c1, c2))

    # Columns of D1/D2 (symmetric, so rows work as columns).
    c3 = det3(D2[0], D2[1], D2[2])
    c2 = det3(D1[0], D2[1], D2[2]) + det3(D2[0], D1[1], D2[2]) + det3(D2[0], D2[1], D1[2])
    c1 = det3(D2[0], D1[1], D1[2]) + det3(D1[0], D2[1], D1[2]) + det3(D1[0], D1[1], D2[2])
    c0 = det3(D1[0], D1[1], D1[2])

    gamma = _single_cubic_root(c3, c2, c1, c0)
    D0 = tuple(
        tuple(D1[i][j] + gamma * D2[i][j] for j in range(3)) for i in range(3)
    )

    eig = _eig_with_zero(D0)
    if eig[0] is None or eig[1] is None:
        return []
    b1v, b2v, s1, s2 = eig
    if abs(s1) < 1e-14 or s1 * s2 > 0:
        return []
    s_sq = -s2 / s1
    if s_sq < 0:
        return []
    s_abs = math.sqrt(s_sq)

    e0, e3, e6 = b1v
    e1, e4, e7 = b2v

    branches = []
    for s in (s_abs, -s_abs):
        denom = s * e1 - e0
        if abs(denom) < 1e-14:
            continue
        w0 = (e3 - s * e4) / denom
        w1 = (e6 - s * e7) / denom
        # Quadratic in tau from L^T D1 L = 0 with L = (w0 + w1*tau, 1, tau).
        qa = w1 * w1 * a23 - a12
        qb = 2.0 * (w0 * w1 * a23 - b12 * a23 * w1 + b23 * a12)
        qc = w0 * w0 * a23 - 2.0 * w0 * b12 * a23 + a23 - a12
        if abs(qa) < 1e-14:
            if abs(qb) < 1e-14:
                continue
            taus = (-qc / qb,)
        else:
            disc = qb * qb - 4.0 * qa * qc
            if disc < 0:
                continue
            sq = math.sqrt(disc)
            taus = ((-qb + sq) / (2.0 * qa), (-qb - sq) / (2.0 * qa))
        for tau in taus:
            if tau > 0:
                branches.append((tau, w0, w1))

    solutions = []
    for tau, w0, w1 in branches:
        denom = 1.0 + tau * tau - 2.0 * tau * b23
        if denom < 1e-14:
            continue
        l2 = math.sqrt(a23 / denom)
        l3 = tau * l2
        l1 = (w0 + w1 * tau) * l2
        if l1 <= 0:
            continue
        lam = _refine_depths(l1, l2, l3, b12, b13, b23, a12, a13, a23)
        if lam is None:
            continue
        l1, l2, l3 = lam

        z1 = (l1 * y0[0] - l2 * y1[0], l1 * y0[1] - l2 * y1[1], l1 * y0[2] - l2 * y1[2])
        z2 = (l2 * y1[0] - l3 * y2[0], l2 * y1[1] - l3 * y2[1], l2 * y1[2] - l3 * y2[2])
        # Two-sided Gram-Schmidt gives an exactly orthogonal rotation that
        # maps the world frame of (d12, d23) onto the camera frame (z1, z2).
        u1 = _unit(d12)
        u3 = _unit(_cross(d12, d23))
        u2 = _cross(u3, u1)
        n1 = _norm(z1)
        n3c = _cross(z1, z2)
        n3n = _norm(n3c)
        if n1 < 1e-300 or n3n < 1e-300:
            continue
        v1 = (z1[0] / n1, z1[1] / n1, z1[2] / n1)
        v3 = (n3c[0] / n3n, n3c[1] / n3n, n3c[2] / n3n)
        v2 = _cross(v3, v1)
        V = np.array([v1, v2, v3]).T
        U = np.array([u1, u2, u3]).T
        R = V @ U.T
        t = np.array(
            [
                l1 * y0[0] - (R[0, 0] * X0[0] + R[0, 1] * X0[1] + R[0, 2] * X0[2]),
                l1 * y0[1] - (R[1, 0] * X0[0] + R[1, 1] * X0[1] + R[1, 2] * X0[2]),
                l1 * y0[2] - (R[2, 0] * X0[0] + R[2, 1] * X0[1] + R[2, 2] * X0[2]),
            ]
        )
        solutions.append((R, t, (l1, l2, l3)))

    # Branches occasionally duplicate a pose; keep the first of each.
    unique = []
    for R, t, lam in solutions:
        dup = False
        for _, _, lam2 in unique:
            if (
                abs(lam[0] - lam2[0]) <= 1e-9 * (1.0 + abs(lam[0]))
                and abs(lam[1] - lam2[1]) <= 1e-9 * (1.0 + abs(lam[1]))
                and abs(lam[2] - lam2[2]) <= 1e-9 * (1.0 + abs(lam[2]))
            ):
                dup = True
                break
        if not dup:
            unique.append((R, t, lam))
    return [(R, t) for R, t, _ in unique[:MAX_SOLUTIONS]]


def _refine_depths(l1, l2, l3, b12, b13, b23, a12, a13, a23, iters=3):
    """Gauss-Newton on the three pairwise distance constraints; scalar 3x3
    solve by Cramer's rule. Returns None if refinement leaves the positive
    octant."""
    for _ in range(iters):
        r1 = l1 * l1 + l2 * l2 - 2.0 * b12 * l1 * l2 - a12
        r2 = l1 * l1 + l3 * l3 - 2.0 * b13 * l1 * l3 - a13
        r3 = l2 * l2 + l3 * l3 - 2.0 * b23 * l2 * l3 - a23
        if max(abs(r1), abs(r2), abs(r3)) < 1e-15 * max(a12, a13, a23):
            break
        # Jacobian rows (scaled by 1/2): [(l1-b12*l2), (l2-b12*l1), 0] etc.
        j11 = l1 - b12 * l2
        j12 = l2 - b12 * l1
        j21 = l1 - b13 * l3
        j23 = l3 - b13 * l1
        j32 = l2 - b23 * l3
        j33 = l3 - b23 * l2
        # Solve J * d = r/2 with J = [[j11, j12, 0], [j21, 0, j23], [0, j32, j33]]
        # by Cramer's rule.
        det = -(j12 * j21 * j33 + j11 * j23 * j32)
        if abs(det) < 1e-300:
            break
        h1 = 0.5 * r1
        h2 = 0.5 * r2
        h3 = 0.5 * r3
        d1 = (-h1 * j23 * j32 - j12 * (h2 * j33 - j23 * h3)) / det
        d2 = (j11 * (h2 * j33 - j23 * h3) - h1 * j21 * j33) / det
        d3 = (-j11 * h2 * j32 - j12 * j21 * h3 + h1 * j21 * j32) / det
        l1n, l2n, l3n = l1 - d1, l2 - d2, l3 - d3
        if not (math.isfinite(l1n) and math.isfinite(l2n) and math.isfinite(l3n)):
            break
        l1, l2, l3 = l1n, l2n, l3n
    if l1 <= 0 or l2 <= 0 or l3 <= 0:
        return None
    return l1, l2, l3
