"""Six-point relative pose solver for cameras sharing one unknown focal
length.

The fundamental matrix is parameterized on the 3-dimensional null space of
the 6x9 epipolar system, F = x*F1 + y*F2 + F3. With D = diag(1, 1, w) and
w = 1/f^2, the singularity and trace constraints

    det(F) = 0,   2*F D F^T D F - tr(F D F^T D) F = 0

form ten equations, cubic in (x, y) and quadratic in w. Collecting the ten
(x, y)-monomials gives a quadratic polynomial eigenvalue problem in w,
linearized to a 20x20 generalized eigenproblem (QZ). Candidates get a
Gauss-Newton polish on the full constraint system.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from ..errors import DegenerateError
from ..geometry import project_to_essential
from . import _poly

MAX_CANDIDATES = 15

# Monomial bases over (x, y, w).
_LF = [(0, 0, 0), (1, 0, 0), (0, 1, 0)]
_W = [(0, 0, 0), (0, 0, 1)]
_B6 = sorted((i, j, k) for (i, j, _z) in _LF for k in (0, 1))
_P21 = sorted((i, j, k) for i in range(3) for j in range(3) for k in range(2) if i + j <= 2)
_P22 = sorted((i, j, k) for i in range(3) for j in range(3) for k in range(3) if i + j <= 2)
_P32 = sorted((i, j, k) for i in range(4) for j in range(4) for k in range(3) if i + j <= 3)

_T_LF_W = _poly.mul_table(_LF, _W, _B6)
_T_B6_LF = _poly.mul_table(_B6, _LF, _P21)
_T_P21_B6 = _poly.mul_table(_P21, _B6, _P32)
_T_P21_W = _poly.mul_table(_P21, _W, _P22)
_T_P22_LF = _poly.mul_table(_P22, _LF, _P32)
_T_LF_LF = _poly.mul_table(_LF, _LF, _P21)
_T_P21_LF = _poly.mul_table(_P21, _LF, _P32)

_P32_EVAL = _poly.BasisEval(_P32)

# (x, y)-monomial ordering for the eigen formulation; constant last.
_XY = [(3, 0), (2, 1), (1, 2), (0, 3), (2, 0), (1, 1), (0, 2), (1, 0), (0, 1), (0, 0)]
_XY_INDEX = {m: c for c, m in enumerate(_XY)}

# Selection tensors: B_k = C @ _SEL[k].
_SEL = np.zeros((3, len(_P32), len(_XY)))
for _t, (_i, _j, _k) in enumerate(_P32):
    _SEL[_k, _t, _XY_INDEX[(_i, _j)]] = 1.0

# D = diag(1, 1, w) entries over the _W basis.
_D_DIAG = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _constraint_matrix(F_lin):
    """10 x len(_P32) coefficient matrix of the focal-length constraint
    system. F_lin is (9, 3): per-entry coefficients over (1, x, y)."""
    # G[i,k] = F[i,k] * D[k,k] and G2[l,j] = D[l,l] * F[l,j].
    d_k = np.tile(_D_DIAG, (3, 1))  # row 3*i+k -> D[k,k]
    G = _poly.batched_products(F_lin, d_k, _T_LF_W)  # (9, B6), row 3*i+k
    d_l = np.repeat(_D_DIAG, 3, axis=0)  # row 3*l+j -> D[l,l]
    G2 = _poly.batched_products(F_lin, d_l, _T_LF_W)  # (9, B6), row 3*l+j

    # H[i,j] = sum_k G[i,k] * F[j,k].
    a_idx = np.array([3 * i + k for i in range(3) for _j in range(3) for k in range(3)])
    b_idx = np.array([3 * j + k for _i in range(3) for j in range(3) for k in range(3)])
    H = _poly.batched_products(G[a_idx], F_lin[b_idx], _T_B6_LF)
    H = H.reshape(3, 3, 3, -1).sum(axis=2)  # (3, 3, P21)

    # T1[i,j] = sum_l H[i,l] * G2[l,j].
    h_idx = np.array([3 * i + l for i in range(3) for _j in range(3) for l in range(3)])
    g_idx = np.array([3 * l + j for _i in range(3) for j in range(3) for l in range(3)])
    T1 = _poly.batched_products(H.reshape(9, -1)[h_idx], G2[g_idx], _T_P21_B6)
    T1 = T1.reshape(3, 3, 3, -1).sum(axis=2)

    # tr(F D F^T D) = sum_i H[i,i] * D[i,i].
    Hd = np.stack([H[0, 0], H[1, 1], H[2, 2]])
    tr = _poly.batched_products(Hd, _D_DIAG, _T_P21_W).sum(axis=0)
    trF = _poly.batched_products(np.repeat(tr[None, :], 9, axis=0), F_lin, _T_P22_LF)

    # det(F) via the first-row cofactor expansion.
    pairs = [(4, 8), (5, 7), (3, 8), (5, 6), (3, 7), (4, 6)]
    mins = _poly.batched_products(
        F_lin[[a for a, _ in pairs]], F_lin[[b for _, b in pairs]], _T_LF_LF
    )
    m0 = mins[0] - mins[1]
    m1 = mins[2] - mins[3]
    m2 = mins[4] - mins[5]
    dets = _poly.batched_products(np.stack([m0, m1, m2]), F_lin[[0, 1, 2]], _T_P21_LF)
    det = dets[0] - dets[1] + dets[2]

    C = np.empty((10, len(_P32)))
    C[0] = det
    C[1:] = (2.0 * T1 - trF.reshape(3, 3, -1)).reshape(9, -1)
    return C


def solve_6pt_focal(x1, x2):
    """Candidate (essential matrix, focal length) pairs from six
    correspondences sharing an unknown focal length.

    x1, x2: (6, 2) arrays in pixel coordinates pre-divided by a nominal
    image scale so the true focal is O(1). Returns a list of (E, f) with E
    in normalized (calibrated) units. Raises DegenerateError for
    rank-deficient samples or when no real positive focal exists.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != (6, 2) or x2.shape != (6, 2):
        raise ValueError("solve_6pt_focal expects six correspondences per view")

    p1 = np.concatenate([x1, np.ones((6, 1))], axis=1)
    p2 = np.concatenate([x2, np.ones((6, 1))], axis=1)
    rows = np.einsum("ni,nj->nij", p2, p1).reshape(6, 9)
    _, s, Vt = np.linalg.svd(rows)
    if s[5] < 1e-10 * s[0]:
        raise DegenerateError("degenerate sample")

    F_lin = np.empty((9, 3))
    F_lin[:, 0] = Vt[8]  # constant part F3
    F_lin[:, 1] = Vt[6]  # x direction
    F_lin[:, 2] = Vt[7]  # y direction

    C = _constraint_matrix(F_lin)
    C /= np.max(np.abs(C), axis=1, keepdims=True)

    B = np.einsum("rt,ktc->krc", C, _SEL)  # (3, 10, 10): B0 + w B1 + w^2 B2
    A = np.zeros((20, 20))
    A[:10, 10:] = np.eye(10)
    A[10:, :10] = -B[0]
    A[10:, 10:] = -B[1]
    Cm = np.zeros((20, 20))
    Cm[:10, :10] = np.eye(10)
    Cm[10:, 10:] = B[2]

    with np.errstate(all="ignore"):
        eigvals, eigvecs = scipy.linalg.eig(A, Cm, check_finite=False)

    finite = np.isfinite(eigvals)
    near_real = finite & (
        np.abs(eigvals.imag) <= 1e-6 * np.maximum(1.0, np.abs(eigvals.real))
    )
    ws = eigvals[near_real].real
    vecs = eigvecs[:, near_real].T.real  # rows
    m = vecs[:, :10]
    denom = m[:, 9]
    ok = (ws > 1e-10) & (np.abs(denom) > 1e-12 * np.linalg.norm(m, axis=1))
    if not np.any(ok):
        raise DegenerateError("no real focal")
    xs = m[ok, 7] / denom[ok]
    ys = m[ok, 8] / denom[ok]
    ws = ws[ok]

    xs, ys, ws = _poly.gauss_newton_polish(C, _P32_EVAL, xs, ys, ws, iterations=4)

    vals = _P32_EVAL.values(xs, ys, ws)
    res = np.linalg.norm(vals @ C.T, axis=1)
    good = (ws > 1e-10) & (res < 1e-5)
    if not np.any(good):
        raise DegenerateError("no real focal")

    order = np.argsort(res[good])
    xs, ys, ws = xs[good][order], ys[good][order], ws[good][order]

    out = []
    seen = []
    for x, y, w in zip(xs, ys, ws):
        f = 1.0 / np.sqrt(w)
        if any(
            abs(f - f2) <= 1e-9 * (1.0 + f2)
            and abs(x - x2) <= 1e-9 * (1.0 + abs(x2))
            and abs(y - y2) <= 1e-9 * (1.0 + abs(y2))
            for x2, y2, f2 in seen
        ):
            continue
        F = x * Vt[6].reshape(3, 3) + y * Vt[7].reshape(3, 3) + Vt[8].reshape(3, 3)
        K = np.array([f, f, 1.0])
        E = project_to_essential(F * np.outer(K, K))
        if not np.all(np.isfinite(E)):
            continue
        seen.append((x, y, f))
        out.append((E, float(f)))
        if len(out) == MAX_CANDIDATES:
            break
    if not out:
        raise DegenerateError("no real focal")
    return out
