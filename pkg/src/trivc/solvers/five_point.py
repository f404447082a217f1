"""Five-point relative pose solver.

Pipeline: null space of the 5x9 epipolar system; the ten cubic rank/trace
constraints on E = x*X + y*Y + z*Z + W; Gauss-Jordan elimination of the
10x20 coefficient matrix; pairing rows that differ by a factor of z leaves
a 3x3 matrix of z-polynomials acting on (x, y, 1), whose determinant is a
degree-10 univariate solved by companion-matrix roots. Each root gets a
short Gauss-Newton polish on the original constraint system.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateError
from . import _poly

MAX_CANDIDATES = 10

# Monomial bases in (x, y, z).
_LIN = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
_QUAD = _poly.monomials(2)
_CUB = _poly.monomials(3)

_MUL_LL = _poly.mul_table(_LIN, _LIN, _QUAD)
_MUL_QL = _poly.mul_table(_QUAD, _LIN, _CUB)
_CUB_EVAL = _poly.BasisEval(_CUB)

# Column ordering for the elimination step. The first ten monomials are
# eliminated; the equations x^2*z == z * x^2 (and likewise for y^2, x*y)
# then couple the remaining columns into three rows linear in x and y.
_ELIM_ORDER = [
    (3, 0, 0), (0, 3, 0), (2, 1, 0), (1, 2, 0), (2, 0, 1),
    (2, 0, 0), (0, 2, 1), (0, 2, 0), (1, 1, 1), (1, 1, 0),
    (1, 0, 2), (1, 0, 1), (1, 0, 0), (0, 1, 2), (0, 1, 1),
    (0, 1, 0), (0, 0, 3), (0, 0, 2), (0, 0, 1), (0, 0, 0),
]
_PERM = np.array([_CUB.index(m) for m in _ELIM_ORDER])

# Index plans for the batched polynomial products (built once at import).
# Stage 1 (linear x linear): B = E @ E.T needs E[i,k]*E[l,k]; the det needs
# the three 2x2 minors of E.
_LL_A = []
_LL_B = []
for _i in range(3):
    for _l in range(3):
        for _k in range(3):
            _LL_A.append(3 * _i + _k)
            _LL_B.append(3 * _l + _k)
for _a, _b in [(4, 8), (5, 7), (3, 8), (5, 6), (3, 7), (4, 6)]:
    _LL_A.append(_a)
    _LL_B.append(_b)
_LL_A = np.array(_LL_A)
_LL_B = np.array(_LL_B)

# The quadratic operand of the (i, j, l) product in (B @ E)[i,j] is B[i,l];
# flattened over B.reshape(9, .) that is row 3*i+l.
_BE_ORDER = np.array([3 * i + l for i in range(3) for _ in range(3) for l in range(3)])

# Stage 2 (quadratic x linear): (B @ E)[i,j] terms, tr(B)*E, minors*E[0,:].
_QL_LIN = []
for _i in range(3):
    for _j in range(3):
        for _l in range(3):
            _QL_LIN.append(3 * _l + _j)  # B[i,l] * E[l,j]
for _i in range(9):
    _QL_LIN.append(_i)  # tr(B) * E[i,j]
_QL_LIN.extend([0, 1, 2])  # minors * E[0,0], E[0,1], E[0,2]
_QL_LIN = np.array(_QL_LIN)


def _constraint_matrix(basis):
    """10x20 coefficient matrix (canonical monomial order) of det(E) = 0 and
    2*E@E.T@E - tr(E@E.T)*E = 0 for E = x*X + y*Y + z*Z + W, with the
    (4, 3, 3) null-space basis ordered (X, Y, Z, W)."""
    E_lin = np.empty((9, 4))
    E_lin[:, 0] = basis[3].reshape(9)
    E_lin[:, 1] = basis[0].reshape(9)
    E_lin[:, 2] = basis[1].reshape(9)
    E_lin[:, 3] = basis[2].reshape(9)

    quads = _poly.batched_products(E_lin[_LL_A], E_lin[_LL_B], _MUL_LL)
    B = quads[:27].reshape(3, 3, 3, -1).sum(axis=2)  # (E @ E.T)[i,l]
    minors = quads[27:]
    m0 = minors[0] - minors[1]
    m1 = minors[2] - minors[3]
    m2 = minors[4] - minors[5]
    trB = B[0, 0] + B[1, 1] + B[2, 2]

    quad_ops = np.concatenate(
        [
            B.reshape(9, -1)[_BE_ORDER],
            np.repeat(trB[None, :], 9, axis=0),
            np.stack([m0, m1, m2]),
        ]
    )
    cubs = _poly.batched_products(quad_ops, E_lin[_QL_LIN], _MUL_QL)
    BE = cubs[:27].reshape(3, 3, 3, -1).sum(axis=2)
    trBE = cubs[27:36].reshape(3, 3, -1)
    det = cubs[36] - cubs[37] + cubs[38]

    C = np.empty((10, len(_CUB)))
    C[0] = det
    C[1:] = (2.0 * BE - trBE).reshape(9, -1)
    return C


def _epipolar_rows(x1, x2):
    """Rows of the linear system rows @ vec(E) = 0, E flattened row-major."""
    p1 = np.concatenate([x1, np.ones((x1.shape[0], 1))], axis=1)
    p2 = np.concatenate([x2, np.ones((x2.shape[0], 1))], axis=1)
    return np.einsum("ni,nj->nij", p2, p1).reshape(-1, 9)


def _gauss_jordan(M):
    """Solve the elimination M[:, :10] @ A = M[:, 10:] at extended
    precision: float64 factorization plus two longdouble iterative
    refinement rounds. Raises DegenerateError on a singular block."""
    L = M[:, :10]
    R = M[:, 10:]
    L64 = L.astype(np.float64)
    try:
        A = np.linalg.solve(L64, R.astype(np.float64)).astype(np.longdouble)
        for _ in range(2):
            resid = R - L @ A
            A = A + np.linalg.solve(L64, resid.astype(np.float64))
    except np.linalg.LinAlgError:
        raise DegenerateError("degenerate sample") from None
    return A


def _polyval_many(coeffs, z):
    """Evaluate several descending-coefficient polynomials at points z.

    coeffs: (m, d) array, z: (n,) array -> (m, n).
    """
    out = np.zeros((coeffs.shape[0], z.shape[0]))
    for c in coeffs.T:
        out = out * z[None, :] + c[:, None]
    return out


def solve_5pt(x1, x2):
    """Essential matrices from five normalized correspondences.

    x1, x2: arrays (5, 2). Returns a list of up to 10 essential matrices.
    Raises DegenerateError for rank-deficient samples.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != (5, 2) or x2.shape != (5, 2):
        raise ValueError("solve_5pt expects five correspondences per view")

    rows = _epipolar_rows(x1, x2)
    _, s, Vt = np.linalg.svd(rows)
    if s[4] < 1e-10 * s[0]:
        raise DegenerateError("degenerate sample")
    basis = Vt[5:9].reshape(4, 3, 3)  # x, y, z directions, W last

    C = _constraint_matrix(basis)
    # Row equilibration keeps the elimination step well conditioned.
    C /= np.max(np.abs(C), axis=1, keepdims=True)
    A = _gauss_jordan(C[:, _PERM].astype(np.longdouble))

    # Row r of A expresses its leading monomial as -(x*P_r(z) + y*Q_r(z)
    # + R_r(z)) over the trailing columns [xz^2 xz x | yz^2 yz y | z^3..1].
    # z * row(x^2) - row(x^2 z) etc. eliminates the leading monomials.
    zero = np.zeros(1, dtype=np.longdouble)

    def poly_rows(top, bot):
        # top - z*bot for the (P, Q, R) split of rows `top`, `bot` of A.
        px = np.concatenate([zero, A[top, 0:3]]) - np.concatenate([A[bot, 0:3], zero])
        py = np.concatenate([zero, A[top, 3:6]]) - np.concatenate([A[bot, 3:6], zero])
        p1 = np.concatenate([zero, A[top, 6:10]]) - np.concatenate([A[bot, 6:10], zero])
        return px, py, p1

    bx = np.empty((3, 4), dtype=np.longdouble)
    by = np.empty((3, 4), dtype=np.longdouble)
    b1 = np.empty((3, 5), dtype=np.longdouble)
    for k, (top, bot) in enumerate([(4, 5), (6, 7), (8, 9)]):
        bx[k], by[k], b1[k] = poly_rows(top, bot)

    # det of the 3x3 polynomial matrix [bx | by | b1] -> degree-10 univariate.
    det = (
        np.convolve(bx[0], np.convolve(by[1], b1[2]) - np.convolve(b1[1], by[2]))
        - np.convolve(by[0], np.convolve(bx[1], b1[2]) - np.convolve(b1[1], bx[2]))
        + np.convolve(b1[0], np.convolve(bx[1], by[2]) - np.convolve(by[1], bx[2]))
    )

    roots = _real_roots(det.astype(np.float64))
    bx = bx.astype(np.float64)
    by = by.astype(np.float64)
    b1 = b1.astype(np.float64)
    if roots.size == 0:
        return []

    # Recover (x, y) at each root from the 3x2 linear system, least squares.
    vx = _polyval_many(bx, roots)  # (3, n)
    vy = _polyval_many(by, roots)
    v1 = _polyval_many(b1, roots)
    aa = np.sum(vx * vx, axis=0)
    ab = np.sum(vx * vy, axis=0)
    bb = np.sum(vy * vy, axis=0)
    ax = -np.sum(vx * v1, axis=0)
    bx_ = -np.sum(vy * v1, axis=0)
    detn = aa * bb - ab * ab
    ok = np.abs(detn) > 1e-300
    roots = roots[ok]
    if roots.size == 0:
        return []
    xs = (ax[ok] * bb[ok] - ab[ok] * bx_[ok]) / detn[ok]
    ys = (aa[ok] * bx_[ok] - ab[ok] * ax[ok]) / detn[ok]

    xs, ys, zs = _poly.gauss_newton_polish(C, _CUB_EVAL, xs, ys, roots, iterations=4)

    Es = (
        xs[:, None, None] * basis[0]
        + ys[:, None, None] * basis[1]
        + zs[:, None, None] * basis[2]
        + basis[3]
    )
    finite = np.all(np.isfinite(Es.reshape(-1, 9)), axis=1)
    Es = Es[finite]
    if Es.shape[0] == 0:
        return []
    # Batched projection onto the essential manifold.
    U, s, Vt = np.linalg.svd(Es)
    sigma = 0.5 * (s[:, 0] + s[:, 1])
    diag = np.zeros_like(s)
    diag[:, 0] = sigma
    diag[:, 1] = sigma
    Es = (U * diag[:, None, :]) @ Vt
    return list(Es[:MAX_CANDIDATES])


def _real_roots(coeffs_descending):
    """Real roots of a polynomial: companion-matrix roots, a short complex
    Newton polish, then near-real acceptance (|Im| <= 1e-8 * |Re|)."""
    c = np.asarray(coeffs_descending, dtype=np.float64)
    top = np.max(np.abs(c))
    if top == 0.0 or not np.isfinite(top):
        return np.empty(0)
    c = c / top
    # Strip only leading coefficients that are zero at working precision:
    # genuinely small ones encode large roots and must stay.
    lead = np.argmax(np.abs(c) > 5e-16)
    c = c[lead:]
    if c.size <= 1:
        return np.empty(0)
    roots = np.roots(c)

    # One fused Newton step per root (Horner for p and p' together).
    p = np.zeros_like(roots)
    dp = np.zeros_like(roots)
    for coeff in c:
        dp = dp * roots + p
        p = p * roots + coeff
    safe = np.abs(dp) > 1e-300
    roots = np.where(safe, roots - np.where(safe, p, 0) / np.where(safe, dp, 1), roots)

    near_real = np.abs(roots.imag) <= 1e-8 * np.maximum(1.0, np.abs(roots.real))
    re = np.sort(roots[near_real].real)
    if re.size == 0:
        return re
    keep = np.ones(re.size, dtype=bool)
    keep[1:] = np.diff(re) > 1e-9 * (1.0 + np.abs(re[1:]))
    return re[keep]
