"""Dense multivariate polynomial helpers for the minimal solvers.

Polynomials in up to three variables are stored as coefficient vectors over
a fixed monomial basis (a list of exponent triples). Products of many
polynomial pairs are evaluated in one shot: stack the coefficient vectors,
take the batched outer product, and fold it back onto the output basis with
a precomputed 0/1 matrix. This keeps the per-solve cost at a handful of
numpy calls.
"""

from __future__ import annotations

import numpy as np


def monomials(max_total: int, max_each=(3, 3, 3)):
    """All exponent triples (i, j, k) with i+j+k <= max_total and
    per-variable caps, in graded lexicographic order."""
    out = []
    for total in range(max_total + 1):
        for i in range(min(total, max_each[0]), -1, -1):
            for j in range(min(total - i, max_each[1]), -1, -1):
                k = total - i - j
                if k <= max_each[2]:
                    out.append((i, j, k))
    return out


def mul_table(basis_a, basis_b, basis_out) -> np.ndarray:
    """Matrix M of shape (len_a*len_b, len_out) such that for coefficient
    stacks A (p, len_a) and B (p, len_b), the products are
    ``einsum('pi,pj->pij', A, B).reshape(p, -1) @ M``."""
    index = {m: c for c, m in enumerate(basis_out)}
    M = np.zeros((len(basis_a) * len(basis_b), len(basis_out)))
    for a, ma in enumerate(basis_a):
        for b, mb in enumerate(basis_b):
            m = (ma[0] + mb[0], ma[1] + mb[1], ma[2] + mb[2])
            if m not in index:
                raise ValueError(f"product monomial {m} not in output basis")
            M[a * len(basis_b) + b, index[m]] = 1.0
    return M


def batched_products(A, B, table) -> np.ndarray:
    """Multiply polynomial pairs row-wise: A (p, la), B (p, lb) -> (p, lout)."""
    p = A.shape[0]
    outer = np.einsum("pi,pj->pij", A, B).reshape(p, -1)
    return outer @ table


class BasisEval:
    """Fast batched evaluation of a monomial basis and its gradient using
    cumulative power tables (exponents up to 3 per variable)."""

    def __init__(self, basis):
        e = np.asarray(basis)
        self.I = e[:, 0]
        self.J = e[:, 1]
        self.K = e[:, 2]
        self.Im = np.maximum(self.I - 1, 0)
        self.Jm = np.maximum(self.J - 1, 0)
        self.Km = np.maximum(self.K - 1, 0)
        self.fI = self.I.astype(np.float64)
        self.fJ = self.J.astype(np.float64)
        self.fK = self.K.astype(np.float64)

    @staticmethod
    def _powers(v):
        p = np.empty((v.shape[0], 4))
        p[:, 0] = 1.0
        p[:, 1] = v
        p[:, 2] = v * v
        p[:, 3] = p[:, 2] * v
        return p

    def values(self, x, y, z):
        xp = self._powers(x)
        yp = self._powers(y)
        zp = self._powers(z)
        return xp[:, self.I] * yp[:, self.J] * zp[:, self.K]

    def values_and_grads(self, x, y, z):
        xp = self._powers(x)
        yp = self._powers(y)
        zp = self._powers(z)
        a = xp[:, self.I]
        b = yp[:, self.J]
        c = zp[:, self.K]
        vals = a * b * c
        gx = self.fI * (xp[:, self.Im] * b * c)
        gy = self.fJ * (a * yp[:, self.Jm] * c)
        gz = self.fK * (a * b * zp[:, self.Km])
        return vals, gx, gy, gz


def gauss_newton_polish(C, ev: BasisEval, x, y, z, iterations=4, tol=1e-26):
    """Batched Gauss-Newton on the residual system C @ mono(x, y, z) = 0.

    C has shape (n_eq, n_basis); x, y, z are (n,) starting points. The full
    step is taken where it reduces the residual norm; stragglers retry with
    halved steps. Stops early once every point has converged."""
    x = x.copy()
    y = y.copy()
    z = z.copy()
    Ct = C.T
    for _ in range(iterations):
        vals, gx, gy, gz = ev.values_and_grads(x, y, z)
        r = vals @ Ct  # (n, n_eq)
        rsq = np.einsum("ne,ne->n", r, r)
        if np.all(rsq < tol):
            break
        J = np.stack([gx @ Ct, gy @ Ct, gz @ Ct], axis=2)  # (n, n_eq, 3)
        JtJ = np.einsum("nei,nej->nij", J, J)
        Jtr = np.einsum("nei,ne->ni", J, r)
        JtJ += 1e-300 * np.eye(3)
        try:
            step = np.linalg.solve(JtJ, Jtr[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        xn = x - step[:, 0]
        yn = y - step[:, 1]
        zn = z - step[:, 2]
        rn = np.einsum("ne,ne->n", *(2 * (ev.values(xn, yn, zn) @ Ct,)))
        good = np.isfinite(rn) & (rn < rsq)
        if not np.all(good):
            # Retry the few non-descending points with shrinking steps.
            for alpha in (0.5, 0.25):
                bad = np.flatnonzero(~good)
                if bad.size == 0:
                    break
                xb = x[bad] - alpha * step[bad, 0]
                yb = y[bad] - alpha * step[bad, 1]
                zb = z[bad] - alpha * step[bad, 2]
                rb = np.einsum("ne,ne->n", *(2 * (ev.values(xb, yb, zb) @ Ct,)))
                ok = np.isfinite(rb) & (rb < rsq[bad])
                sel = bad[ok]
                xn[sel] = xb[ok]
                yn[sel] = yb[ok]
                zn[sel] = zb[ok]
                good[sel] = True
        x = np.where(good, xn, x)
        y = np.where(good, yn, y)
        z = np.where(good, zn, z)
    return x, y, z
