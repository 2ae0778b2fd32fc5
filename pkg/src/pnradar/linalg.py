"""Iterative and banded solvers for the PN covariance.

``cg_solve`` is plain conjugate gradients with an optional inner product,
which is what makes the PN update operator ``Re(Gamma) R + s I`` usable:
it is not symmetric in the Euclidean sense but it is self-adjoint and
positive definite under <u, v>_R = u^T R v.
"""
from __future__ import annotations

from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.linalg

from .errors import CholeskyFailure, NotConverged
from .pn_model import JITTER_LADDER, TbtCovariance


class CGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float


def cg_solve(apply: Callable[[np.ndarray], np.ndarray], b: np.ndarray, tol: float = 1e-8,
             max_iter: int = 200, x0: Optional[np.ndarray] = None,
             raise_on_fail: bool = True) -> CGResult:
    """Conjugate gradients for an SPD operator.

    Stops when ||apply(x) - b|| / ||b|| <= tol (recursive residual).  On
    failure raises NotConverged carrying the best iterate, unless
    ``raise_on_fail`` is False, in which case that iterate is returned.
    """
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros_like(b), 0, 0.0)
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - apply(x)
    p = r.copy()
    rho = r @ r
    best = (np.sqrt(rho) / bnorm, x.copy())
    for it in range(1, max_iter + 1):
        Ap = apply(p)
        curv = p @ Ap
        if curv <= 0:
            break
        alpha = rho / curv
        x += alpha * p
        r -= alpha * Ap
        rho_new = r @ r
        res = np.sqrt(rho_new) / bnorm
        if res < best[0]:
            best = (res, x.copy())
        if res <= tol:
            return CGResult(x, it, res)
        p = r + (rho_new / rho) * p
        rho = rho_new
    res, xb = best
    if raise_on_fail:
        raise NotConverged(f"CG stopped at residual {res:.3e}", x=xb, residual=res,
                           iterations=min(it, max_iter))
    return CGResult(xb, min(it, max_iter), res)


def cg_solve_weighted(apply_B: Callable, apply_R: Callable, shift: float, h: np.ndarray,
                      tol: float = 1e-8, max_iter: int = 200,
                      raise_on_fail: bool = True):
    """Solve (B R + shift I) s = h by CG in the R inner product.

    B is symmetric PSD and R symmetric PD, so the operator is self-adjoint
    and positive in <u, v>_R.  Returns (s, R s, iterations, residual) where
    the residual is measured in the R norm; ``R s`` comes from recurrences,
    so each iteration costs one application of R and one of B.
    """
    h = np.asarray(h, dtype=float)
    Rh = apply_R(h)
    hnorm2 = h @ Rh
    zero = np.zeros_like(h)
    if hnorm2 <= 0.0:
        return zero, zero.copy(), 0, 0.0
    hnorm = np.sqrt(hnorm2)
    s, Rs = zero.copy(), zero.copy()
    r, Rr = h.copy(), Rh
    p, Rp = r.copy(), Rr.copy()
    rho = r @ Rr
    best = (1.0, s.copy(), Rs.copy())
    it = 0
    for it in range(1, max_iter + 1):
        u = apply_B(Rp)
        Ru = apply_R(u)
        Ap = u + shift * p
        RAp = Ru + shift * Rp
        curv = p @ RAp
        if curv <= 0:
            break
        alpha = rho / curv
        s += alpha * p
        Rs += alpha * Rp
        r -= alpha * Ap
        Rr -= alpha * RAp
        rho_new = r @ Rr
        res = np.sqrt(max(rho_new, 0.0)) / hnorm
        if res < best[0]:
            best = (res, s.copy(), Rs.copy())
        if res <= tol:
            return s, Rs, it, res
        beta = rho_new / rho
        p = r + beta * p
        Rp = Rr + beta * Rp
        rho = rho_new
    res, sb, Rsb = best
    if raise_on_fail:
        raise NotConverged(f"weighted CG stopped at residual {res:.3e}", x=(sb, Rsb),
                           residual=res, iterations=it)
    return sb, Rsb, it, res


class BlockBandedCholesky:
    """Cholesky factor of R(tau) truncated to its M0 dominant blocks.

    Lower block ``L[i][j]`` is stored for i - M0 < j <= i.  When M0 = 1 all
    diagonal blocks are equal and only one N x N factor is kept.
    """

    def __init__(self, blocks, n_blocks: int, block_size: int, jitter: float):
        self._L = blocks
        self.n_blocks = n_blocks
        self.block_size = block_size
        self.jitter = jitter

    @classmethod
    def from_covariance(cls, cov: TbtCovariance) -> "BlockBandedCholesky":
        N, M, M0 = cov.frame.N, cov.frame.M, cov.n_dominant_blocks
        scale = cov.variance
        if scale == 0.0:
            raise CholeskyFailure("covariance is identically zero")
        R = [cov.block(d) for d in range(M0)]
        eye = np.eye(N)
        for rung in JITTER_LADDER:
            eps = rung * scale
            try:
                if M0 == 1:
                    L0 = scipy.linalg.cholesky(R[0] + eps * eye, lower=True)
                    return cls({"shared": L0}, M, N, eps)
                return cls(_factor_banded(R, M, eps), M, N, eps)
            except np.linalg.LinAlgError:
                continue
        raise CholeskyFailure("banded Cholesky failed after jitter ladder")

    def _get(self, i, j):
        if "shared" in self._L:
            return self._L["shared"] if i == j else None
        return self._L.get((i, j))

    def logdet(self) -> float:
        diag = [self._get(i, i) for i in range(self.n_blocks)]
        return float(2.0 * sum(np.log(np.diag(L)).sum() for L in diag))

    def whiten(self, x: np.ndarray) -> np.ndarray:
        """L^{-1} x by block forward substitution."""
        N = self.block_size
        xs = np.asarray(x, dtype=float).reshape(self.n_blocks, N)
        if "shared" in self._L:
            return scipy.linalg.solve_triangular(self._L["shared"], xs.T, lower=True).T.ravel()
        z = np.empty_like(xs)
        for i in range(self.n_blocks):
            acc = xs[i].copy()
            for j in range(i):
                Lij = self._get(i, j)
                if Lij is not None:
                    acc -= Lij @ z[j]
            z[i] = scipy.linalg.solve_triangular(self._get(i, i), acc, lower=True)
        return z.ravel()

    def quadform(self, x: np.ndarray) -> float:
        """x^T R^{-1} x."""
        z = self.whiten(x)
        return float(z @ z)


def _factor_banded(R, M, eps):
    N = R[0].shape[0]
    M0 = len(R)
    L = {}
    for i in range(M):
        for j in range(max(0, i - M0 + 1), i + 1):
            # block (i, j) of R, i >= j, is R_{i-j}^T
            S = R[i - j].T.copy()
            if i == j:
                S += eps * np.eye(N)
            for k in range(max(0, i - M0 + 1), j):
                if (j, k) in L:
                    S -= L[(i, k)] @ L[(j, k)].T
            if i == j:
                L[(i, i)] = scipy.linalg.cholesky(S, lower=True)
            else:
                # L_ij = S L_jj^{-T}
                L[(i, j)] = scipy.linalg.solve_triangular(L[(j, j)], S.T, lower=True).T
    return L
