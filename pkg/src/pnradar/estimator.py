"""Delay, Doppler and phase-noise estimation.

The 2-D FFT periodogram is the baseline.  MAP-ISAA alternates a closed-form
PN update, obtained by linearizing exp(-j xi_delta) around the current PN
estimate, with a delay-Doppler search on the PN-compensated periodogram plus
the Gaussian prior penalty xi^T R(tau)^{-1} xi + log det R(tau).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
import scipy.optimize

from .errors import NotConverged
from .frame import SPEED_OF_LIGHT, FrameConfig, OscillatorModel
from .linalg import cg_solve, cg_solve_weighted
from .ofdm import delay_steering, doppler_steering, q_vector, udft, unvec, vec
from .pn_model import build_covariance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    """Delay-Doppler search grid.

    Delay bins are ``delay_factor * N`` points over [0, T); Doppler bins are
    ``doppler_factor * M`` points over one unambiguous period, centered on 0.
    ``refine`` is "none", "parabolic" or "local" (continuous maximization
    within one bin of the grid peak).
    """
    delay_factor: int = 4
    doppler_factor: int = 4
    refine: str = "local"
    delay_window: Optional[Tuple[float, float]] = None

    def n_delay(self, frame: FrameConfig) -> int:
        return self.delay_factor * frame.N

    def n_doppler(self, frame: FrameConfig) -> int:
        return self.doppler_factor * frame.M

    def delay_axis(self, frame: FrameConfig) -> np.ndarray:
        return np.arange(self.n_delay(frame)) * frame.T / self.n_delay(frame)

    def doppler_axis(self, frame: FrameConfig) -> np.ndarray:
        Md = self.n_doppler(frame)
        k = np.arange(Md)
        k = np.where(k >= (Md + 1) // 2, k - Md, k)
        return k / (Md * frame.fc * frame.Tsym)


@dataclass
class IterRecord:
    iter: int
    tau: float
    nu: float
    xi: np.ndarray
    objective: float
    cg_iters: int = 0
    note: str = ""


@dataclass
class EstimateTrace:
    records: List[IterRecord] = field(default_factory=list)
    converged: bool = False
    notes: List[str] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.records) - 1

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    def monotone(self, rtol: float = 1e-9) -> bool:
        obj = self.objectives
        if obj.size < 2:
            return True
        slack = rtol * np.maximum(np.abs(obj[:-1]), 1.0)
        return bool(np.all(np.diff(obj) <= slack))


@dataclass(frozen=True)
class IsaaOptions:
    eps_tau: Optional[float] = None     # default Ts / 1000 (about 3 mm of range)
    eps_nu: float = 2 * 0.01 / SPEED_OF_LIGHT
    max_iter: int = 20
    grid: GridSpec = GridSpec()
    top_p: int = 8
    penalty: bool = False
    pn_solver: str = "fused"
    cg_tol: float = 1e-8
    cg_max_iter: int = 200


def compensated_spectrum(Y, X, W=None):
    """D = X* . F_N(W* . Y)."""
    Z = Y if W is None else np.conj(W) * Y
    return np.conj(X) * udft(Z, axis=0)


def fft_profile(Y, X, frame: FrameConfig, W=None, grid: GridSpec = GridSpec()) -> np.ndarray:
    """|b(tau)^H D c(nu)|^2 on the grid, shape (n_delay, n_doppler)."""
    D = compensated_spectrum(Y, X, W)
    Nd, Md = grid.n_delay(frame), grid.n_doppler(frame)
    A = np.fft.ifft(D, n=Nd, axis=0) * Nd          # sum_n e^{+j2 pi n d / Nd}
    A = np.fft.fft(A, n=Md, axis=1)                # sum_m e^{-j2 pi m k / Md}
    return np.abs(A) ** 2


def profile_at(D, frame: FrameConfig, tau: float, nu: float) -> float:
    b = delay_steering(frame, tau)
    c = doppler_steering(frame, nu)
    return float(abs(np.conj(b) @ D @ c) ** 2)


def _local_maxima(P: np.ndarray, top: int):
    """Indices of the ``top`` largest 2-D local maxima (circular neighbors).

    Ordered by value, ties to the lowest delay bin and then Doppler bin.
    """
    is_max = np.ones_like(P, dtype=bool)
    for dd in (-1, 0, 1):
        for dk in (-1, 0, 1):
            if dd or dk:
                is_max &= P >= np.roll(np.roll(P, dd, axis=0), dk, axis=1)
    d, k = np.nonzero(is_max)
    order = np.lexsort((k, d, -P[d, k]))[:top]
    return list(zip(d[order], k[order]))


def _refine(D, frame, grid, d, k, P):
    taus, nus = grid.delay_axis(frame), grid.doppler_axis(frame)
    dtau = frame.T / grid.n_delay(frame)
    dnu = 1.0 / (grid.n_doppler(frame) * frame.fc * frame.Tsym)
    tau0, nu0 = taus[d], nus[k]
    if grid.refine == "none":
        return tau0, nu0, float(P[d, k])
    if grid.refine == "parabolic":
        def vertex(a, b, c):
            den = a - 2 * b + c
            return 0.0 if den >= 0 else 0.5 * (a - c) / den
        Nd, Md = P.shape
        sd = vertex(P[(d - 1) % Nd, k], P[d, k], P[(d + 1) % Nd, k])
        sk = vertex(P[d, (k - 1) % Md], P[d, k], P[d, (k + 1) % Md])
        tau, nu = tau0 + sd * dtau, nu0 + sk * dnu
        return tau, nu, profile_at(D, frame, tau, nu)
    if grid.refine != "local":
        raise ValueError(f"unknown refinement {grid.refine!r}")
    scale = float(P[d, k]) or 1.0

    def neg(u):
        return -profile_at(D, frame, tau0 + u[0] * dtau, nu0 + u[1] * dnu) / scale

    res = scipy.optimize.minimize(neg, x0=[0.0, 0.0], method="Nelder-Mead",
                                  bounds=[(-1, 1), (-1, 1)],
                                  options={"xatol": 1e-5, "fatol": 1e-12,
                                           "initial_simplex": [[0, 0], [0.25, 0], [0, 0.25]]})
    if -res.fun * scale < P[d, k]:
        return tau0, nu0, float(P[d, k])
    return tau0 + res.x[0] * dtau, nu0 + res.x[1] * dnu, float(-res.fun * scale)


def _wrap_tau(frame, tau):
    return float(np.mod(tau, frame.T))


def peak_candidates(Y, X, frame: FrameConfig, W=None, grid: GridSpec = GridSpec(),
                    top: int = 1):
    """Top periodogram peaks as (tau, nu, value), each refined per ``grid``."""
    P = fft_profile(Y, X, frame, W, grid)
    if grid.delay_window is not None:
        lo, hi = grid.delay_window
        taus = grid.delay_axis(frame)
        P = np.where(((taus >= lo) & (taus <= hi))[:, None], P, -np.inf)
    D = compensated_spectrum(Y, X, W)
    out = []
    for d, k in _local_maxima(P, top):
        tau, nu, val = _refine(D, frame, grid, d, k, P)
        out.append((_wrap_tau(frame, tau), float(nu), float(val)))
    return out


def fft_estimate(Y, X, frame: FrameConfig, grid: GridSpec = GridSpec(), W=None):
    """Delay and Doppler at the maximum of the (optionally compensated) periodogram."""
    tau, nu, _ = peak_candidates(Y, X, frame, W, grid, top=1)[0]
    return tau, nu


def alpha_hat(Y, X, frame: FrameConfig, tau: float, nu: float, xi=None) -> complex:
    q = q_vector(X, frame, tau, nu)
    y = vec(Y)
    if xi is not None:
        y = np.exp(1j * np.asarray(xi)) * y
    return complex(np.vdot(q, y) / np.vdot(X, X).real)


def prior_penalty(osc: OscillatorModel, frame: FrameConfig, tau: float, xi) -> float:
    """xi^T R(tau)^{-1} xi + log det R(tau) from the M0-banded Cholesky factor."""
    chol = build_covariance(osc, frame, float(tau)).banded_cholesky
    return chol.quadform(xi) + chol.logdet()


def data_term(Y, X, frame, sigma2, tau, nu, xi=None) -> float:
    """y^H Xi P_perp(q) Xi^H y / sigma^2."""
    W = None if xi is None else unvec(np.exp(-1j * np.asarray(xi)), *Y.shape)
    D = compensated_spectrum(Y, X, W)
    energy = np.vdot(Y, Y).real
    return float((energy - profile_at(D, frame, tau, nu) / np.vdot(X, X).real) / sigma2)


def hybrid_objective(Y, X, frame: FrameConfig, osc: OscillatorModel, sigma2: float,
                     tau: float, nu: float, xi, dense: bool = True,
                     penalty: bool = True) -> float:
    """Negative log posterior up to constants.

    ``dense=True`` builds Xi, the projector and R(tau) explicitly (slow
    reference); otherwise the periodogram form and banded factor are used.
    """
    xi = np.asarray(xi, dtype=float)
    if not dense:
        val = data_term(Y, X, frame, sigma2, tau, nu, xi)
        return val + (prior_penalty(osc, frame, tau, xi) if penalty else 0.0)
    y = vec(Y)
    q = q_vector(X, frame, tau, nu)
    v = np.exp(1j * xi) * y                          # Xi^H y
    proj = v - q * (np.vdot(q, v) / np.vdot(q, q))
    val = float(np.vdot(v, proj).real / sigma2)
    if penalty:
        L, _ = build_covariance(osc, frame, float(tau)).cholesky
        z = np.linalg.solve(L, xi)
        val += float(z @ z) + 2.0 * float(np.log(np.diag(L)).sum())
    return val


def gamma_vector(Y, X, frame, xi_hat, tau, nu) -> Tuple[np.ndarray, np.ndarray, float]:
    """(|y|^2, u, ||X||^2) with Gamma = diag(|y|^2) - u u^H / ||X||^2."""
    y = vec(Y)
    q = q_vector(X, frame, tau, nu)
    u = np.conj(y) * np.exp(-1j * np.asarray(xi_hat, dtype=float)) * q
    return np.abs(y) ** 2, u, float(np.vdot(X, X).real)


def gamma_apply(Y, X, frame, xi_hat, tau, nu, v, part: str = "real", parts=None):
    """Re(Gamma) v or Im(Gamma) v for real v without forming Gamma."""
    y2, u, nx = parts if parts is not None else gamma_vector(Y, X, frame, xi_hat, tau, nu)
    v = np.asarray(v, dtype=float)
    w = u * (np.vdot(u, v) / nx)
    if part == "real":
        return y2 * v - w.real
    if part == "imag":
        return -w.imag
    raise ValueError("part must be 'real' or 'imag'")


def gamma_dense(Y, X, frame, xi_hat, tau, nu) -> np.ndarray:
    """Gamma built directly from its definition (reference)."""
    y = vec(Y)
    q = q_vector(X, frame, tau, nu)
    P = np.eye(q.size) - np.outer(q, q.conj()) / np.vdot(q, q).real
    e = np.exp(-1j * np.asarray(xi_hat, dtype=float))
    return (np.conj(y)[:, None] * P * y[None, :]) * np.outer(e, e.conj())


@dataclass
class PnUpdate:
    delta: np.ndarray
    cg_iters: int
    residual: float
    solver: str


def residual_pn_update(Y, X, frame, osc, sigma2, tau, nu, xi_hat, solver: str = "fused",
                       tol: float = 1e-8, max_iter: int = 200, cov=None) -> PnUpdate:
    """Residual PN increment xi_delta linearized around ``xi_hat``.

    xi_delta = -R (Re(Gamma) R + s I)^{-1} (Im(Gamma) 1 + s R^{-1} xi_hat), s = sigma^2.

    solver:
      "fused"       solves (Re(Gamma) R + s I) v = Re(Gamma) xi_hat - Im(Gamma) 1 and
                    returns R v - xi_hat; no R^{-1} is needed (same value when R
                    is invertible).  CG runs in the R inner product.
      "four_stage"  R^{-1} xi_hat by CG, Im(Gamma) 1, inner solve by plain CG with
                    the R-inner-product CG as fallback, final product with R.
      "dense"       explicit matrices (reference, small sizes only).
    """
    xi_hat = np.asarray(xi_hat, dtype=float)
    cov = cov if cov is not None else build_covariance(osc, frame, float(tau))
    parts = gamma_vector(Y, X, frame, xi_hat, tau, nu)
    ones = np.ones(xi_hat.size)
    im1 = gamma_apply(None, None, None, None, None, None, ones, "imag", parts)

    def B(v):
        return gamma_apply(None, None, None, None, None, None, v, "real", parts)

    R = cov.matvec
    if solver == "dense":
        Rd = cov.dense()
        G = gamma_dense(Y, X, frame, xi_hat, tau, nu)
        rhs = G.imag @ ones + sigma2 * np.linalg.solve(Rd, xi_hat)
        delta = -Rd @ np.linalg.solve(G.real @ Rd + sigma2 * np.eye(xi_hat.size), rhs)
        return PnUpdate(delta, 0, 0.0, solver)
    if solver == "fused":
        h = B(xi_hat) - im1
        try:
            _, Rs, it, res = cg_solve_weighted(B, R, sigma2, h, tol=tol, max_iter=max_iter)
        except NotConverged as err:
            _, Rs = err.x
            it, res = err.iterations, err.residual
            log.debug("fused PN solve stopped at %.2e", res)
        return PnUpdate(Rs - xi_hat, it, res, solver)
    if solver != "four_stage":
        raise ValueError(f"unknown solver {solver!r}")
    total = 0
    if np.any(xi_hat):
        r1 = cg_solve(R, xi_hat, tol=tol, max_iter=max_iter, raise_on_fail=False)
        total += r1.iterations
        rinv_xi = r1.x
    else:
        rinv_xi = np.zeros_like(xi_hat)
    rhs = im1 + sigma2 * rinv_xi

    def inner(k):
        return B(R(k)) + sigma2 * k

    try:
        sol = cg_solve(inner, rhs, tol=tol, max_iter=max_iter)
        total += sol.iterations
        varsigma, res = sol.x, sol.residual
        Rvs = R(varsigma)
    except NotConverged as err:
        total += err.iterations
        # the operator is self-adjoint in <u, v>_R; retry there
        try:
            varsigma, Rvs, it, res = cg_solve_weighted(B, R, sigma2, rhs, tol=tol,
                                                       max_iter=max_iter)
        except NotConverged as err2:
            (varsigma, Rvs), it, res = err2.x, err2.iterations, err2.residual
        total += it
    return PnUpdate(-Rvs, total, res, solver)


def _select_delay_doppler(Y, X, frame, osc, sigma2, xi, prev, opts: IsaaOptions):
    """Maximize the compensated periodogram minus the prior penalty.

    With ``opts.penalty`` the prior term is evaluated only at the refined
    top-P peaks and at the previous iterate; otherwise candidates are ranked
    by the periodogram alone.  The previous iterate is always a candidate,
    so this step cannot increase the ranking criterion.
    """
    W = unvec(np.exp(-1j * xi), *Y.shape)
    cands = peak_candidates(Y, X, frame, W, opts.grid, top=opts.top_p)
    D = compensated_spectrum(Y, X, W)
    if prev is not None:
        cands.append((prev[0], prev[1], profile_at(D, frame, prev[0], prev[1])))
    energy = np.vdot(Y, Y).real
    nx = np.vdot(X, X).real
    best = None
    for tau, nu, val in cands:
        obj = (energy - val / nx) / sigma2
        if opts.penalty:
            obj += prior_penalty(osc, frame, tau, xi)
        if best is None or obj < best[2]:
            best = (tau, nu, obj)
    return best[0], best[1]


def map_isaa(Y, X, frame: FrameConfig, osc: OscillatorModel, sigma2: float,
             opts: IsaaOptions = IsaaOptions(), init=None):
    """Alternating PN / delay-Doppler estimation started from the FFT estimate.

    Returns (tau, nu, xi, trace).  Iteration stops once both the delay and
    Doppler changes are within tolerance or ``max_iter`` is reached.
    """
    NM = frame.N * frame.M
    eps_tau = opts.eps_tau if opts.eps_tau is not None else frame.Ts / 1000
    xi = np.zeros(NM)
    tau, nu = init if init is not None else fft_estimate(Y, X, frame, opts.grid)
    trace = EstimateTrace()

    def objective(t, n, x):
        # full hybrid objective, whichever terms drive the delay-Doppler search
        return hybrid_objective(Y, X, frame, osc, sigma2, t, n, x, dense=False)

    trace.records.append(IterRecord(0, tau, nu, xi.copy(), objective(tau, nu, xi)))
    for it in range(1, opts.max_iter + 1):
        note = ""
        try:
            upd = residual_pn_update(Y, X, frame, osc, sigma2, tau, nu, xi,
                                     solver=opts.pn_solver, tol=opts.cg_tol,
                                     max_iter=opts.cg_max_iter)
        except NotConverged as err:  # pragma: no cover - solvers return best iterate
            note = f"pn solve: {err}"
            trace.notes.append(f"iter {it}: {note}")
            break
        if upd.residual > opts.cg_tol:
            note = f"pn solve residual {upd.residual:.2e}"
        xi = xi + upd.delta
        new_tau, new_nu = _select_delay_doppler(Y, X, frame, osc, sigma2, xi, (tau, nu), opts)
        done = abs(new_tau - tau) <= eps_tau and abs(new_nu - nu) <= opts.eps_nu
        tau, nu = new_tau, new_nu
        trace.records.append(IterRecord(it, tau, nu, xi.copy(), objective(tau, nu, xi),
                                        upd.cg_iters, note))
        if done:
            trace.converged = True
            break
    return tau, nu, xi, trace


def profile_equivalence_check(Y, X, frame, osc, sigma2, xi_hat, grid: GridSpec = GridSpec(),
                                 max_size: int = 4096):
    """Compare grid argmin of the full objective with argmax of the periodogram form.

    Both are evaluated without the prior penalty, which depends on tau only
    and is added identically to both.  Returns (agree, report).
    """
    if frame.N * frame.M * grid.n_delay(frame) * grid.n_doppler(frame) > max_size * 4096:
        raise ValueError("instance too large for the exhaustive check")
    W = unvec(np.exp(-1j * np.asarray(xi_hat)), *Y.shape)
    P = fft_profile(Y, X, frame, W, grid)
    taus, nus = grid.delay_axis(frame), grid.doppler_axis(frame)
    L = np.empty_like(P)
    for i, t in enumerate(taus):
        for j, n in enumerate(nus):
            L[i, j] = hybrid_objective(Y, X, frame, osc, sigma2, t, n, xi_hat, penalty=False)
    a = np.unravel_index(np.argmin(L), L.shape)
    b = np.unravel_index(np.argmax(P), P.shape)
    offset = np.vdot(Y, Y).real / sigma2
    max_dev = float(np.max(np.abs(L - (offset - P / (sigma2 * np.vdot(X, X).real)))))
    report = {"argmin_full": a, "argmax_profile": b, "max_abs_deviation": max_dev}
    return a == b, report
