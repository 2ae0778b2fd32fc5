"""Differential phase-noise statistics and the delay-dependent PN covariance.

A monostatic receiver sharing its oscillator with the transmitter sees the
self-referenced increment xi(t, tau) = phi(t) - phi(t - tau).  Its variance
depends only on tau, and its correlation follows from that variance alone.
Sampling the increment over an OFDM frame (CP removed) gives an NM x NM
covariance that is Toeplitz-block-Toeplitz; this module builds its compact
generator representation and draws PN vectors from it.

Vectors are ordered fast-time first: entry ``n + m*N`` is sample ``n`` of
symbol ``m``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import CholeskyFailure, TooLarge
from .frame import FrameConfig, OscillatorModel

DENSE_LIMIT = 8192
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)
BLOCK_EPS = 1e-6


def dpn_variance(osc: OscillatorModel, tau):
    """Variance of xi(t, tau) in rad^2.

    FRO: 4 pi f3dB |tau|.  PLL: (2 f3dB / floop)(1 - exp(-2 pi floop |tau|)),
    which tends to the FRO law as floop -> 0.
    """
    tau = np.abs(np.asarray(tau, dtype=float))
    if osc.kind == "FRO":
        out = 4.0 * np.pi * osc.f3db * tau
    else:
        out = (2.0 * osc.f3db / osc.floop) * -np.expm1(-2.0 * np.pi * osc.floop * tau)
    return out if out.ndim else float(out)


def correlation_from_variance(variance: Callable, dt, tau):
    """E[xi(t1, tau) xi(t2, tau)] from a variance law, with dt = t1 - t2."""
    dt = np.asarray(dt, dtype=float)
    return 0.5 * (variance(tau + dt) + variance(tau - dt)) - variance(dt)


def dpn_correlation(osc: OscillatorModel, dt, tau):
    """Correlation of the differential PN at time lag ``dt`` for delay ``tau``.

    The FRO case uses the closed form 4 pi f3dB max(|tau| - |dt|, 0), which
    equals the general expression but is exactly zero outside |dt| < |tau|.
    """
    dt = np.asarray(dt, dtype=float)
    if osc.kind == "FRO":
        out = 4.0 * np.pi * osc.f3db * np.maximum(abs(tau) - np.abs(dt), 0.0)
    else:
        out = correlation_from_variance(lambda t: dpn_variance(osc, t), dt, tau)
    return out if np.ndim(out) else float(out)


def sample_times(frame: FrameConfig) -> np.ndarray:
    """Fast-time sampling instants m Tsym + Tcp + n Ts, fast-time-major."""
    n = np.arange(frame.N)
    m = np.arange(frame.M)
    return (m[:, None] * frame.Tsym + frame.Tcp + n[None, :] * frame.Ts).ravel()


@dataclass(frozen=True, eq=False)
class TbtCovariance:
    """Symmetric Toeplitz-block-Toeplitz covariance R(tau) via generators.

    ``generators[m, k + N - 1]`` is the correlation at lag
    k Ts - m Tsym for k in [-(N-1), N-1]; block (m1, m2) of R equals the
    Toeplitz matrix of generator ``m2 - m1`` (transposed when negative).
    Only blocks ``m < n_dominant_blocks`` are used by the fast paths.
    """

    frame: FrameConfig
    tau: float
    generators: np.ndarray
    n_dominant_blocks: int
    oscillator: Optional[OscillatorModel] = None

    @property
    def variance(self) -> float:
        return float(self.generators[0, self.frame.N - 1])

    @property
    def size(self) -> int:
        return self.frame.N * self.frame.M

    def block(self, m: int) -> np.ndarray:
        """Dense N x N block R_m (m may be negative for the transposed blocks)."""
        N = self.frame.N
        g = self.generators[abs(m)]
        blk = scipy.linalg.toeplitz(g[N - 1:], g[N - 1::-1])
        return blk if m >= 0 else blk.T

    def first_row(self) -> np.ndarray:
        N = self.frame.N
        return self.generators[:, N - 1::-1].ravel().copy()

    def dense(self) -> np.ndarray:
        return materialize_dense(self)

    @functools.cached_property
    def _circulant_spectra(self) -> np.ndarray:
        N = self.frame.N
        M0 = self.n_dominant_blocks
        c = np.zeros((M0, 2 * N))
        c[:, :N] = self.generators[:M0, N - 1:]
        c[:, N + 1:] = self.generators[:M0, :N - 1]
        return np.fft.rfft(c, axis=1)

    @functools.cached_property
    def _best_circulant_spectra(self) -> np.ndarray:
        # optimal Frobenius-norm circulant approximant of each Toeplitz block
        N = self.frame.N
        M0 = self.n_dominant_blocks
        j = np.arange(N)
        g = self.generators[:M0]
        pos = g[:, N - 1 + j]
        neg = np.zeros_like(pos)
        neg[:, 1:] = g[:, j[1:] - 1]  # lag j - N
        c = ((N - j) * pos + j * neg) / N
        return np.fft.rfft(c, axis=1)

    def matvec(self, v: np.ndarray, mode: str = "exact") -> np.ndarray:
        return tbt_matvec(self, v, mode=mode)

    @functools.cached_property
    def cholesky(self):
        """Lower Cholesky factor of the dense R + jitter I, and the jitter used."""
        return _jittered_cholesky(self.dense(), self.variance)

    @functools.cached_property
    def banded_cholesky(self):
        from .linalg import BlockBandedCholesky
        return BlockBandedCholesky.from_covariance(self)


def _jittered_cholesky(A: np.ndarray, scale: float):
    if scale == 0.0 and not np.any(A):
        return np.zeros_like(A), 0.0
    eye = np.eye(A.shape[0])
    for rung in JITTER_LADDER:
        eps = rung * scale
        try:
            return scipy.linalg.cholesky(A + eps * eye, lower=True), eps
        except np.linalg.LinAlgError:
            continue
    raise CholeskyFailure(f"Cholesky failed with jitter up to {JITTER_LADDER[-1] * scale:g}")


def _dominant_blocks(generators: np.ndarray, eps_blk: float) -> int:
    M = generators.shape[0]
    ref = abs(generators[0, generators.shape[1] // 2])
    if ref == 0.0:
        return 1
    peaks = np.abs(generators).max(axis=1)
    significant = np.nonzero(peaks >= eps_blk * ref)[0]
    M0 = int(significant.max()) + 1 if significant.size else 1
    return min(max(M0, 1), M)


@functools.lru_cache(maxsize=32)
def build_covariance(osc: OscillatorModel, frame: FrameConfig, tau: float,
                     eps_blk: float = BLOCK_EPS) -> TbtCovariance:
    """Generator representation of R(tau) for the given oscillator and frame.

    ``n_dominant_blocks`` (M0) is the smallest m such that every block from m
    on has entries below ``eps_blk`` times the PN variance.
    """
    tau = float(tau)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    N, M = frame.N, frame.M
    k = np.arange(-(N - 1), N)
    m = np.arange(M)
    dt = k[None, :] * frame.Ts - m[:, None] * frame.Tsym
    gens = np.asarray(dpn_correlation(osc, dt, tau), dtype=float).reshape(M, 2 * N - 1)
    gens.setflags(write=False)
    return TbtCovariance(frame=frame, tau=tau, generators=gens,
                         n_dominant_blocks=_dominant_blocks(gens, eps_blk),
                         oscillator=osc)


def materialize_dense(cov: TbtCovariance) -> np.ndarray:
    """Full NM x NM matrix (all M blocks, no truncation)."""
    N, M = cov.frame.N, cov.frame.M
    if N * M > DENSE_LIMIT:
        raise TooLarge(f"NM={N * M} exceeds dense limit {DENSE_LIMIT}")
    blocks = [cov.block(m) for m in range(M)]
    out = np.empty((N * M, N * M))
    for r in range(M):
        for c in range(M):
            d = c - r
            out[r * N:(r + 1) * N, c * N:(c + 1) * N] = blocks[d] if d >= 0 else blocks[-d].T
    return out


def tbt_matvec(cov: TbtCovariance, v: np.ndarray, mode: str = "exact") -> np.ndarray:
    """R(tau) @ v using the M0 dominant blocks and FFTs.

    ``mode="exact"`` embeds each Toeplitz block in a 2N circulant, so the
    product is exact up to block truncation.  ``mode="circulant"`` replaces
    every block by its best circulant approximant (N-point FFTs).
    """
    N, M = cov.frame.N, cov.frame.M
    v = np.asarray(v, dtype=float)
    if v.shape != (N * M,):
        raise ValueError(f"expected vector of length {N * M}, got {v.shape}")
    if mode == "exact":
        spectra, nfft = cov._circulant_spectra, 2 * N
    elif mode == "circulant":
        spectra, nfft = cov._best_circulant_spectra, N
    else:
        raise ValueError(f"unknown mode {mode!r}")
    K = np.fft.rfft(v.reshape(M, N), n=nfft, axis=1)
    W = np.zeros_like(K)
    for d in range(cov.n_dominant_blocks):
        W[:M - d] += spectra[d] * K[d:]
        if d:
            W[d:] += np.conj(spectra[d]) * K[:M - d]
    return np.fft.irfft(W, n=nfft, axis=1)[:, :N].ravel()


def sample_pn(cov: TbtCovariance, rng: np.random.Generator, size: Optional[int] = None):
    """Draw xi ~ N(0, R(tau)) from the dense Cholesky factor.

    Returns one vector of length NM, or ``size`` vectors stacked row-wise.
    """
    NM = cov.size
    shape = (NM,) if size is None else (size, NM)
    if cov.variance == 0.0:
        return np.zeros(shape)
    L, _ = cov.cholesky
    z = rng.standard_normal(shape)
    return L @ z if size is None else z @ L.T


def simulate_phase_path(osc: OscillatorModel, times: np.ndarray, rng: np.random.Generator,
                        size: int = 1) -> np.ndarray:
    """Oscillator phase phi(t) at sorted ``times``, ``size`` independent paths.

    FRO phase is a Wiener process with diffusion rate 4 pi f3dB; PLL phase is
    a stationary Ornstein-Uhlenbeck process with variance f3dB/floop and rate
    2 pi floop.  Both are sampled exactly at arbitrary instants.
    """
    times = np.asarray(times, dtype=float)
    steps = np.diff(times)
    if np.any(steps < 0):
        raise ValueError("times must be sorted")
    z = rng.standard_normal((size, times.size))
    out = np.empty((size, times.size))
    if osc.kind == "FRO":
        rate = 4.0 * np.pi * osc.f3db
        out[:, 0] = 0.0
        out[:, 1:] = np.cumsum(np.sqrt(rate * steps) * z[:, 1:], axis=1)
        return out
    var = osc.f3db / osc.floop
    rho = np.exp(-2.0 * np.pi * osc.floop * steps)
    out[:, 0] = np.sqrt(var) * z[:, 0]
    innov = np.sqrt(var * (1.0 - rho ** 2))
    for i in range(1, times.size):
        out[:, i] = rho[i - 1] * out[:, i - 1] + innov[i - 1] * z[:, i]
    return out


def sample_pn_from_phase(osc: OscillatorModel, frame: FrameConfig, tau: float,
                         rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """Draw xi by differencing simulated phase paths (test oracle)."""
    t = sample_times(frame)
    grid = np.concatenate([t, t - tau])
    order = np.argsort(grid, kind="stable")
    sorted_grid = grid[order]
    paths = simulate_phase_path(osc, sorted_grid, rng, size=size)
    phi = np.empty_like(paths)
    phi[:, order] = paths
    n = t.size
    return phi[:, :n] - phi[:, n:]
