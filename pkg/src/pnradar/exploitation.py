"""Range-ambiguity resolution from the estimated PN trajectory.

The PN covariance depends on the true round-trip delay, while the OFDM
steering vector only sees the delay modulo T.  Matching the empirical lag
profile of the PN estimate against the first row of R(tau) for each
ambiguous candidate tau_p + kT picks the candidate whose statistics fit.
"""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .errors import PrincipalOutOfRange
from .frame import FrameConfig, OscillatorModel
from .pn_model import dpn_correlation


def sample_cov_row(xi) -> np.ndarray:
    """r_i = (1/(L - i)) sum_k xi_k xi_{k+i} for i = 0..L-1, via FFT."""
    xi = np.asarray(xi, dtype=float)
    L = xi.size
    nfft = 1 << int(np.ceil(np.log2(2 * L - 1))) if L > 1 else 1
    F = np.fft.rfft(xi, n=nfft)
    acf = np.fft.irfft(F * np.conj(F), n=nfft)[:L]
    return acf / np.arange(L, 0, -1)


def sample_cov_row_direct(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    L = xi.size
    return np.array([xi[:L - i] @ xi[i:] / (L - i) for i in range(L)])


def covariance_row(osc: OscillatorModel, frame: FrameConfig, tau: float) -> np.ndarray:
    """First row of R(tau), entry i2 = n2 + m2 N at lag -i2 Ts - m2 Tcp."""
    i2 = np.arange(frame.N * frame.M)
    m2 = i2 // frame.N
    return np.asarray(dpn_correlation(osc, -i2 * frame.Ts - m2 * frame.Tcp, tau))


def ambiguity_candidates(tau_hat: float, frame: FrameConfig, K: int = 1) -> np.ndarray:
    if not 0.0 <= tau_hat < frame.T:
        raise PrincipalOutOfRange(f"principal delay {tau_hat!r} outside [0, {frame.T!r})")
    if K < 0:
        raise ValueError("K must be nonnegative")
    return tau_hat + np.arange(K + 1) * frame.T


class Resolution(NamedTuple):
    tau: float
    k: int
    distances: np.ndarray


def resolve_ambiguity(r_hat, osc: OscillatorModel, frame: FrameConfig,
                      candidates: Sequence[float], weighted: bool = False) -> Resolution:
    """Candidate minimizing ||row0(R(tau)) - r_hat||^2; ties go to the smaller tau.

    ``weighted`` scales lag i by its averaging count (L - i), which is the
    inverse variance of r_i up to a constant for white estimation error.
    """
    r_hat = np.asarray(r_hat, dtype=float)
    cands = np.asarray(candidates, dtype=float)
    if cands.size == 0:
        raise ValueError("no candidates")
    L = r_hat.size
    w = np.arange(L, 0, -1) / L if weighted else 1.0
    dist = np.array([np.sum(w * (covariance_row(osc, frame, t) - r_hat) ** 2) for t in cands])
    order = np.lexsort((cands, dist))
    k = int(order[0])
    return Resolution(float(cands[k]), k, dist)
