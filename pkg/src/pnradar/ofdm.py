"""OFDM radar observation model with multiplicative phase noise.

Y = alpha * W . F_N^H (X . b(tau) c(nu)^H) + Z with W = exp(-j xi) and the
unitary DFT convention, so ``F_N^H a = sqrt(N) * ifft(a)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .frame import FrameConfig, NoiseModel, OscillatorModel, Target
from .pn_model import build_covariance, sample_pn

QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)


def udft(a, axis=0):
    """Unitary DFT F_N along ``axis``."""
    return np.fft.fft(a, axis=axis, norm="ortho")


def iudft(a, axis=0):
    """Unitary inverse DFT F_N^H along ``axis``."""
    return np.fft.ifft(a, axis=axis, norm="ortho")


def vec(A):
    return np.asarray(A).ravel(order="F")


def unvec(v, N, M):
    return np.asarray(v).reshape((N, M), order="F")


def delay_steering(frame: FrameConfig, tau: float) -> np.ndarray:
    n = np.arange(frame.N)
    return np.exp(-2j * np.pi * n * frame.subcarrier_spacing * tau)


def doppler_steering(frame: FrameConfig, nu: float) -> np.ndarray:
    m = np.arange(frame.M)
    return np.exp(-2j * np.pi * frame.fc * m * frame.Tsym * nu)


def q_vector(X: np.ndarray, frame: FrameConfig, tau: float, nu: float) -> np.ndarray:
    """vec(F_N^H [X . b(tau) c(nu)^H])."""
    b = delay_steering(frame, tau)
    c = doppler_steering(frame, nu)
    return vec(iudft(X * np.outer(b, c.conj()), axis=0))


def generate_symbols(frame: FrameConfig, rng: np.random.Generator,
                     constellation: Optional[np.ndarray] = None) -> np.ndarray:
    points = QPSK if constellation is None else np.asarray(constellation)
    return points[rng.integers(0, points.size, size=(frame.N, frame.M))]


@dataclass
class Observation:
    Y: np.ndarray
    X: np.ndarray
    sigma2: float
    target: Optional[Target] = None
    xi: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.Y.shape

    @property
    def y(self) -> np.ndarray:
        return vec(self.Y)

    def dump(self, path) -> None:
        write_observation(path, self)

    @classmethod
    def load(cls, path) -> "Observation":
        return read_observation(path)


def synthesize(frame: FrameConfig, target: Target, osc: Optional[OscillatorModel],
               noise: NoiseModel, rng: np.random.Generator, X: Optional[np.ndarray] = None,
               pn_free: bool = False, xi: Optional[np.ndarray] = None,
               noise_rng: Optional[np.random.Generator] = None) -> Observation:
    """Draw one observation.

    PN is drawn from R(tau_true) with ``rng`` unless ``xi`` is forced or
    ``pn_free`` is set (W = 1).  Noise uses ``noise_rng`` when given so the
    PN and AWGN streams can be crossed independently.
    """
    N, M = frame.N, frame.M
    if X is None:
        X = generate_symbols(frame, rng)
    if pn_free:
        xi = np.zeros(N * M)
    elif xi is None:
        xi = sample_pn(build_covariance(osc, frame, target.delay), rng)
    q = q_vector(X, frame, target.delay, target.doppler)
    clean = target.gain * np.exp(-1j * xi) * q
    nrng = rng if noise_rng is None else noise_rng
    sd = np.sqrt(noise.sigma2)
    z = sd * (nrng.standard_normal(N * M) + 1j * nrng.standard_normal(N * M))
    return Observation(Y=unvec(clean + z, N, M), X=X, sigma2=noise.sigma2, target=target,
                       xi=np.asarray(xi, dtype=float))


_HEADER = struct.Struct("<IId")


def write_observation(path, obs: Observation) -> None:
    N, M = obs.Y.shape
    body = [np.ascontiguousarray(A, dtype="<c16").view("<f8") for A in (obs.Y, obs.X)]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(N, M, float(obs.sigma2)))
        for arr in body:
            fh.write(arr.tobytes(order="C"))


def read_observation(path) -> Observation:
    raw = Path(path).read_bytes()
    N, M, sigma2 = _HEADER.unpack_from(raw)
    count = 2 * N * M
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != 2 * count:
        raise ValueError(f"observation file has {data.size} floats, expected {2 * count}")
    Y = data[:count].view("<c16").reshape(N, M).astype(complex)
    X = data[count:].view("<c16").reshape(N, M).astype(complex)
    return Observation(Y=Y, X=X, sigma2=sigma2)
