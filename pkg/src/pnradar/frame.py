"""OFDM numerology, oscillator, target and noise configuration.

All durations are in seconds and all frequencies in Hz.  Instances are frozen
and hashable so they can key caches and be shared between threads.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np
try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli
import tomli_w

from .errors import InconsistentNumerology

SPEED_OF_LIGHT = 299792458.0

_DERIVED_RTOL = 1e-12
_SUPPLIED_RTOL = 1e-9


def _rel_close(a, b, rtol):
    return abs(a - b) <= rtol * max(abs(a), abs(b))


@dataclass(frozen=True)
class FrameConfig:
    """OFDM frame numerology (N subcarriers by M symbols)."""

    n_subcarriers: int
    n_symbols: int
    subcarrier_spacing: float
    elementary_duration: float
    cp_duration: float
    total_symbol_duration: float
    carrier_frequency: float
    sample_interval: float

    def __post_init__(self):
        if self.n_subcarriers < 2:
            raise ValueError("need at least 2 subcarriers")
        if self.n_symbols < 1:
            raise ValueError("need at least 1 symbol")
        for name in ("subcarrier_spacing", "elementary_duration", "cp_duration",
                     "total_symbol_duration", "carrier_frequency", "sample_interval"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        T = self.elementary_duration
        checks = (
            (T, 1.0 / self.subcarrier_spacing, "T != 1/subcarrier_spacing"),
            (self.total_symbol_duration, T + self.cp_duration, "Tsym != T + Tcp"),
            (self.sample_interval, T / self.n_subcarriers, "Ts != T/N"),
        )
        for a, b, msg in checks:
            if not _rel_close(a, b, _DERIVED_RTOL):
                raise InconsistentNumerology(msg)

    # short aliases used throughout the numerical code
    @property
    def N(self) -> int:
        return self.n_subcarriers

    @property
    def M(self) -> int:
        return self.n_symbols

    @property
    def T(self) -> float:
        return self.elementary_duration

    @property
    def Tcp(self) -> float:
        return self.cp_duration

    @property
    def Tsym(self) -> float:
        return self.total_symbol_duration

    @property
    def Ts(self) -> float:
        return self.sample_interval

    @property
    def fc(self) -> float:
        return self.carrier_frequency

    @property
    def bandwidth(self) -> float:
        return self.n_subcarriers * self.subcarrier_spacing

    @property
    def doppler_period(self) -> float:
        """Unambiguous span of normalized Doppler, 1/(fc Tsym)."""
        return 1.0 / (self.carrier_frequency * self.total_symbol_duration)

    def max_unambiguous_range(self, c: float = SPEED_OF_LIGHT) -> float:
        return c * self.elementary_duration / 2.0


def make_frame(n_subcarriers: int, n_symbols: int, cp_duration: float,
               carrier_frequency: float, subcarrier_spacing: Optional[float] = None,
               elementary_duration: Optional[float] = None) -> FrameConfig:
    """Build a :class:`FrameConfig`, filling in T, Tsym and Ts.

    At least one of ``subcarrier_spacing`` or ``elementary_duration`` must be
    given.  Supplying both is allowed only when they agree to 1e-9 relative.
    """
    if subcarrier_spacing is None and elementary_duration is None:
        raise ValueError("give subcarrier_spacing or elementary_duration")
    if subcarrier_spacing is not None and elementary_duration is not None:
        if not _rel_close(elementary_duration, 1.0 / subcarrier_spacing, _SUPPLIED_RTOL):
            raise InconsistentNumerology(
                f"T={elementary_duration} disagrees with 1/df={1.0 / subcarrier_spacing}")
    if subcarrier_spacing is None:
        subcarrier_spacing = 1.0 / elementary_duration
    for name, value in (("n_subcarriers", n_subcarriers), ("n_symbols", n_symbols),
                        ("cp_duration", cp_duration), ("carrier_frequency", carrier_frequency),
                        ("subcarrier_spacing", subcarrier_spacing)):
        if not value > 0:
            raise ValueError(f"{name} must be positive")
    T = 1.0 / subcarrier_spacing
    return FrameConfig(
        n_subcarriers=int(n_subcarriers),
        n_symbols=int(n_symbols),
        subcarrier_spacing=float(subcarrier_spacing),
        elementary_duration=T,
        cp_duration=float(cp_duration),
        total_symbol_duration=T + cp_duration,
        carrier_frequency=float(carrier_frequency),
        sample_interval=T / n_subcarriers,
    )


def reference_frame(n_subcarriers: int = 256, n_symbols: int = 10) -> FrameConfig:
    """28 GHz mmWave numerology: 50 MHz over 256 subcarriers, 1.28 us CP."""
    return make_frame(n_subcarriers, n_symbols, cp_duration=1.28e-6,
                      carrier_frequency=28e9, subcarrier_spacing=50e6 / 256)


@dataclass(frozen=True)
class OscillatorModel:
    """Free-running oscillator (``FRO``) or phase-locked loop (``PLL``)."""

    kind: str
    f3db: float
    floop: Optional[float] = None

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        if kind not in ("FRO", "PLL"):
            raise ValueError(f"unknown oscillator kind {self.kind!r}")
        if not self.f3db > 0:
            raise ValueError("f3dB must be positive")
        if kind == "PLL":
            if self.floop is None or not self.floop > 0:
                raise ValueError("PLL needs a positive loop bandwidth")
        elif self.floop is not None:
            raise ValueError("FRO takes no loop bandwidth")

    @classmethod
    def fro(cls, f3db: float) -> "OscillatorModel":
        return cls("FRO", f3db)

    @classmethod
    def pll(cls, f3db: float, floop: float) -> "OscillatorModel":
        return cls("PLL", f3db, floop)


@dataclass(frozen=True)
class Target:
    range: float
    radial_velocity: float
    gain: complex
    delay: float
    doppler: float
    cp_valid: bool
    doppler_small: bool


def target_params(R: float, v: float, alpha: complex, frame: FrameConfig,
                  c: float = SPEED_OF_LIGHT) -> Target:
    """Round-trip delay 2R/c and normalized Doppler 2v/c for a point target.

    Targets beyond the cyclic prefix (or beyond the unambiguous range) are
    legal; ``cp_valid`` records whether tau <= Tcp.
    """
    if R < 0:
        raise ValueError("range must be nonnegative")
    tau = 2.0 * R / c
    nu = 2.0 * v / c
    # |nu| << 1/N: flag anything within a factor 100 of the limit
    doppler_small = abs(nu) * frame.N < 1e-2
    if not doppler_small:
        warnings.warn(f"normalized Doppler {nu:.3g} is not small against 1/N", stacklevel=2)
    return Target(range=float(R), radial_velocity=float(v), gain=complex(alpha),
                  delay=tau, doppler=nu, cp_valid=tau <= frame.Tcp,
                  doppler_small=doppler_small)


@dataclass(frozen=True)
class NoiseModel:
    """AWGN level; ``sigma2`` is the per-real-dimension variance."""

    snr_db: float
    sigma2: float


def noise_from_snr(snr_db: float, gain: complex = 1.0) -> NoiseModel:
    # SNR = |alpha|^2 / (2 sigma^2)
    sigma2 = abs(gain) ** 2 / (2.0 * 10.0 ** (snr_db / 10.0))
    return NoiseModel(snr_db=float(snr_db), sigma2=sigma2)


# --- scenario files -------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Everything needed to simulate one operating point."""

    frame: FrameConfig
    oscillator: OscillatorModel
    range: float
    radial_velocity: float
    gain: complex
    snr_db: float
    run: dict = field(default_factory=dict, hash=False, compare=True)

    @property
    def c(self) -> float:
        return float(self.run.get("c_override", SPEED_OF_LIGHT))

    @property
    def noise(self) -> NoiseModel:
        return noise_from_snr(self.snr_db, self.gain)

    def target(self) -> Target:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return target_params(self.range, self.radial_velocity, self.gain,
                                 self.frame, c=self.c)

    def with_axis(self, axis: str, value: float) -> "Scenario":
        """Copy with one sweepable parameter replaced."""
        if axis == "snr_db":
            return replace(self, snr_db=float(value))
        if axis == "range_m":
            return replace(self, range=float(value))
        if axis == "f3dB":
            return replace(self, oscillator=replace(self.oscillator, f3db=float(value)))
        if axis == "floop":
            return replace(self, oscillator=replace(self.oscillator, floop=float(value)))
        raise ValueError(f"unknown sweep axis {axis!r}")

    def to_dict(self) -> dict:
        fr = self.frame
        osc = {"kind": self.oscillator.kind, "f3dB": self.oscillator.f3db}
        if self.oscillator.floop is not None:
            osc["floop"] = self.oscillator.floop
        noise = self.noise
        return {
            "frame": {
                "n_subcarriers": fr.n_subcarriers,
                "n_symbols": fr.n_symbols,
                "subcarrier_spacing": fr.subcarrier_spacing,
                "elementary_duration": fr.elementary_duration,
                "cp_duration": fr.cp_duration,
                "total_symbol_duration": fr.total_symbol_duration,
                "carrier_frequency": fr.carrier_frequency,
                "sample_interval": fr.sample_interval,
            },
            "oscillator": osc,
            "target": {
                "range": self.range,
                "radial_velocity": self.radial_velocity,
                "gain": [self.gain.real, self.gain.imag],
            },
            "noise": {"snr_db": noise.snr_db, "sigma2": noise.sigma2},
            "run": dict(self.run),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        fr = d["frame"]
        if "elementary_duration" in fr and "total_symbol_duration" in fr and "sample_interval" in fr:
            frame = FrameConfig(**{k: fr[k] for k in FrameConfig.__dataclass_fields__})
        else:
            frame = make_frame(fr["n_subcarriers"], fr["n_symbols"], fr["cp_duration"],
                               fr["carrier_frequency"], fr.get("subcarrier_spacing"),
                               fr.get("elementary_duration"))
        o = d["oscillator"]
        osc = OscillatorModel(o["kind"], o["f3dB"], o.get("floop"))
        t = d["target"]
        g = t.get("gain", [1.0, 0.0])
        gain = complex(g[0], g[1]) if isinstance(g, (list, tuple)) else complex(g)
        noise = d.get("noise", {})
        if "snr_db" in noise:
            snr_db = float(noise["snr_db"])
        elif "sigma2" in noise:
            snr_db = 10.0 * math.log10(abs(gain) ** 2 / (2.0 * noise["sigma2"]))
        else:
            raise ValueError("noise section needs snr_db or sigma2")
        return cls(frame=frame, oscillator=osc, range=float(t["range"]),
                   radial_velocity=float(t.get("radial_velocity", 0.0)), gain=gain,
                   snr_db=snr_db, run=dict(d.get("run", {})))

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "Scenario":
        return cls.from_dict(tomli.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.loads(Path(path).read_text())


# --- human-friendly quantities for the CLI --------------------------------

_UNITS = {
    "": 1.0, "hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9,
    "s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9,
    "m": 1.0, "km": 1e3, "m/s": 1.0, "db": 1.0,
}
_QUANTITY = re.compile(r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([a-zA-Zµ/]*)\s*$")


def parse_quantity(text) -> float:
    """Parse ``"200kHz"``, ``"1.28us"``, ``"28 GHz"`` or a bare number."""
    if isinstance(text, (int, float, np.floating, np.integer)):
        return float(text)
    m = _QUANTITY.match(str(text))
    if not m:
        raise ValueError(f"cannot parse quantity {text!r}")
    unit = m.group(2).lower()
    if unit not in _UNITS:
        raise ValueError(f"unknown unit {m.group(2)!r}")
    return float(m.group(1)) * _UNITS[unit]
