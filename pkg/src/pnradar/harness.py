"""Monte Carlo harness: seeded trials, RMSE metrics and parameter sweeps.

Every trial crosses one PN realization with one noise realization, so a
point with P PN draws and Q noise draws runs P*Q trials.  Random streams
come from ``SeedSequence(master_seed, spawn_key=(point, pn, noise, tag))``,
making results independent of worker count and execution order.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .estimator import IsaaOptions, fft_estimate, map_isaa
from .exploitation import ambiguity_candidates, resolve_ambiguity, sample_cov_row
from .frame import OscillatorModel, Scenario, make_frame, reference_frame
from .ofdm import generate_symbols, synthesize
from .pn_model import build_covariance, sample_pn

log = logging.getLogger(__name__)

METHODS = ("fft", "fft-pnfree", "map-isaa")
AXES = ("snr_db", "f3dB", "floop", "range_m")
CSV_COLUMNS = ("axis_name", "axis_value", "method", "range_rmse_m", "velocity_rmse_mps",
               "pn_rmse_rad", "success_rate", "mean_iters", "trials", "failures")
TAG_SYMBOLS, TAG_PN, TAG_NOISE = 1, 2, 3
FAIL_FRACTION = 0.10


def desk_frame():
    # same sample interval and bandwidth as the reference frame, 16x fewer samples
    return make_frame(64, 8, cp_duration=0.32e-6, carrier_frequency=28e9,
                      subcarrier_spacing=781250.0)


def default_scenario(profile: str = "desk") -> Scenario:
    frame = reference_frame() if profile == "paper" else desk_frame()
    return Scenario(frame=frame, oscillator=OscillatorModel.fro(200e3), range=30.0,
                    radial_velocity=20.0, gain=1.0 + 0j, snr_db=20.0)


PROFILE_DRAWS = {"desk": (10, 10), "paper": (50, 50)}


def trial_rng(seed: int, point: int, pn: int, noise: int, tag: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(point), int(pn), int(noise), int(tag)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class MetricsRecord:
    axis_name: str
    axis_value: float
    method: str
    range_rmse_m: float
    velocity_rmse_mps: float
    pn_rmse_rad: float
    success_rate: Optional[float]
    mean_iters: float
    trials: int
    failures: int
    wall_time_s: float = 0.0

    def row(self) -> List[str]:
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
                return str(int(x))
            return repr(float(x))
        return [self.axis_name, fmt(self.axis_value), self.method, fmt(self.range_rmse_m),
                fmt(self.velocity_rmse_mps), fmt(self.pn_rmse_rad), fmt(self.success_rate),
                fmt(self.mean_iters), fmt(self.trials), fmt(self.failures)]


@dataclass
class TrialResult:
    index: int
    errors: Dict[str, tuple] = field(default_factory=dict)  # method -> (dR, dv, pn_sq, iters, k)
    failed: Dict[str, str] = field(default_factory=dict)


def _run_trial(args):
    (scenario, methods, seed, point, p, n, opts, exploit_K, xi_pool) = args
    frame, osc = scenario.frame, scenario.oscillator
    tgt = scenario.target()
    noise = scenario.noise
    c = scenario.c
    NM = frame.N * frame.M
    X = generate_symbols(frame, trial_rng(seed, point, p, n, TAG_SYMBOLS))
    xi = xi_pool if xi_pool is not None else sample_pn(
        build_covariance(osc, frame, tgt.delay), trial_rng(seed, point, p, 0, TAG_PN))
    nrng = lambda: trial_rng(seed, point, 0, n, TAG_NOISE)  # noqa: E731
    res = TrialResult(index=p * 10**6 + n)
    k_true = int(np.floor(tgt.delay / frame.T))
    obs = synthesize(frame, tgt, osc, noise, None, X=X, xi=xi, noise_rng=nrng())
    for method in methods:
        try:
            iters, xi_hat, k_sel = 0, np.zeros(NM), 0
            if method == "fft":
                tau, nu = fft_estimate(obs.Y, obs.X, frame, opts.grid)
            elif method == "fft-pnfree":
                clean = synthesize(frame, tgt, osc, noise, None, X=X, pn_free=True,
                                   noise_rng=nrng())
                tau, nu = fft_estimate(clean.Y, clean.X, frame, opts.grid)
                xi_hat = None
            elif method == "map-isaa":
                tau, nu, xi_hat, trace = map_isaa(obs.Y, obs.X, frame, osc, obs.sigma2, opts)
                iters = trace.iterations
            else:
                raise ValueError(f"unknown method {method!r}")
            if exploit_K is not None and method == "map-isaa":
                cands = ambiguity_candidates(tau, frame, exploit_K)
                k_sel = resolve_ambiguity(sample_cov_row(xi_hat), osc, frame, cands).k
                tau = float(cands[k_sel])
            pn_sq = 0.0 if xi_hat is None else float(np.sum((xi_hat - xi) ** 2))
            res.errors[method] = ((tau - tgt.delay) * c / 2, (nu - tgt.doppler) * c / 2,
                                  pn_sq, iters, int(k_sel == k_true))
        except Exception as err:  # counted, not fatal
            res.failed[method] = f"{type(err).__name__}: {err}"
    return res


def run_point(scenario: Scenario, methods: Sequence[str] = METHODS, pn_draws: int = 10,
              noise_draws: int = 10, seed: int = 0, point: int = 0, threads: int = 1,
              opts: IsaaOptions = IsaaOptions(), exploit_K: Optional[int] = None,
              axis_name: str = "", axis_value: float = float("nan")) -> List[MetricsRecord]:
    """Run every (PN draw, noise draw) combination and score each method."""
    t0 = time.perf_counter()
    frame = scenario.frame
    NM = frame.N * frame.M
    tgt = scenario.target()
    cov = build_covariance(scenario.oscillator, frame, tgt.delay)
    # PN vectors depend only on the PN index; draw them once per point
    pool = [sample_pn(cov, trial_rng(seed, point, p, 0, TAG_PN)) for p in range(pn_draws)]
    jobs = [(scenario, tuple(methods), seed, point, p, n, opts, exploit_K, pool[p])
            for p in range(pn_draws) for n in range(noise_draws)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_run_trial, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        results = [_run_trial(j) for j in jobs]
    results.sort(key=lambda r: r.index)
    wall = time.perf_counter() - t0
    total = len(jobs)
    records = []
    for method in methods:
        errs = [r.errors[method] for r in results if method in r.errors]
        failures = total - len(errs)
        for r in results:
            if method in r.failed:
                log.warning("trial %d %s failed: %s", r.index, method, r.failed[method])
        if not errs or failures > FAIL_FRACTION * total:
            rr = vr = pr = it = float("nan")
            sr = None
        else:
            a = np.array(errs, dtype=float)
            rr = float(np.sqrt(np.mean(a[:, 0] ** 2)))
            vr = float(np.sqrt(np.mean(a[:, 1] ** 2)))
            pr = float(np.sqrt(a[:, 2].sum() / (NM * len(errs))))
            it = float(a[:, 3].mean())
            sr = float(a[:, 4].mean()) if exploit_K is not None else None
            if method == "fft-pnfree":
                pr = float("nan")  # no PN to estimate
        records.append(MetricsRecord(axis_name, axis_value, method, rr, vr, pr, sr, it,
                                     total, failures, wall))
    return records


@dataclass
class SweepPlan:
    scenario: Scenario
    axis: str
    values: Sequence[float]
    pn_draws: int = 10
    noise_draws: int = 10
    seed: int = 0
    methods: Sequence[str] = METHODS
    exploit_K: Optional[int] = None
    opts: IsaaOptions = IsaaOptions()

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")

    @property
    def trials(self) -> int:
        return self.pn_draws * self.noise_draws

    def point_key(self, value: float, point: int = 0) -> str:
        # the point index seeds the trials, so it is part of the key
        blob = json.dumps({"scenario": self.scenario.to_dict(), "axis": self.axis,
                           "value": float(value), "point": int(point), "pn": self.pn_draws, "noise": self.noise_draws,
                           "seed": self.seed, "methods": list(self.methods),
                           "K": self.exploit_K, "opts": repr(self.opts)},
                          sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:24]


def _cache_dir() -> Optional[Path]:
    d = os.environ.get("PNRADAR_CACHE_DIR")
    if not d:
        return None
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.row())
    return buf.getvalue()


def run_sweep(plan: SweepPlan, out=None, threads: int = 1) -> str:
    """Run all points (sorted by axis value) and return the CSV text.

    If ``out`` is given the CSV is rewritten after every point, so an
    interrupted sweep leaves the finished rows on disk.  With
    PNRADAR_CACHE_DIR set, finished points are reused on the next run.
    """
    cache = _cache_dir()
    rows: List[MetricsRecord] = []
    values = sorted(float(v) for v in plan.values)
    if out is not None:
        Path(out).write_text(_csv_text(rows))
    for i, value in enumerate(values):
        key = plan.point_key(value, i)
        cached = cache / f"point-{key}.json" if cache else None
        if cached is not None and cached.exists():
            recs = [MetricsRecord(**d) for d in json.loads(cached.read_text())]
        else:
            scen = plan.scenario.with_axis(plan.axis, value)
            recs = run_point(scen, plan.methods, plan.pn_draws, plan.noise_draws, plan.seed,
                             point=i, threads=threads, opts=plan.opts,
                             exploit_K=plan.exploit_K, axis_name=plan.axis, axis_value=value)
            if cached is not None:
                cached.write_text(json.dumps([asdict(r) for r in recs]))
        rows.extend(recs)
        if out is not None:
            Path(out).write_text(_csv_text(rows))
    return _csv_text(rows)


@dataclass
class ConvergenceStudy:
    iterations: np.ndarray      # iterations used (max_iter + 1 when not converged)
    converged: np.ndarray
    monotone: np.ndarray
    objectives: List[np.ndarray]

    @property
    def median_iterations(self) -> float:
        return float(np.median(self.iterations))

    @property
    def monotone_fraction(self) -> float:
        return float(np.mean(self.monotone))


def convergence_study(scenario: Scenario, pn_draws: int, noise_draws: int, seed: int = 0,
                      opts: IsaaOptions = IsaaOptions()) -> ConvergenceStudy:
    """Per-trial iteration counts and objective monotonicity of MAP-ISAA."""
    frame, osc, tgt = scenario.frame, scenario.oscillator, scenario.target()
    cov = build_covariance(osc, frame, tgt.delay)
    its, conv, mono, objs = [], [], [], []
    for p in range(pn_draws):
        xi = sample_pn(cov, trial_rng(seed, 0, p, 0, TAG_PN))
        for n in range(noise_draws):
            X = generate_symbols(frame, trial_rng(seed, 0, p, n, TAG_SYMBOLS))
            obs = synthesize(frame, tgt, osc, scenario.noise, None, X=X, xi=xi,
                             noise_rng=trial_rng(seed, 0, 0, n, TAG_NOISE))
            *_, trace = map_isaa(obs.Y, obs.X, frame, osc, obs.sigma2, opts)
            its.append(trace.iterations if trace.converged else opts.max_iter + 1)
            conv.append(trace.converged)
            mono.append(trace.monotone())
            objs.append(trace.objectives)
    return ConvergenceStudy(np.array(its), np.array(conv), np.array(mono), objs)
