"""Command-line entry point: simulate, estimate, exploit, sweep, selftest."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import PnRadarError
from .estimator import GridSpec, IsaaOptions, fft_estimate, map_isaa
from .exploitation import ambiguity_candidates, resolve_ambiguity, sample_cov_row
from .frame import Scenario, parse_quantity
from .harness import (AXES, METHODS, PROFILE_DRAWS, SweepPlan, default_scenario, run_sweep,
                      trial_rng)
from .ofdm import read_observation, synthesize, write_observation
from .selftest import run_selftest

TRACE_COLUMNS = ("iter", "tau_s", "nu", "range_m", "velocity_mps", "objective",
                 "cg_iters_pn", "converged")


def _global_flags(p, suppress=False):
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p.add_argument("--seed", type=int, help="master seed (u64)", **({"default": 0} | kw))
    p.add_argument("--threads", type=int, help="worker processes", **({"default": 1} | kw))
    p.add_argument("--profile", choices=("desk", "paper"), help="default sizes and trial counts",
                   **({"default": "desk"} | kw))
    p.add_argument("-v", "--verbose", action="store_true", **({"default": False} | kw))


def _scenario(args) -> Scenario:
    if getattr(args, "scenario", None):
        return Scenario.load(args.scenario)
    return default_scenario(args.profile)


def cmd_simulate(args) -> int:
    scen = _scenario(args)
    rng = trial_rng(args.seed, 0, 0, 0, 0)
    obs = synthesize(scen.frame, scen.target(), scen.oscillator, scen.noise, rng,
                     pn_free=args.pn_free)
    write_observation(args.out, obs)
    if args.truth:
        np.savez(args.truth, xi=obs.xi, tau=scen.target().delay, nu=scen.target().doppler)
    print(f"wrote {args.out} (N={scen.frame.N}, M={scen.frame.M}, sigma2={obs.sigma2:.6g})")
    return 0


def _trace_rows(scen, records, converged):
    c = scen.c
    last = len(records) - 1
    for r in records:
        yield [r.iter, repr(r.tau), repr(r.nu), repr(r.tau * c / 2), repr(r.nu * c / 2),
               repr(r.objective), r.cg_iters, bool(converged and r.iter == last)]


def cmd_estimate(args) -> int:
    scen = _scenario(args)
    obs = read_observation(args.inp)
    if obs.Y.shape != (scen.frame.N, scen.frame.M):
        raise PnRadarError(f"observation shape {obs.Y.shape} does not match scenario frame")
    grid = GridSpec(refine=args.refine)
    opts = IsaaOptions(grid=grid, max_iter=args.max_iter, penalty=args.penalty)
    if args.method == "fft":
        from .estimator import IterRecord, hybrid_objective
        tau, nu = fft_estimate(obs.Y, obs.X, scen.frame, grid)
        xi = np.zeros(scen.frame.N * scen.frame.M)
        obj = hybrid_objective(obs.Y, obs.X, scen.frame, scen.oscillator, obs.sigma2, tau, nu,
                               xi, dense=False)
        records, converged = [IterRecord(0, tau, nu, xi, obj)], True
    else:
        tau, nu, xi, trace = map_isaa(obs.Y, obs.X, scen.frame, scen.oscillator, obs.sigma2, opts)
        records, converged = trace.records, trace.converged
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        w.writerows(_trace_rows(scen, records, converged))
    np.save(_xi_path(args.out), xi)
    print(f"{args.method}: range {tau * scen.c / 2:.6f} m, velocity {nu * scen.c / 2:.4f} m/s, "
          f"{len(records) - 1} iterations")
    return 0


def _xi_path(trace_path) -> Path:
    p = Path(trace_path)
    return p.with_name(p.name + ".xi.npy")


def cmd_exploit(args) -> int:
    scen = _scenario(args)
    frame, osc = scen.frame, scen.oscillator
    k_true = int(np.floor(scen.target().delay / frame.T))
    rows = []
    for trial, path in enumerate(args.inp):
        with open(path, newline="") as fh:
            last = list(csv.DictReader(fh))[-1]
        tau_p = float(last["tau_s"])
        xi = np.load(_xi_path(path))
        cands = ambiguity_candidates(tau_p, frame, args.K)
        res = resolve_ambiguity(sample_cov_row(xi), osc, frame, cands, weighted=args.weighted)
        rows.append([trial, repr(tau_p), repr(res.tau), res.k, res.k == k_true]
                    + [repr(float(d)) for d in res.distances])
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "tau_hat_principal_s", "tau_resolved_s", "k_selected", "correct"]
                   + [f"dist_k{k}" for k in range(args.K + 1)])
        w.writerows(rows)
    for r in rows:
        print(f"trial {r[0]}: k={r[3]} resolved range {float(r[2]) * scen.c / 2:.2f} m")
    return 0


def cmd_sweep(args) -> int:
    scen = _scenario(args)
    pn, noise = PROFILE_DRAWS[args.profile]
    plan = SweepPlan(scenario=scen, axis=args.axis,
                     values=[parse_quantity(v) for v in args.values.split(",") if v.strip()],
                     pn_draws=args.pn_draws or pn, noise_draws=args.noise_draws or noise,
                     seed=args.seed, methods=tuple(args.methods.split(",")),
                     exploit_K=args.exploit_K, opts=IsaaOptions(penalty=args.penalty))
    text = run_sweep(plan, out=args.out, threads=args.threads)
    if args.out is None:
        sys.stdout.write(text)
    return 0


def cmd_selftest(args) -> int:
    return 1 if run_selftest(instances=args.instances, seed=args.seed) else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pnradar", description=__doc__)
    _global_flags(p)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    common.add_argument("--scenario", help="scenario TOML file (defaults to the profile's)")

    s = sub.add_parser("simulate", parents=[common], help="draw one observation")
    s.add_argument("--out", required=True)
    s.add_argument("--truth", help="optional .npz with the true PN, delay and Doppler")
    s.add_argument("--pn-free", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", parents=[common], help="estimate delay, Doppler and PN")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--method", choices=("fft", "map-isaa"), default="map-isaa")
    s.add_argument("--out", required=True, help="trace CSV; PN estimate goes to <out>.xi.npy")
    s.add_argument("--max-iter", type=int, default=20)
    s.add_argument("--refine", choices=("none", "parabolic", "local"), default="local")
    s.add_argument("--penalty", action="store_true",
                   help="rank delay-Doppler candidates with the prior penalty")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("exploit", parents=[common], help="resolve range ambiguity")
    s.add_argument("--in", dest="inp", required=True, nargs="+", help="trace CSV file(s)")
    s.add_argument("--K", type=int, default=1)
    s.add_argument("--weighted", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_exploit)

    s = sub.add_parser("sweep", parents=[common], help="Monte Carlo parameter sweep")
    s.add_argument("--axis", choices=AXES, required=True)
    s.add_argument("--values", required=True, help="comma separated, units allowed (e.g. 100kHz)")
    s.add_argument("--methods", default=",".join(METHODS))
    s.add_argument("--pn-draws", type=int)
    s.add_argument("--noise-draws", type=int)
    s.add_argument("--exploit-K", type=int)
    s.add_argument("--penalty", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("selftest", parents=[common], help="fast-vs-reference consistency suites")
    s.add_argument("--instances", type=int, default=10)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PnRadarError, OSError, ValueError) as err:
        print(f"pnradar: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
