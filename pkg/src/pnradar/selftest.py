"""Quick internal consistency suites behind ``pnradar selftest``.

Each check compares a fast path with a slow reference or verifies an
algebraic identity on random small instances.
"""
from __future__ import annotations

import time
from typing import Callable, Dict, List, Tuple

import numpy as np

from . import estimator as est
from . import pn_model
from .frame import OscillatorModel, make_frame
from .linalg import cg_solve
from .ofdm import generate_symbols, iudft, q_vector, unvec, vec


def _toy(rng, N=None, M=None):
    N = N or int(rng.integers(2, 17))
    M = M or int(rng.integers(1, 5))
    return make_frame(N, M, cp_duration=0.25e-6, carrier_frequency=28e9,
                      subcarrier_spacing=50e6 / N)


def _rand_osc(rng):
    if rng.random() < 0.5:
        return OscillatorModel.fro(float(rng.uniform(1e3, 500e3)))
    return OscillatorModel.pll(float(rng.uniform(1e3, 500e3)), float(rng.uniform(1e5, 2e6)))


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def check_fro_closed_form(rng) -> bool:
    osc = OscillatorModel.fro(float(rng.uniform(1e3, 1e6)))
    dt = rng.uniform(-2e-6, 2e-6, 100)
    tau = rng.uniform(0, 2e-6)
    lem = pn_model.correlation_from_variance(lambda t: pn_model.dpn_variance(osc, t), dt, tau)
    ref = 4 * np.pi * osc.f3db * np.maximum(tau - np.abs(dt), 0)
    return bool(np.allclose(lem, ref, rtol=1e-12, atol=1e-12 * ref.max()))


def check_pll_fro_limit(rng) -> bool:
    f3 = float(rng.uniform(1e3, 1e6))
    tau = rng.uniform(0, 1e-5, 50)
    pll = pn_model.dpn_variance(OscillatorModel.pll(f3, 1.0), tau)
    fro = pn_model.dpn_variance(OscillatorModel.fro(f3), tau)
    return bool(np.all(np.abs(pll - fro) <= 1e-4 * np.abs(fro)))


def check_evenness(rng) -> bool:
    osc = _rand_osc(rng)
    dt = rng.uniform(-3e-6, 3e-6, 50)
    tau = rng.uniform(0, 3e-6)
    return bool(np.allclose(pn_model.dpn_correlation(osc, dt, tau),
                            pn_model.dpn_correlation(osc, -dt, tau), rtol=1e-12, atol=0))


def check_matvec(rng) -> bool:
    frame = _toy(rng)
    cov = pn_model.build_covariance(_rand_osc(rng), frame, float(rng.uniform(0, 3e-6)), 0.0)
    v = rng.standard_normal(frame.N * frame.M)
    ref = cov.dense() @ v
    return _rel(pn_model.tbt_matvec(cov, v), ref) <= 1e-10 or np.linalg.norm(ref) == 0


def check_cg(rng) -> bool:
    n = int(rng.integers(2, 40))
    A = np.array([[0.9 ** abs(i - j) for j in range(n)] for i in range(n)]) + 0.1 * np.eye(n)
    b = rng.standard_normal(n)
    sol = cg_solve(lambda x: A @ x, b, tol=1e-12, max_iter=10 * n)
    return _rel(sol.x, np.linalg.solve(A, b)) <= 1e-6


def _pn_instance(rng):
    frame = _toy(rng, N=int(rng.integers(4, 9)), M=int(rng.integers(1, 3)))
    osc = _rand_osc(rng)
    tau = float(rng.uniform(0.05e-6, 0.5e-6))
    X = generate_symbols(frame, rng)
    NM = frame.N * frame.M
    Y = unvec(rng.standard_normal(NM) + 1j * rng.standard_normal(NM), frame.N, frame.M)
    xi = 0.1 * rng.standard_normal(NM)
    nu = float(rng.uniform(-1e-7, 1e-7))
    return frame, osc, tau, nu, X, Y, xi, float(rng.uniform(0.05, 2.0))


def check_pn_update(rng) -> bool:
    frame, osc, tau, nu, X, Y, xi, s2 = _pn_instance(rng)
    cov = pn_model.build_covariance(osc, frame, tau, 0.0)
    dense = est.residual_pn_update(Y, X, frame, osc, s2, tau, nu, xi, solver="dense", cov=cov)
    ok = True
    for solver in ("fused", "four_stage"):
        fast = est.residual_pn_update(Y, X, frame, osc, s2, tau, nu, xi, solver=solver,
                                      tol=1e-12, max_iter=2000, cov=cov)
        ok &= _rel(fast.delta, dense.delta) <= 1e-6
    return bool(ok)


def check_projector(rng) -> bool:
    frame, osc, tau, nu, X, Y, xi, _ = _pn_instance(rng)
    q = q_vector(X, frame, tau, nu)
    Xi = np.diag(np.exp(-1j * xi))
    def perp(a):
        return np.eye(a.size) - np.outer(a, a.conj()) / np.vdot(a, a).real
    lhs = Xi @ perp(q) @ Xi.conj().T
    return _rel(lhs, perp(Xi @ q)) <= 1e-10


def check_q_norm(rng) -> bool:
    frame, osc, tau, nu, X, *_ = _pn_instance(rng)
    q = q_vector(X, frame, tau, nu)
    return abs(np.vdot(q, q).real - np.vdot(X, X).real) <= 1e-9 * np.vdot(X, X).real


def _hermitian(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return A + A.conj().T


def check_real_quadratic_form(rng) -> bool:
    n = int(rng.integers(1, 17))
    A = _hermitian(rng, n)
    x = rng.standard_normal(n)
    lhs = x @ A @ x
    return abs(lhs - x @ A.real @ x) <= 1e-12 * max(1.0, np.abs(A).sum() * (x @ x))


def check_imag_bilinear_form(rng) -> bool:
    n = int(rng.integers(1, 17))
    A = _hermitian(rng, n)
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    lhs = 1j * (x @ A @ y - y @ A @ x)
    scale = max(1.0, np.abs(A).sum() * np.linalg.norm(x) * np.linalg.norm(y))
    return abs(lhs - 2 * (y @ A.imag @ x)) <= 1e-12 * scale


def check_profile(rng) -> bool:
    frame = _toy(rng, N=int(rng.integers(2, 17)), M=int(rng.integers(1, 9)))
    X = generate_symbols(frame, rng)
    Y = rng.standard_normal((frame.N, frame.M)) + 1j * rng.standard_normal((frame.N, frame.M))
    W = np.exp(-1j * 0.3 * rng.standard_normal((frame.N, frame.M)))
    grid = est.GridSpec(delay_factor=2, doppler_factor=2)
    P = est.fft_profile(Y, X, frame, W, grid)
    D = est.compensated_spectrum(Y, X, W)
    naive = np.array([[est.profile_at(D, frame, t, n) for n in grid.doppler_axis(frame)]
                      for t in grid.delay_axis(frame)])
    return _rel(P, naive) <= 1e-9


def check_profile_equivalence(rng) -> bool:
    frame, osc, tau, nu, X, _, xi, s2 = _pn_instance(rng)
    Y = unvec(np.exp(-1j * xi) * q_vector(X, frame, tau, nu), frame.N, frame.M)
    Y = Y + 0.3 * (rng.standard_normal(Y.shape) + 1j * rng.standard_normal(Y.shape))
    ok, _ = est.profile_equivalence_check(Y, X, frame, osc, s2, xi,
                                             est.GridSpec(delay_factor=2, doppler_factor=2))
    return ok


def check_parseval(rng) -> bool:
    A = rng.standard_normal((int(rng.integers(2, 33)), 3)) + 1j
    return abs(np.linalg.norm(iudft(A)) - np.linalg.norm(A)) <= 1e-12 * np.linalg.norm(A)


SUITES: Dict[str, List[Tuple[str, Callable]]] = {
    "pn-statistics": [("fro closed form", check_fro_closed_form),
                      ("pll to fro limit", check_pll_fro_limit),
                      ("evenness", check_evenness)],
    "structured-solvers": [("tbt matvec", check_matvec), ("cg", check_cg),
                           ("pn update", check_pn_update)],
    "identities": [("projector", check_projector), ("q norm", check_q_norm),
                   ("real quadratic form", check_real_quadratic_form), ("imaginary bilinear form", check_imag_bilinear_form),
                   ("parseval", check_parseval), ("argmin/argmax", check_profile_equivalence)],
    "fft-profile": [("fft vs naive", check_profile)],
}


def run_selftest(instances: int = 10, seed: int = 0, out=print) -> int:
    """Run all suites; returns the number of failed checks."""
    rng = np.random.default_rng(seed)
    failed = 0
    for suite, checks in SUITES.items():
        t0 = time.perf_counter()
        passed = total = 0
        for name, fn in checks:
            for _ in range(instances):
                total += 1
                try:
                    ok = bool(fn(rng))
                except Exception as err:  # a crash is a failure
                    ok = False
                    out(f"  {suite}/{name}: error {err}")
                passed += ok
                if not ok:
                    out(f"  {suite}/{name}: FAIL")
        failed += total - passed
        out(f"{suite}: {passed}/{total} passed ({time.perf_counter() - t0:.2f}s)")
    out("selftest " + ("OK" if failed == 0 else f"FAILED ({failed})"))
    return failed
