"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""
import json
import time

import numpy as np
import pytest

from cpapprox.algebra import SchrodingerSpec, build_schrodinger
from cpapprox.checks import equivariance_defect, random_pe_kernel, run_algebra_suite
from cpapprox.cli import main
from cpapprox.cutproject import fibonacci_scheme, generate_model_set, periodicity_lattice, rational_approximant
from cpapprox.harness import (
    default_fibonacci_operator,
    default_test_functions,
    fibonacci_plan,
    hull_proxy_distance,
    run_autocorr_convergence,
    run_dos_convergence,
    trend_violations,
)
from cpapprox.operators import PeriodicBoundary, SamplingWeight, eigensolve, represent
from cpapprox.spectra import (
    IDS,
    autocorrelation,
    dos_estimate,
    dos_from_operator,
    ks_distance,
    pair_measure_apply,
    translate_average,
    weak_star_distance,
)

from conftest import lattice_patch

NOISE_FLOOR = 1e-12
RESULTS = []


def report(capsys, number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} -- {detail}"
    RESULTS.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def test_criterion_1_kernel_algebra(capsys):
    t0 = time.perf_counter()
    worst, failed = {}, []
    for name, patch in (("Z R=50", lattice_patch(50)),
                        ("Fibonacci R=100", generate_model_set(fibonacci_scheme(), 100)[0])):
        op = SchrodingerSpec({(1.0,): 1.0}) if name.startswith("Z") else default_fibonacci_operator()
        for res in run_algebra_suite(patch, seed=1, n_kernels=20, operator=op, tol=1e-12):
            worst[res.name] = max(worst.get(res.name, 0.0), res.max_error)
            if not res.passed:
                failed.append(f"{name}:{res.name}")
    dt = time.perf_counter() - t0
    ok = not failed and dt < 10
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items()) + f", runtime {dt:.1f}s (< 10s)"
    report(capsys, 1, "representation is a *-homomorphism, shift identities exact", ok,
           detail + (f", failed {failed}" if failed else ""))


def test_criterion_2_equivariance(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    patch = generate_model_set(fibonacci_scheme(), 100)[0]
    schrod = build_schrodinger(default_fibonacci_operator())
    near = patch.points[np.abs(patch.points[:, 0]) <= 30]
    worst = 0.0
    for _ in range(10):
        t = near[rng.integers(len(near))]
        for k in (schrod, random_pe_kernel(patch, rng)):
            worst = max(worst, equivariance_defect(k, patch, t))
    dt = time.perf_counter() - t0
    report(capsys, 2, "matrices on translates are permutation conjugates", worst <= 1e-12 and dt < 10,
           f"max defect {worst:.2e} (<= 1e-12) over 10 translates, runtime {dt:.1f}s (< 10s)")


def test_criterion_3_free_lattice_ids(capsys):
    t0 = time.perf_counter()
    kernel = build_schrodinger(SchrodingerSpec({(1.0,): 1.0}))
    m = dos_estimate(kernel, lattice_patch(300), None, "orbit", PeriodicBoundary([[512.0]]))
    F = IDS(m)
    half = F.midpoint(0.0)
    ks = ks_distance(F, lambda E: 1 - np.arccos(np.clip(E / 2, -1, 1)) / np.pi)
    dt = time.perf_counter() - t0
    ok = half == 0.5 and ks <= 0.02 and dt < 30
    report(capsys, 3, "free-lattice IDS oracle (N=512)", ok,
           f"IDS(0)={half!r} (== 0.5), KS={ks:.4f} (<= 0.02), runtime {dt:.1f}s (< 30s)")


def _rho_distances(kernel, patch, boundary):
    op = represent(kernel, patch, None, boundary)
    eig = eigensolve(op)
    out = []
    for r in (8.0, 16.0, 32.0):
        u = dos_from_operator(op, SamplingWeight("uniform-ball", r).periodized(op.sites, boundary), eig)
        v = dos_from_operator(op, SamplingWeight("bump", r).periodized(op.sites, boundary), eig)
        out.append(weak_star_distance(u.normalized(), v.normalized()))
    return out


def test_criterion_4_rho_independence(capsys):
    t0 = time.perf_counter()
    z = _rho_distances(build_schrodinger(SchrodingerSpec({(1.0,): 1.0})), lattice_patch(300),
                       PeriodicBoundary([[512.0]]))
    rs = rational_approximant(fibonacci_scheme(), 34)
    T = abs(periodicity_lattice(rs).physical[0, 0])
    cell = T * int(np.ceil(256 / T))
    f = _rho_distances(build_schrodinger(default_fibonacci_operator()),
                       generate_model_set(rs.scheme, cell + 10)[0], PeriodicBoundary([[cell]]))
    dt = time.perf_counter() - t0
    ok = dt < 120
    for d in (z, f):
        ok &= max(d) <= 0.05 and d[2] <= max(d[0] / 2, NOISE_FLOOR)
    report(capsys, 4, "DOS independent of the sampling weight", ok,
           f"Z d(8,16,32)={[float(f'{v:.2e}') for v in z]}, Fibonacci q=34 d={[float(f'{v:.2e}') for v in f]}"
           f" (max <= 0.05, d32 <= d8/2 or <= {NOISE_FLOOR}), runtime {dt:.1f}s (< 120s)")


def test_criterion_5_autocorrelation_consistency(capsys):
    t0 = time.perf_counter()
    pairs = default_test_functions()
    errs = []
    for patch, R_eff in ((lattice_patch(150), 100.5), (generate_model_set(fibonacci_scheme(), 130)[0], 100.0)):
        gamma = autocorrelation(patch, None, R_eff, 4.0)
        for f1, f2 in pairs:
            direct = translate_average(patch, None, f1, f2, R_eff)
            errs.append(abs(pair_measure_apply(gamma, f1, f2) - direct) / abs(direct))
    dt = time.perf_counter() - t0
    ok = max(errs) <= 0.02 and dt < 60
    report(capsys, 5, "pair measure agrees with the translate average", ok,
           f"Z rel errors {[float(f'{e:.1e}') for e in errs[:3]]}, Fibonacci R_eff=100 "
           f"{[float(f'{e:.1e}') for e in errs[3:]]} (<= 0.02), runtime {dt:.1f}s (< 60s)")


def _convergence_detail(rep, dt, limit):
    failed = [f"{a['name']} {a['violations']}" for a in rep.assertions if not a["passed"]
              and not a["name"].startswith("hull")]
    grid = [[float(f"{v:.4f}") for v in row] for row in rep.grid]
    return not failed and dt < limit, (f"grid rows eps {rep.epsilons} x q {rep.denominators} = {grid}, "
                                       f"final {rep.final:.4f}, runtime {dt:.1f}s (< {limit}s)"
                                       + (f"; failed: {failed}" if failed else ""))


def test_criterion_6_dos_convergence(capsys):
    t0 = time.perf_counter()
    rep = run_dos_convergence(fibonacci_plan(final_tolerance=0.05))
    ok, detail = _convergence_detail(rep, time.perf_counter() - t0, 300)
    report(capsys, 6, "DOS of approximants converges (n then l)", ok, detail)


def test_criterion_7_autocorrelation_convergence(capsys):
    t0 = time.perf_counter()
    rep = run_autocorr_convergence(fibonacci_plan(final_tolerance=0.03))
    ok, detail = _convergence_detail(rep, time.perf_counter() - t0, 180)
    report(capsys, 7, "autocorrelation of approximants converges (n then l)", ok, detail)


def test_criterion_8_hull_proxy(capsys):
    t0 = time.perf_counter()
    s = fibonacci_scheme()
    d = [hull_proxy_distance(s, rational_approximant(s, q), 100.0) for q in (2, 8, 34)]
    dt = time.perf_counter() - t0
    ok = not trend_violations(d, 0.0) and dt < 30
    report(capsys, 8, "hull proxy nonincreasing in q at R=100", ok,
           f"d(q=2,8,34)={[float(f'{v:.4f}') for v in d]}, runtime {dt:.1f}s (< 30s)")


COMMAND_CONFIGS = {
    "generate": {"radius": 80, "window": {"epsilon": 0.05}},
    "dos": {"radius": 80, "scheme": {"preset": "fibonacci", "approximant_q": 8}, "window": {"epsilon": 0.05},
            "dos": {"rho": {"profile": "orbit"}}},
    "autocorr": {"radius": 120, "autocorr": {"R_eff": 100, "delta_max": 4,
                                            "pairs": [[{"kind": "triangle"}, {"kind": "cosine-bump",
                                                                              "center": [1.0]}]]}},
    "converge": {"seed": 7, "plan": {"final_tolerance_dos": 0.05, "final_tolerance_autocorr": 0.03}},
    "algebra-check": {"algebra": {"radii": [60], "kernels": 4}},
}


def test_criterion_9_cli_determinism(tmp_path, capsys):
    mismatched, codes = [], {}
    for cmd, data in COMMAND_CONFIGS.items():
        cfg = tmp_path / f"{cmd}.json"
        cfg.write_text(json.dumps(data))
        outs = []
        for threads in ("1", "8"):
            out = tmp_path / f"{cmd}-{threads}"
            code = main([cmd, "--config", str(cfg), "--out", str(out), "--threads", threads])
            outs.append((code, {p.name: p.read_bytes() for p in sorted(out.iterdir())}))
        codes[cmd] = outs[0][0]
        if outs[0] != outs[1] or not outs[0][1]:
            mismatched.append(cmd)
    report(capsys, 9, "every command is byte-identical for --threads 1 and 8", not mismatched,
           f"exit codes {codes}" + (f", mismatched {mismatched}" if mismatched else ", all outputs identical"))
