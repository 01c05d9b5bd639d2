"""Command-line entry point: ``cpapprox <command> --config PATH [--out DIR] ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 failed assertion.  Every output is a pure function of the config bytes
and the seed.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .algebra import Kernel, PEFunction, build_schrodinger
from .checks import run_algebra_suite
from .config import Config, ConfigError, load_config
from .cutproject import perturb_if_singular, periodicity_lattice, rational_approximant, sample_model_set
from .harness import run_autocorr_convergence, run_dos_convergence
from .operators import PeriodicBoundary, SamplingWeight, dump_matrix, eigensolve, represent
from .pointset import enumerate_patch_classes
from .spectra import IDS, autocorrelation, autocorrelation_periodic, dos_from_operator, pair_measure_apply
from .tables import csv_text, fmt_float

__all__ = ["main", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERICAL", "EXIT_ASSERTION"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ASSERTION = 0, 2, 3, 4


class _Run:
    """Resolved settings shared by the commands."""

    def __init__(self, cfg: Config, args):
        self.cfg = cfg
        self.seed = cfg.seed if args.seed is None else args.seed
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        self.radius = cfg.radius if args.radius is None else args.radius
        if not self.radius > 0:
            raise ConfigError("radius must be positive")
        self.threads = max(1, args.threads)
        self.out = Path(args.out or cfg.out or "out")
        self.out.mkdir(parents=True, exist_ok=True)
        sc = cfg.scheme
        base = sc.base_scheme()
        if sc.approximant_q is not None:
            rs = rational_approximant(base, sc.approximant_q)
            self.scheme, self.lattice = rs.scheme, periodicity_lattice(rs)
        else:
            self.scheme, self.lattice = base, periodicity_lattice(base)
        self.perturbed = False

    def nonsingular(self, R: float):
        self.scheme, self.perturbed = perturb_if_singular(self.scheme, R, self.seed)
        if self.perturbed:
            print(f"warning: singular shift; perturbed to {[fmt_float(v) for v in self.scheme.shift]}",
                  file=sys.stderr)

    def write(self, name: str, text: str):
        (self.out / name).write_bytes(text.encode("utf-8"))

    def write_json(self, name: str, data):
        self.write(name, json.dumps(data, indent=1, sort_keys=True) + "\n")


def _gap_rows(points: np.ndarray):
    if len(points) < 2:
        return []
    gaps = np.round(np.diff(points[:, 0]), 6)
    vals, counts = np.unique(gaps, return_counts=True)
    return [[float(v), int(c)] for v, c in zip(vals, counts)]


def cmd_generate(run: _Run) -> int:
    cfg = run.cfg
    run.nonsingular(run.radius)
    wf = cfg.window.build(run.scheme)
    sample = sample_model_set(run.scheme, run.radius, wf)
    patch = sample.patch
    run.write_json("patch.json", {
        "scheme": run.scheme.to_json(),
        "patch": patch.to_json(),
        "weights": [float(w) for w in sample.weights],
        "internal": np.asarray(sample.internal).tolist(),
        "shift_perturbed": run.perturbed,
    })
    if patch.dim == 1:
        run.write("gaps.csv", csv_text(["gap", "count"], _gap_rows(patch.points)))
    rows = []
    for i, (cls, count) in enumerate(enumerate_patch_classes(patch, cfg.generate.class_radius)):
        sig = " ".join(";".join(fmt_float(v) for v in vec) for vec in cls.displacements())
        rows.append([i, count, len(cls.signature), sig])
    run.write("classes.csv", csv_text(["class", "count", "size", "displacements"], rows))
    return EXIT_OK


def _kernel(cfg: Config, lifted: bool) -> Kernel:
    k = build_schrodinger(cfg.operator.build())
    if cfg.operator.corrupt:
        # one-sided hop: breaks self-adjointness on purpose
        k = Kernel(k.dim, k.terms + ((np.ones(k.dim), PEFunction.constant(0.5j)),), k.tol)
    return k.lift() if lifted else k


def cmd_dos(run: _Run) -> int:
    cfg, dc = run.cfg, run.cfg.dos
    wf = cfg.window.build(run.scheme)
    kernel = _kernel(cfg, wf is not None)
    margin = kernel.reach + kernel.pattern_radius + kernel.tol
    boundary = "open"
    full = run.lattice is not None and run.lattice.rank == run.scheme.d
    if dc.periods is not None and dc.boundary != "open":
        boundary = PeriodicBoundary(dc.periods)
    elif dc.boundary == "periodic" or (dc.boundary == "auto" and full):
        if not full:
            raise ConfigError("periodic boundary requested but the scheme has no full period lattice")
        # supercell of the period lattice: samples Bloch momenta uniformly
        shortest = float(np.min(np.linalg.norm(run.lattice.physical, axis=1)))
        k = max(1, int(np.ceil(dc.min_cell_length / shortest - 1e-9)))
        boundary = PeriodicBoundary(run.lattice.scaled(k).physical)
    R = run.radius
    if boundary != "open":
        R = max(R, 2 * boundary.cell_radius() + margin + 1.0)
    run.nonsingular(R)
    sample = sample_model_set(run.scheme, R, wf)
    op = represent(kernel, sample.patch, sample.weights, boundary)
    if not op.is_hermitian():
        raise ArithmeticError("operator matrix is not Hermitian")
    eig = eigensolve(op)
    if dc.rho.profile == "orbit":
        if boundary == "open":
            raise ConfigError("orbit sampling needs a periodic boundary")
        rho_vals = np.full(op.dim, 1.0 / boundary.cell_volume())
        measure = dos_from_operator(op, rho_vals, eig)
    else:
        rho = SamplingWeight(dc.rho.profile, dc.rho.radius, dc.rho.smoothness, dim=sample.patch.dim)
        if boundary != "open":
            measure = dos_from_operator(op, rho.periodized(op.sites, boundary), eig)
        else:
            if rho.reach() + dc.translate_radius > R - margin:
                raise ConfigError("sampling weight reaches into the boundary margin; raise --radius")
            if dc.translates:
                rng = np.random.default_rng(run.seed)
                acc = None
                for _ in range(dc.translates):
                    v = rng.normal(size=op.sites.shape[1])
                    v *= dc.translate_radius * rng.random() ** (1 / len(v)) / max(np.linalg.norm(v), 1e-300)
                    m = dos_from_operator(op, rho.moved(v)(op.sites), eig)
                    acc = m if acc is None else acc + m
                measure = acc.scaled(1.0 / dc.translates)
            else:
                measure = dos_from_operator(op, rho(op.sites), eig)
    if measure.total_mass <= 0:
        raise ArithmeticError("density of states has zero mass")
    run.write("dos.csv", measure.to_csv())
    run.write("dos_normalized.csv", measure.normalized().to_csv())
    g = dc.ids_grid
    run.write("ids.csv", IDS(measure).to_csv(np.linspace(g.lo, g.hi, g.n)))
    run.write_json("dos_summary.json", {
        "sites": op.dim,
        "patch_radius": R,
        "boundary": "open" if boundary == "open" else {"periodic": boundary.periods.tolist()},
        "total_mass": measure.total_mass,
        "atoms": len(measure),
        "shift_perturbed": run.perturbed,
    })
    if dc.dump_matrix:
        dump_matrix(op, run.out / "matrix")
    return EXIT_OK


def cmd_autocorr(run: _Run) -> int:
    cfg, ac = run.cfg, run.cfg.autocorr
    wf = cfg.window.build(run.scheme)
    if ac.periodic:
        if run.lattice is None or run.lattice.rank < run.scheme.d:
            raise ConfigError("periodic autocorrelation needs a full period lattice")
        bnd = PeriodicBoundary(run.lattice.physical)
        R = max(run.radius, 2 * bnd.cell_radius() + ac.delta_max + 1.0)
        run.nonsingular(R)
        sample = sample_model_set(run.scheme, R, wf)
        gamma = autocorrelation_periodic(sample.patch, sample.weights, bnd, ac.delta_max)
    else:
        if ac.R_eff + ac.delta_max > run.radius:
            raise ConfigError("R_eff + delta_max exceeds the patch radius")
        run.nonsingular(run.radius)
        sample = sample_model_set(run.scheme, run.radius, wf)
        gamma = autocorrelation(sample.patch, sample.weights, ac.R_eff, ac.delta_max)
    run.write("autocorr.csv", gamma.to_csv())
    if ac.pairs:
        rows = []
        for i, (a, b) in enumerate(ac.pairs):
            f1, f2 = a.build(), b.build()
            rows.append([i, json.dumps(f1.to_json(), sort_keys=True), json.dumps(f2.to_json(), sort_keys=True),
                         pair_measure_apply(gamma, f1, f2)])
        run.write("pairs.csv", csv_text(["pair", "f1", "f2", "value"], rows))
    return EXIT_OK


def cmd_converge(run: _Run) -> int:
    cfg = run.cfg
    kinds = ["dos", "autocorr"] if cfg.plan.kind == "both" else [cfg.plan.kind]
    ok = True
    for kind in kinds:
        tol = cfg.plan.final_tolerance_dos if kind == "dos" else cfg.plan.final_tolerance_autocorr
        plan = cfg.experiment_plan(run.seed, tol)
        runner = run_dos_convergence if kind == "dos" else run_autocorr_convergence
        report = runner(plan, threads=run.threads)
        if report.shift_perturbed:
            print("warning: singular shift; reference shift perturbed", file=sys.stderr)
        run.write(f"report_{kind}.json", report.dumps())
        run.write(f"grid_{kind}.csv", report.to_csv())
        run.write(f"grid_{kind}_n_then_l.csv", report.to_csv(report.n_then_l["inner"]))
        run.write(f"grid_{kind}_l_then_n.csv", report.to_csv(report.l_then_n["inner"]))
        for a in report.assertions:
            if not a["passed"]:
                print(f"assertion failed ({kind}): {a['name']} {a['violations']}", file=sys.stderr)
        ok &= report.passed
    return EXIT_OK if ok else EXIT_ASSERTION


def cmd_algebra_check(run: _Run) -> int:
    cfg, al = run.cfg, run.cfg.algebra
    kernel = _kernel(cfg, False)
    rows, ok = [], True
    for R in al.radii:
        run.nonsingular(R)
        patch = sample_model_set(run.scheme, R).patch
        for res in run_algebra_suite(patch, run.seed, al.kernels, kernel, al.tolerance, al.pe_radius):
            rows.append([R, res.name, res.max_error, res.tolerance, res.passed])
            ok &= res.passed
            if not res.passed:
                print(f"check failed at R={fmt_float(R)}: {res.name} (error {fmt_float(res.max_error)})",
                      file=sys.stderr)
    run.write("algebra.csv", csv_text(["radius", "check", "max_error", "tolerance", "passed"], rows))
    return EXIT_OK if ok else EXIT_ASSERTION


COMMANDS = {
    "generate": cmd_generate,
    "dos": cmd_dos,
    "autocorr": cmd_autocorr,
    "converge": cmd_converge,
    "algebra-check": cmd_algebra_check,
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cpapprox", description="Cut-and-project sets, approximants and spectra.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker threads")
    p.add_argument("--radius", type=float, help="patch radius (overrides the config)")
    return p


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        run = _Run(load_config(args.config), args)
        return COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
