"""Desk-scale convergence experiments: periodic approximants and mollified windows.

For every cell ``(q, eps)`` of the plan the rational approximant with
denominator bound ``q`` is sampled with the window function ``w_eps`` and the
lifted operator (or the weighted pair measure) is evaluated on it.  Estimates
for periodic approximants are exact orbit averages over one period cell,
averaged over internal shifts with the uniform measure on the internal cell;
the irrational reference uses one large open patch.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .algebra import Kernel, SchrodingerSpec, build_schrodinger
from .cutproject import (
    PHI,
    RationalScheme,
    Scheme,
    WindowFn,
    fibonacci_scheme,
    internal_cell,
    perturb_if_singular,
    periodicity_lattice,
    rational_approximant,
    sample_model_set,
)
from .operators import PeriodicBoundary, SamplingWeight
from .pointset import local_distance
from .spectra import (
    EmpiricalMeasure,
    TestFunction,
    autocorrelation,
    autocorrelation_periodic,
    dos_estimate,
    pair_measure_apply,
    weak_star_distance,
)
from .tables import csv_text

__all__ = [
    "ExperimentPlan",
    "ConvergenceReport",
    "default_fibonacci_operator",
    "default_test_functions",
    "fibonacci_plan",
    "hull_proxy_distance",
    "run_dos_convergence",
    "run_autocorr_convergence",
    "trend_violations",
]

log = logging.getLogger(__name__)

_NOISE_FLOOR = 1e-12


def default_fibonacci_operator() -> SchrodingerSpec:
    """Off-diagonal hopping on the two Fibonacci gaps (1 on short, 0.5 on long).

    The displacement tolerance 0.2 lets approximant gaps such as 1.5 or
    1.625 play the role of the golden-ratio gap.
    """
    return SchrodingerSpec({(1.0,): 1.0, (PHI,): 0.5}, tol=0.2)


def default_test_functions() -> tuple:
    return (
        (TestFunction("triangle", (0.0,), 0.3), TestFunction("triangle", (1.0,), 0.3)),
        (TestFunction("triangle", (0.0,), 0.3), TestFunction("triangle", (PHI,), 0.3)),
        (TestFunction("cosine-bump", (0.0,), 0.3), TestFunction("cosine-bump", (1.0 + PHI,), 0.3)),
    )


@dataclass(frozen=True, eq=False)
class ExperimentPlan:
    """Grid of denominator bounds and window widths for one scheme.

    ``epsilons`` are mollifier widths in descending order (a trailing 0 means
    the sharp window); ``reference_radius`` is the open-patch radius of the
    irrational reference, raised to at least four times the largest period.
    """

    scheme: Scheme
    denominators: tuple = (2, 8, 34)
    epsilons: tuple = (0.2, 0.05, 0.01)
    side: str = "upper"
    operator: SchrodingerSpec = field(default_factory=default_fibonacci_operator)
    test_functions: tuple = field(default_factory=default_test_functions)
    reference_radius: float = 600.0
    hull_radius: float = 100.0
    rho_profile: str = "bump"
    rho_smoothness: float = 2.0
    shift_nodes: int = 3
    shift_samples: int = 8
    min_cell_length: float = 256.0
    jitter: float = 0.1
    final_tolerance: float | None = None
    check_reference: bool = True
    seed: int = 0

    def __post_init__(self):
        den = tuple(int(q) for q in self.denominators)
        eps = tuple(float(e) for e in self.epsilons)
        if not den or any(q < 1 for q in den) or any(b <= a for a, b in zip(den, den[1:])):
            raise ValueError("denominators must be positive and strictly ascending")
        if not eps or any(e < 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must be nonnegative and strictly descending")
        if self.side not in ("upper", "lower"):
            raise ValueError("side must be 'upper' or 'lower'")
        if self.operator.dim != self.scheme.d:
            raise ValueError("operator and scheme dimensions differ")
        if self.rho_profile not in ("uniform-ball", "bump"):
            raise ValueError(f"unknown sampling profile {self.rho_profile!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.min_cell_length < 0:
            raise ValueError("min_cell_length must be nonnegative")
        if self.shift_nodes < 1 or self.shift_samples < 1:
            raise ValueError("shift quadrature needs at least one node")
        if not self.reference_radius > 0 or not self.hull_radius > 0:
            raise ValueError("radii must be positive")
        tf = tuple((f1, f2) for f1, f2 in self.test_functions)
        object.__setattr__(self, "denominators", den)
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "test_functions", tf)

    def window_fn(self, eps: float) -> WindowFn | None:
        """Mollified window of width ``eps``; ``None`` stands for the sharp window."""
        if self.scheme.m == 0 or eps == 0:
            return None
        return WindowFn(self.scheme.window, eps, self.side)

    def to_json(self) -> dict:
        return {
            "scheme": self.scheme.to_json(),
            "denominators": list(self.denominators),
            "epsilons": list(self.epsilons),
            "side": self.side,
            "operator": self.operator.to_json(),
            "test_functions": [[f1.to_json(), f2.to_json()] for f1, f2 in self.test_functions],
            "reference_radius": self.reference_radius,
            "hull_radius": self.hull_radius,
            "rho_profile": self.rho_profile,
            "rho_smoothness": self.rho_smoothness,
            "shift_nodes": self.shift_nodes,
            "shift_samples": self.shift_samples,
            "min_cell_length": self.min_cell_length,
            "jitter": self.jitter,
            "final_tolerance": self.final_tolerance,
            "check_reference": self.check_reference,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentPlan":
        kw = dict(data)
        kw["scheme"] = Scheme.from_json(data["scheme"])
        if "operator" in data:
            kw["operator"] = SchrodingerSpec.from_json(data["operator"])
        if "test_functions" in data:
            kw["test_functions"] = tuple(
                (TestFunction.from_json(a), TestFunction.from_json(b)) for a, b in data["test_functions"])
        for key in ("denominators", "epsilons"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


def fibonacci_plan(**overrides) -> ExperimentPlan:
    kw = dict(scheme=fibonacci_scheme())
    kw.update(overrides)
    return ExperimentPlan(**kw)


@dataclass
class ConvergenceReport:
    """Distances to the reference on the ``(eps, q)`` grid plus order-of-limits diagnostics.

    ``grid[i][j]`` is the distance for ``epsilons[i]`` and ``denominators[j]``.
    ``n_then_l`` holds the inner distances to the irrational scheme with the
    same window and the outer distances of those to the reference;
    ``l_then_n`` holds the inner distances to the sharp approximant and the
    outer distances of the sharp approximants to the reference.
    """

    kind: str
    denominators: list
    epsilons: list
    grid: list
    hull: list
    n_then_l: dict
    l_then_n: dict
    reference: dict
    cells: list
    assertions: list
    shift_perturbed: bool = False

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    @property
    def final(self) -> float:
        return self.grid[-1][-1]

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "denominators": self.denominators,
            "epsilons": self.epsilons,
            "grid": self.grid,
            "hull_proxy": self.hull,
            "n_then_l": self.n_then_l,
            "l_then_n": self.l_then_n,
            "reference": self.reference,
            "cells": self.cells,
            "assertions": self.assertions,
            "shift_perturbed": self.shift_perturbed,
            "passed": self.passed,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n"

    def to_csv(self, grid: list | None = None) -> str:
        """Matrix with one row per epsilon and one column per denominator."""
        grid = self.grid if grid is None else grid
        header = ["epsilon"] + [f"q={q}" for q in self.denominators]
        return csv_text(header, ([e] + list(row) for e, row in zip(self.epsilons, grid)))


def hull_proxy_distance(scheme_a: Scheme, scheme_b: Scheme | RationalScheme, R: float) -> float:
    """Local distance between the sharp-window patches of two schemes.

    Each scheme keeps its own shift; a rational approximant carries the shift
    of the scheme it approximates.
    """
    if isinstance(scheme_b, RationalScheme):
        scheme_b = scheme_b.scheme
    pa = sample_model_set(scheme_a, R).patch
    pb = sample_model_set(scheme_b, R).patch
    return local_distance(pa, pb)


def trend_violations(values, jitter: float) -> list[int]:
    """Indices ``i`` where ``values[i+1]`` exceeds ``(1 + jitter) values[i]`` beyond the noise floor."""
    return [i for i in range(len(values) - 1)
            if values[i + 1] > (1 + jitter) * values[i] + _NOISE_FLOOR]


# --- estimators on one scheme -------------------------------------------------


class _Setup:
    """Quantities shared by every cell of a run."""

    def __init__(self, plan: ExperimentPlan, kind: str):
        self.plan = plan
        self.kind = kind
        self.kernel: Kernel = build_schrodinger(plan.operator)
        self.lifted = self.kernel.lift() if plan.scheme.m else self.kernel
        self.margin = self.kernel.reach + self.kernel.pattern_radius + self.kernel.tol
        pairs = plan.test_functions
        self.delta_max = max((np.linalg.norm(np.subtract(f2.center, f1.center)) + f1.support_radius
                              + f2.support_radius for f1, f2 in pairs), default=1.0)
        self.approximants = {q: rational_approximant(plan.scheme, q) for q in plan.denominators}
        periods = []
        for rs in self.approximants.values():
            lat = periodicity_lattice(rs)
            if lat is not None and lat.rank == plan.scheme.d:
                periods.append(PeriodicBoundary(lat.physical).cell_radius() * 2)
        self.ref_radius = max(plan.reference_radius, 4 * max(periods, default=0.0))
        self.scheme, self.perturbed = perturb_if_singular(plan.scheme, self.ref_radius, plan.seed)
        if self.perturbed:
            log.warning("singular shift perturbed to %s", self.scheme.shift.tolist())

    # measure of one sample
    def _open_measure(self, scheme: Scheme, wf: WindowFn | None, R: float):
        sample = sample_model_set(scheme, R, wf)
        if self.kind == "dos":
            rho = SamplingWeight(self.plan.rho_profile, 0.8 * R - self.margin,
                                 self.plan.rho_smoothness, dim=scheme.d)
            kern = self.lifted if wf is not None else self.kernel
            return dos_estimate(kern, sample.patch, sample.weights, rho).normalized(), len(sample.patch)
        R_eff = R - self.delta_max
        return autocorrelation(sample.patch, sample.weights, R_eff, self.delta_max), len(sample.patch)

    def _periodic_measure(self, scheme: Scheme, wf: WindowFn | None, bnd: PeriodicBoundary):
        reach = self.margin if self.kind == "dos" else self.delta_max + 1e-6
        R = 2 * bnd.cell_radius() + reach + 1.0
        sample = sample_model_set(scheme, R, wf)
        if self.kind == "dos":
            kern = self.lifted if wf is not None else self.kernel
            m = dos_estimate(kern, sample.patch, sample.weights, "orbit", bnd)
        else:
            m = autocorrelation_periodic(sample.patch, sample.weights, bnd, self.delta_max)
        return m, len(sample.patch)

    def _boundary(self, lat) -> PeriodicBoundary:
        """Periodic cell for the estimate; densities of states use a supercell of the period lattice.

        A supercell ``k`` periods long samples ``k`` Bloch momenta uniformly;
        the pair measure is exact on a single cell.
        """
        bnd = PeriodicBoundary(lat.physical)
        if self.kind != "dos":
            return bnd
        shortest = float(np.min(np.linalg.norm(bnd.periods, axis=1)))
        k = max(1, int(np.ceil(self.plan.min_cell_length / shortest - 1e-9)))
        return PeriodicBoundary(lat.scaled(k).physical)

    def _shift_rule(self, rs: RationalScheme, wf: WindowFn | None):
        """Quadrature nodes and weights for the uniform measure on the internal cell."""
        cell = internal_cell(rs)
        m = self.scheme.m
        if m == 1:
            c = float(abs(cell[0, 0]))
            win = self.scheme.window
            lo, hi = win.center[0] - win.half_widths[0], win.center[0] + win.half_widths[0]
            kinks = wf.kinks() if wf is not None else [0.0]
            base = float(self.scheme.shift[self.scheme.d])
            cuts = {0.0, c}
            for k in kinks:
                for p in (hi + k, lo - k):
                    cuts.add(float((p - base) % c))
            cuts = sorted(cuts)
            gx, gw = np.polynomial.legendre.leggauss(1 if wf is None else self.plan.shift_nodes)
            nodes, weights = [], []
            for a, b in zip(cuts[:-1], cuts[1:]):
                if b - a <= 1e-14:
                    continue
                for x, wt in zip(gx, gw):
                    nodes.append(np.array([(a + b) / 2 + (b - a) / 2 * x]))
                    weights.append(wt * (b - a) / 2 / c)
            return nodes, np.array(weights)
        rng = np.random.default_rng(self.plan.seed)
        u = rng.random((self.plan.shift_samples, m))
        return list(u @ cell), np.full(self.plan.shift_samples, 1.0 / self.plan.shift_samples)

    def approximant(self, q: int, eps: float):
        rs = self.approximants[q]
        wf = self.plan.window_fn(eps)
        rscheme = rs.scheme.with_shift(self.scheme.shift)
        lat = periodicity_lattice(rs)
        stats = {"q": q, "epsilon": eps}
        if lat is None or lat.rank < self.scheme.d:
            m, n = self._open_measure(rscheme, wf, self.ref_radius)
            stats.update(boundary="open", sites=n)
            return m, stats
        bnd = self._boundary(lat)
        stats.update(boundary="periodic", period_volume=bnd.cell_volume())
        if self.scheme.m == 0:
            m, n = self._periodic_measure(rscheme, None, bnd)
            stats.update(sites=n, shifts=1)
            return self._finish(m), stats
        nodes, weights = self._shift_rule(rs, wf)
        acc = EmpiricalMeasure.zero(self.scheme.d)
        sizes = []
        d = self.scheme.d
        for h0, wt in zip(nodes, weights):
            shifted = rscheme.with_shift(np.concatenate([rscheme.shift[:d], rscheme.shift[d:] + h0]))
            m, n = self._periodic_measure(shifted, wf, bnd)
            acc = acc + m.scaled(wt)
            sizes.append(n)
        stats.update(sites=max(sizes), shifts=len(nodes))
        return self._finish(acc), stats

    def irrational(self, eps: float, radius: float | None = None):
        """Estimate for the scheme itself; periodic schemes use the exact periodic estimator."""
        R = self.ref_radius if radius is None else radius
        wf = self.plan.window_fn(eps)
        lat = periodicity_lattice(self.scheme)
        if lat is not None and lat.rank == self.scheme.d and self.scheme.m == 0:
            m, _ = self._periodic_measure(self.scheme, None, self._boundary(lat))
            return self._finish(m)
        m, _ = self._open_measure(self.scheme, wf, R)
        return m

    def _finish(self, m: EmpiricalMeasure) -> EmpiricalMeasure:
        # densities of states are compared as probability measures
        return m.normalized() if self.kind == "dos" else m

    # distances
    def distance(self, a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
        if self.kind == "dos":
            return weak_star_distance(a, b)
        return max(_relative_gap(pair_measure_apply(a, f1, f2), pair_measure_apply(b, f1, f2))
                   for f1, f2 in self.plan.test_functions)


def _relative_gap(x: float, ref: float) -> float:
    return abs(x - ref) / abs(ref) if abs(ref) > _NOISE_FLOOR else abs(x - ref)


def _ordered_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _run(plan: ExperimentPlan, kind: str, threads: int) -> ConvergenceReport:
    st = _Setup(plan, kind)
    Q, E = plan.denominators, plan.epsilons
    # outer loop over eps, inner over q
    cells = [(q, e) for e in E for q in Q]
    sharp_cells = [(q, 0.0) for q in Q]
    ref_radii = [st.ref_radius] + ([2 * st.ref_radius] if plan.check_reference and plan.scheme.m else [])
    jobs = ([("cell", c) for c in cells] + [("cell", c) for c in sharp_cells]
            + [("irr", (e, st.ref_radius)) for e in E] + [("irr", (0.0, r)) for r in ref_radii])

    def work(job):
        tag, arg = job
        if tag == "cell":
            return st.approximant(*arg)
        return st.irrational(*arg), None

    out = _ordered_map(work, jobs, threads)
    k = 0
    cell_m = {c: out[k + i] for i, c in enumerate(cells)}
    k += len(cells)
    sharp_m = {q: out[k + i][0] for i, (q, _) in enumerate(sharp_cells)}
    k += len(sharp_cells)
    irr_m = {e: out[k + i][0] for i, e in enumerate(E)}
    k += len(E)
    refs = [out[k + i][0] for i in range(len(ref_radii))]
    ref = refs[0]

    dist = st.distance
    grid = [[dist(cell_m[(q, e)][0], ref) for q in Q] for e in E]
    inner_n = [[dist(cell_m[(q, e)][0], irr_m[e]) for q in Q] for e in E]
    outer_n = [dist(irr_m[e], ref) for e in E]
    inner_l = [[dist(cell_m[(q, e)][0], sharp_m[q]) for q in Q] for e in E]
    outer_l = [dist(sharp_m[q], ref) for q in Q]
    if plan.scheme.m:
        hull = _ordered_map(lambda q: hull_proxy_distance(st.scheme, st.approximants[q], plan.hull_radius),
                            Q, threads)
    else:
        hull = [0.0 for _ in Q]
    reference = {"radius": st.ref_radius, "atoms": len(ref)}
    if len(refs) > 1:
        reference.update(doubled_radius=ref_radii[1], stability=dist(refs[1], ref))

    assertions = []
    for e, row in zip(E, grid):
        bad = trend_violations(row, plan.jitter)
        assertions.append({"name": f"nonincreasing in q at epsilon={e!r}", "passed": not bad,
                           "violations": [[Q[i], Q[i + 1]] for i in bad]})
    col = [row[-1] for row in grid]
    bad = trend_violations(col, plan.jitter)
    assertions.append({"name": f"nonincreasing in epsilon at q={Q[-1]}", "passed": not bad,
                       "violations": [[E[i], E[i + 1]] for i in bad]})
    bad = trend_violations(hull, plan.jitter)
    assertions.append({"name": "hull proxy nonincreasing in q", "passed": not bad,
                       "violations": [[Q[i], Q[i + 1]] for i in bad]})
    if plan.final_tolerance is not None:
        assertions.append({"name": f"final cell <= {plan.final_tolerance!r}",
                           "passed": grid[-1][-1] <= plan.final_tolerance, "violations": []})

    return ConvergenceReport(
        kind=kind,
        denominators=list(Q),
        epsilons=list(E),
        grid=grid,
        hull=list(hull),
        n_then_l={"inner": inner_n, "outer": outer_n},
        l_then_n={"inner": inner_l, "outer": outer_l},
        reference=reference,
        cells=[cell_m[c][1] for c in cells],
        assertions=assertions,
        shift_perturbed=st.perturbed,
    )


def run_dos_convergence(plan: ExperimentPlan, threads: int = 1) -> ConvergenceReport:
    """Weak-* distances of approximant densities of states to the sharp irrational reference."""
    return _run(plan, "dos", threads)


def run_autocorr_convergence(plan: ExperimentPlan, threads: int = 1) -> ConvergenceReport:
    """Largest relative test-function discrepancy of approximant autocorrelations."""
    return _run(plan, "autocorr", threads)
