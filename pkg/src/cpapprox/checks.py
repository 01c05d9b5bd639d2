"""Invariant suite for the kernel algebra, checked on concrete patches.

Every check compares a symbolic kernel operation with the corresponding
matrix operation on the sites far enough from the patch boundary that no
term of either side is truncated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import (
    Kernel,
    PEFunction,
    build_schrodinger,
    kernel_adjoint,
    kernel_convolve,
    kernel_generator_s,
    SchrodingerSpec,
)
from .operators import represent
from .pointset import COINCIDENCE_TOL, PointSet, enumerate_patch_classes, translate

__all__ = [
    "CheckResult",
    "interior_rows",
    "random_pe_kernel",
    "multiplicativity_defect",
    "adjoint_defect",
    "shift_identity_defects",
    "equivariance_defect",
    "run_algebra_suite",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.tolerance)


def interior_rows(op, patch: PointSet, margin: float) -> np.ndarray:
    """Row indices of sites with ``|x| + margin`` inside the patch ball."""
    return np.flatnonzero(np.linalg.norm(op.sites, axis=1) + margin <= patch.radius + COINCIDENCE_TOL)


def random_pe_kernel(patch: PointSet, rng: np.random.Generator, n_terms: int = 3, reach: float = 3.0,
                     pe_radius: float = 1.7, complex_values: bool = True) -> Kernel:
    """Kernel with random displacements from ``D - D`` and random pattern-equivariant coefficients.

    Coefficient tables cover the ``pe_radius`` classes present in the patch.
    """
    origin = patch.points[np.argmin(np.linalg.norm(patch.points, axis=1))]
    near = patch.points[np.linalg.norm(patch.points - origin, axis=1) <= reach]
    disp = near - origin
    classes = [c for c, _ in enumerate_patch_classes(patch, pe_radius)]

    def value():
        re = rng.normal()
        return complex(re, rng.normal()) if complex_values else complex(re)

    terms = []
    for _ in range(n_terms):
        delta = disp[rng.integers(len(disp))]
        table = {c.signature: value() for c in classes}
        terms.append((delta, PEFunction(pe_radius, table, value())))
    return Kernel(patch.dim, tuple(terms))


def _margin(*kernels: Kernel) -> float:
    return sum(k.reach for k in kernels) + max(k.pattern_radius for k in kernels) + 1e-6


def _padded(k: Kernel, radius: float) -> Kernel:
    # a zero term of the common pattern radius makes all matrices share one site set
    return Kernel(k.dim, k.terms + ((np.zeros(k.dim), _Zero(radius)),), k.tol)


def multiplicativity_defect(a: Kernel, b: Kernel, patch: PointSet, weights=None) -> float:
    """``max |lambda(a ⋆ b) - lambda(a) lambda(b)|`` over interior rows."""
    ab = kernel_convolve(a, b)
    r = max(a.pattern_radius, b.pattern_radius, ab.pattern_radius)
    M_a, M_b, M_ab = (represent(_padded(k, r), patch, weights) for k in (a, b, ab))
    rows = interior_rows(M_a, patch, _margin(a, b, ab))
    if not len(rows):
        raise ValueError("patch too small for the kernels")
    prod = M_a.entries @ M_b.entries
    return float(np.max(np.abs(M_ab.entries[rows] - prod[rows])))


class _Zero:
    """Zero coefficient with a given pattern radius (pads site sets)."""

    is_constant = False

    def __init__(self, radius: float):
        self.radius = radius

    def __call__(self, view):
        return 0j


def adjoint_defect(a: Kernel, patch: PointSet, weights=None) -> float:
    """``max |lambda(a*) - lambda(a)^H|`` over interior rows."""
    star = kernel_adjoint(a)
    r = max(a.pattern_radius, star.pattern_radius)
    M, M_star = represent(_padded(a, r), patch, weights), represent(_padded(star, r), patch, weights)
    rows = interior_rows(M, patch, _margin(a, star))
    if not len(rows):
        raise ValueError("patch too small for the kernel")
    return float(np.max(np.abs(M_star.entries[rows] - M.entries.conj().T[rows])))


def shift_identity_defects(patch: PointSet, gamma) -> tuple[float, float]:
    """Defects of ``lambda(s_g) u(x) = 1_D(x+g) u(x+g)`` and ``s_g* ⋆ s_g = 1_D(x-g)`` on the diagonal.

    Membership is decided directly on the patch, independently of the kernel machinery.
    """
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    s = kernel_generator_s(gamma)
    p = kernel_convolve(kernel_adjoint(s), s)
    r = max(s.pattern_radius, p.pattern_radius)
    M_s, M_p = represent(_padded(s, r), patch), represent(_padded(p, r), patch)
    rows = interior_rows(M_s, patch, float(np.linalg.norm(gamma)) + r + 1e-6)
    pos = {tuple(np.round(x, 9)): i for i, x in enumerate(M_s.sites)}

    def index(x):
        return pos.get(tuple(np.round(x, 9)))

    shift_err, proj_err = 0.0, 0.0
    for i in rows:
        x = M_s.sites[i]
        expect = np.zeros(M_s.dim)
        j = index(x + gamma)
        if j is not None:
            expect[j] = 1.0
        shift_err = max(shift_err, float(np.max(np.abs(M_s.entries[i] - expect))))
        expect = np.zeros(M_p.dim)
        if patch.index_of(x - gamma) is not None:
            expect[i] = 1.0
        proj_err = max(proj_err, float(np.max(np.abs(M_p.entries[i] - expect))))
    return shift_err, proj_err


def equivariance_defect(kernel: Kernel, patch: PointSet, t) -> float:
    """Compare matrices on ``D`` and on the translate ``D - t`` over their common interior."""
    moved = translate(patch, t)
    t = np.asarray(t, dtype=float).reshape(patch.dim)
    A = represent(kernel, patch)
    B = represent(kernel, moved)
    margin = kernel.reach + kernel.pattern_radius + 1e-6
    rows_b = interior_rows(B, moved, margin)
    if not len(rows_b):
        raise ValueError("translated patch has no interior")
    idx_a = {tuple(np.round(x, 9)): i for i, x in enumerate(A.sites)}
    perm = np.array([idx_a.get(tuple(np.round(x + t, 9)), -1) for x in B.sites], dtype=int)
    ok = perm >= 0
    err = 0.0
    for i in rows_b:
        row_b = B.entries[i]
        if perm[i] < 0 or np.any(row_b[~ok]):
            raise RuntimeError("interior of the translate is not covered by the original patch")
        row_a = A.entries[perm[i]]
        mapped = np.zeros_like(row_a)
        mapped[perm[ok]] = row_b[ok]
        err = max(err, float(np.max(np.abs(mapped - row_a))))
    return err


def run_algebra_suite(patch: PointSet, seed: int = 0, n_kernels: int = 20,
                      operator: SchrodingerSpec | Kernel | None = None,
                      tol: float = 1e-12, pe_radius: float = 1.7) -> list[CheckResult]:
    """Multiplicativity and adjoint checks for random kernels, the shift identities, and Hermiticity."""
    rng = np.random.default_rng(seed)
    mult, adj = 0.0, 0.0
    for _ in range(n_kernels):
        a = random_pe_kernel(patch, rng, pe_radius=pe_radius)
        b = random_pe_kernel(patch, rng, pe_radius=pe_radius)
        mult = max(mult, multiplicativity_defect(a, b, patch))
        adj = max(adj, adjoint_defect(a, patch))
    origin = patch.points[np.argmin(np.linalg.norm(patch.points, axis=1))]
    gammas = [p - origin for p in patch.points[np.linalg.norm(patch.points - origin, axis=1) <= 3.0]]
    s_err, p_err = 0.0, 0.0
    for g in gammas:
        e1, e2 = shift_identity_defects(patch, g)
        s_err, p_err = max(s_err, e1), max(p_err, e2)
    results = [
        CheckResult("multiplicativity", mult, tol),
        CheckResult("adjoint", adj, tol),
        CheckResult("shift-identity", s_err, 0.0),
        CheckResult("shift-projection", p_err, 0.0),
    ]
    if operator is not None:
        kernel = build_schrodinger(operator) if isinstance(operator, SchrodingerSpec) else operator
        op = represent(kernel, patch)
        results.append(CheckResult("hermitian", op.hermitian_defect(), tol))
    return results
