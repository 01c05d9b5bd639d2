"""Pattern-equivariant functions and the *-algebra of finite-type kernels.

A coefficient here is anything callable on a *local view*: the array of
displacements ``y - x`` of patch points ``y`` around a source point ``x``
(the zero displacement included).  A coefficient with ``radius`` r only
reads the part of the view inside ``B_r(0)``, which is what makes it
strongly pattern equivariant.

A :class:`Kernel` is a finite list of terms ``(delta, coefficient)`` and
stands for::

    a(x, D, y) = sum over terms with y - x == delta of coefficient(view of D at x)

where ``==`` is tested at the kernel's displacement tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .pointset import COINCIDENCE_TOL, PatchClass, PointSet, canonical_signature

__all__ = [
    "PEFunction",
    "Kernel",
    "SchrodingerSpec",
    "local_view",
    "eval_pe",
    "pe_from_patch_list",
    "pe_expansion",
    "eval_pe_expansion",
    "kernel_generator_s",
    "kernel_identity",
    "kernel_multiplication",
    "kernel_adjoint",
    "kernel_convolve",
    "kernel_add",
    "kernel_scale",
    "build_schrodinger",
]


def local_view(patch: PointSet, x, r: float) -> np.ndarray:
    """Displacements to all patch points within ``r`` of ``x``."""
    x = np.asarray(x, dtype=float).reshape(patch.dim)
    idx = sorted(patch.tree.query_ball_point(x, r + COINCIDENCE_TOL))
    return patch.points[idx] - x


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    return complex(v)


@dataclass(frozen=True, eq=False)
class PEFunction:
    """Class-to-value table on ``r``-patches with a fallback for unseen classes.

    ``radius == 0`` (or an empty table) is a constant function.
    """

    radius: float
    table: Mapping[tuple, complex] = field(default_factory=dict)
    default: complex = 0.0

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        table = {}
        for sig, val in dict(self.table).items():
            val = _complex(val)
            if not np.isfinite(val):
                raise ValueError("PE values must be finite")
            table[tuple(map(tuple, sig))] = val
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "default", _complex(self.default))

    @classmethod
    def constant(cls, value) -> "PEFunction":
        return cls(0.0, {}, value)

    @property
    def is_constant(self) -> bool:
        return self.radius == 0 or not self.table

    def is_real(self) -> bool:
        return all(v.imag == 0 for v in self.table.values()) and self.default.imag == 0

    def signature_of(self, view: np.ndarray) -> tuple:
        keep = np.linalg.norm(view, axis=1) <= self.radius + COINCIDENCE_TOL
        return canonical_signature(view[keep])

    def __call__(self, view: np.ndarray | None) -> complex:
        if self.is_constant:
            return self.default
        return self.table.get(self.signature_of(view), self.default)

    def conj(self) -> "PEFunction":
        return PEFunction(self.radius, {k: v.conjugate() for k, v in self.table.items()}, self.default.conjugate())

    def to_json(self) -> dict:
        return {
            "radius": self.radius,
            "default": [self.default.real, self.default.imag],
            "table": [
                {"signature": [list(s) for s in sig], "value": [v.real, v.imag]}
                for sig, v in sorted(self.table.items())
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "PEFunction":
        r = float(data["radius"])
        pairs = [
            (PatchClass(r, canonical_signature(np.asarray(e["signature"], dtype=float))), _complex(e["value"]))
            for e in data.get("table", [])
        ]
        if not pairs:
            return cls(r, {}, _complex(data.get("default", 0.0)))
        return pe_from_patch_list(pairs, r, _complex(data.get("default", 0.0)))


def eval_pe(f: PEFunction, patch: PointSet, x) -> complex:
    x = np.asarray(x, dtype=float).reshape(patch.dim)
    if patch.index_of(x) is None:
        raise ValueError("x is not a point of the patch")
    if np.linalg.norm(x) + f.radius > patch.radius + COINCIDENCE_TOL:
        raise ValueError("boundary-incomplete class")
    if f.is_constant:
        return f.default
    return f(local_view(patch, x, f.radius))


def pe_from_patch_list(pairs, radius: float, default=0.0) -> PEFunction:
    table: dict[tuple, complex] = {}
    for pc, val in pairs:
        if not isinstance(pc, PatchClass):
            pc = PatchClass(radius, canonical_signature(np.asarray(pc, dtype=float)))
        if abs(pc.center_radius - radius) > 1e-12:
            raise ValueError("patch class radius does not match the PE radius")
        val = _complex(val)
        if pc.signature in table and table[pc.signature] != val:
            raise ValueError(f"conflicting values for signature {pc.signature}")
        table[pc.signature] = val
    return PEFunction(float(radius), table, default)


def pe_expansion(f: PEFunction) -> list[tuple[tuple, complex]]:
    """Coefficients of ``f`` as a sum of products of point indicators.

    Every class ``j`` gets ``p_j = f_j - sum of p_k`` over classes strictly
    contained in it, processed by increasing number of contained classes
    (ties broken by signature size, then lexicographically).  Evaluating
    ``sum_j p_j * [class j ⊆ view]`` reproduces ``f`` on every tabulated class.
    """
    sigs = sorted(f.table, key=lambda s: (len(s), s))
    sets = {s: frozenset(s) for s in sigs}
    below = {s: [t for t in sigs if t != s and sets[t] < sets[s]] for s in sigs}
    order = sorted(sigs, key=lambda s: (len(below[s]), len(s), s))
    coeff: dict[tuple, complex] = {}
    for s in order:
        coeff[s] = f.table[s] - sum(coeff[t] for t in below[s])
    return [(s, coeff[s]) for s in order]


def eval_pe_expansion(expansion, view: np.ndarray, radius: float) -> complex:
    present = set(canonical_signature(view[np.linalg.norm(view, axis=1) <= radius + COINCIDENCE_TOL]))
    return sum((p for s, p in expansion if set(s) <= present), 0j)


class _ShiftedCoefficient:
    """Evaluate ``coef`` at the view point near ``delta`` (0 if absent)."""

    def __init__(self, coef, delta: np.ndarray, tol: float, conjugate: bool = False):
        self.coef = coef
        self.delta = np.asarray(delta, dtype=float)
        self.tol = tol
        self.conjugate = conjugate
        self.radius = coef.radius + float(np.linalg.norm(self.delta))

    is_constant = False

    def __call__(self, view):
        dist = np.linalg.norm(view - self.delta, axis=1)
        k = int(np.argmin(dist))
        if dist[k] > self.tol:
            return 0j
        val = self.coef(view - view[k])
        return val.conjugate() if self.conjugate else val


class _ConvolvedCoefficient:
    """Sum over intermediate points ``z = x + delta1`` of ``a_delta1(x) b_delta2(z)``."""

    def __init__(self, pairs, tol: float):
        self.pairs = pairs  # list of (a_coef, delta1, b_coef)
        self.tol = tol
        self.radius = max(
            a.radius + b.radius + float(np.linalg.norm(d1)) for a, d1, b in pairs
        )
        self.is_constant = False

    def __call__(self, view):
        total = 0j
        for a, d1, b in self.pairs:
            dist = np.linalg.norm(view - d1, axis=1)
            k = int(np.argmin(dist))
            if dist[k] > self.tol:
                continue
            total += a(view) * b(view - view[k])
        return total


class _ScaledCoefficient:
    def __init__(self, coef, factor: complex):
        self.coef = coef
        self.factor = complex(factor)
        self.radius = coef.radius
        self.is_constant = getattr(coef, "is_constant", False)

    def __call__(self, view):
        return self.factor * self.coef(view)


@dataclass(frozen=True, eq=False)
class Kernel:
    """Finite-range, pattern-equivariant kernel.

    ``terms`` is a tuple of ``(displacement, coefficient)``; ``tol`` is the
    tolerance at which a pair displacement ``y - x`` matches a term (the
    support of the bump functions selecting each displacement).  ``lifted``
    marks the lift to a weighted strip, where each matrix entry picks up the
    factor ``w(x) w(y)``.
    """

    dim: int
    terms: tuple
    tol: float = COINCIDENCE_TOL
    lifted: bool = False

    def __post_init__(self):
        terms = []
        for delta, coef in self.terms:
            delta = np.asarray(delta, dtype=float).reshape(self.dim)
            delta.setflags(write=False)
            terms.append((delta, coef))
        object.__setattr__(self, "terms", tuple(terms))

    @property
    def range(self) -> list[np.ndarray]:
        """Distinct displacements carrying a term."""
        out: list[np.ndarray] = []
        for delta, _ in self.terms:
            if not any(np.linalg.norm(delta - e) <= self.tol for e in out):
                out.append(delta)
        return out

    @property
    def reach(self) -> float:
        """Radius of the support of influence ``K_a``."""
        return max((float(np.linalg.norm(d)) for d, _ in self.terms), default=0.0)

    @property
    def pattern_radius(self) -> float:
        return max((float(c.radius) for _, c in self.terms), default=0.0)

    def bound(self) -> float:
        """Sup of the tabulated coefficient values (PE-function terms only)."""
        vals = []
        for _, c in self.terms:
            if isinstance(c, PEFunction):
                vals.extend(abs(v) for v in c.table.values())
                vals.append(abs(c.default))
        return max(vals, default=float("nan"))

    def lift(self) -> "Kernel":
        return Kernel(self.dim, self.terms, self.tol, True)

    def with_tol(self, tol: float) -> "Kernel":
        return Kernel(self.dim, self.terms, tol, self.lifted)

    def to_json(self) -> dict:
        if not all(isinstance(c, PEFunction) for _, c in self.terms):
            raise TypeError("only kernels with tabulated coefficients serialise")
        return {
            "dim": self.dim,
            "tol": self.tol,
            "lifted": self.lifted,
            "terms": [{"displacement": list(map(float, d)), "coefficient": c.to_json()} for d, c in self.terms],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Kernel":
        terms = tuple(
            (np.asarray(t["displacement"], dtype=float), PEFunction.from_json(t["coefficient"])) for t in data["terms"]
        )
        return cls(int(data["dim"]), terms, float(data.get("tol", COINCIDENCE_TOL)), bool(data.get("lifted", False)))


def kernel_generator_s(gamma, tol: float = COINCIDENCE_TOL) -> Kernel:
    """Generator ``s_gamma(x, D, y) = theta_gamma(y - x)`` with an indicator bump."""
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    return Kernel(len(gamma), ((gamma, PEFunction.constant(1.0)),), tol)


def kernel_identity(dim: int, tol: float = COINCIDENCE_TOL) -> Kernel:
    return kernel_generator_s(np.zeros(dim), tol)


def kernel_multiplication(f: PEFunction, dim: int, tol: float = COINCIDENCE_TOL) -> Kernel:
    """Diagonal kernel ``u(x) -> f(x^{-1} D) u(x)``."""
    return Kernel(dim, ((np.zeros(dim), f),), tol)


def _check_compatible(a: Kernel, b: Kernel):
    if a.dim != b.dim:
        raise ValueError("kernels live in different dimensions")
    if a.lifted or b.lifted:
        raise ValueError("symbolic algebra on lifted kernels is unsupported; use matrix representations")


def kernel_adjoint(a: Kernel) -> Kernel:
    """``a*(x, D, y) = conj(a(y, D, x))``."""
    if a.lifted:
        raise ValueError("symbolic algebra on lifted kernels is unsupported; use matrix representations")
    terms = []
    for delta, coef in a.terms:
        if not np.any(delta):
            conj = coef.conj() if isinstance(coef, PEFunction) else _ShiftedCoefficient(coef, delta, a.tol, True)
            terms.append((delta, conj))
        elif isinstance(coef, PEFunction) and coef.is_constant:
            terms.append((-delta, PEFunction.constant(coef.default.conjugate())))
        else:
            # the coefficient is read at the target point x - delta
            terms.append((-delta, _ShiftedCoefficient(coef, -delta, a.tol, True)))
    return Kernel(a.dim, tuple(terms), a.tol)


def kernel_convolve(a: Kernel, b: Kernel, window_fn=None) -> Kernel:
    """``(a ⋆ b)(x, D, y) = sum_z a(x, D, z) b(z, D, y)`` (unit weights only)."""
    if window_fn is not None:
        raise NotImplementedError("weighted convolution is only available at matrix level")
    _check_compatible(a, b)
    tol = max(a.tol, b.tol)
    groups: list[tuple[np.ndarray, list]] = []
    for d1, ca in a.terms:
        for d2, cb in b.terms:
            total = d1 + d2
            for key, pairs in groups:
                if np.linalg.norm(key - total) <= tol:
                    pairs.append((ca, d1, cb))
                    break
            else:
                groups.append((total, [(ca, d1, cb)]))
    terms = []
    for total, pairs in groups:
        if all(isinstance(ca, PEFunction) and ca.is_constant and isinstance(cb, PEFunction) and cb.is_constant
               and not np.any(d1) for ca, d1, cb in pairs):
            terms.append((total, PEFunction.constant(sum(ca.default * cb.default for ca, _, cb in pairs))))
        else:
            terms.append((total, _ConvolvedCoefficient(pairs, tol)))
    return Kernel(a.dim, tuple(terms), tol)


def kernel_add(*kernels: Kernel) -> Kernel:
    if not kernels:
        raise ValueError("nothing to add")
    dim = kernels[0].dim
    for k in kernels:
        _check_compatible(kernels[0], k)
    tol = max(k.tol for k in kernels)
    return Kernel(dim, tuple(t for k in kernels for t in k.terms), tol)


def kernel_scale(a: Kernel, factor: complex) -> Kernel:
    terms = []
    for d, c in a.terms:
        if isinstance(c, PEFunction) and c.is_constant:
            terms.append((d, PEFunction.constant(c.default * factor)))
        else:
            terms.append((d, _ScaledCoefficient(c, factor)))
    return Kernel(a.dim, tuple(terms), a.tol, a.lifted)


@dataclass(frozen=True, eq=False)
class SchrodingerSpec:
    """Hopping coefficients ``q_gamma`` per displacement and a real potential ``V``."""

    hoppings: tuple  # of (gamma, PEFunction)
    potential: PEFunction | None = None
    dim: int = 1
    tol: float = COINCIDENCE_TOL

    def __post_init__(self):
        hop = []
        items = self.hoppings.items() if isinstance(self.hoppings, Mapping) else self.hoppings
        for gamma, q in items:
            gamma = np.atleast_1d(np.asarray(gamma, dtype=float)).reshape(self.dim)
            if not isinstance(q, PEFunction):
                q = PEFunction.constant(q)
            hop.append((gamma, q))
        object.__setattr__(self, "hoppings", tuple(hop))
        if self.potential is not None and not self.potential.is_real():
            raise ValueError("potential must be real-valued")

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "tol": self.tol,
            "hoppings": [{"gamma": list(map(float, g)), "value": q.to_json()} for g, q in self.hoppings],
            "potential": None if self.potential is None else self.potential.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "SchrodingerSpec":
        pot = data.get("potential")
        return cls(
            tuple((h["gamma"], PEFunction.from_json(h["value"])) for h in data.get("hoppings", [])),
            None if pot is None else PEFunction.from_json(pot),
            int(data.get("dim", 1)),
            float(data.get("tol", COINCIDENCE_TOL)),
        )


def build_schrodinger(spec: SchrodingerSpec) -> Kernel:
    """Self-adjoint kernel of ``sum_gamma q_gamma s_gamma^* + conj(q_gamma) s_gamma + V``."""
    terms = []
    for gamma, q in spec.hoppings:
        # u(x - gamma) weighted by q_gamma read at x
        terms.append((-gamma, q))
        # u(x + gamma) weighted by conj(q_gamma) read at x + gamma
        if q.is_constant:
            terms.append((gamma, PEFunction.constant(q.default.conjugate())))
        else:
            terms.append((gamma, _ShiftedCoefficient(q, gamma, spec.tol, True)))
    if spec.potential is not None:
        if not spec.potential.is_real():
            raise ValueError("potential must be real-valued")
        terms.append((np.zeros(spec.dim), spec.potential))
    return Kernel(spec.dim, tuple(terms), spec.tol)

