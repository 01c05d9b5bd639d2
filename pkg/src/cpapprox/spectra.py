"""Empirical measures: density of states, autocorrelation, and distances between them."""
from __future__ import annotations

from dataclasses import dataclass
from math import gamma as gamma_fn, pi

import numpy as np
from scipy import integrate
from scipy.sparse.csgraph import connected_components
from scipy.sparse import coo_matrix
from scipy.spatial import cKDTree

from .algebra import Kernel
from .operators import (
    OperatorMatrix,
    PeriodicBoundary,
    SamplingWeight,
    eigensolve,
    periodic_cell_sites,
    represent,
)
from .pointset import COINCIDENCE_TOL, PointSet
from .tables import csv_text

__all__ = [
    "MERGE_TOL",
    "EmpiricalMeasure",
    "TestFunction",
    "IDS",
    "ball_volume",
    "periodize",
    "autocorrelation",
    "autocorrelation_periodic",
    "convolution_at",
    "pair_measure_apply",
    "translate_average",
    "dos_from_operator",
    "dos_estimate",
    "ids",
    "ks_distance",
    "weak_star_distance",
]

MERGE_TOL = 1e-9


def ball_volume(dim: int, r: float) -> float:
    return pi ** (dim / 2) / gamma_fn(dim / 2 + 1) * r**dim


def _merge(loc: np.ndarray, mass: np.ndarray, tol: float):
    """Merge atoms closer than ``tol``; merged location is the mass-weighted mean."""
    n, d = loc.shape
    if n == 0:
        return loc, mass
    if d == 1:
        order = np.lexsort((mass, loc[:, 0]))
        loc, mass = loc[order], mass[order]
        starts = np.concatenate([[0], np.flatnonzero(np.diff(loc[:, 0]) > tol) + 1])
        labels = np.repeat(np.arange(len(starts)), np.diff(np.append(starts, n)))
    else:
        order = np.lexsort(tuple(loc.T[::-1]))
        loc, mass = loc[order], mass[order]
        pairs = cKDTree(loc).query_pairs(tol, output_type="ndarray")
        graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)) if len(pairs) else coo_matrix((n, n))
        _, labels = connected_components(graph, directed=False)
    k = labels.max() + 1
    tot = np.bincount(labels, weights=mass, minlength=k)
    count = np.bincount(labels, minlength=k)
    out = np.empty((k, d))
    for j in range(d):
        s = np.bincount(labels, weights=mass * loc[:, j], minlength=k)
        plain = np.bincount(labels, weights=loc[:, j], minlength=k) / count
        safe = np.where(tot > 0, tot, 1.0)
        out[:, j] = np.where(tot > 0, s / safe, plain)
    # singleton clusters keep their exact location
    single = count == 1
    first = np.zeros(k, dtype=int)
    first[labels[::-1]] = np.arange(n)[::-1]
    out[single] = loc[first[single]]
    order = np.lexsort(tuple(out.T[::-1]))
    return out[order], tot[order]


class EmpiricalMeasure:
    """Finite nonnegative combination of point masses in ``R^d``.

    Atoms closer than ``MERGE_TOL`` are merged and atoms of zero mass are
    dropped, so two measures are equal iff their atom lists agree.
    """

    def __init__(self, locations=None, masses=None, dim: int = 1, merge_tol: float = MERGE_TOL):
        loc = np.zeros((0, dim)) if locations is None else np.asarray(locations, dtype=float).reshape(-1, dim)
        mass = np.zeros(len(loc)) if masses is None else np.asarray(masses, dtype=float).reshape(-1)
        if len(mass) != len(loc):
            raise ValueError("locations and masses differ in length")
        if np.any(mass < 0) or not np.all(np.isfinite(mass)):
            raise ValueError("masses must be finite and nonnegative")
        keep = mass > 0
        loc, mass = _merge(loc[keep], mass[keep], merge_tol)
        loc.setflags(write=False)
        mass.setflags(write=False)
        self.dim = int(dim)
        self.locations = loc
        self.masses = mass
        self.total_mass = float(np.sum(mass))

    @classmethod
    def zero(cls, dim: int = 1) -> "EmpiricalMeasure":
        return cls(dim=dim)

    @classmethod
    def dirac(cls, location, mass: float = 1.0) -> "EmpiricalMeasure":
        loc = np.atleast_1d(np.asarray(location, dtype=float))
        return cls(loc[None, :], [mass], dim=len(loc))

    def __len__(self) -> int:
        return len(self.masses)

    def __repr__(self):
        return f"EmpiricalMeasure(dim={self.dim}, atoms={len(self)}, total_mass={self.total_mass:.6g})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmpiricalMeasure):
            return NotImplemented
        return (self.dim == other.dim and len(self) == len(other)
                and np.array_equal(self.locations, other.locations)
                and np.array_equal(self.masses, other.masses))

    def normalized(self) -> "EmpiricalMeasure":
        if self.total_mass <= 0:
            raise ValueError("cannot normalize a zero measure")
        return EmpiricalMeasure(self.locations, self.masses / self.total_mass, self.dim)

    def scaled(self, factor: float) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.locations, self.masses * factor, self.dim)

    def __add__(self, other: "EmpiricalMeasure") -> "EmpiricalMeasure":
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        return EmpiricalMeasure(np.vstack([self.locations, other.locations]),
                                np.concatenate([self.masses, other.masses]), self.dim)

    def integrate(self, f) -> float:
        """``sum of mass * f(location)`` for a vectorized ``f``."""
        if not len(self):
            return 0.0
        x = self.locations[:, 0] if self.dim == 1 else self.locations
        return float(np.sum(self.masses * np.asarray(f(x))))

    def mass_at(self, location, tol: float = MERGE_TOL) -> float:
        if not len(self):
            return 0.0
        d = np.linalg.norm(self.locations - np.atleast_1d(location), axis=1)
        return float(self.masses[d <= tol].sum())

    def to_csv(self) -> str:
        header = ["location", "mass"] if self.dim == 1 else [f"location_{j}" for j in range(self.dim)] + ["mass"]
        rows = [list(loc) + [m] for loc, m in zip(self.locations, self.masses)]
        return csv_text(header, rows)


_GAUSS_CUT = 3.0
_GAUSS_FLOOR = np.exp(-0.5 * _GAUSS_CUT**2)


@dataclass(frozen=True)
class TestFunction:
    """Continuous, compactly supported radial profile with ``max |f| = 1``.

    ``triangle``: ``1 - r/scale``; ``cosine-bump``: ``(1 + cos(pi r/scale))/2``;
    ``gaussian-truncated``: a Gaussian of width ``scale`` cut at ``3 scale`` and
    shifted down so it vanishes continuously there.
    """

    kind: str
    center: tuple = (0.0,)
    scale: float = 0.25

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.kind not in ("triangle", "cosine-bump", "gaussian-truncated"):
            raise ValueError(f"unknown test function kind {self.kind!r}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        object.__setattr__(self, "center", c)

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def support_radius(self) -> float:
        return _GAUSS_CUT * self.scale if self.kind == "gaussian-truncated" else self.scale

    @property
    def lipschitz(self) -> float:
        if self.kind == "triangle":
            return 1.0 / self.scale
        if self.kind == "cosine-bump":
            return pi / (2 * self.scale)
        return np.exp(-0.5) / (self.scale * (1 - _GAUSS_FLOOR))

    def profile(self, r) -> np.ndarray:
        r = np.abs(np.asarray(r, dtype=float))
        s = self.scale
        if self.kind == "triangle":
            return np.clip(1.0 - r / s, 0.0, None)
        if self.kind == "cosine-bump":
            return np.where(r < s, 0.5 * (1.0 + np.cos(pi * np.minimum(r / s, 1.0))), 0.0)
        g = (np.exp(-0.5 * (r / s) ** 2) - _GAUSS_FLOOR) / (1 - _GAUSS_FLOOR)
        return np.where(r < _GAUSS_CUT * s, g, 0.0)

    def kinks(self) -> list[float]:
        """Radii where the profile is not smooth."""
        return [0.0, self.support_radius] if self.kind == "triangle" else [self.support_radius]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            if x.ndim > 1 and x.shape[-1] == 1:
                x = x[..., 0]
            return self.profile(x - self.center[0])
        return self.profile(np.linalg.norm(x.reshape(-1, self.dim) - np.asarray(self.center), axis=1))

    def to_json(self) -> dict:
        return {"kind": self.kind, "center": list(self.center), "scale": self.scale}

    @classmethod
    def from_json(cls, data: dict) -> "TestFunction":
        return cls(data["kind"], tuple(data.get("center", [0.0])), float(data.get("scale", 0.25)))


def periodize(f: TestFunction, patch: PointSet, weights=None) -> float:
    """``sum over x in the patch of f(x) w_x``; the support of ``f`` must fit in the patch."""
    if f.dim != patch.dim:
        raise ValueError("test function and patch dimensions differ")
    if np.linalg.norm(f.center) + f.support_radius > patch.radius + COINCIDENCE_TOL:
        raise ValueError("test-function support exceeds the patch")
    if not len(patch):
        return 0.0
    w = np.ones(len(patch)) if weights is None else np.asarray(weights, dtype=float)
    return float(np.sum(f(patch.points) * w))


def _pair_atoms(points, weights, centers, cmass, delta_max, tree):
    loc, mass = [], []
    nbrs = tree.query_ball_point(centers, delta_max + COINCIDENCE_TOL)
    for x, wx, nb in zip(centers, cmass, nbrs):
        if not nb:
            continue
        nb = np.asarray(sorted(nb))
        disp = points[nb] - x
        keep = np.linalg.norm(disp, axis=1) <= delta_max + COINCIDENCE_TOL
        loc.append(disp[keep])
        mass.append(wx * weights[nb][keep])
    if not loc:
        return np.zeros((0, points.shape[1])), np.zeros(0)
    return np.vstack(loc), np.concatenate(mass)


def autocorrelation(patch: PointSet, weights=None, R_eff: float = 10.0, delta_max: float = 3.0) -> EmpiricalMeasure:
    """Pair-correlation estimate ``(1/vol B) sum_{x in B_R_eff} sum_{|y-x|<=delta_max} w_x w_y delta_{y-x}``."""
    if R_eff <= 0 or delta_max < 0:
        raise ValueError("R_eff must be positive and delta_max nonnegative")
    if R_eff + delta_max > patch.radius + COINCIDENCE_TOL:
        raise ValueError("R_eff + delta_max exceeds the patch radius")
    if not len(patch):
        return EmpiricalMeasure.zero(patch.dim)
    w = np.ones(len(patch)) if weights is None else np.asarray(weights, dtype=float)
    inside = np.flatnonzero((np.linalg.norm(patch.points, axis=1) <= R_eff + COINCIDENCE_TOL) & (w > 0))
    loc, mass = _pair_atoms(patch.points, w, patch.points[inside], w[inside], delta_max, patch.tree)
    return EmpiricalMeasure(loc, mass / ball_volume(patch.dim, R_eff), patch.dim)


def autocorrelation_periodic(patch: PointSet, weights, boundary: PeriodicBoundary, delta_max: float) -> EmpiricalMeasure:
    """Exact autocorrelation of a periodic point set: one period cell, divided by its volume."""
    if not len(patch):
        return EmpiricalMeasure.zero(patch.dim)
    w = np.ones(len(patch)) if weights is None else np.asarray(weights, dtype=float)
    idx, _ = periodic_cell_sites(patch, boundary, delta_max)
    idx = idx[w[idx] > 0]
    loc, mass = _pair_atoms(patch.points, w, patch.points[idx], w[idx], delta_max, patch.tree)
    return EmpiricalMeasure(loc, mass / boundary.cell_volume(), patch.dim)


def convolution_at(f1: TestFunction, f2: TestFunction, g, epsabs: float = 1e-10) -> float:
    """``(f1* * f2)(g) = integral of conj(f1(h)) f2(h + g) dh`` by adaptive quadrature."""
    g = np.atleast_1d(np.asarray(g, dtype=float))
    c1, c2 = np.asarray(f1.center), np.asarray(f2.center) - g
    s1, s2 = f1.support_radius, f2.support_radius
    if np.linalg.norm(c1 - c2) >= s1 + s2:
        return 0.0
    if f1.dim == 1:
        lo, hi = max(c1[0] - s1, c2[0] - s2), min(c1[0] + s1, c2[0] + s2)
        if hi <= lo:
            return 0.0
        pts = sorted({c + k for c, f in ((c1[0], f1), (c2[0], f2)) for r in f.kinks() for k in (-r, r)})
        pts = [p for p in pts if lo < p < hi]

        def integrand(h):
            return float(f1.profile(h - c1[0]) * f2.profile(h - c2[0]))

        val, _ = integrate.quad(integrand, lo, hi, points=pts or None, epsabs=epsabs, epsrel=1e-10, limit=200)
        return float(val)
    # d > 1: iterated quadrature over the bounding box of supp f1
    bounds = [(c1[j] - s1, c1[j] + s1) for j in range(f1.dim)]

    def integrand(*h):
        h = np.asarray(h)
        return float(f1.profile(np.linalg.norm(h - c1)) * f2.profile(np.linalg.norm(h - c2)))

    val, _ = integrate.nquad(integrand, bounds, opts={"epsabs": epsabs, "limit": 100})
    return float(val)


def pair_measure_apply(gamma: EmpiricalMeasure, f1: TestFunction, f2: TestFunction) -> float:
    """``sum over atoms of mass(delta) * (f1* * f2)(delta)``.

    Only atoms inside ``supp f2 - supp f1`` are integrated; identical
    displacements share one quadrature.
    """
    if not len(gamma):
        return 0.0
    if gamma.dim != f1.dim or gamma.dim != f2.dim:
        raise ValueError("dimension mismatch")
    shift = np.asarray(f2.center) - np.asarray(f1.center)
    reach = f1.support_radius + f2.support_radius
    near = np.linalg.norm(gamma.locations - shift, axis=1) < reach
    cache: dict[tuple, float] = {}
    total = 0.0
    for loc, m in zip(gamma.locations[near], gamma.masses[near]):
        key = tuple(loc)
        if key not in cache:
            cache[key] = convolution_at(f1, f2, loc)
        total += m * cache[key]
    return float(total)


def translate_average(patch: PointSet, weights, f1: TestFunction, f2: TestFunction, T: float,
                      nodes: int = 8) -> float:
    """Direct translate average ``(1/|B_T|) integral over |t|<=T of P f1(D - t) P f2(D - t) dt`` (one dimension).

    Piecewise Gauss-Legendre between the translates where a summand changes
    smoothness; exact for piecewise polynomials of degree below ``2 nodes``.
    """
    if patch.dim != 1:
        raise NotImplementedError("translate averaging is implemented in one dimension")
    reach = max(abs(f1.center[0]) + f1.support_radius, abs(f2.center[0]) + f2.support_radius)
    if T + reach > patch.radius + COINCIDENCE_TOL:
        raise ValueError("translate range exceeds the patch")
    x = patch.points[:, 0]
    w = np.ones(len(x)) if weights is None else np.asarray(weights, dtype=float)
    near = np.abs(x) <= T + reach + COINCIDENCE_TOL
    x, w = x[near], w[near]
    breaks = {-T, T}
    for f in (f1, f2):
        for r in f.kinks():
            for sgn in (-1, 1):
                b = x - f.center[0] + sgn * r
                breaks.update(b[(b > -T) & (b < T)].tolist())
    edges = np.array(sorted(breaks))
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    mid, half = (edges[1:] + edges[:-1]) / 2, (edges[1:] - edges[:-1]) / 2
    keep = half > 0
    mid, half = mid[keep], half[keep]
    t = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    tw = (half[:, None] * gw[None, :]).ravel()
    total = 0.0
    for lo in range(0, len(t), 4096):
        tt = t[lo:lo + 4096]
        arg = x[None, :] - tt[:, None]
        p1 = (f1.profile(arg - f1.center[0]) * w).sum(axis=1)
        p2 = (f2.profile(arg - f2.center[0]) * w).sum(axis=1)
        total += float(np.sum(tw[lo:lo + 4096] * p1 * p2))
    return total / (2 * T)


def dos_from_operator(op: OperatorMatrix, rho_values: np.ndarray, eig=None) -> EmpiricalMeasure:
    """Atoms at the eigenvalues with masses ``sum_x rho(x) w_x |v_k(x)|^2``."""
    if not op.dim:
        return EmpiricalMeasure.zero(1)
    vals, vecs = eig if eig is not None else eigensolve(op)
    site_mass = np.asarray(rho_values, dtype=float) * op.weights
    masses = site_mass @ (np.abs(vecs) ** 2)
    return EmpiricalMeasure(vals[:, None], np.clip(masses, 0.0, None), 1)


def dos_estimate(kernel: Kernel, patch: PointSet, weights=None, rho: SamplingWeight | str | None = None,
                 boundary="open", *, translates: int = 0, translate_radius: float = 0.0,
                 seed: int = 0, eig=None) -> EmpiricalMeasure:
    """Finite-volume density of states of the kernel's operator on the patch.

    ``rho`` is a :class:`SamplingWeight`; with a periodic boundary it is
    periodized over the cell, and ``rho="orbit"`` gives the uniform cell
    average ``1/|cell|``.  With ``translates > 0`` the measure is averaged over
    seeded random translates of ``rho`` (uniform in a ball of
    ``translate_radius``).
    """
    if rho is None:
        rho = SamplingWeight(dim=patch.dim)
    op = represent(kernel, patch, weights, boundary)
    if eig is None and op.dim:
        eig = eigensolve(op)
    if isinstance(boundary, PeriodicBoundary):
        if isinstance(rho, str):
            if rho != "orbit":
                raise ValueError(f"unknown sampling mode {rho!r}")
            rho_values = np.full(op.dim, 1.0 / boundary.cell_volume())
        else:
            rho_values = rho.periodized(op.sites, boundary)
        return dos_from_operator(op, rho_values, eig)
    if isinstance(rho, str):
        raise ValueError("orbit sampling needs a periodic boundary")
    margin = kernel.reach + kernel.pattern_radius
    if rho.reach() + translate_radius > patch.radius - margin + COINCIDENCE_TOL:
        raise ValueError("sampling weight reaches into the boundary margin")
    if translates <= 0:
        return dos_from_operator(op, rho(op.sites), eig)
    rng = np.random.default_rng(seed)
    acc = EmpiricalMeasure.zero(1)
    d = patch.dim
    for _ in range(translates):
        v = rng.normal(size=d)
        v *= translate_radius * rng.random() ** (1.0 / d) / max(np.linalg.norm(v), 1e-300)
        acc = acc + dos_from_operator(op, rho.moved(rho.center + v)(op.sites), eig)
    return acc.scaled(1.0 / translates)


class IDS:
    """Cumulative distribution of a normalized one-dimensional measure.

    Calling the object gives the right-continuous value (atoms at ``E`` count
    fully); :meth:`left` excludes them and :meth:`midpoint` counts half.  An
    atom within ``MERGE_TOL`` of ``E`` counts as sitting at ``E``.
    """

    def __init__(self, measure: EmpiricalMeasure):
        if measure.dim != 1:
            raise ValueError("IDS needs a one-dimensional measure")
        if measure.total_mass <= 0:
            raise ValueError("IDS of a zero measure")
        m = measure.normalized()
        self.energies = m.locations[:, 0]
        self.cumulative = np.cumsum(m.masses)
        self.cumulative[-1] = 1.0

    def _at(self, E, side: str) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        E = E + MERGE_TOL if side == "right" else E - MERGE_TOL
        k = np.searchsorted(self.energies, E, side=side)
        return np.where(k > 0, self.cumulative[np.maximum(k - 1, 0)], 0.0)

    def __call__(self, E):
        out = self._at(E, "right")
        return float(out) if np.ndim(out) == 0 else out

    def left(self, E):
        out = self._at(E, "left")
        return float(out) if np.ndim(out) == 0 else out

    def midpoint(self, E):
        out = 0.5 * (self._at(E, "left") + self._at(E, "right"))
        return float(out) if np.ndim(out) == 0 else out

    def to_csv(self, grid) -> str:
        grid = np.asarray(grid, dtype=float)
        return csv_text(["E", "F(E)"], zip(grid, self._at(grid, "right")))


def ids(measure: EmpiricalMeasure) -> IDS:
    return IDS(measure)


def ks_distance(F: IDS, cdf) -> float:
    """Kolmogorov-Smirnov distance to a continuous CDF, checked on both sides of every jump."""
    E = F.energies
    ref = np.asarray(cdf(E), dtype=float)
    return float(max(np.max(np.abs(F(E) - ref)), np.max(np.abs(F.left(E) - ref))))


def weak_star_distance(m1: EmpiricalMeasure, m2: EmpiricalMeasure) -> float:
    """Mass gap times the joint span plus ``W1`` between the normalized measures.

    The span factor is floored at one so that measures with a single shared
    atom but different masses stay at positive distance.
    """
    if m1.dim != m2.dim:
        raise ValueError("measures live in different dimensions")
    if m1.dim != 1:
        raise ValueError("weak-* distance is implemented for one-dimensional measures")
    if not len(m1) and not len(m2):
        return 0.0
    locs = np.concatenate([m1.locations[:, 0], m2.locations[:, 0]])
    span = max(float(locs.max() - locs.min()), 1.0)
    gap = abs(m1.total_mass - m2.total_mass) * span
    if not len(m1) or not len(m2):
        return gap
    grid = np.unique(locs)
    F1, F2 = IDS(m1)(grid), IDS(m2)(grid)
    w1 = float(np.sum(np.abs(F1 - F2)[:-1] * np.diff(grid)))
    return gap + w1
