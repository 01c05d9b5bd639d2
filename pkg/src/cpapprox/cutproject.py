"""Cut-and-project schemes in ``R^d x R^m`` and their rational approximants."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Literal

import numpy as np

from .intlattice import best_convergent, column_hermite, integer_kernel, lcm
from .pointset import PointSet

__all__ = [
    "SINGULAR_TOL",
    "Window",
    "WindowFn",
    "Scheme",
    "RationalScheme",
    "PeriodLattice",
    "ModelSetSample",
    "eval_window",
    "boundary_distance",
    "generate_model_set",
    "sample_model_set",
    "nonsingularity_margin",
    "perturb_if_singular",
    "rational_approximant",
    "periodicity_lattice",
    "internal_cell",
    "fibonacci_scheme",
    "integer_lattice_scheme",
]

SINGULAR_TOL = 1e-7
PHI = (1 + 5**0.5) / 2


@dataclass(frozen=True)
class Window:
    """A box or a ball in internal space."""

    kind: Literal["interval-box", "ball"]
    center: tuple
    half_widths: tuple | None = None
    radius: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.ravel(self.center)))
        if self.kind == "interval-box":
            if self.half_widths is None:
                raise ValueError("box window needs half_widths")
            hw = tuple(float(h) for h in np.ravel(self.half_widths))
            if len(hw) != len(self.center) or min(hw) <= 0:
                raise ValueError("half_widths must be positive, one per internal axis")
            object.__setattr__(self, "half_widths", hw)
        elif self.kind == "ball":
            if self.radius is None or not self.radius > 0:
                raise ValueError("ball window needs a positive radius")
            object.__setattr__(self, "radius", float(self.radius))
        else:
            raise ValueError(f"unknown window kind {self.kind!r}")

    @classmethod
    def interval(cls, lo, hi) -> "Window":
        """Box ``[lo, hi]`` (scalars for an interval, vectors for a box)."""
        lo, hi = np.atleast_1d(np.asarray(lo, dtype=float)), np.atleast_1d(np.asarray(hi, dtype=float))
        return cls("interval-box", tuple((lo + hi) / 2), half_widths=tuple((hi - lo) / 2))

    @property
    def m(self) -> int:
        return len(self.center)

    def bounding_half_widths(self, grow: float = 0.0) -> np.ndarray:
        if self.kind == "interval-box":
            return np.asarray(self.half_widths) + grow
        return np.full(self.m, self.radius + grow)

    def signed_distance(self, h: np.ndarray) -> np.ndarray:
        """Distance to the boundary: positive outside, negative inside."""
        h = np.asarray(h, dtype=float).reshape(-1, self.m)
        rel = h - np.asarray(self.center)
        if self.kind == "ball":
            return np.linalg.norm(rel, axis=1) - self.radius
        excess = np.abs(rel) - np.asarray(self.half_widths)
        outside = np.linalg.norm(np.maximum(excess, 0.0), axis=1)
        inside = np.minimum(excess.max(axis=1), 0.0)
        return outside + inside

    def to_json(self) -> dict:
        out = {"kind": self.kind, "center": list(self.center)}
        if self.kind == "interval-box":
            out["half_widths"] = list(self.half_widths)
        else:
            out["radius"] = self.radius
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Window":
        return cls(
            data["kind"],
            tuple(data["center"]),
            half_widths=tuple(data["half_widths"]) if "half_widths" in data else None,
            radius=data.get("radius"),
        )


@dataclass(frozen=True)
class WindowFn:
    """Sharp indicator of a window or a piecewise-linear mollification of it.

    ``upper`` decreases to the indicator of ``W`` from above as ``epsilon``
    shrinks; ``lower`` increases to the indicator of the interior.
    """

    window: Window
    epsilon: float = 0.0
    side: Literal["upper", "lower", "sharp"] = "sharp"

    def __post_init__(self):
        if self.side not in ("upper", "lower", "sharp"):
            raise ValueError(f"unknown side {self.side!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.side == "sharp" and self.epsilon != 0:
            raise ValueError("sharp window functions have epsilon = 0")
        if self.side != "sharp" and self.epsilon == 0:
            raise ValueError("mollified window functions need epsilon > 0")

    @classmethod
    def sharp(cls, window: Window) -> "WindowFn":
        return cls(window, 0.0, "sharp")

    def support_grow(self) -> float:
        return self.epsilon if self.side == "upper" else 0.0

    def kinks(self) -> list[float]:
        """Signed distances at which the profile changes slope."""
        if self.side == "sharp":
            return [0.0]
        if self.side == "upper":
            return [0.0, self.epsilon]
        return [-self.epsilon, 0.0]

    def __call__(self, h) -> np.ndarray:
        return eval_window(self, h)


def eval_window(wf: WindowFn | None, h) -> np.ndarray:
    if wf is None:
        raise ValueError("window absent (m = 0)")
    s = wf.window.signed_distance(h)
    if wf.side == "sharp":
        return (s <= 0).astype(float)
    if wf.side == "upper":
        return np.where(s <= 0, 1.0, np.maximum(0.0, 1.0 - s / wf.epsilon))
    return np.where(s < 0, np.minimum(1.0, -s / wf.epsilon), 0.0)


def boundary_distance(window: Window, h) -> np.ndarray:
    return np.abs(window.signed_distance(h))


def _as_basis(basis, n: int) -> np.ndarray:
    b = np.asarray(basis, dtype=float)
    if b.size != n * n:
        raise ValueError(f"basis must have {n * n} entries")
    return b.reshape(n, n)


@dataclass(frozen=True, eq=False)
class Scheme:
    """Cut-and-project datum: ``Gamma = basis @ Z^(d+m)``, window, sampled point ``shift``."""

    d: int
    m: int
    basis: np.ndarray
    window: Window | None = None
    shift: np.ndarray | None = None

    def __post_init__(self):
        n = self.d + self.m
        if self.d < 1 or self.m < 0:
            raise ValueError("need d >= 1 and m >= 0")
        b = _as_basis(self.basis, n)
        if abs(np.linalg.det(b)) <= 1e-12:
            raise ValueError("degenerate lattice basis")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)
        shift = np.zeros(n) if self.shift is None else np.asarray(self.shift, dtype=float).reshape(n)
        shift.setflags(write=False)
        object.__setattr__(self, "shift", shift)
        if self.m == 0 and self.window is not None:
            raise ValueError("window must be absent when m = 0")
        if self.m > 0:
            if self.window is None:
                raise ValueError("window required when m > 0")
            if self.window.m != self.m:
                raise ValueError("window dimension does not match m")

    @property
    def n(self) -> int:
        return self.d + self.m

    def with_shift(self, shift) -> "Scheme":
        return Scheme(self.d, self.m, self.basis, self.window, shift)

    def with_basis(self, basis) -> "Scheme":
        return Scheme(self.d, self.m, basis, self.window, self.shift)

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "m": self.m,
            "basis": [float(v) for v in self.basis.ravel()],
            "window": None if self.window is None else self.window.to_json(),
            "shift": [float(v) for v in self.shift],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Scheme":
        d, m = int(data["d"]), int(data["m"])
        window = data.get("window")
        return cls(
            d,
            m,
            _as_basis(data["basis"], d + m),
            None if window is None else Window.from_json(window),
            data.get("shift"),
        )


@dataclass(frozen=True, eq=False)
class RationalScheme:
    """A scheme whose basis is replaced by ``numerators / denominator``."""

    base: Scheme
    numerators: tuple
    denominator: int

    def __post_init__(self):
        n = self.base.n
        num = tuple(tuple(int(v) for v in row) for row in np.asarray(self.numerators, dtype=object).reshape(n, n))
        object.__setattr__(self, "numerators", num)
        if self.denominator < 1:
            raise ValueError("denominator must be positive")

    @property
    def basis(self) -> np.ndarray:
        return np.array(self.numerators, dtype=float) / self.denominator

    @property
    def scheme(self) -> Scheme:
        return self.base.with_basis(self.basis)

    def max_error(self) -> float:
        return float(np.max(np.abs(self.base.basis - self.basis)))

    def to_json(self) -> dict:
        out = self.base.to_json()
        out["numerators"] = [list(r) for r in self.numerators]
        out["denominator"] = self.denominator
        return out

    @classmethod
    def from_json(cls, data: dict) -> "RationalScheme":
        return cls(Scheme.from_json(data), tuple(map(tuple, data["numerators"])), int(data["denominator"]))


@dataclass(frozen=True)
class ModelSetSample:
    """Generated patch with per-point window weights and internal coordinates."""

    patch: PointSet
    weights: np.ndarray
    internal: np.ndarray
    lattice: np.ndarray = field(repr=False)

    def __iter__(self):
        yield self.patch
        yield self.weights


def _enumerate(scheme: Scheme, R: float, internal_half: np.ndarray | None, internal_center: np.ndarray | None):
    """Integer vectors whose lattice point lies in the box ``[-R,R]^d x internal box``."""
    n = scheme.n
    S = scheme.basis
    lo = np.full(n, -R, dtype=float)
    hi = np.full(n, R, dtype=float)
    if scheme.m:
        lo[scheme.d:] = internal_center - internal_half
        hi[scheme.d:] = internal_center + internal_half
    lo = lo - scheme.shift
    hi = hi - scheme.shift
    Sinv = np.linalg.inv(S)
    center = Sinv @ ((lo + hi) / 2)
    half = np.abs(Sinv) @ ((hi - lo) / 2)
    n_lo = np.floor(center - half - 1e-9).astype(np.int64)
    n_hi = np.ceil(center + half + 1e-9).astype(np.int64)
    if n == 1:
        return np.arange(n_lo[0], n_hi[0] + 1, dtype=np.int64).reshape(-1, 1)
    # enumerate the trailing coordinates, solve the box constraints for the first
    ranges = [np.arange(n_lo[k], n_hi[k] + 1, dtype=np.int64) for k in range(1, n)]
    rest = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, n - 1)
    base = rest @ S[:, 1:].T  # contribution of trailing coordinates, per row
    a = S[:, 0]
    first_lo = np.full(len(rest), float(n_lo[0]))
    first_hi = np.full(len(rest), float(n_hi[0]))
    for i in range(n):
        if abs(a[i]) < 1e-14:
            ok = (base[:, i] >= lo[i] - 1e-9) & (base[:, i] <= hi[i] + 1e-9)
            first_hi[~ok] = first_lo[~ok] - 1
            continue
        b1 = (lo[i] - base[:, i]) / a[i]
        b2 = (hi[i] - base[:, i]) / a[i]
        first_lo = np.maximum(first_lo, np.floor(np.minimum(b1, b2) - 1e-9))
        first_hi = np.minimum(first_hi, np.ceil(np.maximum(b1, b2) + 1e-9))
    counts = np.maximum(first_hi - first_lo + 1, 0).astype(np.int64)
    total = int(counts.sum())
    if total == 0:
        return np.zeros((0, n), dtype=np.int64)
    rep = np.repeat(np.arange(len(rest)), counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    first = first_lo.astype(np.int64)[rep] + offsets
    return np.column_stack([first, rest[rep]])


def sample_model_set(scheme: Scheme, R: float, window_fn: WindowFn | None = None) -> ModelSetSample:
    """All lattice points with ``|pi_G| <= R`` and positive window weight."""
    if not R > 0:
        raise ValueError("R must be positive")
    d, m = scheme.d, scheme.m
    if m:
        wf = window_fn if window_fn is not None else WindowFn.sharp(scheme.window)
        half = wf.window.bounding_half_widths(wf.support_grow())
        center = np.asarray(wf.window.center)
    else:
        wf, half, center = None, None, None
    ints = _enumerate(scheme, R, half, center)
    pts = ints @ scheme.basis.T + scheme.shift if len(ints) else np.zeros((0, scheme.n))
    phys, internal = pts[:, :d], pts[:, d:]
    keep = np.linalg.norm(phys, axis=1) <= R
    if m:
        w = eval_window(wf, internal) if len(internal) else np.zeros(0)
        keep &= w > 0
    else:
        w = np.ones(len(phys))
    phys, internal, w, ints = phys[keep], internal[keep], w[keep], ints[keep]
    order = np.lexsort(phys.T[::-1]) if len(phys) else np.zeros(0, dtype=int)
    patch = PointSet(d, phys[order], R)
    weights = w[order]
    internal = internal[order]
    ints = ints[order]
    for arr in (weights, internal, ints):
        arr.setflags(write=False)
    return ModelSetSample(patch, weights, internal, ints)


def generate_model_set(scheme: Scheme, R: float, window_fn: WindowFn | None = None):
    """Physical projections of the strip points and their window weights."""
    sample = sample_model_set(scheme, R, window_fn)
    return sample.patch, sample.weights


def nonsingularity_margin(scheme: Scheme, R: float) -> float:
    """Smallest distance from an internal coordinate of the patch to the window boundary.

    Only lattice points whose internal coordinate lies within distance 1 of
    the window are inspected; the result is capped at 1.
    """
    if scheme.m < 1:
        raise ValueError("nonsingularity needs an internal space")
    win = scheme.window
    half = win.bounding_half_widths(1.0)
    ints = _enumerate(scheme, R, half, np.asarray(win.center))
    if not len(ints):
        return 1.0
    pts = ints @ scheme.basis.T + scheme.shift
    keep = np.linalg.norm(pts[:, : scheme.d], axis=1) <= R
    if not np.any(keep):
        return 1.0
    dist = boundary_distance(win, pts[keep, scheme.d:])
    return float(min(dist.min(), 1.0))


def perturb_if_singular(scheme: Scheme, R: float, seed: int = 0, size: float = 1e-3):
    """Return ``(scheme, perturbed)``; a singular shift is moved by a seeded random vector of norm ``size``.

    A shift is singular when some internal coordinate of the radius-``R``
    patch lies within ``SINGULAR_TOL`` of the window boundary.  Perturbation is
    retried with fresh draws from the same seeded stream until it is not.
    """
    if scheme.m == 0 or nonsingularity_margin(scheme, R) > SINGULAR_TOL:
        return scheme, False
    rng = np.random.default_rng(seed)
    for _ in range(100):
        v = rng.normal(size=scheme.n)
        cand = scheme.with_shift(scheme.shift + size * v / np.linalg.norm(v))
        if nonsingularity_margin(cand, R) > SINGULAR_TOL:
            return cand, True
    raise RuntimeError("could not find a nonsingular shift")


def rational_approximant(scheme: Scheme, q_max: int) -> RationalScheme:
    """Rational basis close to ``scheme.basis`` with denominators bounded by ``q_max``.

    For ``d = m = 1`` every entry is replaced by its last continued-fraction
    convergent with denominator at most ``q_max``; otherwise entries are
    rounded to the grid ``Z / q_max``.
    """
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    S = scheme.basis
    if scheme.d == 1 and scheme.m == 1:
        fracs = [best_convergent(float(v), q_max) for v in S.ravel()]
        q = reduce(lcm, (f.denominator for f in fracs), 1)
        num = [int(f * q) for f in fracs]
    else:
        q = q_max
        num = [int(round(float(v) * q)) for v in S.ravel()]
    n = scheme.n
    numerators = tuple(tuple(num[i * n:(i + 1) * n]) for i in range(n))
    if abs(np.linalg.det(np.array(numerators, dtype=float))) <= 1e-12:
        raise ValueError("rational approximant is degenerate; increase q_max")
    return RationalScheme(scheme, numerators, q)


def _exact_integer_basis(scheme: Scheme):
    if all(float(v).is_integer() for v in scheme.basis.ravel()):
        n = scheme.n
        return tuple(tuple(int(v) for v in scheme.basis[i]) for i in range(n)), 1
    return None


@dataclass(frozen=True)
class PeriodLattice:
    """Periods of a fully periodic projected set.

    ``integer`` holds the lattice coordinates of the generating vectors in
    ``Gamma_q``; ``physical`` their projections (one period per row).
    """

    integer: tuple
    physical: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.integer)

    def cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.physical)))

    def scaled(self, k: int) -> "PeriodLattice":
        return PeriodLattice(tuple(tuple(k * v for v in row) for row in self.integer), k * self.physical)


def _lll_reduce(vectors: np.ndarray) -> np.ndarray:
    """Pairwise size reduction of a small basis (enough for d <= 3)."""
    B = [np.array(v, dtype=float) for v in vectors]
    changed = True
    while changed:
        changed = False
        B.sort(key=lambda v: float(v @ v))
        for i in range(len(B)):
            for j in range(len(B)):
                if i == j:
                    continue
                mu = round(float(B[i] @ B[j]) / float(B[j] @ B[j]))
                if mu and float((B[i] - mu * B[j]) @ (B[i] - mu * B[j])) < float(B[i] @ B[i]) - 1e-12:
                    B[i] = B[i] - mu * B[j]
                    changed = True
    return np.array(B)


def periodicity_lattice(rs: RationalScheme | Scheme) -> PeriodLattice | None:
    """Periods ``pi_G(Gamma_q ∩ (R^d x {0}))`` or ``None`` if not fully periodic."""
    if isinstance(rs, Scheme):
        exact = _exact_integer_basis(rs)
        if exact is None:
            return None if rs.m else PeriodLattice(
                tuple(tuple(int(i == j) for j in range(rs.n)) for i in range(rs.n)),
                np.asarray(rs.basis).T.copy(),
            )
        rs = RationalScheme(rs, exact[0], exact[1])
    sch = rs.base
    d, m, n = sch.d, sch.m, sch.n
    if m == 0:
        ker = [[int(i == j) for j in range(n)] for i in range(n)]
    else:
        internal_rows = [list(rs.numerators[i]) for i in range(d, n)]
        ker = integer_kernel(internal_rows)
    if len(ker) < d:
        return None
    Sq = rs.basis
    phys = np.array([Sq[:d] @ np.array(v, dtype=float) for v in ker])
    # reduce in integer coordinates alongside the physical vectors
    ints = np.array(ker, dtype=np.int64)
    if d == 1:
        g = ints[0]
        if phys[0, 0] < 0:
            g, phys = -g, -phys
        return PeriodLattice((tuple(int(v) for v in g),), phys)
    red = _lll_reduce(np.hstack([phys, ints.astype(float)]))
    phys = red[:, :d]
    ints = np.rint(red[:, d:]).astype(np.int64)
    return PeriodLattice(tuple(tuple(int(v) for v in r) for r in ints), phys)


def internal_cell(rs: RationalScheme) -> np.ndarray:
    """Basis (rows) of the discrete group ``pi_H(Gamma_q)`` in internal space."""
    d, n = rs.base.d, rs.base.n
    if rs.base.m == 0:
        raise ValueError("no internal space")
    H, _, rank = column_hermite([list(rs.numerators[i]) for i in range(d, n)])
    if rank < rs.base.m:
        raise ValueError("internal projection of the rational lattice is not discrete of full rank")
    cols = np.array([[H[i][j] for i in range(len(H))] for j in range(rank)], dtype=float)
    return cols / rs.denominator


def fibonacci_scheme(shift_internal: float = 0.123, shift_physical: float = 0.0) -> Scheme:
    """The Fibonacci chain: gaps 1 and the golden ratio."""
    S = np.array([[1.0, PHI], [1.0, -1.0 / PHI]])
    return Scheme(1, 1, S, Window.interval(-1.0 / PHI, 1.0), np.array([shift_physical, shift_internal]))


def integer_lattice_scheme(d: int = 1) -> Scheme:
    return Scheme(d, 0, np.eye(d))
