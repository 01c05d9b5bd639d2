"""Kernels as Hermitian matrices on weighted ``l^2`` spaces of finite patches."""
from __future__ import annotations

import json
from dataclasses import dataclass
from math import gamma as gamma_fn, pi
from pathlib import Path
from typing import Literal, NamedTuple

import numpy as np
from scipy.spatial import cKDTree
from threadpoolctl import threadpool_limits

from .algebra import Kernel, local_view
from .pointset import COINCIDENCE_TOL, PointSet

__all__ = [
    "WEIGHT_FLOOR",
    "PeriodicBoundary",
    "OperatorMatrix",
    "SamplingWeight",
    "SpectralWeights",
    "represent",
    "eigensolve",
    "local_spectral_weights",
    "dump_matrix",
    "periodic_cell_sites",
]

WEIGHT_FLOOR = 1e-12
_WRAP_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class PeriodicBoundary:
    """Periodic boundary conditions with the given period vectors (one per row)."""

    periods: np.ndarray

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.periods, dtype=float))
        if p.shape[0] != p.shape[1]:
            raise ValueError("need exactly d independent periods in d dimensions")
        if abs(np.linalg.det(p)) <= 1e-12:
            raise ValueError("degenerate period lattice")
        p.setflags(write=False)
        object.__setattr__(self, "periods", p)

    @property
    def dim(self) -> int:
        return self.periods.shape[1]

    def cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.periods)))

    def cell_radius(self) -> float:
        """Radius of a ball around the origin containing the centred cell."""
        corners = np.array(np.meshgrid(*([[-0.5, 0.5]] * self.dim), indexing="ij")).reshape(self.dim, -1).T
        return float(np.max(np.linalg.norm(corners @ self.periods, axis=1)))

    def fractional(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.periods.T, np.asarray(x, dtype=float).T).T

    def choose_origin(self, points: np.ndarray) -> np.ndarray:
        """Cell corner such that no point lies within ``_WRAP_TOL`` of a cell face."""
        base = -0.5 * self.periods.sum(axis=0)
        step = (np.sqrt(5) - 1) / 2
        for k in range(200):
            shift = ((k * step) % 1.0) * 0.01 if k else 0.0
            corner = base + shift * self.periods.sum(axis=0) / self.dim
            u = self.fractional(points - corner)
            if not len(u) or np.min(np.abs(u - np.round(u))) > _WRAP_TOL:
                return corner
        raise RuntimeError("could not place a periodic cell avoiding all points")

    def lattice_vectors(self, radius: float) -> np.ndarray:
        """All period-lattice vectors of norm at most ``radius``."""
        inv = np.linalg.inv(self.periods)
        bound = np.ceil(radius * np.abs(inv).sum(axis=0).max() + 1).astype(int)
        rng = np.arange(-bound, bound + 1)
        ints = np.stack(np.meshgrid(*([rng] * self.dim), indexing="ij"), axis=-1).reshape(-1, self.dim)
        vec = ints @ self.periods
        return vec[np.linalg.norm(vec, axis=1) <= radius]


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Matrix of a kernel in the orthonormal frame ``e_x = delta_x / sqrt(w_x)``."""

    sites: np.ndarray
    weights: np.ndarray
    entries: np.ndarray
    boundary: Literal["open"] | PeriodicBoundary = "open"
    site_index: np.ndarray | None = None  # indices of the sites in the source patch

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def hermitian_defect(self) -> float:
        if not self.dim:
            return 0.0
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return self.hermitian_defect() <= tol

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries, 2)) if self.dim else 0.0


class SamplingWeight:
    """Nonnegative, compactly supported density ``rho`` on ``R^d`` with unit integral.

    ``uniform-ball`` is constant on a ball; ``bump`` is proportional to
    ``(1 - |x|^2 / radius^2)^smoothness`` inside the ball.
    """

    def __init__(self, profile: str = "uniform-ball", radius: float = 8.0, smoothness: float = 2.0,
                 center=None, dim: int = 1):
        if profile not in ("uniform-ball", "bump"):
            raise ValueError(f"unknown sampling profile {profile!r}")
        if not radius > 0:
            raise ValueError("sampling radius must be positive")
        if profile == "bump" and not smoothness > 0:
            raise ValueError("bump smoothness must be positive")
        self.profile = profile
        self.radius = float(radius)
        self.smoothness = float(smoothness)
        self.dim = int(dim)
        self.center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float).reshape(self.dim)
        ball = pi ** (self.dim / 2) / gamma_fn(self.dim / 2 + 1) * self.radius**self.dim
        if profile == "uniform-ball":
            self._norm = 1.0 / ball
        else:
            s, d = self.smoothness, self.dim
            self._norm = 1.0 / (ball * gamma_fn(s + 1) * gamma_fn(d / 2 + 1) / gamma_fn(s + d / 2 + 1))

    def __repr__(self):
        return f"SamplingWeight({self.profile!r}, radius={self.radius}, smoothness={self.smoothness})"

    def reach(self) -> float:
        return float(np.linalg.norm(self.center)) + self.radius

    def moved(self, center) -> "SamplingWeight":
        return SamplingWeight(self.profile, self.radius, self.smoothness, center, self.dim)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        r = np.linalg.norm(x - self.center, axis=1) / self.radius
        if self.profile == "uniform-ball":
            return np.where(r <= 1.0, self._norm, 0.0)
        return np.where(r < 1.0, self._norm * np.clip(1.0 - r**2, 0.0, None) ** self.smoothness, 0.0)

    def periodized(self, x, boundary: PeriodicBoundary) -> np.ndarray:
        """``sum over periods p of rho(x + p)``."""
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        reach = self.reach() + float(np.max(np.linalg.norm(x, axis=1), initial=0.0))
        out = np.zeros(len(x))
        for p in boundary.lattice_vectors(reach):
            out += self(x + p)
        return out


def periodic_cell_sites(patch: PointSet, boundary: PeriodicBoundary, margin: float):
    """Indices of the patch points in one period cell, and the cell corner.

    Every cell point must keep a ``margin``-ball inside the patch.
    """
    corner = boundary.choose_origin(patch.points)
    u = boundary.fractional(patch.points - corner)
    in_cell = np.all((u >= 0) & (u < 1), axis=1)
    idx = np.flatnonzero(in_cell)
    unit = np.array(np.meshgrid(*([[0.0, 1.0]] * boundary.dim), indexing="ij")).reshape(boundary.dim, -1).T
    vertices = corner + unit @ boundary.periods
    if np.max(np.linalg.norm(vertices, axis=1)) + margin > patch.radius + COINCIDENCE_TOL:
        raise ValueError("patch too small for the periodic cell plus kernel reach")
    return idx, corner


def represent(kernel: Kernel, patch: PointSet, weights=None,
              boundary: Literal["open"] | PeriodicBoundary = "open") -> OperatorMatrix:
    """Assemble ``M[x, y] = sqrt(w_x w_y) a(x, D, y)`` over the usable sites.

    Open boundary: sites are the points whose pattern ball fits in the patch
    (hops leaving that set are dropped).  Periodic boundary: sites are the
    points of one period cell; hops are wrapped back into the cell.  Sites
    with weight at most ``WEIGHT_FLOOR`` are removed.
    """
    if kernel.dim != patch.dim:
        raise ValueError("kernel and patch dimensions differ")
    n_pts = len(patch)
    w_all = np.ones(n_pts) if weights is None else np.asarray(weights, dtype=float).reshape(n_pts)
    if np.any(w_all < 0):
        raise ValueError("negative window weight")
    r_pat = kernel.pattern_radius
    if boundary == "open":
        usable = patch.interior_mask(r_pat) & (w_all > WEIGHT_FLOOR)
        site_idx = np.flatnonzero(usable)
        rep = np.full(n_pts, -1)
        rep[site_idx] = np.arange(len(site_idx))
    elif isinstance(boundary, PeriodicBoundary):
        if boundary.dim != patch.dim:
            raise ValueError("period lattice dimension differs from the patch")
        cell_idx, corner = periodic_cell_sites(patch, boundary, r_pat + kernel.reach + kernel.tol)
        site_idx = cell_idx[w_all[cell_idx] > WEIGHT_FLOOR]
        # map every patch point to its representative site in the cell
        u = boundary.fractional(patch.points - corner)
        wrapped = patch.points - np.floor(u) @ boundary.periods
        rep = np.full(n_pts, -1)
        if len(site_idx):
            dist, j = cKDTree(patch.points[site_idx]).query(wrapped)
            ok = dist <= _WRAP_TOL
            rep[ok] = j[ok]
    else:
        raise ValueError(f"unknown boundary {boundary!r}")

    n = len(site_idx)
    X = patch.points[site_idx]
    w = w_all[site_idx]
    M = np.zeros((n, n), dtype=complex)
    views = None
    if n and not all(getattr(c, "is_constant", False) for _, c in kernel.terms):
        views = [local_view(patch, x, r_pat) for x in X]
    for delta, coef in kernel.terms:
        if not n:
            break
        dist, tgt = patch.tree.query(X + delta)
        hit = dist <= kernel.tol
        cols = rep[tgt]
        hit &= cols >= 0
        if getattr(coef, "is_constant", False):
            vals = np.full(n, complex(coef(None)))
        else:
            vals = np.array([coef(views[i]) if hit[i] else 0j for i in range(n)], dtype=complex)
        rows = np.flatnonzero(hit & (vals != 0))
        np.add.at(M, (rows, cols[rows]), vals[rows])
    scale = np.sqrt(np.outer(w, w))
    if kernel.lifted:
        scale = scale * np.outer(w, w)
    M *= scale
    if n and not np.any(M.imag):
        M = M.real.copy()
    return OperatorMatrix(X, w, M, boundary, site_idx)


def eigensolve(op: OperatorMatrix | np.ndarray, herm_tol: float = 1e-12):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix."""
    M = op.entries if isinstance(op, OperatorMatrix) else np.asarray(op)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if M.size and np.max(np.abs(M - M.conj().T)) > herm_tol * max(1.0, float(np.max(np.abs(M)))):
        raise ValueError("matrix is not Hermitian")
    if M.shape[0] > 8192:
        raise ValueError("matrix exceeds desk scale (8192)")
    # single-threaded BLAS keeps the bits independent of the worker count
    with threadpool_limits(limits=1):
        vals, vecs = np.linalg.eigh(M)
    return vals, vecs


class SpectralWeights(NamedTuple):
    eigenvalues: np.ndarray
    weights: np.ndarray  # weights[i, k] = |v_k(x_i)|^2


def local_spectral_weights(op: OperatorMatrix | np.ndarray, eig=None) -> SpectralWeights:
    """Per-site spectral weights; each row sums to one."""
    vals, vecs = eig if eig is not None else eigensolve(op)
    return SpectralWeights(vals, np.abs(vecs) ** 2)


def dump_matrix(op: OperatorMatrix, path) -> None:
    """Write ``<path>.bin`` (row-major float64) and ``<path>.json`` header."""
    path = Path(path)
    complex_ = np.iscomplexobj(op.entries)
    data = op.entries.astype(np.complex128 if complex_ else np.float64)
    data.view(np.float64).tofile(path.with_suffix(".bin"))
    header = {
        "dim": op.dim,
        "dtype": "complex128-interleaved" if complex_ else "float64",
        "sites": op.sites.tolist(),
        "weights": op.weights.tolist(),
        "boundary": "open" if op.boundary == "open" else {"periodic": op.boundary.periods.tolist()},
    }
    path.with_suffix(".json").write_text(json.dumps(header, indent=1))
