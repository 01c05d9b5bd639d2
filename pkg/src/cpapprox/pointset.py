"""Finite Delone patches and the geometry that acts on them.

A :class:`PointSet` is the finite stand-in for an infinite Delone set: the
points of the set that fall inside the closed ball ``B_R(0)``.  Everything in
this module treats such a patch as immutable and only trusts data far enough
from the boundary sphere.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "COINCIDENCE_TOL",
    "CLASS_GRID",
    "PointSet",
    "DeloneParams",
    "DeloneReport",
    "PatchClass",
    "check_delone",
    "translate",
    "hausdorff_distance",
    "local_distance",
    "patch_class",
    "enumerate_patch_classes",
    "canonical_signature",
]

COINCIDENCE_TOL = 1e-9
CLASS_GRID = 1e-6


def _canonical_order(points: np.ndarray) -> np.ndarray:
    if len(points) == 0:
        return np.zeros(0, dtype=int)
    # lexsort sorts by the last key first
    return np.lexsort(points.T[::-1])


@dataclass(frozen=True, eq=False)
class PointSet:
    """A finite patch ``D ∩ B_R(0)`` of a Delone set in ``R^d``.

    Points are stored in lexicographic order; construction validates that
    they are pairwise distinct and lie inside the ball.
    """

    dim: int
    points: np.ndarray
    radius: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.dim)
        if len(pts):
            norms = np.linalg.norm(pts, axis=1)
            if np.any(norms > self.radius + COINCIDENCE_TOL):
                raise ValueError("points outside the patch ball")
        pts = pts[_canonical_order(pts)]
        if len(pts) > 1:
            pairs = cKDTree(pts).query_pairs(COINCIDENCE_TOL)
            if pairs:
                raise ValueError(f"coincident points in patch: {sorted(pairs)[:3]}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def from_points(cls, points, radius: float, dim: int | None = None) -> "PointSet":
        pts = np.asarray(points, dtype=float)
        if dim is None:
            dim = 1 if pts.ndim == 1 else pts.shape[1]
        return cls(dim, pts.reshape(-1, dim), radius)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointSet):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.radius == other.radius
            and self.points.shape == other.points.shape
            and bool(np.all(self.points == other.points))
        )

    __hash__ = None

    @property
    def tree(self) -> cKDTree:
        # built lazily; the instance is immutable so caching is safe
        cached = self.__dict__.get("_tree")
        if cached is None:
            cached = cKDTree(self.points if len(self) else np.zeros((0, self.dim)))
            object.__setattr__(self, "_tree", cached)
        return cached

    def index_of(self, x, tol: float = COINCIDENCE_TOL) -> int | None:
        """Index of the point at ``x`` within ``tol``, or ``None``."""
        if not len(self):
            return None
        dist, idx = self.tree.query(np.asarray(x, dtype=float).reshape(self.dim))
        return int(idx) if dist <= tol else None

    def clip(self, r: float) -> np.ndarray:
        """Points with norm at most ``r``."""
        if not len(self):
            return self.points
        return self.points[np.linalg.norm(self.points, axis=1) <= r + COINCIDENCE_TOL]

    def interior_mask(self, margin: float) -> np.ndarray:
        """Points whose ``margin``-ball lies inside the patch ball."""
        if not len(self):
            return np.zeros(0, dtype=bool)
        return np.linalg.norm(self.points, axis=1) + margin <= self.radius + COINCIDENCE_TOL

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "radius": self.radius,
            "points": [[float(v) for v in p] for p in self.points],
        }

    @classmethod
    def from_json(cls, data: dict) -> "PointSet":
        return cls(int(data["dim"]), np.asarray(data["points"], dtype=float), float(data["radius"]))


@dataclass(frozen=True)
class DeloneParams:
    """Packing radius (open ball ``U``) and covering radius (closed ball ``K``)."""

    r_pack: float
    r_cov: float

    def __post_init__(self):
        if not (self.r_pack > 0 and self.r_cov > 0):
            raise ValueError("Delone radii must be positive")
        if self.r_pack > self.r_cov:
            raise ValueError("r_pack must not exceed r_cov")


@dataclass
class DeloneReport:
    valid: bool
    packing_violations: list = field(default_factory=list)
    covering_violations: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.valid


def _covering_probes(patch: PointSet, r_probe: float) -> np.ndarray:
    """Probe points that are the hardest to cover inside ``B_{r_probe}``."""
    if patch.dim == 1:
        x = patch.points[:, 0]
        inside = x[np.abs(x) <= r_probe]
        # farthest points from the set within the probe interval are the
        # interval ends and the midpoints of gaps
        cand = [-r_probe, r_probe]
        if len(x) > 1:
            mids = 0.5 * (x[1:] + x[:-1])
            cand.extend(mids[np.abs(mids) <= r_probe])
        cand.extend(inside)
        return np.asarray(sorted(cand)).reshape(-1, 1)
    # grid probes in higher dimension, capped at roughly 2e5 points
    n_side = max(2, int(round((2e5) ** (1.0 / patch.dim))))
    axis = np.linspace(-r_probe, r_probe, n_side)
    grid = np.stack(np.meshgrid(*([axis] * patch.dim), indexing="ij"), axis=-1).reshape(-1, patch.dim)
    return grid[np.linalg.norm(grid, axis=1) <= r_probe]


def check_delone(patch: PointSet, params: DeloneParams) -> DeloneReport:
    """Check packing on all pairs and covering on probes inside ``B_{R - r_cov}``."""
    if not len(patch):
        raise ValueError("check_delone needs a non-empty patch")
    packing = []
    if len(patch) > 1:
        for i, j in sorted(patch.tree.query_pairs(2 * params.r_pack)):
            d = float(np.linalg.norm(patch.points[i] - patch.points[j]))
            # two points share an open ball of radius r_pack iff d < 2 r_pack
            if d < 2 * params.r_pack:
                packing.append((tuple(patch.points[i]), tuple(patch.points[j]), d))
    covering = []
    r_probe = patch.radius - params.r_cov
    if r_probe > 0:
        probes = _covering_probes(patch, r_probe)
        dist, _ = patch.tree.query(probes)
        for p, d in zip(probes, dist):
            if d > params.r_cov + COINCIDENCE_TOL:
                covering.append((tuple(p), float(d)))
    return DeloneReport(not packing and not covering, packing, covering)


def translate(patch: PointSet, t) -> PointSet:
    """Move the origin to ``t``: shift by ``-t`` and clip to the remaining ball."""
    t = np.asarray(t, dtype=float).reshape(patch.dim)
    nt = float(np.linalg.norm(t))
    if nt >= patch.radius:
        raise ValueError("patch exhausted: |t| >= R")
    new_r = patch.radius - nt
    pts = patch.points - t
    keep = np.linalg.norm(pts, axis=1) <= new_r + COINCIDENCE_TOL if len(pts) else np.zeros(0, bool)
    pts = pts[keep]
    # points on the new boundary sphere may sit a rounding error outside it
    norms = np.linalg.norm(pts, axis=1)
    over = norms > new_r
    if np.any(over):
        pts[over] *= (new_r / norms[over])[:, None]
    return PointSet(patch.dim, pts, new_r)


def hausdorff_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Hausdorff distance of two finite sets; 0 if both empty, inf if one is."""
    if len(a) == 0 and len(b) == 0:
        return 0.0
    if len(a) == 0 or len(b) == 0:
        return float("inf")
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(max(da.max(), db.max()))


def local_distance(p1: PointSet, p2: PointSet, resolution: float = 1e-6) -> float:
    """Local Hausdorff distance used as a proxy for Chabauty-Fell closeness.

    Returns the smallest ``eps`` in ``(0, 1]`` such that every point of either
    patch inside ``B_{1/eps}`` lies within ``eps`` of the other patch.  Points
    are matched against the whole other patch, so the ball boundary does not
    cut matched pairs apart.  If exactly one patch has points in the ball the
    distance there is infinite.  The ball radius never exceeds the smaller
    patch radius; when that cap binds the result is floored at
    ``1 / radius`` (identical data still gives 0).
    """
    if p1.dim != p2.dim:
        raise ValueError("dimension mismatch")
    r_cap = min(p1.radius, p2.radius)
    n1 = np.linalg.norm(p1.points, axis=1) if len(p1) else np.zeros(0)
    n2 = np.linalg.norm(p2.points, axis=1) if len(p2) else np.zeros(0)
    d12 = p2.tree.query(p1.points)[0] if len(p1) and len(p2) else np.full(len(p1), np.inf)
    d21 = p1.tree.query(p2.points)[0] if len(p1) and len(p2) else np.full(len(p2), np.inf)

    def h(eps: float) -> float:
        r = min(1.0 / eps, r_cap) + COINCIDENCE_TOL
        in1, in2 = n1 <= r, n2 <= r
        if not in1.any() and not in2.any():
            return 0.0
        if not in1.any() or not in2.any():
            return np.inf
        return float(max(d12[in1].max(), d21[in2].max()))

    if h(1.0) > 1.0:
        return 1.0
    eps_cap = min(1.0, 1.0 / r_cap)
    h_cap = h(eps_cap)
    if h_cap == 0.0:
        return 0.0
    if h_cap <= eps_cap:
        return float(max(h_cap, eps_cap))
    lo, hi = eps_cap, 1.0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if h(mid) <= mid:
            hi = mid
        else:
            lo = mid
    return hi


def canonical_signature(displacements: np.ndarray) -> tuple:
    """Round displacements to the class grid and sort them lexicographically."""
    disp = np.asarray(displacements, dtype=float)
    if disp.ndim == 1:
        disp = disp.reshape(-1, 1)
    grid = np.round(disp / CLASS_GRID).astype(np.int64)
    grid = grid[_canonical_order(grid)]
    # +0.0 normalises negative zeros
    return tuple(tuple(float(v) * CLASS_GRID + 0.0 for v in row) for row in grid)


@dataclass(frozen=True)
class PatchClass:
    """The ``r``-neighbourhood of a point, as a canonical displacement list."""

    center_radius: float
    signature: tuple

    def __post_init__(self):
        if not self.center_radius > 0:
            raise ValueError("center_radius must be positive")
        if not self.signature:
            raise ValueError("signature must contain the zero displacement")
        d = len(self.signature[0])
        if tuple([0.0] * d) not in self.signature:
            raise ValueError("signature must contain the zero displacement")

    @property
    def dim(self) -> int:
        return len(self.signature[0])

    def displacements(self) -> np.ndarray:
        return np.asarray(self.signature, dtype=float)

    def to_json(self) -> dict:
        return {"radius": self.center_radius, "signature": [list(s) for s in self.signature]}

    @classmethod
    def from_json(cls, data: dict) -> "PatchClass":
        disp = np.asarray(data["signature"], dtype=float)
        return cls(float(data["radius"]), canonical_signature(disp))


def patch_class(patch: PointSet, x, r: float) -> PatchClass:
    x = np.asarray(x, dtype=float).reshape(patch.dim)
    if patch.index_of(x) is None:
        raise ValueError("x is not a point of the patch")
    if np.linalg.norm(x) + r > patch.radius + COINCIDENCE_TOL:
        raise ValueError("boundary-incomplete class: r-ball leaves the patch")
    idx = patch.tree.query_ball_point(x, r + COINCIDENCE_TOL)
    disp = patch.points[sorted(idx)] - x
    disp = disp[np.linalg.norm(disp, axis=1) <= r + COINCIDENCE_TOL]
    return PatchClass(float(r), canonical_signature(disp))


def enumerate_patch_classes(patch: PointSet, r: float) -> list[tuple[PatchClass, int]]:
    """Distinct ``r``-classes over interior points with their frequencies."""
    interior = patch.points[patch.interior_mask(r)]
    if not len(interior):
        raise ValueError("no interior points for this class radius")
    counts: dict[tuple, int] = {}
    for x in interior:
        sig = patch_class(patch, x, r).signature
        counts[sig] = counts.get(sig, 0) + 1
    return [(PatchClass(float(r), sig), counts[sig]) for sig in sorted(counts)]
