"""Estimator-style wrappers: configure with parameters, ``fit`` on a patch, then query."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .algebra import SchrodingerSpec, build_schrodinger
from .cutproject import Scheme, WindowFn, eval_window, sample_model_set
from .operators import PeriodicBoundary, SamplingWeight
from .pointset import PointSet
from .spectra import IDS, TestFunction, autocorrelation, dos_estimate, pair_measure_apply

__all__ = [
    "check_patch",
    "check_weights",
    "ModelSetSampler",
    "DensityOfStates",
    "Autocorrelation",
]


def check_patch(X, radius: float | None = None) -> PointSet:
    """Accept a :class:`PointSet` or an ``(n, d)`` array of distinct points.

    Arrays get the smallest ball radius containing them unless ``radius`` is given.
    """
    if isinstance(X, PointSet):
        return X
    arr = check_array(X, ensure_2d=True, ensure_min_samples=1, dtype=np.float64)
    if radius is None:
        radius = max(float(np.linalg.norm(arr, axis=1).max()), 1.0)
    return PointSet.from_points(arr, radius)


def check_weights(weights, n: int) -> np.ndarray:
    if weights is None:
        return np.ones(n)
    w = check_array(np.asarray(weights, dtype=float).reshape(-1, 1), ensure_min_samples=0).ravel()
    if len(w) != n:
        raise ValueError(f"expected {n} weights, got {len(w)}")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    return w


class ModelSetSampler(TransformerMixin, BaseEstimator):
    """Sample a (weighted) model set; ``transform`` reports window weights of query points.

    Parameters
    ----------
    scheme : Scheme
    radius : float
    epsilon : float
        Mollifier width; 0 keeps the sharp window.
    side : {"upper", "lower"}
    """

    def __init__(self, scheme: Scheme | None = None, radius: float = 20.0, epsilon: float = 0.0,
                 side: str = "upper"):
        self.scheme = scheme
        self.radius = radius
        self.epsilon = epsilon
        self.side = side

    def _window_fn(self):
        if self.scheme.m == 0 or self.epsilon == 0:
            return None
        return WindowFn(self.scheme.window, self.epsilon, self.side)

    def fit(self, X=None, y=None):
        if not isinstance(self.scheme, Scheme):
            raise ValueError("scheme must be a Scheme")
        sample = sample_model_set(self.scheme, self.radius, self._window_fn())
        self.patch_ = sample.patch
        self.weights_ = np.asarray(sample.weights)
        self.internal_ = np.asarray(sample.internal)
        self.n_points_ = len(sample.patch)
        return self

    def transform(self, X):
        """Window weight of each query point (0 for points not in the sample)."""
        check_is_fitted(self, "patch_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.patch_.dim:
            raise ValueError("query dimension differs from the model set")
        out = np.zeros(len(X))
        if self.n_points_:
            dist, idx = self.patch_.tree.query(X)
            hit = dist <= 1e-9
            out[hit] = self.weights_[idx[hit]]
        return out.reshape(-1, 1)

    def window_weights(self, internal) -> np.ndarray:
        """Window function evaluated at internal coordinates."""
        if self.scheme.m == 0:
            return np.ones(len(np.atleast_1d(internal)))
        wf = self._window_fn() or WindowFn.sharp(self.scheme.window)
        return eval_window(wf, internal)


class DensityOfStates(BaseEstimator):
    """Density of states of a Schrodinger operator on a patch.

    ``fit`` stores ``measure_`` (raw masses) and ``ids_``; ``predict`` returns
    the integrated density of states at the given energies.

    Parameters
    ----------
    operator : SchrodingerSpec
    rho_profile : {"uniform-ball", "bump", "orbit"}
        ``orbit`` (periodic boundary only) samples one period cell uniformly.
    rho_radius, rho_smoothness : float
    periods : array-like or None
        Period vectors; given means periodic boundary conditions.
    lifted : bool
        Multiply the kernel by the window weights at both ends.
    """

    def __init__(self, operator: SchrodingerSpec | None = None, rho_profile: str = "bump",
                 rho_radius: float = 8.0, rho_smoothness: float = 2.0, periods=None, lifted: bool = False):
        self.operator = operator
        self.rho_profile = rho_profile
        self.rho_radius = rho_radius
        self.rho_smoothness = rho_smoothness
        self.periods = periods
        self.lifted = lifted

    def fit(self, X, y=None, weights=None):
        patch = check_patch(X)
        w = check_weights(weights, len(patch))
        spec = self.operator if self.operator is not None else SchrodingerSpec({(1.0,) * patch.dim: 1.0},
                                                                                dim=patch.dim)
        kernel = build_schrodinger(spec)
        if self.lifted:
            kernel = kernel.lift()
        boundary = "open" if self.periods is None else PeriodicBoundary(self.periods)
        if self.rho_profile == "orbit":
            rho = "orbit"
        else:
            rho = SamplingWeight(self.rho_profile, self.rho_radius, self.rho_smoothness, dim=patch.dim)
        self.measure_ = dos_estimate(kernel, patch, w, rho, boundary)
        self.ids_ = IDS(self.measure_)
        self.total_mass_ = self.measure_.total_mass
        return self

    def predict(self, E) -> np.ndarray:
        check_is_fitted(self, "measure_")
        return np.asarray(self.ids_(np.atleast_1d(np.asarray(E, dtype=float))))


class Autocorrelation(TransformerMixin, BaseEstimator):
    """Weighted pair-correlation measure; ``transform`` evaluates test-function pairs.

    ``transform`` takes a sequence of ``(f1, f2)`` :class:`TestFunction` pairs
    and returns the column of values ``gamma(f1* * f2)``.
    """

    def __init__(self, R_eff: float = 10.0, delta_max: float = 3.0):
        self.R_eff = R_eff
        self.delta_max = delta_max

    def fit(self, X, y=None, weights=None):
        patch = check_patch(X)
        w = check_weights(weights, len(patch))
        self.measure_ = autocorrelation(patch, w, self.R_eff, self.delta_max)
        return self

    def transform(self, X):
        check_is_fitted(self, "measure_")
        vals = []
        for pair in X:
            f1, f2 = pair
            if not isinstance(f1, TestFunction) or not isinstance(f2, TestFunction):
                raise TypeError("transform expects pairs of TestFunction")
            vals.append(pair_measure_apply(self.measure_, f1, f2))
        return np.asarray(vals).reshape(-1, 1)
