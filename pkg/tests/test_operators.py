import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from cpapprox.algebra import SchrodingerSpec, build_schrodinger, kernel_generator_s, kernel_identity
from cpapprox.checks import equivariance_defect, interior_rows
from cpapprox.cutproject import fibonacci_scheme, generate_model_set
from cpapprox.operators import (
    PeriodicBoundary,
    SamplingWeight,
    dump_matrix,
    eigensolve,
    local_spectral_weights,
    represent,
)

from conftest import PHI, lattice_patch

FREE = build_schrodinger(SchrodingerSpec({(1.0,): 1.0}))


def sturm_count(diag, off, x):
    """Number of eigenvalues below ``x`` of a symmetric tridiagonal matrix."""
    count, q = 0, 1.0
    for i in range(len(diag)):
        b2 = off[i - 1] ** 2 if i else 0.0
        q = diag[i] - x - (b2 / q if i else 0.0)
        if q == 0.0:
            q = 1e-300
        count += q < 0
    return count


def sturm_eigenvalues(diag, off, tol=1e-13):
    lo = min(diag) - 2 * max(np.abs(off), default=0) - 1
    hi = max(diag) + 2 * max(np.abs(off), default=0) + 1
    out = []
    for k in range(len(diag)):
        a, b = lo, hi
        while b - a > tol:
            mid = 0.5 * (a + b)
            if sturm_count(diag, off, mid) > k:
                b = mid
            else:
                a = mid
        out.append(0.5 * (a + b))
    return np.array(out)


def test_generator_superdiagonal():
    op = represent(kernel_generator_s(1.0), lattice_patch(2))
    assert op.dim == 5 and np.array_equal(op.entries, np.eye(5, k=1))


def test_periodic_circulant_n4():
    patch = lattice_patch(10)
    op = represent(FREE, patch, boundary=PeriodicBoundary([[4.0]]))
    assert op.dim == 4
    assert np.allclose(np.sort(eigensolve(op)[0]), [-2, 0, 0, 2], atol=1e-12)
    assert np.allclose(op.entries.sum(axis=1), 2)


def test_constant_weight_scales_matrix(fib100):
    c = 0.37
    w = np.full(len(fib100), c)
    k = build_schrodinger(SchrodingerSpec({(1.0,): 1.0, (PHI,): 0.5}))
    assert np.allclose(represent(k, fib100, w).entries, c * represent(k, fib100).entries, rtol=0, atol=1e-15)
    assert np.allclose(represent(k.lift(), fib100, w).entries, c ** 3 * represent(k, fib100).entries,
                       rtol=0, atol=1e-15)


def test_symmetrized_weighting(fib100):
    rng = np.random.default_rng(0)
    w = rng.uniform(0.1, 1.0, len(fib100))
    k = build_schrodinger(SchrodingerSpec({(1.0,): 1.0, (PHI,): 0.5 + 0.5j}))
    raw = represent(k, fib100)
    op = represent(k, fib100, w)
    D = np.sqrt(op.weights)
    assert np.array_equal(op.sites, raw.sites)
    assert np.allclose(op.entries, D[:, None] * raw.entries * D[None, :], rtol=0, atol=1e-15)


def test_sites_below_weight_floor_dropped(fib100):
    w = np.ones(len(fib100))
    w[::3] = 0.0
    op = represent(FREE, fib100, w)
    assert np.all(op.weights > 0)
    assert op.dim < represent(FREE, fib100).dim
    with pytest.raises(ValueError):
        represent(FREE, fib100, -w)


def test_open_and_periodic_agree_away_from_wrap():
    patch = lattice_patch(80)
    per = represent(FREE, patch, boundary=PeriodicBoundary([[64.0]]))
    opn = represent(FREE, patch)
    pos = {round(s, 9): i for i, s in enumerate(opn.sites[:, 0])}
    sites = per.sites[:, 0]
    order = np.argsort(sites)
    idx = np.array([pos[round(s, 9)] for s in sites])
    inner = order[1:-1]
    assert np.array_equal(per.entries[np.ix_(inner, inner)], opn.entries[np.ix_(idx[inner], idx[inner])])


def test_eigensolve_trivial_and_errors():
    vals, vecs = eigensolve(np.array([[3.5]]))
    assert vals.tolist() == [3.5] and vecs.tolist() == [[1.0]]
    with pytest.raises(ValueError):
        eigensolve(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_fibonacci_tridiagonal_matches_sturm_oracle():
    # hand-built N=89 chain: hopping 1, potential +-1 following the gap sequence
    x = generate_model_set(fibonacci_scheme(), 70)[0].points.ravel()[:90]
    gaps = np.diff(x)[:89]
    diag = np.where(np.abs(gaps - 1) < 1e-9, 1.0, -1.0)
    off = np.where(np.abs(gaps[:-1] - 1) < 1e-9, 1.0, 0.6)
    M = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    vals, vecs = eigensolve(M)
    assert np.max(np.abs(vals - sturm_eigenvalues(diag, off))) <= 1e-9
    assert np.max(np.abs(M @ vecs - vecs * vals)) <= 1e-10 * np.linalg.norm(M, 2)
    assert np.max(np.abs(vecs.T @ vecs - np.eye(89))) <= 1e-10


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=30), st.integers(0, 1000))
def test_eigensolve_residuals(diag, seed):
    rng = np.random.default_rng(seed)
    n = len(diag)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    M = A + A.conj().T + np.diag(diag)
    vals, vecs = eigensolve(M)
    assert np.all(np.diff(vals) >= 0)
    assert np.max(np.abs(M @ vecs - vecs * vals)) <= 1e-10 * np.linalg.norm(M, 2)


def test_local_spectral_weight_examples():
    sw = local_spectral_weights(np.eye(3))
    assert np.allclose(sw.eigenvalues, 1) and np.allclose(sw.weights.sum(axis=1), 1)
    sw = local_spectral_weights(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(sw.eigenvalues, [-1, 1]) and np.allclose(sw.weights, 0.5)


def test_free_periodic_weights_match_fourier_sum():
    N = 64
    op = represent(FREE, lattice_patch(80), boundary=PeriodicBoundary([[float(N)]]))
    sw = local_spectral_weights(op)
    assert np.allclose(sw.weights.sum(axis=1), 1, atol=1e-10)
    phi = lambda E: np.exp(-E ** 2) + E ** 3
    exact = np.mean(phi(2 * np.cos(2 * np.pi * np.arange(N) / N)))
    for i in range(op.dim):
        assert abs(np.sum(phi(sw.eigenvalues) * sw.weights[i]) - exact) <= 1e-12


@pytest.mark.parametrize("profile", ["uniform-ball", "bump"])
@pytest.mark.parametrize("radius", [0.7, 8.0])
def test_sampling_weight_is_normalized(profile, radius):
    rho = SamplingWeight(profile, radius, 2.0)
    pts = [-radius, 0.0, radius] if profile == "uniform-ball" else None
    val, _ = integrate.quad(lambda x: rho(np.array([[x]]))[0], -radius, radius, points=pts, limit=200)
    assert abs(val - 1) < 1e-8
    rho2 = SamplingWeight(profile, radius, 3.0, dim=2)
    val2, _ = integrate.quad(lambda r: 2 * np.pi * r * rho2(np.array([[r, 0.0]]))[0], 0, radius, limit=200)
    assert abs(val2 - 1) < 1e-8
    assert rho(np.array([[radius * 1.01]]))[0] == 0


def test_periodized_weight_sums_to_one_over_cell():
    b = PeriodicBoundary([[10.0]])
    rho = SamplingWeight("bump", 13.0)
    x = np.linspace(-5, 5, 4001)[:-1, None]
    assert abs(rho.periodized(x, b).mean() * 10 - 1) < 1e-6


def test_dump_matrix(tmp_path, fib100):
    op = represent(build_schrodinger(SchrodingerSpec({(1.0,): 1.0 + 0.5j})), fib100)
    dump_matrix(op, tmp_path / "m")
    head = json.loads((tmp_path / "m.json").read_text())
    data = np.fromfile(tmp_path / "m.bin", dtype=np.float64)
    assert head["dim"] == op.dim and head["boundary"] == "open"
    M = data.view(np.complex128).reshape(op.dim, op.dim)
    assert np.array_equal(M, op.entries)


def test_represent_equivariance_on_integers(z50):
    for t in (3.0, -7.0, 11.0):
        assert equivariance_defect(FREE, z50, [t]) == 0.0


def test_hermitian_check(fib100):
    op = represent(build_schrodinger(SchrodingerSpec({(PHI,): 2 - 1j})), fib100)
    rows = interior_rows(op, fib100, PHI)
    sub = op.entries[np.ix_(rows, rows)]
    assert np.array_equal(sub, sub.conj().T)
    assert op.norm() > 0
