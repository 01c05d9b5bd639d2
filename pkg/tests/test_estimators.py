import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cpapprox.cutproject import fibonacci_scheme
from cpapprox.estimators import Autocorrelation, DensityOfStates, ModelSetSampler, check_patch, check_weights
from cpapprox.harness import default_fibonacci_operator
from cpapprox.spectra import TestFunction


def test_check_helpers():
    p = check_patch([[0.0], [2.0], [-3.0]])
    assert p.radius == 3.0 and len(p) == 3
    assert check_patch(p) is p
    with pytest.raises(ValueError):
        check_patch([[0.0], [np.nan]])
    assert np.array_equal(check_weights(None, 3), np.ones(3))
    with pytest.raises(ValueError):
        check_weights([1, 2], 3)
    with pytest.raises(ValueError):
        check_weights([1, -2, 1], 3)


def test_params_and_clone():
    s = ModelSetSampler(fibonacci_scheme(), radius=30, epsilon=0.05)
    assert s.get_params()["epsilon"] == 0.05
    c = clone(s).set_params(radius=40)
    assert c.radius == 40 and s.radius == 30
    d = DensityOfStates(rho_radius=12.0)
    assert clone(d).get_params()["rho_radius"] == 12.0
    assert Autocorrelation(R_eff=5.0).get_params() == {"R_eff": 5.0, "delta_max": 3.0}


def test_sampler_fit_transform():
    s = ModelSetSampler(fibonacci_scheme(), radius=30, epsilon=0.2).fit()
    assert s.n_points_ == len(s.patch_) == len(s.weights_)
    out = s.transform(s.patch_.points)
    assert out.shape == (s.n_points_, 1) and np.allclose(out[:, 0], s.weights_)
    assert s.transform([[1000.5]])[0, 0] == 0.0
    with pytest.raises(NotFittedError):
        ModelSetSampler(fibonacci_scheme()).transform([[0.0]])
    with pytest.raises(ValueError):
        ModelSetSampler(None).fit()


def test_density_of_states_estimator():
    X = np.arange(-300, 301, dtype=float)[:, None]
    d = DensityOfStates(rho_profile="bump", rho_radius=100).fit(X)
    assert abs(d.total_mass_ - 1) < 1e-6
    assert d.predict([-2.5, 2.5]).tolist() == [0.0, 1.0]
    per = DensityOfStates(rho_profile="orbit", periods=[[256.0]]).fit(X)
    assert per.total_mass_ == pytest.approx(1.0)
    assert per.ids_.midpoint(0.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        DensityOfStates(rho_profile="orbit").fit(X)


def test_density_of_states_weighted_fibonacci():
    s = ModelSetSampler(fibonacci_scheme(), radius=80, epsilon=0.1).fit()
    d = DensityOfStates(default_fibonacci_operator(), rho_radius=40, lifted=True).fit(s.patch_, weights=s.weights_)
    assert 0 < d.total_mass_ < 1
    assert np.all(np.diff(d.predict(np.linspace(-4, 4, 50))) >= 0)


def test_autocorrelation_estimator():
    X = np.arange(-40, 41, dtype=float)[:, None]
    a = Autocorrelation(R_eff=20.5, delta_max=2.0).fit(X)
    f = TestFunction("triangle", (0.0,), 0.3)
    assert a.transform([(f, f)])[0, 0] == pytest.approx(0.2)
    with pytest.raises(TypeError):
        a.transform([(f, 1.0)])
