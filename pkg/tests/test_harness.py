import json

import numpy as np
import pytest

from cpapprox.algebra import SchrodingerSpec
from cpapprox.cutproject import fibonacci_scheme, integer_lattice_scheme, rational_approximant
from cpapprox.harness import (
    ConvergenceReport,
    ExperimentPlan,
    fibonacci_plan,
    hull_proxy_distance,
    run_autocorr_convergence,
    run_dos_convergence,
    trend_violations,
)


def trivial_plan():
    return ExperimentPlan(integer_lattice_scheme(), denominators=(1,), epsilons=(0.0,),
                          operator=SchrodingerSpec({(1.0,): 1.0}))


def small_plan(**kw):
    base = dict(denominators=(2, 8), epsilons=(0.2, 0.05), reference_radius=200.0, min_cell_length=64.0,
                shift_samples=2, check_reference=False)
    base.update(kw)
    return fibonacci_plan(**base)


def test_trivial_plan_distance_zero():
    for run in (run_dos_convergence, run_autocorr_convergence):
        rep = run(trivial_plan())
        assert rep.grid == [[0.0]] and rep.passed


def test_hull_proxy_examples():
    s = fibonacci_scheme()
    assert hull_proxy_distance(s, s, 100) == 0.0
    d2 = hull_proxy_distance(s, rational_approximant(s, 2), 100)
    d8 = hull_proxy_distance(s, rational_approximant(s, 8), 100)
    assert 0 < d8 < d2
    shifted = hull_proxy_distance(s, fibonacci_scheme(shift_physical=0.3), 100)
    assert abs(shifted - 0.3) < 1e-4


def test_trend_violations():
    assert trend_violations([1.0, 0.5, 0.54, 0.3], 0.1) == []
    assert trend_violations([1.0, 0.5, 0.6], 0.1) == [1]
    assert trend_violations([0.0, 1e-13], 0.1) == []


def test_plan_validation():
    with pytest.raises(ValueError):
        fibonacci_plan(denominators=(8, 2))
    with pytest.raises(ValueError):
        fibonacci_plan(epsilons=(0.05, 0.2))
    with pytest.raises(ValueError):
        fibonacci_plan(side="middle")
    with pytest.raises(ValueError):
        fibonacci_plan(seed=-1)
    assert fibonacci_plan().window_fn(0.0) is None


def test_plan_json_roundtrip():
    p = fibonacci_plan(seed=17)
    q = ExperimentPlan.from_json(json.loads(json.dumps(p.to_json())))
    assert q.to_json() == p.to_json()


@pytest.fixture(scope="module")
def small_reports():
    plan = small_plan(final_tolerance=10.0)
    return {t: (run_dos_convergence(plan, threads=t), run_autocorr_convergence(plan, threads=t)) for t in (1, 4)}


def test_report_shape_and_nonnegative(small_reports):
    dos, ac = small_reports[1]
    for rep in (dos, ac):
        assert len(rep.grid) == 2 and all(len(r) == 2 for r in rep.grid)
        assert all(v >= 0 for r in rep.grid for v in r)
        assert len(rep.n_then_l["inner"]) == 2 and len(rep.l_then_n["outer"]) == 2
        assert rep.reference["radius"] == 200.0
        assert {a["name"] for a in rep.assertions} >= {"final cell <= 10.0", "hull proxy nonincreasing in q"}
        assert rep.final == rep.grid[-1][-1]


def test_report_identical_across_threads(small_reports):
    for a, b in zip(small_reports[1], small_reports[4]):
        assert a.dumps() == b.dumps()
        assert a.to_csv() == b.to_csv()


def test_report_csv_layout(small_reports):
    text = small_reports[1][0].to_csv()
    lines = text.split("\r\n")
    assert lines[0] == "epsilon,q=2,q=8"
    assert lines[1].startswith("0.20000000000000001,")


def test_dos_distance_shrinks_with_q_at_coarse_window(small_reports):
    dos, _ = small_reports[1]
    assert dos.grid[0][1] < dos.grid[0][0]
