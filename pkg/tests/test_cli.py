import csv
import io
import json

import numpy as np
import pytest

from cpapprox.cli import main

PHI = (1 + 5 ** 0.5) / 2


def write_config(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def read_csv(path):
    text = path.read_bytes().decode()
    assert "\n" not in text.replace("\r\n", "")
    return list(csv.reader(io.StringIO(text)))


def run(tmp_path, data, command, *extra, out="out"):
    cfg = write_config(tmp_path, data)
    return main([command, "--config", cfg, "--out", str(tmp_path / out), *extra])


def test_generate_integer_patch(tmp_path):
    assert run(tmp_path, {"radius": 5, "scheme": {"preset": "integer"}}, "generate") == 0
    data = json.loads((tmp_path / "out" / "patch.json").read_text())
    assert [p[0] for p in data["patch"]["points"]] == list(range(-5, 6))
    assert read_csv(tmp_path / "out" / "gaps.csv") == [["gap", "count"], ["1", "10"]]


def test_generate_fibonacci_two_gaps(tmp_path):
    assert run(tmp_path, {"radius": 50}, "generate") == 0
    rows = read_csv(tmp_path / "out" / "gaps.csv")
    assert [float(r[0]) for r in rows[1:]] == [1.0, round(PHI, 6)]
    classes = read_csv(tmp_path / "out" / "classes.csv")
    assert classes[0] == ["class", "count", "size", "displacements"] and len(classes) > 2


def test_generate_singular_shift_warns_and_perturbs(tmp_path, capsys):
    cfg = {"radius": 10, "scheme": {"d": 1, "m": 1, "basis": [1, 0, 0, 1],
                                    "window": {"center": [0.5], "half_widths": [0.5]}, "shift": [0, 0]}}
    assert run(tmp_path, cfg, "generate") == 0
    assert "warning: singular shift" in capsys.readouterr().err
    data = json.loads((tmp_path / "out" / "patch.json").read_text())
    assert data["shift_perturbed"] is True
    assert np.linalg.norm(data["scheme"]["shift"]) == pytest.approx(1e-3)


def test_dos_periodic_n4_atoms(tmp_path):
    cfg = {"radius": 8, "scheme": {"preset": "integer"}, "operator": {"preset": "free"},
           "dos": {"boundary": "periodic", "periods": [[4.0]], "rho": {"profile": "orbit"},
                   "ids_grid": {"lo": -3, "hi": 3, "n": 7}}}
    assert run(tmp_path, cfg, "dos") == 0
    rows = read_csv(tmp_path / "out" / "dos_normalized.csv")
    atoms = {round(float(a), 9) + 0.0: float(m) for a, m in rows[1:]}
    assert atoms == pytest.approx({-2.0: 0.25, 0.0: 0.5, 2.0: 0.25})
    ids = read_csv(tmp_path / "out" / "ids.csv")
    assert ids[0] == ["E", "F(E)"] and [float(r[1]) for r in ids[1:]] == pytest.approx(
        [0, 0.25, 0.25, 0.75, 0.75, 1, 1])


def test_dos_identity_kernel_single_atom(tmp_path):
    cfg = {"radius": 30, "scheme": {"preset": "integer"}, "operator": {"potential": 1.0},
           "dos": {"boundary": "open", "rho": {"profile": "bump", "radius": 10}}}
    assert run(tmp_path, cfg, "dos") == 0
    rows = read_csv(tmp_path / "out" / "dos.csv")
    assert len(rows) == 2 and float(rows[1][0]) == 1.0


def test_dos_fibonacci_and_matrix_dump(tmp_path):
    cfg = {"radius": 60, "window": {"epsilon": 0.1}, "dos": {"rho": {"radius": 20}, "dump_matrix": True}}
    assert run(tmp_path, cfg, "dos") == 0
    summary = json.loads((tmp_path / "out" / "dos_summary.json").read_text())
    head = json.loads((tmp_path / "out" / "matrix.json").read_text())
    assert head["dim"] == summary["sites"]
    assert (tmp_path / "out" / "matrix.bin").stat().st_size == 8 * head["dim"] ** 2


def test_dos_non_hermitian_is_numerical_failure(tmp_path):
    cfg = {"radius": 30, "scheme": {"preset": "integer"}, "operator": {"preset": "free", "corrupt": True},
           "dos": {"boundary": "open", "rho": {"radius": 5}}}
    assert run(tmp_path, cfg, "dos") == 3


def test_autocorr_integer(tmp_path):
    cfg = {"radius": 20, "scheme": {"preset": "integer"},
           "autocorr": {"R_eff": 10.5, "delta_max": 3.5,
                        "pairs": [[{"kind": "triangle", "scale": 0.3}, {"kind": "triangle", "scale": 0.3}]]}}
    assert run(tmp_path, cfg, "autocorr") == 0
    rows = read_csv(tmp_path / "out" / "autocorr.csv")
    assert len(rows) == 8 and all(float(m) == pytest.approx(1.0) for _, m in rows[1:])
    pairs = read_csv(tmp_path / "out" / "pairs.csv")
    assert float(pairs[1][3]) == pytest.approx(0.2)


def test_converge_trivial_plan(tmp_path):
    cfg = {"scheme": {"preset": "integer"}, "operator": {"preset": "free"},
           "plan": {"denominators": [1], "epsilons": [0.0]}}
    assert run(tmp_path, cfg, "converge") == 0
    for kind in ("dos", "autocorr"):
        assert read_csv(tmp_path / "out" / f"grid_{kind}.csv") == [["epsilon", "q=1"], ["0", "0"]]
        rep = json.loads((tmp_path / "out" / f"report_{kind}.json").read_text())
        assert rep["grid"] == [[0.0]]


def test_algebra_check_integer_passes_and_corrupt_fails(tmp_path, capsys):
    cfg = {"scheme": {"preset": "integer"}, "operator": {"preset": "free"},
           "algebra": {"radii": [30], "kernels": 2}}
    assert run(tmp_path, cfg, "algebra-check") == 0
    rows = read_csv(tmp_path / "out" / "algebra.csv")
    assert all(r[4] == "true" for r in rows[1:])
    cfg["operator"]["corrupt"] = True
    assert run(tmp_path, cfg, "algebra-check", out="bad") == 4
    assert "hermitian" in capsys.readouterr().err


@pytest.mark.parametrize("data", [
    {"radius": 5, "bogus": 1},
    {"scheme": {"preset": "fibonacci", "extra": True}},
    {"radius": -1},
    {"plan": {"denominators": [8, 2]}},
    [1, 2],
])
def test_config_errors_exit_2(tmp_path, data):
    cmd = "converge" if isinstance(data, dict) and "plan" in data else "generate"
    assert run(tmp_path, data, cmd) == 2


def test_bad_invocations_exit_2(tmp_path):
    assert main(["generate"]) == 2
    assert main(["generate", "--config", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "broken.json").write_text("{")
    assert main(["generate", "--config", str(tmp_path / "broken.json")]) == 2
    cfg = write_config(tmp_path, {"radius": 5})
    assert main(["generate", "--config", cfg, "--seed", "-3", "--out", str(tmp_path / "o")]) == 2


def test_rerun_is_byte_identical(tmp_path):
    cfg = {"radius": 60, "window": {"epsilon": 0.05}, "dos": {"rho": {"radius": 20}, "translates": 3,
                                                              "translate_radius": 10}}
    assert run(tmp_path, cfg, "dos", out="a") == 0
    assert run(tmp_path, cfg, "dos", out="b") == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
