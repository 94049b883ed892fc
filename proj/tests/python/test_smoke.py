import math
import os

import pytest

import needlework as nw

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "..", "configs")


def test_expr_and_errors():
    f = nw.Expr("x1^2 + sin(x2)")
    assert f([2.0, 0.0]) == pytest.approx(4.0)
    value, grad = f.gradient([1.0, 0.0])
    assert value == pytest.approx(1.0)
    assert grad == pytest.approx([2.0, 1.0])
    with pytest.raises(nw.NeedleError) as info:
        nw.Expr("x1 +")
    assert info.value.code == "SyntaxError"
    assert info.value.exit_code == 1


def test_sampling_mass():
    pts, w = nw.sample(nw.box([0, 0], [1, 1]), 0.05)
    assert len(pts) == len(w) == 400
    assert sum(w) == pytest.approx(1.0)


def test_transport_matches_assignment():
    src = [[0.0], [1.0]]
    snk = [[2.0], [3.0]]
    plan = nw.solve_transportation(src, [1.0, 1.0], snk, [1.0, 1.0])
    assert plan["cost"] == pytest.approx(4.0)
    assert sum(m for _, _, m in plan["flows"]) == pytest.approx(2.0)


def test_affine_needle_and_spectral_gap():
    nd = nw.affine_needle(0.0, nw.inf, 1.0, 0.0, 0.0, 1.0)
    assert nw.spectral_gap(nd) == pytest.approx(math.pi**2, rel=1e-4)
    sine = nw.affine_needle(1.0, 3.0, 1.0, 0.0, 0.1, 2.0)
    assert nw.equality_residual(sine) < 1e-8
    assert nw.check_cd(sine, 1.0, 3.0, 1e-8)["pass"]


def test_gaussian_profile():
    phi = 0.5 * math.erfc(-0.1 / math.sqrt(2))
    assert nw.iso_profile(1.0, nw.inf, nw.inf, 0.5, 0.1) == pytest.approx(phi, abs=1e-3)


def test_decompose_indicator():
    out = nw.decompose(os.path.join(CONFIGS, "indicator.json"))
    assert out["certified"]
    assert {"rays.json", "needles.csv", "summary.json"} <= set(out["artifacts"])
    assert all(v["pass"] for v in out["verdicts"])
    assert out["summary"]["mass"]["total"] == pytest.approx(1.0)


def test_runners():
    verdicts = nw.run("needle1d", os.path.join(CONFIGS, "needle_gaussian.json"))
    assert verdicts and all(v["status"] in ("pass", "report") for v in verdicts)
    sweep = nw.fmc_sweep(2, 1000, 3)
    assert sweep["violations"] == 0
    with pytest.raises(nw.NeedleError) as info:
        nw.decompose({"domain": {"type": "box", "lo": [0, 0], "hi": [1, 1]}, "f": "1", "h": 0.1})
    assert info.value.exit_code == 2
