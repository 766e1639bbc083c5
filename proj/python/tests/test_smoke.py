import math

import numpy as np
import pytest

import optalloc


def test_welfare_is_positively_homogeneous():
    rng = np.random.default_rng(3)
    values = rng.normal(size=(50, 3))
    lam = [0.5, 1.0, 2.0]
    base = optalloc.welfare_potential(lam, values)
    assert optalloc.welfare_potential([4 * v for v in lam], values) == pytest.approx(4 * base, abs=1e-12)


def test_argmax_ties_go_to_smallest_index():
    assert optalloc.argmax_arm([1.0, 1.0], [2.0, 2.0]) == 0


def test_roc_curve_on_uniform_design():
    s = optalloc.sample_dgp("uniform-roc", 4000, 7, 0, False)
    p_hat = s["x"][:, 0]
    grid = [0.05 * i for i in range(1, 20)]
    curve = optalloc.roc_curve(s["y"], p_hat, grid)
    assert len(curve["alpha"]) == 19
    assert abs(curve["beta_hat"][4] - 0.75) < 0.03


def test_threshold_search_meets_budget():
    g0 = [0.0] * 4
    g1 = [4.0, 3.0, 2.0, 1.0]
    c0 = [0.0] * 4
    c1 = [1.0] * 4
    k, alpha, beta = optalloc.threshold_search(g0, g1, c0, c1, 0.5, 0.0, 10.0)
    assert alpha <= 0.5 + 1e-12
    assert k == pytest.approx(2.0)
    assert beta == pytest.approx(7.0 / 4.0)


def test_circle_perimeter():
    value, se = optalloc.level_set_integral("radial-norm", 1.0, 1_000_000, 1, 0.06 * 4 * math.sqrt(2))
    assert value == pytest.approx(2 * math.pi, rel=0.01)


def test_area_of_sheared_parallelogram():
    est, formula = optalloc.linear_area(np.array([[1.0, 0.5], [0.0, 1.0], [0.25, 0.0]]), 1_000_000, 1)
    assert est == pytest.approx(formula, rel=0.01)


def test_dml_with_kernel_nuisances():
    s = optalloc.sample_dgp("twoarm-margin", 2000, 11, 0, False)
    est = optalloc.dml(s["x"], s["arm"], s["y"], [1.0, 1.0], seed=11)
    gamma = optalloc.population_gamma("twoarm-margin", [1.0, 1.0])
    assert abs(est["point"] - gamma) < 5 * est["se"]


def test_run_geometry_task(tmp_path):
    rec = optalloc.run({"task": "geometry", "seed": 1, "out": tmp_path})
    assert rec["ok"]
    assert (tmp_path / "geometry.csv").exists()


def test_bad_input_raises():
    with pytest.raises(ValueError):
        optalloc.sample_dgp("no-such-design", 10, 1, 0, False)
