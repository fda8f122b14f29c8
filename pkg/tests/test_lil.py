import math

import numpy as np
import pytest

from lillab.examples import get_example
from lillab.lil import (LilExperimentConfig, LilReport, run_lil_experiment,
                        running_extremes)
from lillab.scaling import rescale_path
from lillab.sde import brownian_path, simulate_sde

SMALL = dict(j_min=0, j_max=6, n_paths=200)


def test_running_extremes():
    vals = np.array([1.0, -2.0, 0.5, 3.0])
    hi, lo = running_extremes(vals)
    assert np.array_equal(hi, [1.0, 1.0, 1.0, 3.0])
    assert np.array_equal(lo, [1.0, -2.0, -2.0, -2.0])
    with pytest.raises(ValueError):
        running_extremes(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        running_extremes(np.array([]))


def test_config_validation():
    with pytest.raises(ValueError):
        LilExperimentConfig(c=1.2)
    with pytest.raises(ValueError):
        LilExperimentConfig(c=0.0)
    with pytest.raises(ValueError):
        LilExperimentConfig(j_min=5, j_max=2)
    with pytest.raises(ValueError):
        LilExperimentConfig(n_paths=0)
    grid = LilExperimentConfig(c=0.5, j_min=1, j_max=3).eps_grid()
    assert np.allclose(grid, [5e-3, 2.5e-3, 1.25e-3])


def test_exact_run_is_deterministic():
    ik = get_example("iterated_kolmogorov", d=2)
    config = LilExperimentConfig(**SMALL)
    a = run_lil_experiment(ik, "J1", config)
    b = run_lil_experiment(ik, "J1", config)
    assert np.array_equal(a.values, b.values)
    assert a.to_csv_string() == b.to_csv_string()


def test_running_columns_are_monotone():
    ik = get_example("iterated_kolmogorov", d=2)
    report = run_lil_experiment(ik, "J1", LilExperimentConfig(**SMALL))
    assert np.all(np.diff(report.running_max, axis=1) >= 0.0)
    assert np.all(np.diff(report.running_min, axis=1) <= 0.0)
    assert report.aggregate_max == pytest.approx(
        float(np.max(report.values)))


def test_exact_levels_match_transition_kernel():
    # per-level marginals of the refinement must agree with the
    # unconditional transition covariance at t = eps * t_star
    ik = get_example("iterated_kolmogorov", d=2)
    config = LilExperimentConfig(j_min=0, j_max=4, n_paths=4000)
    report = run_lil_experiment(ik, "J1", config)
    spec = ik.sde.linear
    psi_w = ik.functionals["J1"].weights
    for level, eps in enumerate(report.eps_values):
        cov = spec.covariance(eps)
        # J1 is linear in the terminal state, so the rescaled value is
        # Gaussian with variance w' cov w / alpha_scale^2; compare std
        from lillab.scaling import eval_index
        alpha = eval_index(ik.index, eps)
        scaled_cov = cov / np.outer(alpha, alpha)
        want = math.sqrt(float(psi_w @ scaled_cov @ psi_w))
        got = float(np.std(report.values[:, level]))
        assert got == pytest.approx(want, rel=0.08)


def test_adjacent_levels_positively_coupled():
    # consistent coupling: the same Brownian path at nested scales, so
    # adjacent-level values correlate strongly
    ik = get_example("iterated_kolmogorov", d=2)
    report = run_lil_experiment(ik, "J1",
                                LilExperimentConfig(j_min=0, j_max=4,
                                                    n_paths=2000))
    assert report.noise_coupling == "consistent"
    for level in range(4):
        r = np.corrcoef(report.values[:, level],
                        report.values[:, level + 1])[0, 1]
        assert r > 0.5


def test_trivial_single_level_single_path():
    br = get_example("brownian")
    config = LilExperimentConfig(j_min=0, j_max=0, n_paths=1)
    report = run_lil_experiment(br, "terminal", config)
    assert report.values.shape == (1, 1)
    lines = report.to_csv_string().strip().split("\n")
    assert lines[0] == "path_id,j,eps,value,running_max,running_min"
    assert len(lines) == 2


def test_exact_route_rejects_path_functionals():
    br = get_example("brownian")
    with pytest.raises(ValueError):
        run_lil_experiment(br, "running_max",
                           LilExperimentConfig(j_min=0, j_max=1, n_paths=2))


def test_unknown_functional():
    br = get_example("brownian")
    with pytest.raises(KeyError):
        run_lil_experiment(br, "J7", LilExperimentConfig(**SMALL))


def test_euler_workers_parity():
    quad = get_example("quadratic")
    config = LilExperimentConfig(j_min=0, j_max=2, n_paths=60,
                                 scheme="euler", dt_rel=1e-2)
    one = run_lil_experiment(quad, "J2", config, workers=1)
    two = run_lil_experiment(quad, "J2", config, workers=2)
    assert np.array_equal(one.values, two.values)
    assert one.to_csv_string() == two.to_csv_string()


def test_euler_and_exact_statistics_agree():
    # same law up to discretization: compare level std on the linear system
    ik = get_example("iterated_kolmogorov", d=2)
    exact = run_lil_experiment(
        ik, "J1", LilExperimentConfig(j_min=0, j_max=2, n_paths=400))
    euler = run_lil_experiment(
        ik, "J1", LilExperimentConfig(j_min=0, j_max=2, n_paths=400,
                                      scheme="euler", dt_rel=3e-3))
    for level in range(3):
        se = float(np.std(exact.values[:, level]))
        su = float(np.std(euler.values[:, level]))
        assert su == pytest.approx(se, rel=0.15)


def test_sign_symmetry_under_negated_noise():
    # linear system + odd functional: flipping the driving noise flips the
    # rescaled value exactly
    ik = get_example("iterated_kolmogorov", d=2)
    eps = 1e-3
    noise = brownian_path(77, dt=eps * 1e-3, horizon=eps, dim_noise=1)
    for nz in (noise, noise.negated()):
        path = simulate_sde(ik.sde, np.zeros(2), nz)
        resc = rescale_path(path, ik.contraction, ik.index, eps)
        val = ik.functionals["J1"].evaluate(resc)
        if nz is noise:
            base = val
        else:
            assert val == pytest.approx(-base, rel=1e-12)


def test_report_serialization():
    br = get_example("brownian")
    config = LilExperimentConfig(j_min=0, j_max=3, n_paths=20)
    report = run_lil_experiment(br, "terminal", config)
    doc = report.to_json_dict()
    assert doc["example"] == "brownian"
    assert doc["functional"] == "terminal"
    assert doc["config"]["n_paths"] == 20
    assert len(doc["eps_values"]) == 4
    assert doc["explosion_fraction"] == 0.0
    assert isinstance(doc["mean_running_max"], float)
