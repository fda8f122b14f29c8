import math

import numpy as np
import pytest

from lillab.controls import ControlGrid, solve_control_ode
from lillab.examples import get_example
from lillab.extremals import (OptimizerConfig, RunningMaxAbsFunctional,
                              TerminalLinearFunctional, adjoint_gradient,
                              fd_gradient, optimize_extremal)

QUICK = OptimizerConfig(n_steps=256, n_restarts=6, max_iters=200)


def test_brownian_terminal_sup():
    br = get_example("brownian")
    result = optimize_extremal(br.limit_problem, br.functionals["terminal"],
                               "max", QUICK)
    assert result.convergence_flag
    assert result.value == pytest.approx(math.sqrt(2.0), rel=1e-3)


def test_kolmogorov_j1_both_senses_odd():
    ik = get_example("iterated_kolmogorov", d=2)
    hi = optimize_extremal(ik.limit_problem, ik.functionals["J1"], "max", QUICK)
    lo = optimize_extremal(ik.limit_problem, ik.functionals["J1"], "min", QUICK)
    assert hi.value == pytest.approx(math.sqrt(2.0 / 3.0), rel=1e-3)
    assert abs(hi.value + lo.value) < 1e-5


def test_quadratic_j2_min():
    # sup of int f^2 over the energy ball is 8/pi^2 (half-period sine),
    # so the J2 infimum is its negative
    quad = get_example("quadratic")
    result = optimize_extremal(quad.limit_problem, quad.functionals["J2"],
                               "min", QUICK)
    assert result.value == pytest.approx(-8.0 / math.pi**2, rel=5e-3)


def test_quadratic_j2_max_degenerate():
    # -int f^2 <= 0 with equality at u = 0
    quad = get_example("quadratic")
    result = optimize_extremal(quad.limit_problem, quad.functionals["J2"],
                               "max", QUICK)
    assert abs(result.value) < 1e-5


def test_running_max_brownian():
    # |f| is maximized by running straight: same value as the terminal sup
    br = get_example("brownian")
    config = OptimizerConfig(n_steps=128, n_restarts=8, max_iters=300,
                             gradient="fd")
    result = optimize_extremal(br.limit_problem,
                               br.functionals["running_max"], "max", config)
    assert result.value == pytest.approx(math.sqrt(2.0), rel=1e-2)


def test_argext_on_energy_ball_boundary():
    ik = get_example("iterated_kolmogorov", d=2)
    result = optimize_extremal(ik.limit_problem, ik.functionals["J1"], "max",
                               QUICK)
    assert result.argext.energy() <= 1.0 + 1e-9
    # a linear functional is extremized on the boundary
    assert result.argext.energy() == pytest.approx(1.0, abs=1e-6)


def test_adjoint_matches_fd():
    ik = get_example("iterated_kolmogorov", d=2)
    functional = ik.functionals["J1"]
    u = ControlGrid.random_bandlimited(64, 1, seed=10, energy=0.7)
    adj = adjoint_gradient(ik.limit_problem, functional,
                           u.values[None, :, :])[0]
    fd = fd_gradient(ik.limit_problem, functional, u.values)
    denom = max(1.0, float(np.max(np.abs(fd))))
    assert np.max(np.abs(adj - fd)) / denom < 1e-3


def test_adjoint_matches_fd_nonlinear_drift():
    quad = get_example("quadratic")
    functional = quad.functionals["J2"]
    u = ControlGrid.random_bandlimited(64, 1, seed=11, energy=0.9)
    adj = adjoint_gradient(quad.limit_problem, functional,
                           u.values[None, :, :])[0]
    fd = fd_gradient(quad.limit_problem, functional, u.values)
    denom = max(1.0, float(np.max(np.abs(fd))))
    assert np.max(np.abs(adj - fd)) / denom < 1e-3


def test_result_serializes():
    br = get_example("brownian")
    result = optimize_extremal(br.limit_problem, br.functionals["terminal"],
                               "max", OptimizerConfig(n_steps=64, n_restarts=2,
                                                      max_iters=100))
    doc = result.to_json_dict()
    assert set(doc) >= {"value", "sense", "convergence_flag",
                        "n_restarts_used", "gradient_norm_at_exit",
                        "restart_values", "argext"}
    assert doc["sense"] == "max"
    assert len(doc["restart_values"]) == result.n_restarts_used


def test_same_seed_same_result():
    ik = get_example("iterated_kolmogorov", d=2)
    a = optimize_extremal(ik.limit_problem, ik.functionals["J1"], "max", QUICK)
    b = optimize_extremal(ik.limit_problem, ik.functionals["J1"], "max", QUICK)
    assert a.value == b.value
    assert np.array_equal(a.argext.values, b.argext.values)


def test_extra_starts_must_match_grid():
    ik = get_example("iterated_kolmogorov", d=2)
    bad = ControlGrid(np.ones((32, 1)))   # wrong n_steps
    config = OptimizerConfig(n_steps=64, n_restarts=2, max_iters=50,
                             extra_starts=(bad,))
    with pytest.raises(ValueError):
        optimize_extremal(ik.limit_problem, ik.functionals["J1"], "max",
                          config)


def test_bad_sense_rejected():
    ik = get_example("iterated_kolmogorov", d=2)
    with pytest.raises(ValueError):
        optimize_extremal(ik.limit_problem, ik.functionals["J1"], "sup",
                          QUICK)


def test_probe_start_improves_lorenz_min():
    # the bundled probe controls give the optimizer a descent direction the
    # random bank misses at small budgets
    lz = get_example("lorenz96")
    starts = tuple(lz.probe_starts(96))
    config = OptimizerConfig(n_steps=96, n_restarts=2, max_iters=60,
                             extra_starts=starts)
    result = optimize_extremal(lz.limit_problem, lz.functionals["J3"], "min",
                               config)
    assert result.value < 0.0
