import io
import json
import math

import numpy as np
import pytest

from lillab.sde import (DEATH, ExplosivePath, LinearSpec, NoisePath,
                        brownian_path, equilibrated_cholesky, path_distance,
                        path_from_csv, path_from_json_dict, path_to_csv_string,
                        path_to_json_dict, simulate_sde, state_alive)
from lillab.examples import get_example


def test_brownian_path_deterministic():
    a = brownian_path(123, dt=1e-3, horizon=0.5, dim_noise=2, path_index=4)
    b = brownian_path(123, dt=1e-3, horizon=0.5, dim_noise=2, path_index=4)
    assert np.array_equal(a.increments, b.increments)
    c = brownian_path(123, dt=1e-3, horizon=0.5, dim_noise=2, path_index=5)
    assert not np.array_equal(a.increments, c.increments)
    d = brownian_path(124, dt=1e-3, horizon=0.5, dim_noise=2, path_index=4)
    assert not np.array_equal(a.increments, d.increments)


def test_brownian_increment_variance():
    noise = brownian_path(7, dt=1e-3, horizon=4.0, dim_noise=3)
    z = noise.increments / math.sqrt(noise.dt)
    assert abs(float(np.var(z)) - 1.0) < 0.05
    assert abs(float(np.mean(z))) < 0.05


def test_noise_coarsen_sums_increments():
    noise = brownian_path(11, dt=0.01, horizon=1.0, dim_noise=2)
    coarse = noise.coarsen(10)
    assert coarse.increments.shape == (10, 2)
    assert coarse.dt == pytest.approx(0.1)
    # block sums, exactly
    blocks = noise.increments.reshape(10, 10, 2).sum(axis=1)
    assert np.allclose(coarse.increments, blocks, rtol=0, atol=0)


def test_noise_negated():
    noise = brownian_path(11, dt=0.01, horizon=0.2)
    neg = noise.negated()
    assert np.array_equal(neg.increments, -noise.increments)


def test_ik2_exact_transition_covariance():
    # Kolmogorov chain dx1 = x2 dt, dx2 = dB has Cov(t) =
    # [[t^3/3, t^2/2], [t^2/2, t]]; check the quadrature against t = 1
    ik = get_example("iterated_kolmogorov", d=2)
    cov = ik.sde.linear.covariance(1.0)
    oracle = np.array([[1.0 / 3.0, 0.5], [0.5, 1.0]])
    assert np.allclose(cov, oracle, atol=1e-10)


def test_exact_linear_matches_kernel_statistics():
    # single exact step of horizon 1, empirical covariance over many paths
    ik = get_example("iterated_kolmogorov", d=2)
    n = 20000
    xs = np.empty((n, 2))
    for p in range(n):
        noise = brownian_path(99, dt=1.0, horizon=1.0, dim_noise=2,
                              path_index=p)
        path = simulate_sde(ik.sde, np.zeros(2), noise, scheme="exact_linear")
        xs[p] = path.states[-1]
    emp = np.cov(xs.T)
    oracle = np.array([[1.0 / 3.0, 0.5], [0.5, 1.0]])
    assert np.max(np.abs(emp - oracle)) < 0.03


def test_euler_approaches_exact_kernel_mean_square():
    # same noise stream, finer Euler grids approach the exact terminal
    # second moment of x1 (t^3/3); crude but catches scaling mistakes
    ik = get_example("iterated_kolmogorov", d=2)
    n = 4000
    vals = []
    for n_steps in (4, 16, 64):
        acc = 0.0
        for p in range(n):
            noise = brownian_path(5, dt=1.0 / n_steps, horizon=1.0,
                                  dim_noise=1, path_index=p)
            path = simulate_sde(ik.sde, np.zeros(2), noise, scheme="euler")
            acc += float(path.states[-1, 0]) ** 2
        vals.append(acc / n)
    errs = [abs(v - 1.0 / 3.0) for v in vals]
    assert errs[-1] < errs[0]
    assert errs[-1] < 0.02


def test_quadratic_zero_noise_blowup_time():
    # drift is the complex square z -> z^2; from (2, 0) the deterministic
    # flow blows up at t = 1/(2) = 0.5
    quad = get_example("quadratic")
    n_steps = 4000
    noise = NoisePath(0, dt=1.0 / n_steps,
                      increments=np.zeros((n_steps, 1)))
    path = simulate_sde(quad.sde, np.array([2.0, 0.0]), noise)
    assert path.explosion_index is not None
    assert path.explosion_time == pytest.approx(0.5, abs=0.01)
    # dead rows are nan, not garbage
    assert np.all(np.isnan(path.states[path.explosion_index:]))
    assert path.state_at(0.9) is DEATH


def test_euler_strong_convergence_additive_noise():
    # Cauchy differences against a fine shared-noise reference; additive
    # noise so the strong order is 1, demand slope >= 0.9
    quad = get_example("quadratic")
    fine = brownian_path(31, dt=1e-5, horizon=0.25, dim_noise=1)
    x0 = np.array([0.3, -0.2])
    ref = simulate_sde(quad.sde, x0, fine)
    errs, dts = [], []
    for m in (1000, 100, 10):
        coarse = fine.coarsen(m)
        path = simulate_sde(quad.sde, x0, coarse)
        sub = ref.states[::m]
        errs.append(float(np.max(np.abs(sub - path.states))))
        dts.append(coarse.dt)
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope >= 0.9


def test_state_alive_guard():
    inside = lambda x: True
    assert state_alive(np.zeros(2), inside)
    assert not state_alive(np.array([np.nan, 0.0]), inside)
    assert not state_alive(np.array([1e120, 0.0]), inside)
    assert not state_alive(np.zeros(2), lambda x: False)


def test_path_distance_basic():
    t = np.linspace(0.0, 1.0, 11)
    g = ExplosivePath(t, np.column_stack([t, t**2]))
    h = ExplosivePath(t, np.column_stack([t, t**2 + 0.25]))
    assert path_distance(g, g, 1.0) == 0.0
    d = path_distance(g, h, 1.0)
    assert d == pytest.approx(0.25)
    assert path_distance(g, h, 1.0) == path_distance(h, g, 1.0)


def test_path_distance_infinite_past_explosion():
    t = np.linspace(0.0, 1.0, 11)
    states = np.column_stack([t, t])
    dead = states.copy()
    dead[5:] = np.nan
    g = ExplosivePath(t, states)
    h = ExplosivePath(t, dead, explosion_index=5)
    assert math.isinf(path_distance(g, h, 0.7))
    assert path_distance(g, h, 0.3) == 0.0


def test_path_distance_cross_grid_interpolation():
    ta = np.linspace(0.0, 1.0, 5)
    tb = np.linspace(0.0, 1.0, 101)
    g = ExplosivePath(ta, np.column_stack([ta]))
    h = ExplosivePath(tb, np.column_stack([tb]))
    assert path_distance(g, h, 1.0) < 1e-14


def test_csv_round_trip():
    t = np.linspace(0.0, 0.5, 6)
    states = np.column_stack([np.sin(t), np.cos(t)])
    states[4:] = np.nan
    path = ExplosivePath(t, states, explosion_index=4)
    text = path_to_csv_string(path)
    back = path_from_csv(io.StringIO(text))
    assert np.array_equal(back.times, path.times)
    alive = slice(0, 4)
    assert np.array_equal(back.states[alive], path.states[alive])
    assert back.explosion_index == 4


def test_json_round_trip():
    t = np.linspace(0.0, 1.0, 8)
    path = ExplosivePath(t, np.column_stack([t, -t]))
    doc = json.loads(json.dumps(path_to_json_dict(path)))
    back = path_from_json_dict(doc)
    assert np.array_equal(back.times, path.times)
    assert np.array_equal(back.states, path.states)
    assert back.explosion_index is None


def test_equilibrated_cholesky_tiny_scales():
    # correlation-space factorization survives scale ratios ~ 1e15
    spec = LinearSpec(np.array([[0.0, 1.0], [0.0, 0.0]]),
                      np.array([[0.0], [1.0]]))
    cov = spec.covariance(1e-10)
    d, chol = equilibrated_cholesky(cov)
    rebuilt = np.outer(d, d) * (chol @ chol.T)
    assert np.allclose(rebuilt, cov, rtol=1e-10)


def test_simulate_rejects_bad_start():
    ik = get_example("iterated_kolmogorov", d=2)
    noise = brownian_path(1, dt=0.1, horizon=0.2, dim_noise=1)
    with pytest.raises(ValueError):
        simulate_sde(ik.sde, np.array([np.inf, 0.0]), noise)
    with pytest.raises(ValueError):
        simulate_sde(ik.sde, np.zeros(3), noise)
