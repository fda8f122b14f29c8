import math

import numpy as np
import pytest

from lillab.examples import (describe_example, deviation_table,
                             functional_value, get_example,
                             ik_reference_constant, list_examples,
                             lorenz_probe_controls)


def test_registry_contents():
    names = list_examples()
    assert names == ["brownian", "iterated_kolmogorov", "lorenz96",
                     "quadratic", "shifted_kolmogorov"]
    with pytest.raises(KeyError):
        get_example("ornstein")


def test_describe_keys():
    doc = describe_example("quadratic")
    assert doc["name"] == "quadratic"
    assert doc["dim_state"] == 2
    assert list(map(tuple, doc["index_exponents"])) == [(4, 2), (1, 1)]
    assert "J2" in doc["functionals"]


def test_index_encodings():
    assert get_example("brownian").index.exponents == ((1, 1),)
    assert get_example("brownian", d=2).index.exponents == ((1, 1), (1, 1))
    # chain exponents l_i = 2(d - i) + 1
    assert get_example("iterated_kolmogorov", d=3).index.exponents == \
        ((5, 1), (3, 1), (1, 1))
    assert get_example("shifted_kolmogorov").index.exponents == \
        ((3, 1), (1, 1))
    assert get_example("lorenz96").index.exponents == \
        ((1, 1), (1, 1), (4, 2), (7, 3), (10, 4))


def test_parameter_validation():
    with pytest.raises(ValueError):
        get_example("iterated_kolmogorov", d=1)
    with pytest.raises(TypeError):
        get_example("quadratic", d=3)


def test_ik_reference_constant():
    # sqrt(2/(2d-1)) / (d-1)!
    assert ik_reference_constant(2) == pytest.approx(math.sqrt(2.0 / 3.0))
    assert ik_reference_constant(3) == pytest.approx(math.sqrt(2.0 / 5.0) / 2.0)
    assert ik_reference_constant(5) == pytest.approx(math.sqrt(2.0 / 9.0) / 24.0)
    ik = get_example("iterated_kolmogorov", d=4)
    assert ik.reference["J1_max"]["value"] == pytest.approx(
        ik_reference_constant(4))


def test_functional_value_polynomials():
    t = np.linspace(0.0, 1.0, 1001)
    # one cumulative integral for d=2: J1(t) = 1/2
    assert functional_value("J1", t, d=2) == pytest.approx(0.5, abs=1e-8)
    # two for d=3: 1/6
    assert functional_value("J1", t, d=3) == pytest.approx(1.0 / 6.0, abs=1e-8)
    assert functional_value("J2", t) == pytest.approx(-1.0 / 3.0, abs=1e-8)
    assert functional_value("J2", np.ones_like(t)) == pytest.approx(-1.0)
    # f1 = f2 = t: inner chain gives t^5/15, outer integral 1/105
    assert functional_value("J3", np.column_stack([t, t])) == pytest.approx(
        1.0 / 105.0, abs=1e-9)
    assert functional_value("running_max", t) == pytest.approx(0.5, abs=1e-8)


def test_functional_value_guards():
    t = np.linspace(0.0, 1.0, 101)
    with pytest.raises(ValueError):
        functional_value("J1", t)          # d missing
    with pytest.raises(ValueError):
        functional_value("J3", t)          # needs two columns
    with pytest.raises(KeyError):
        functional_value("J9", t)
    with pytest.raises(ValueError):
        functional_value("J2", t[:2])      # too few samples


def test_lorenz_sine_probe_value():
    t = np.linspace(0.0, 1.0, 2001)
    f = np.column_stack([np.sin(5.0 * t), np.sin(t)])
    val = functional_value("J3", f)
    lz = get_example("lorenz96")
    assert val == pytest.approx(lz.reference["J3_sine_probe"]["value"],
                                abs=1e-7)


def test_lorenz_probe_controls_feasible_and_opposed():
    probes = lorenz_probe_controls(128)
    assert len(probes) == 2
    for p in probes:
        assert p.values.shape == (128, 2)
        assert p.energy() <= 1.0 + 1e-12
    assert np.allclose(probes[0].values, -probes[1].values)


def test_deviation_table_decreasing():
    for name in ("quadratic", "shifted_kolmogorov"):
        example = get_example(name)
        rows = deviation_table(example, [1e-2, 1e-4, 1e-6])
        devs = [max(r["drift_deviation"], r["diffusion_deviation"])
                for r in rows]
        assert devs[0] + 1e-13 >= devs[1] >= devs[2] - 1e-13


def test_shifted_drift_matches_limit_at_center():
    sk = get_example("shifted_kolmogorov")
    resc = sk.rescaled_coefficients(1e-4)
    center = sk.contraction.center
    assert np.allclose(resc.drift(center),
                       sk.limit_problem.limit_drift(center), atol=1e-10)


def test_example_sde_simulates():
    # every registered system integrates a short path from its center
    from lillab.sde import brownian_path, simulate_sde
    for name in list_examples():
        example = get_example(name)
        noise = brownian_path(3, dt=1e-3, horizon=0.05,
                              dim_noise=example.sde.dim_noise)
        path = simulate_sde(example.sde, example.contraction.center, noise)
        assert path.explosion_index is None
        assert np.all(np.isfinite(path.states))
