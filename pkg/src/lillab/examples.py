"""Registry of benchmark systems with their scaling data and functionals.

Each entry bundles the SDE, its contraction family and asymptotic index, the
limit control ODE, named path functionals, and reference constants with the
method that produced them. Control-space functionals (J1/J2/J3/running_max)
are also evaluable directly by quadrature via functional_value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .controls import LimitOdeProblem, ControlGrid, linear_kernel_oracle
from .extremals import RunningMaxAbsFunctional, TerminalLinearFunctional
from .scaling import (AsymptoticIndex, ContractionFamily, rate_scale,
                      transformed_coefficients)
from .sde import LinearSpec, SdeSystem


def _const_diffusion(sigma: np.ndarray) -> Callable:
    sigma = np.asarray(sigma, dtype=float)

    def diffusion(y):
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(sigma, y.shape[:-1] + sigma.shape)

    return diffusion


def _unit_column(d: int, j: int) -> np.ndarray:
    out = np.zeros((d, 1))
    out[j, 0] = 1.0
    return out


@dataclass(frozen=True)
class ExampleSystem:
    """A registered benchmark: SDE + scaling data + limit problem + functionals."""

    name: str
    params: dict
    sde: SdeSystem
    contraction: ContractionFamily
    index: AsymptoticIndex
    limit_problem: LimitOdeProblem
    functionals: dict
    reference: dict
    probe_starts: Optional[Callable[[int], list]] = None
    _coefficients_override: Optional[Callable[[float], SdeSystem]] = None

    def rescaled_coefficients(self, eps: float) -> SdeSystem:
        """The coefficient pair (b_eps, sigma_eps) of the rescaled process."""
        if self._coefficients_override is not None:
            return self._coefficients_override(eps)
        return transformed_coefficients(self.sde, self.contraction,
                                        self.index, eps)


def _ik_matrices(d: int):
    a = np.zeros((d, d))
    for i in range(d - 1):
        a[i, i + 1] = 1.0
    return a, _unit_column(d, d - 1)


def ik_reference_constant(d: int) -> float:
    """sup of the (d-1)-fold iterated time integral over the energy ball."""
    return math.sqrt(2.0 / (2 * d - 1)) / math.factorial(d - 1)


def _make_brownian(d: int = 1) -> ExampleSystem:
    eye = np.eye(d)
    sde = SdeSystem(
        dim_state=d, dim_noise=d,
        drift=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        diffusion=_const_diffusion(eye),
        label=f"brownian(d={d})",
        linear=LinearSpec(np.zeros((d, d)), eye),
    )
    limit = LimitOdeProblem(
        dim_state=d, dim_control=d,
        limit_drift=lambda y: np.zeros_like(np.asarray(y, dtype=float)),
        limit_diffusion=_const_diffusion(eye),
        x0=np.zeros(d),
        drift_jacobian=lambda y: np.zeros(np.asarray(y).shape + (d,)),
        constant_diffusion=eye,
        label="brownian limit",
    )
    w = np.zeros(d)
    w[0] = 1.0
    functionals = {
        "terminal": TerminalLinearFunctional(w, label="terminal"),
        "running_max": RunningMaxAbsFunctional(0),
    }
    reference = {
        "terminal_max": {"value": math.sqrt(2.0),
                         "method": "kernel oracle, terminal weight only"},
        "terminal_min": {"value": -math.sqrt(2.0),
                         "method": "odd functional symmetry"},
    }
    return ExampleSystem(
        name="brownian", params={"d": d}, sde=sde,
        contraction=ContractionFamily("diagonal", np.zeros(d)),
        index=AsymptoticIndex(((1, 1),) * d),
        limit_problem=limit, functionals=functionals, reference=reference,
    )


def _make_iterated_kolmogorov(d: int = 2) -> ExampleSystem:
    if d < 2:
        raise ValueError("iterated_kolmogorov needs d >= 2")
    a, sig = _ik_matrices(d)
    sde = SdeSystem(
        dim_state=d, dim_noise=1,
        drift=lambda x: np.asarray(x, dtype=float) @ a.T,
        diffusion=_const_diffusion(sig),
        label=f"iterated_kolmogorov(d={d})",
        linear=LinearSpec(a, sig),
    )
    limit = LimitOdeProblem(
        dim_state=d, dim_control=1,
        limit_drift=lambda y: np.asarray(y, dtype=float) @ a.T,
        limit_diffusion=_const_diffusion(sig),
        x0=np.zeros(d),
        drift_jacobian=lambda y: np.broadcast_to(a, np.asarray(y).shape + (d,)),
        constant_diffusion=sig,
        label=f"iterated_kolmogorov(d={d}) limit",
    )
    w = np.zeros(d)
    w[0] = 1.0
    m = ik_reference_constant(d)
    functionals = {
        "J1": TerminalLinearFunctional(w, label="J1"),
        "running_max": RunningMaxAbsFunctional(0),
    }
    reference = {
        "J1_max": {"value": m, "method": "kernel oracle closed form"},
        "J1_min": {"value": -m, "method": "odd functional symmetry"},
        "running_max_limsup": {"value": m, "method": "kernel oracle closed form"},
        "running_max_liminf": {"value": 0.0, "method": "degenerate infimum"},
    }
    exps = tuple((2 * (d - i) + 1, 1) for i in range(1, d + 1))
    return ExampleSystem(
        name="iterated_kolmogorov", params={"d": d}, sde=sde,
        contraction=ContractionFamily("diagonal", np.zeros(d)),
        index=AsymptoticIndex(exps),
        limit_problem=limit, functionals=functionals, reference=reference,
    )


def _make_shifted_kolmogorov(x0=(1.0, 1.0)) -> ExampleSystem:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (2,):
        raise ValueError("x0 must be a 2-vector")
    a, sig = _ik_matrices(2)
    sde = SdeSystem(
        dim_state=2, dim_noise=1,
        drift=lambda x: np.asarray(x, dtype=float) @ a.T,
        diffusion=_const_diffusion(sig),
        label=f"shifted_kolmogorov(x0={tuple(x0)})",
        linear=LinearSpec(a, sig),
    )
    limit = LimitOdeProblem(
        dim_state=2, dim_control=1,
        limit_drift=lambda y: np.asarray(y, dtype=float) @ a.T,
        limit_diffusion=_const_diffusion(sig),
        x0=x0,
        drift_jacobian=lambda y: np.broadcast_to(a, np.asarray(y).shape + (2,)),
        constant_diffusion=sig,
        label="shifted_kolmogorov limit",
    )
    # detrended first coordinate: y1(1) - x1(0) - x2(0) = int_0^1 f
    functionals = {
        "J1": TerminalLinearFunctional(
            np.array([1.0, 0.0]), offset=-(x0[0] + x0[1]), label="J1"
        ),
        "running_max": RunningMaxAbsFunctional(0),
    }
    m = ik_reference_constant(2)
    reference = {
        "J1_max": {"value": m, "method": "kernel oracle closed form"},
        "J1_min": {"value": -m, "method": "odd functional symmetry"},
    }

    def constant_family(eps: float) -> SdeSystem:
        # the detrended change of coordinates reproduces the original
        # coefficient pair exactly at every eps, so the family is constant
        rate_scale(eps)  # validate eps range
        return SdeSystem(
            dim_state=2, dim_noise=1,
            drift=limit.limit_drift,
            diffusion=limit.limit_diffusion,
            label=f"shifted_kolmogorov rescaled(eps={eps:g})",
        )

    return ExampleSystem(
        name="shifted_kolmogorov", params={"x0": tuple(float(v) for v in x0)},
        sde=sde,
        contraction=ContractionFamily(
            "affine_detrended", x0, drift_vector=np.array([x0[1], 0.0])
        ),
        index=AsymptoticIndex(((3, 1), (1, 1))),
        limit_problem=limit, functionals=functionals, reference=reference,
        _coefficients_override=constant_family,
    )


def _quadratic_drift(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    out[..., 0] = x[..., 0] ** 2 - x[..., 1] ** 2
    out[..., 1] = 2.0 * x[..., 0] * x[..., 1]
    return out


def _make_quadratic() -> ExampleSystem:
    sig = _unit_column(2, 1)
    sde = SdeSystem(
        dim_state=2, dim_noise=1,
        drift=_quadratic_drift,
        diffusion=_const_diffusion(sig),
        label="quadratic",
    )

    def limit_drift(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        out[..., 0] = -(y[..., 1] ** 2)
        return out

    def limit_jac(y):
        y = np.asarray(y, dtype=float)
        jac = np.zeros(y.shape + (2,))
        jac[..., 0, 1] = -2.0 * y[..., 1]
        return jac

    limit = LimitOdeProblem(
        dim_state=2, dim_control=1,
        limit_drift=limit_drift,
        limit_diffusion=_const_diffusion(sig),
        x0=np.zeros(2),
        drift_jacobian=limit_jac,
        constant_diffusion=sig,
        label="quadratic limit",
    )
    functionals = {
        "J2": TerminalLinearFunctional(np.array([1.0, 0.0]), label="J2"),
        "running_max": RunningMaxAbsFunctional(0),
    }
    reference = {
        "J2_min": {"value": -8.0 / math.pi**2,
                   "method": "smallest Dirichlet-Neumann eigenvalue"},
        "J2_max": {"value": 0.0, "method": "degenerate supremum"},
    }
    return ExampleSystem(
        name="quadratic", params={}, sde=sde,
        contraction=ContractionFamily("diagonal", np.zeros(2)),
        index=AsymptoticIndex(((4, 2), (1, 1))),
        limit_problem=limit, functionals=functionals, reference=reference,
    )


def _lorenz_drift(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    x1, x2, x3, x4, x5 = (x[..., i] for i in range(5))
    out[..., 0] = (x2 - x4) * x5 - x1
    out[..., 1] = (x3 - x5) * x1 - x2
    out[..., 2] = (x4 - x1) * x2 - x3
    out[..., 3] = (x5 - x2) * x3 - x4
    out[..., 4] = (x1 - x3) * x4 - x5
    return out


def _lorenz_limit_drift(y):
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    y1, y2, y3, y4 = y[..., 0], y[..., 1], y[..., 2], y[..., 3]
    out[..., 2] = -y1 * y2
    out[..., 3] = -y2 * y3
    out[..., 4] = y1 * y4
    return out


def _lorenz_limit_jacobian(y):
    y = np.asarray(y, dtype=float)
    jac = np.zeros(y.shape + (5,))
    y1, y2, y3, y4 = y[..., 0], y[..., 1], y[..., 2], y[..., 3]
    jac[..., 2, 0] = -y2
    jac[..., 2, 1] = -y1
    jac[..., 3, 1] = -y3
    jac[..., 3, 2] = -y2
    jac[..., 4, 0] = y4
    jac[..., 4, 3] = y1
    return jac


def lorenz_probe_controls(n_steps: int) -> list:
    """Deterministic probe starts: the scaled sine pair f = s(sin 5t, sin t)."""
    mids = (np.arange(n_steps) + 0.5) / n_steps
    u = np.column_stack([5.0 * np.cos(5.0 * mids), np.cos(mids)])
    half_energy = 0.5 * (25.0 * (0.5 + math.sin(10.0) / 20.0)
                         + (0.5 + math.sin(2.0) / 4.0))
    s = math.sqrt(1.0 / half_energy)
    probe = ControlGrid(s * u).project(1.0)
    return [probe, ControlGrid(-probe.values)]


def _make_lorenz96() -> ExampleSystem:
    sig = np.zeros((5, 2))
    sig[0, 0] = 1.0
    sig[1, 1] = 1.0
    sde = SdeSystem(
        dim_state=5, dim_noise=2,
        drift=_lorenz_drift,
        diffusion=_const_diffusion(sig),
        label="lorenz96(d=5)",
    )
    limit = LimitOdeProblem(
        dim_state=5, dim_control=2,
        limit_drift=_lorenz_limit_drift,
        limit_diffusion=_const_diffusion(sig),
        x0=np.zeros(5),
        drift_jacobian=_lorenz_limit_jacobian,
        constant_diffusion=sig,
        label="lorenz96 limit",
    )
    functionals = {
        "J3": TerminalLinearFunctional(
            np.array([0.0, 0.0, 0.0, 0.0, 1.0]), label="J3"
        ),
    }
    probe = functional_value(
        "J3",
        np.column_stack([np.sin(5.0 * np.linspace(0, 1, 20001)),
                         np.sin(np.linspace(0, 1, 20001))]),
    )
    half_energy = 0.5 * (25.0 * (0.5 + math.sin(10.0) / 20.0)
                         + (0.5 + math.sin(2.0) / 4.0))
    reference = {
        "J3_sine_probe": {"value": probe,
                          "method": "composite quadrature, sine pair"},
        "J3_min_bound": {"value": probe / half_energy**2,
                         "method": "rescaled feasible point"},
    }
    return ExampleSystem(
        name="lorenz96", params={}, sde=sde,
        contraction=ContractionFamily("diagonal", np.zeros(5)),
        index=AsymptoticIndex(((1, 1), (1, 1), (4, 2), (7, 3), (10, 4))),
        limit_problem=limit, functionals=functionals, reference=reference,
        probe_starts=lorenz_probe_controls,
    )


_REGISTRY = {
    "brownian": (_make_brownian, "d (state dimension, default 1)"),
    "iterated_kolmogorov": (_make_iterated_kolmogorov, "d (chain length >= 2)"),
    "shifted_kolmogorov": (_make_shifted_kolmogorov, "x0 (2-vector start)"),
    "quadratic": (_make_quadratic, "no parameters"),
    "lorenz96": (_make_lorenz96, "no parameters"),
}


def list_examples() -> list:
    return sorted(_REGISTRY)


def get_example(name: str, **params) -> ExampleSystem:
    if name not in _REGISTRY:
        raise KeyError(f"unknown example {name!r}; known: {list_examples()}")
    maker, _ = _REGISTRY[name]
    return maker(**params)


def describe_example(name: str, **params) -> dict:
    example = get_example(name, **params)
    return {
        "name": example.name,
        "params": example.params,
        "dim_state": example.sde.dim_state,
        "dim_noise": example.sde.dim_noise,
        "contraction_kind": example.contraction.kind,
        "index_exponents": list(example.index.exponents),
        "functionals": sorted(example.functionals),
        "reference": example.reference,
        "parameter_help": _REGISTRY[name][1],
    }


# ---------------------------------------------------------------------------
# Control-space functionals by quadrature

def functional_value(name: str, f_samples, d: Optional[int] = None) -> float:
    """Evaluate a named functional of f on uniform samples over [0, 1].

    f_samples has shape (m,) or (m, 1) except for J3 which takes (m, 2); the
    samples must include both endpoints. J1 needs the chain length d >= 2.
    Composite Simpson quadrature with cumulative inner integrals, so the cost
    stays linear in m.
    """
    f = np.asarray(f_samples, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    if f.shape[0] < 3:
        raise ValueError("need at least 3 samples")
    s = np.linspace(0.0, 1.0, f.shape[0])

    def cum(y):
        return cumulative_simpson(y, x=s, initial=0.0)

    if name == "J1":
        if d is None or d < 2:
            raise ValueError("J1 requires the chain length d >= 2")
        y = f[:, 0]
        for _ in range(d - 1):
            y = cum(y)
        return float(y[-1])
    if name == "J2":
        return -float(simpson(f[:, 0] ** 2, x=s))
    if name == "J3":
        if f.shape[1] != 2:
            raise ValueError("J3 takes two control columns")
        f1, f2 = f[:, 0], f[:, 1]
        inner1 = cum(f1 * f2)
        inner2 = cum(f2 * inner1)
        return float(simpson(f1 * inner2, x=s))
    if name == "running_max":
        return float(np.max(np.abs(cum(f[:, 0]))))
    raise KeyError(f"unknown functional {name!r}")


# ---------------------------------------------------------------------------
# Coefficient convergence tables

def coefficient_deviation(example: ExampleSystem, eps: float,
                          points: np.ndarray) -> dict:
    """Sup deviation of (b_eps, sigma_eps) from the limit pair on sample points."""
    res = example.rescaled_coefficients(eps)
    limit = example.limit_problem
    drift_dev = 0.0
    diff_dev = 0.0
    for y in np.asarray(points, dtype=float):
        drift_dev = max(drift_dev, float(np.max(np.abs(
            np.asarray(res.drift(y)) - np.asarray(limit.limit_drift(y))))))
        diff_dev = max(diff_dev, float(np.max(np.abs(
            np.asarray(res.diffusion(y)) - np.asarray(limit.limit_diffusion(y))))))
    return {"eps": eps, "drift_deviation": drift_dev,
            "diffusion_deviation": diff_dev}


def deviation_table(example: ExampleSystem, eps_list, n_samples: int = 64,
                    seed: int = 7, box: float = 1.5) -> list:
    """Coefficient deviation rows for each eps, on a shared random point cloud."""
    rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), 11]))
    points = rng.uniform(-box, box, size=(n_samples, example.sde.dim_state))
    return [coefficient_deviation(example, float(e), points) for e in eps_list]
