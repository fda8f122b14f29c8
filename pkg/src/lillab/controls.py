"""Control grids, the limit control ODE, and energy recovery.

Controls are piecewise-constant derivatives u = df/dt on a uniform grid over
[0, 1] with energy (1/2) int |u|^2. The limit ODE dg = limit_drift(g) dt +
limit_diffusion(g) u(t) dt maps a control to a path; the energy recovery map
inverts it per grid cell by least squares and prices unreachable paths at
infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson

from .sde import DEATH, ExplosivePath, NumericalFailure, _philox, state_alive


def trivial_domain(x) -> bool:
    """Default domain predicate: the whole space."""
    return True


@dataclass(frozen=True)
class ControlGrid:
    """Piecewise-constant control u on n_steps uniform cells of [0, 1].

    values has shape (n_steps, dim); energy = (1/2) * mean(|u_i|^2) which is
    the exact integral for piecewise-constant u.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("values must have shape (n_steps, dim)")
        object.__setattr__(self, "values", v)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def energy(self) -> float:
        return 0.5 * float(np.sum(self.values**2)) / self.n_steps

    def f_values(self) -> np.ndarray:
        """The primitive f(t_j) = int_0^{t_j} u on the n_steps+1 grid nodes."""
        out = np.zeros((self.n_steps + 1, self.dim))
        np.cumsum(self.values / self.n_steps, axis=0, out=out[1:])
        return out

    def project(self, max_energy: float = 1.0) -> "ControlGrid":
        """Euclidean projection onto {energy <= max_energy} (radial shrink)."""
        e = self.energy()
        if e <= max_energy:
            return self
        return ControlGrid(self.values * math.sqrt(max_energy / e))

    @staticmethod
    def from_function(fn, n_steps: int, dim: int = 1) -> "ControlGrid":
        """Sample a callable u(t) at cell midpoints."""
        mids = (np.arange(n_steps) + 0.5) / n_steps
        vals = np.array([np.broadcast_to(fn(t), (dim,)) for t in mids], dtype=float)
        return ControlGrid(vals)

    @staticmethod
    def random_bandlimited(n_steps: int, dim: int, seed: int, stream: int = 0,
                           n_modes: int = 6, energy: Optional[float] = None
                           ) -> "ControlGrid":
        """Low-frequency random control, deterministic in (seed, stream)."""
        rng = _philox(seed, stream)
        mids = (np.arange(n_steps) + 0.5) / n_steps
        vals = np.zeros((n_steps, dim))
        coeff = rng.standard_normal((n_modes, dim, 2))
        for m in range(n_modes):
            vals += coeff[m, :, 0] * np.cos(math.pi * m * mids)[:, None]
            vals += coeff[m, :, 1] * np.sin(math.pi * (m + 1) * mids)[:, None]
        grid = ControlGrid(vals)
        target = rng.uniform(0.3, 1.0) if energy is None else energy
        e = grid.energy()
        if e > 0.0:
            grid = ControlGrid(vals * math.sqrt(target / e))
        return grid


@dataclass(frozen=True)
class LimitOdeProblem:
    """Deterministic control ODE dg = limit_drift(g) dt + limit_diffusion(g) u dt.

    limit_drift maps (..., d) -> (..., d) and limit_diffusion (..., d) ->
    (..., d, k); broadcasting over leading axes enables batched integration.
    t_star <= 1 bounds the usable horizon. drift_jacobian (optional,
    (..., d) -> (..., d, d)) and constant_diffusion (optional (d, k) array)
    unlock the fast adjoint gradient path in the extremal optimizer.
    """

    dim_state: int
    dim_control: int
    limit_drift: Callable
    limit_diffusion: Callable
    x0: np.ndarray
    domain_contains: Callable[[np.ndarray], bool] = trivial_domain
    t_star: float = 1.0
    drift_jacobian: Optional[Callable] = None
    constant_diffusion: Optional[np.ndarray] = None
    label: str = ""

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.dim_state,):
            raise ValueError("x0 shape must be (dim_state,)")
        if not 0.0 < self.t_star <= 1.0:
            raise ValueError("t_star must lie in (0, 1]")
        object.__setattr__(self, "x0", x0)
        if self.constant_diffusion is not None:
            sig = np.asarray(self.constant_diffusion, dtype=float)
            if sig.shape != (self.dim_state, self.dim_control):
                raise ValueError("constant_diffusion shape must be (d, k)")
            object.__setattr__(self, "constant_diffusion", sig)


def _rk4_step(rhs, x, h):
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * h * k1)
    k3 = rhs(x + 0.5 * h * k2)
    k4 = rhs(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def solve_control_ode(problem: LimitOdeProblem, control: ControlGrid
                      ) -> ExplosivePath:
    """Integrate the control ODE with one classical RK4 step per control cell.

    Integration runs on [0, t_star]; a trailing partial cell gets its own
    step. Domain exit or a non-finite state at a grid node kills the path at
    that node, matching the SDE explosion convention.
    """
    if control.dim != problem.dim_control:
        raise ValueError("control dimension does not match the problem")
    n = control.n_steps
    h_cell = 1.0 / n
    n_full = int(math.floor(problem.t_star / h_cell + 1e-12))
    partial = problem.t_star - n_full * h_cell
    steps = [(i, h_cell) for i in range(n_full)]
    if partial > 1e-12:
        steps.append((n_full, partial))

    times = np.zeros(len(steps) + 1)
    states = np.full((len(steps) + 1, problem.dim_state), np.nan)
    x = problem.x0.copy()
    if not problem.domain_contains(x):
        raise ValueError("x0 outside the domain")
    states[0] = x
    explosion = None
    for row, (cell, h) in enumerate(steps):
        u = control.values[cell]

        def rhs(y):
            # A non-finite stage means the step is already blowing up; push the
            # state to infinity so the explosion check below catches it.
            b = np.asarray(problem.limit_drift(y), dtype=float)
            sig = np.asarray(problem.limit_diffusion(y), dtype=float)
            if not (np.all(np.isfinite(b)) and np.all(np.isfinite(sig))):
                return np.full(problem.dim_state, np.inf)
            return b + sig @ u

        with np.errstate(over="ignore", invalid="ignore"):
            x = _rk4_step(rhs, x, h)
        times[row + 1] = times[row] + h
        if not state_alive(x, problem.domain_contains):
            explosion = row + 1
            times[row + 2:] = times[row + 1] + h_cell * np.arange(1, len(steps) - row)
            break
        states[row + 1] = x
    return ExplosivePath(times=times, states=states, explosion_index=explosion)


def cramer_transform(problem: LimitOdeProblem, path: ExplosivePath,
                     tolerance: float = 1e-5) -> float:
    """Minimal control energy needed to generate the path, or inf.

    Per grid cell the control is recovered by least squares
    u = sigma(g_mid)^+ (dg/dt - b(g_mid)) at the midpoint state; if the
    residual outside the diffusion range exceeds tolerance anywhere the path
    is unreachable and the value is inf. Cells at or after explosion
    contribute zero (the control is frozen at the cemetery).
    """
    if path.dim != problem.dim_state:
        raise ValueError("path dimension does not match the problem")
    end = path.explosion_index if path.explosion_index is not None else len(path.times)
    total = 0.0
    scale = 1.0 + float(np.max(np.abs(path.states[:end]))) if end > 0 else 1.0
    for i in range(end - 1):
        h = path.times[i + 1] - path.times[i]
        g0, g1 = path.states[i], path.states[i + 1]
        mid = 0.5 * (g0 + g1)
        rate = (g1 - g0) / h
        b = np.asarray(problem.limit_drift(mid), dtype=float)
        sig = np.atleast_2d(np.asarray(problem.limit_diffusion(mid), dtype=float))
        target = rate - b
        u, *_ = np.linalg.lstsq(sig, target, rcond=1e-12)
        residual = float(np.max(np.abs(sig @ u - target)))
        if residual > tolerance * scale:
            return math.inf
        total += 0.5 * float(u @ u) * h
    return total


def linear_kernel_oracle(kernel, n_quad: int = 4096,
                         terminal_weight: float = 0.0) -> float:
    """Supremum of f -> terminal_weight * f(1) + int_0^1 kernel(s) f(s) ds
    over the unit energy ball {(1/2) int |df/dt|^2 <= 1}.

    Writing the functional against df/dt gives int K(r) df(r) with
    K(r) = terminal_weight + int_r^1 kernel(s) ds, so by Cauchy-Schwarz the
    value is sqrt(2) * ||K||_2, attained at df/dt proportional to K.
    Composite quadrature on n_quad+1 nodes.
    """
    if n_quad < 16:
        raise ValueError("n_quad too small")
    s = np.linspace(0.0, 1.0, n_quad + 1)
    k = np.asarray([float(kernel(t)) for t in s])
    # reverse cumulative trapezoid: K[j] = int_{s_j}^1 kernel
    seg = 0.5 * (k[1:] + k[:-1]) * (s[1] - s[0])
    tail = np.concatenate([seg[::-1].cumsum()[::-1], [0.0]])
    big_k = terminal_weight + tail
    norm_sq = float(simpson(big_k**2, x=s))
    return math.sqrt(2.0 * norm_sq)


def limit_set_sample(problem: LimitOdeProblem, n_samples: int, seed: int,
                     n_steps: int = 256, tolerance: float = 1e-3) -> list:
    """Sample limit-set candidate paths from random feasible controls.

    Each sample solves the control ODE for a random band-limited control
    projected into the unit energy ball; the recovered energy is asserted
    feasible up to tolerance.
    """
    out = []
    for i in range(n_samples):
        grid = ControlGrid.random_bandlimited(
            n_steps, problem.dim_control, seed, stream=i
        ).project(1.0)
        path = solve_control_ode(problem, grid)
        energy = cramer_transform(problem, path, tolerance=max(tolerance, 1e-5))
        if not energy <= 1.0 + tolerance:
            raise NumericalFailure(
                f"sampled control produced energy {energy:g} > 1 + tolerance"
            )
        out.append(path)
    return out


def limit_set_distance(path: ExplosivePath, samples: list,
                       t_star: Optional[float] = None) -> float:
    """Distance from path to a sampled limit-set cloud (min uniform distance)."""
    from .sde import path_distance

    if not samples:
        raise ValueError("empty sample list")
    if t_star is None:
        t_star = min(min(s.horizon for s in samples), path.horizon)
    return min(path_distance(path, s, t_star) for s in samples)
