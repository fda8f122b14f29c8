"""Extremal values of path functionals over the unit energy ball.

optimize_extremal runs projected gradient ascent/descent on the
piecewise-constant control, with deterministic multi-start. Gradients come
from a continuous adjoint sweep (one forward + one backward integration) when
the functional exposes a terminal gradient and the diffusion is constant;
central finite differences otherwise. Both modes are selectable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .controls import (ControlGrid, LimitOdeProblem, solve_control_ode,
                       trivial_domain)
from .sde import DEATH, OVERFLOW_GUARD, ExplosivePath


# ---------------------------------------------------------------------------
# Path functionals

class TerminalLinearFunctional:
    """F(g) = weights . g(t_end) + offset (linear in the terminal state)."""

    def __init__(self, weights, offset: float = 0.0, label: str = ""):
        self.weights = np.asarray(weights, dtype=float)
        self.offset = float(offset)
        self.label = label

    def evaluate(self, path: ExplosivePath) -> float:
        g = path.state_at(path.horizon)
        if g is DEATH:
            return math.nan
        return float(self.weights @ g) + self.offset

    def terminal_value(self, terminal: np.ndarray) -> np.ndarray:
        return terminal @ self.weights + self.offset

    def terminal_gradient(self, terminal: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.weights, terminal.shape).copy()


class QuadraticMissFunctional:
    """F(g) = |g(t_end) - target|^2, for reachability searches."""

    def __init__(self, target):
        self.target = np.asarray(target, dtype=float)
        self.label = "terminal_miss_sq"

    def evaluate(self, path: ExplosivePath) -> float:
        g = path.state_at(path.horizon)
        if g is DEATH:
            return math.nan
        return float(np.sum((g - self.target) ** 2))

    def terminal_value(self, terminal: np.ndarray) -> np.ndarray:
        return np.sum((terminal - self.target) ** 2, axis=-1)

    def terminal_gradient(self, terminal: np.ndarray) -> np.ndarray:
        return 2.0 * (terminal - self.target)


class RunningMaxAbsFunctional:
    """F(g) = max_t |g_coord(t)| over the grid (no terminal gradient)."""

    def __init__(self, coord: int = 0):
        self.coord = int(coord)
        self.label = f"running_max_abs_x{self.coord + 1}"

    def evaluate(self, path: ExplosivePath) -> float:
        times, states = path.alive_slice()
        if path.explosion_index is not None:
            return math.nan
        return float(np.max(np.abs(states[:, self.coord])))

    def accumulate(self, acc, states_node):
        cur = np.abs(states_node[:, self.coord])
        return cur if acc is None else np.maximum(acc, cur)

    def running_value(self, acc) -> np.ndarray:
        return acc


class CallableFunctional:
    """Wrap an arbitrary path -> float callback (forces finite differences)."""

    def __init__(self, fn: Callable[[ExplosivePath], float], label: str = ""):
        self.fn = fn
        self.label = label

    def evaluate(self, path: ExplosivePath) -> float:
        return float(self.fn(path))


# ---------------------------------------------------------------------------
# Batched integration of the control ODE (one RK4 step per cell)

def _cells(problem: LimitOdeProblem, n_steps: int):
    h = 1.0 / n_steps
    n_full = int(math.floor(problem.t_star / h + 1e-12))
    steps = [(i, h) for i in range(n_full)]
    partial = problem.t_star - n_full * h
    if partial > 1e-12:
        steps.append((n_full, partial))
    return steps


def _batch_call(fn, y, out_shape):
    """Call a coefficient callback on a batch, tolerating scalar-only callbacks."""
    try:
        out = np.asarray(fn(y), dtype=float)
        if out.shape == out_shape:
            return out
    except Exception:
        pass
    return np.stack([np.asarray(fn(row), dtype=float) for row in y])


def _drift_batch(problem, y):
    return _batch_call(problem.limit_drift, y, y.shape)


def _sigma_term(problem, y, u):
    """limit_diffusion(y) @ u for a batch of states and controls."""
    sig = problem.constant_diffusion
    if sig is not None:
        return u @ sig.T
    s = _batch_call(problem.limit_diffusion, y,
                    y.shape + (problem.dim_control,))
    return np.einsum("bdk,bk->bd", s, u)


def _jacobian_batch(problem, y, fd_delta=1e-6):
    if problem.drift_jacobian is not None:
        return _batch_call(problem.drift_jacobian, y,
                           y.shape + (problem.dim_state,))
    d = y.shape[-1]
    jac = np.empty(y.shape + (d,))
    for j in range(d):
        delta = fd_delta * (1.0 + np.abs(y[..., j : j + 1]))
        yp = y.copy()
        yp[..., j] += delta[..., 0]
        ym = y.copy()
        ym[..., j] -= delta[..., 0]
        jac[..., j] = (_drift_batch(problem, yp) - _drift_batch(problem, ym)) / (
            2.0 * delta
        )
    return jac


def _integrate_batch(problem: LimitOdeProblem, u_batch: np.ndarray,
                     store_trajectory: bool = False, functional=None):
    """Integrate a batch of controls; returns (terminal, alive, traj, acc).

    u_batch has shape (B, n_steps, k). When functional has an `accumulate`
    method its running statistic is tracked per node. Dead rows (domain exit
    or non-finite) are frozen and flagged.
    """
    batch, n_steps, _ = u_batch.shape
    steps = _cells(problem, n_steps)
    x = np.broadcast_to(problem.x0, (batch, problem.dim_state)).copy()
    alive = np.ones(batch, dtype=bool)
    check_domain = problem.domain_contains is not trivial_domain
    traj = None
    if store_trajectory:
        traj = np.empty((len(steps) + 1, batch, problem.dim_state))
        traj[0] = x
    acc = None
    if functional is not None and hasattr(functional, "accumulate"):
        acc = functional.accumulate(None, x)

    for row, (cell, h) in enumerate(steps):
        u = u_batch[:, cell, :]

        def rhs(y):
            return _drift_batch(problem, y) + _sigma_term(problem, y, u)

        with np.errstate(over="ignore", invalid="ignore"):
            k1 = rhs(x)
            k2 = rhs(x + 0.5 * h * k1)
            k3 = rhs(x + 0.5 * h * k2)
            k4 = rhs(x + h * k3)
            x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ok = np.all(np.isfinite(x_new), axis=1)
        ok &= np.max(np.abs(np.where(np.isfinite(x_new), x_new, 0.0)), axis=1) <= OVERFLOW_GUARD
        if check_domain:
            for b in np.nonzero(ok & alive)[0]:
                if not problem.domain_contains(x_new[b]):
                    ok[b] = False
        newly_dead = alive & ~ok
        if np.any(newly_dead):
            x_new[newly_dead] = x[newly_dead]  # freeze; row is flagged dead
            alive = alive & ok
        x = np.where(alive[:, None], x_new, x)
        if store_trajectory:
            traj[row + 1] = x
        if acc is not None:
            acc = functional.accumulate(acc, x)
    return x, alive, traj, acc


def _functional_values(problem, functional, u_batch):
    """Functional values for a batch of controls; nan on dead rows."""
    if hasattr(functional, "terminal_value"):
        terminal, alive, _, _ = _integrate_batch(problem, u_batch)
        vals = functional.terminal_value(terminal)
    elif hasattr(functional, "accumulate"):
        terminal, alive, _, acc = _integrate_batch(
            problem, u_batch, functional=functional
        )
        vals = functional.running_value(acc)
    else:
        vals = np.empty(u_batch.shape[0])
        alive = np.ones(u_batch.shape[0], dtype=bool)
        for b in range(u_batch.shape[0]):
            path = solve_control_ode(problem, ControlGrid(u_batch[b]))
            vals[b] = functional.evaluate(path)
            alive[b] = path.explosion_index is None
    vals = np.asarray(vals, dtype=float)
    vals[~alive] = np.nan
    return vals


# ---------------------------------------------------------------------------
# Gradients

def adjoint_gradient(problem: LimitOdeProblem, functional,
                     u_batch: np.ndarray) -> np.ndarray:
    """dF/du via one forward and one backward RK4 sweep per batch row.

    Requires a terminal-gradient functional and constant diffusion. The
    backward equation lambda' = -J_b(g)^T lambda is integrated on the stored
    forward trajectory (states at cell midpoints are interpolated linearly);
    the cell gradient is sigma^T times the trapezoidal average of lambda.
    """
    if problem.constant_diffusion is None:
        raise ValueError("adjoint gradient requires constant_diffusion")
    if not hasattr(functional, "terminal_gradient"):
        raise ValueError("functional does not expose a terminal gradient")
    batch, n_steps, dim_k = u_batch.shape
    steps = _cells(problem, n_steps)
    terminal, alive, traj, _ = _integrate_batch(problem, u_batch,
                                                store_trajectory=True)
    lam = functional.terminal_gradient(terminal)
    sig_t = problem.constant_diffusion.T
    grad = np.zeros_like(u_batch)

    def jt_lam(y, vec):
        jac = _jacobian_batch(problem, y)
        return np.einsum("bij,bi->bj", jac, vec)

    for row in range(len(steps) - 1, -1, -1):
        cell, h = steps[row]
        g_hi = traj[row + 1]
        g_lo = traj[row]
        g_mid = 0.5 * (g_hi + g_lo)
        lam_hi = lam
        m1 = jt_lam(g_hi, lam)
        m2 = jt_lam(g_mid, lam + 0.5 * h * m1)
        m3 = jt_lam(g_mid, lam + 0.5 * h * m2)
        m4 = jt_lam(g_lo, lam + h * m3)
        lam = lam + (h / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4)
        grad[:, cell, :] += 0.5 * h * (lam_hi + lam) @ sig_t.T
    grad[~alive] = 0.0
    return grad


def fd_gradient(problem: LimitOdeProblem, functional, u: np.ndarray,
                fd_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of the functional in the control."""
    n_steps, dim_k = u.shape
    m = n_steps * dim_k
    flat = u.reshape(-1)
    h = fd_step * (1.0 + np.abs(flat))
    pert = np.repeat(flat[None, :], 2 * m, axis=0)
    idx = np.arange(m)
    pert[2 * idx, idx] += h
    pert[2 * idx + 1, idx] -= h
    vals = _functional_values(problem, functional,
                              pert.reshape(2 * m, n_steps, dim_k))
    grad = (vals[0::2] - vals[1::2]) / (2.0 * h)
    return grad.reshape(n_steps, dim_k)


# ---------------------------------------------------------------------------
# Optimizer

@dataclass(frozen=True)
class OptimizerConfig:
    n_steps: int = 1024
    n_restarts: int = 16
    max_iters: int = 500
    tol_value: float = 1e-12
    fd_step: float = 1e-6
    gradient: str = "auto"  # auto | adjoint | fd
    seed: int = 424243
    step_init: float = 1.0
    max_energy: float = 1.0
    extra_starts: tuple = ()


@dataclass
class ExtremalResult:
    """Outcome of an extremal search over the energy ball."""

    value: float
    argext: ControlGrid
    sense: str
    n_restarts_used: int
    convergence_flag: bool
    gradient_norm_at_exit: float
    restart_values: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "value": self.value,
            "sense": self.sense,
            "n_restarts_used": self.n_restarts_used,
            "convergence_flag": bool(self.convergence_flag),
            "gradient_norm_at_exit": self.gradient_norm_at_exit,
            "restart_values": [float(v) for v in self.restart_values],
            "energy": self.argext.energy(),
            "argext": self.argext.values.tolist(),
        }


def _project_batch(u_batch: np.ndarray, max_energy: float) -> np.ndarray:
    n = u_batch.shape[1]
    energy = 0.5 * np.sum(u_batch**2, axis=(1, 2)) / n
    scale = np.where(energy > max_energy,
                     np.sqrt(max_energy / np.maximum(energy, 1e-300)), 1.0)
    return u_batch * scale[:, None, None]


def _initial_bank(problem, config) -> np.ndarray:
    n, k = config.n_steps, problem.dim_control
    starts = []
    for grid in config.extra_starts:
        if grid.n_steps != n or grid.dim != k:
            raise ValueError("extra start has wrong shape")
        starts.append(grid.project(config.max_energy).values)
    const = np.ones((n, k)) / math.sqrt(k)
    const *= math.sqrt(2.0 * 0.9 * config.max_energy)  # energy 0.9 * cap
    starts.append(const)
    starts.append(-const)
    stream = 0
    while len(starts) < config.n_restarts:
        grid = ControlGrid.random_bandlimited(n, k, config.seed, stream=stream)
        starts.append(grid.project(config.max_energy).values)
        stream += 1
    return np.stack(starts[: max(config.n_restarts, len(starts))])


def optimize_extremal(problem: LimitOdeProblem, functional, sense: str,
                      config: Optional[OptimizerConfig] = None) -> ExtremalResult:
    """Extremize a path functional over {energy <= max_energy} controls.

    Projected gradient ascent (sense "max") or descent ("min") with monotone
    backtracking line search and deterministic multi-start. gradient mode
    "auto" picks the adjoint sweep when the functional and problem support it
    and central finite differences otherwise.

    The reported value is recomputed from a single solve_control_ode run at
    the returned control, so value == functional(argext) exactly.
    """
    if sense not in ("max", "min"):
        raise ValueError("sense must be 'max' or 'min'")
    config = config or OptimizerConfig()
    sgn = 1.0 if sense == "max" else -1.0

    mode = config.gradient
    adjoint_ok = (problem.constant_diffusion is not None
                  and hasattr(functional, "terminal_gradient"))
    if mode == "auto":
        mode = "adjoint" if adjoint_ok else "fd"
    if mode == "adjoint" and not adjoint_ok:
        raise ValueError("problem/functional pair does not support adjoint mode")

    u = _project_batch(_initial_bank(problem, config), config.max_energy)
    batch = u.shape[0]
    val = sgn * _functional_values(problem, functional, u)
    val = np.where(np.isnan(val), -np.inf, val)
    step = np.full(batch, config.step_init)
    active = np.ones(batch, dtype=bool)
    stall = np.zeros(batch, dtype=int)

    def gradients(u_now):
        if mode == "adjoint":
            return sgn * adjoint_gradient(problem, functional, u_now)
        out = np.empty_like(u_now)
        for b in range(batch):
            out[b] = sgn * fd_gradient(problem, functional, u_now[b],
                                       config.fd_step)
        return np.nan_to_num(out)

    grad = gradients(u)
    for _ in range(config.max_iters):
        if not np.any(active):
            break
        improved = np.zeros(batch, dtype=bool)
        gain = np.zeros(batch)
        trial = step.copy()
        for _back in range(40):
            pending = active & ~improved
            if not np.any(pending):
                break
            cand = _project_batch(u + trial[:, None, None] * grad,
                                  config.max_energy)
            cand_val = np.full(batch, -np.inf)
            cand_val[pending] = sgn * _functional_values(
                problem, functional, cand[pending]
            )
            cand_val = np.where(np.isnan(cand_val), -np.inf, cand_val)
            good = pending & (cand_val > val + 1e-15 * (1.0 + np.abs(val)))
            gain[good] = cand_val[good] - val[good]
            u[good] = cand[good]
            val[good] = cand_val[good]
            step[good] = trial[good] * 1.5
            improved |= good
            trial[pending & ~good] *= 0.5
        rel_gain = gain / (1.0 + np.abs(val))
        stall = np.where(improved & (rel_gain >= config.tol_value), 0, stall + 1)
        active &= stall < 4
        if np.any(active):
            grad = gradients(u)

    best = int(np.argmax(val))
    argext = ControlGrid(u[best]).project(config.max_energy)
    final_path = solve_control_ode(problem, argext)
    final_value = functional.evaluate(final_path)

    # projected-gradient norm at the exit point, measured along the feasible set
    probe = 1e-7
    moved = _project_batch((u[best] + probe * grad[best])[None], config.max_energy)[0]
    pg_norm = float(np.linalg.norm(moved - u[best]) / probe)

    return ExtremalResult(
        value=float(final_value),
        argext=argext,
        sense=sense,
        n_restarts_used=batch,
        convergence_flag=bool(not active[best]),
        gradient_norm_at_exit=pg_norm,
        restart_values=list(sgn * val),
    )
