"""Explosive SDE systems, driving noise, and path simulation.

State spaces are open subsets of R^d. Paths that leave the domain (or blow up
to non-finite values) are killed at the first grid point outside and continue
as a formal death state; distances to a dead time horizon are infinite.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg


class NumericalFailure(RuntimeError):
    """Coefficient evaluation produced non-finite values at a valid state."""

    def __init__(self, message, state=None, step=None):
        super().__init__(message)
        self.state = state
        self.step = step


class _DeathState:
    """Singleton marker for the cemetery state of an exploded path."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "DEATH"


DEATH = _DeathState()

# States with any coordinate beyond this magnitude count as having left every
# compact subset of the domain: the path is killed rather than allowed to
# overflow inside coefficient callbacks (polynomial drifts up to cubic stay
# representable at the guard).
OVERFLOW_GUARD = 1e100

_UINT64_MASK = (1 << 64) - 1


def state_alive(x: np.ndarray, domain_contains) -> bool:
    return (np.all(np.isfinite(x))
            and float(np.max(np.abs(x))) <= OVERFLOW_GUARD
            and bool(domain_contains(x)))


def _philox(seed: int, stream: int) -> np.random.Generator:
    # Counter-based generator: the (seed, stream) key fully determines the
    # draw sequence, so batches are reproducible regardless of scheduling.
    key = [int(seed) & _UINT64_MASK, int(stream) & _UINT64_MASK]
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class LinearSpec:
    """Affine SDE data dx = (A x + offset) dt + sigma dW with constant sigma."""

    a_matrix: np.ndarray
    sigma: np.ndarray
    offset: Optional[np.ndarray] = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_matrix, dtype=float))
        s = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise ValueError("a_matrix must be square")
        if s.shape[0] != a.shape[0]:
            raise ValueError("sigma row count must match state dimension")
        off = self.offset
        off = np.zeros(a.shape[0]) if off is None else np.asarray(off, dtype=float)
        if off.shape != (a.shape[0],):
            raise ValueError("offset must have shape (d,)")
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "sigma", s)
        object.__setattr__(self, "offset", off)

    @property
    def dim(self) -> int:
        return self.a_matrix.shape[0]

    def _nilpotent_powers(self):
        """Powers [I, A, A^2, ...] up to the nilpotency degree, or None."""
        powers = [np.eye(self.dim)]
        m = np.eye(self.dim)
        for _ in range(self.dim):
            m = m @ self.a_matrix
            if not np.any(m):
                return powers
            powers.append(m)
        return None

    def propagator(self, h: float) -> np.ndarray:
        """exp(A h), in closed form when A is nilpotent."""
        powers = self._nilpotent_powers()
        if powers is None:
            return scipy.linalg.expm(self.a_matrix * h)
        out = np.zeros_like(self.a_matrix)
        for j, p in enumerate(powers):
            out += p * (h**j / math.factorial(j))
        return out

    def drift_integral(self, h: float) -> np.ndarray:
        """int_0^h exp(A s) ds @ offset (deterministic mean increment)."""
        if not np.any(self.offset):
            return np.zeros(self.dim)
        powers = self._nilpotent_powers()
        if powers is None:
            # Append the offset as an extra frozen coordinate and exponentiate.
            aug = np.zeros((self.dim + 1, self.dim + 1))
            aug[: self.dim, : self.dim] = self.a_matrix
            aug[: self.dim, self.dim] = self.offset
            return scipy.linalg.expm(aug * h)[: self.dim, self.dim]
        out = np.zeros(self.dim)
        for j, p in enumerate(powers):
            out += (p @ self.offset) * (h ** (j + 1) / math.factorial(j + 1))
        return out

    def covariance(self, h: float) -> np.ndarray:
        """Transition covariance int_0^h exp(As) sigma sigma^T exp(A^T s) ds.

        Closed-form polynomial in h for nilpotent A; Van Loan's augmented
        exponential otherwise.
        """
        powers = self._nilpotent_powers()
        if powers is None:
            d = self.dim
            q = self.sigma @ self.sigma.T
            aug = np.zeros((2 * d, 2 * d))
            aug[:d, :d] = -self.a_matrix
            aug[:d, d:] = q
            aug[d:, d:] = self.a_matrix.T
            f = scipy.linalg.expm(aug * h)
            return f[d:, d:].T @ f[:d, d:]
        mats = [p @ self.sigma for p in powers]
        cov = np.zeros((self.dim, self.dim))
        for i, mi in enumerate(mats):
            for j, mj in enumerate(mats):
                w = h ** (i + j + 1) / ((i + j + 1) * math.factorial(i) * math.factorial(j))
                cov += w * (mi @ mj.T)
        return 0.5 * (cov + cov.T)


def equilibrated_cholesky(cov: np.ndarray):
    """Factor cov = (D L)(D L)^T with D diagonal, stable across scale spreads.

    Transition covariances of chained integrators have diagonal entries
    spanning many orders of magnitude (t^{2p+1} per coordinate); rescaling by
    sqrt(diag) keeps the Cholesky well conditioned.
    """
    cov = np.asarray(cov, dtype=float)
    diag = np.diag(cov).copy()
    d = np.sqrt(np.where(diag > 0.0, diag, 1.0))
    scaled = cov / np.outer(d, d)
    jitter = 0.0
    for _ in range(6):
        try:
            chol = np.linalg.cholesky(scaled + jitter * np.eye(len(d)))
            return d, chol
        except np.linalg.LinAlgError:
            jitter = max(jitter * 100.0, 1e-14)
    raise NumericalFailure("covariance is not positive definite after jitter")


@dataclass(frozen=True)
class SdeSystem:
    """SDE dx = drift(x) dt + diffusion(x) dB on an open domain of R^d.

    drift maps (d,) -> (d,); diffusion maps (d,) -> (d, k). domain_contains
    returns True on the open set where the dynamics live. linear carries the
    affine representation when one exists (enables the exact transition
    sampler).
    """

    dim_state: int
    dim_noise: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    domain_contains: Callable[[np.ndarray], bool] = lambda x: True
    label: str = ""
    linear: Optional[LinearSpec] = None


@dataclass(frozen=True)
class NoisePath:
    """Brownian increments on a uniform grid, reproducible from (seed, stream).

    increments has shape (n_steps, dim_noise); each row is B_{t+dt} - B_t.
    """

    seed: int
    dt: float
    increments: np.ndarray
    path_index: int = 0

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim != 2:
            raise ValueError("increments must have shape (n_steps, dim_noise)")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "increments", inc)

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def dim_noise(self) -> int:
        return self.increments.shape[1]

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def cumulative(self) -> np.ndarray:
        """Brownian positions on the grid, starting at 0."""
        out = np.zeros((self.n_steps + 1, self.dim_noise))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    def standard_normals(self) -> np.ndarray:
        return self.increments / math.sqrt(self.dt)

    def coarsen(self, factor: int) -> "NoisePath":
        """Aggregate consecutive blocks: the same Brownian path on a coarser grid."""
        if factor < 1 or self.n_steps % factor != 0:
            raise ValueError("factor must divide the number of steps")
        blocks = self.increments.reshape(self.n_steps // factor, factor, self.dim_noise)
        return NoisePath(self.seed, self.dt * factor, blocks.sum(axis=1), self.path_index)

    def negated(self) -> "NoisePath":
        return NoisePath(self.seed, self.dt, -self.increments, self.path_index)


def brownian_path(seed: int, dt: float, horizon: float, dim_noise: int = 1,
                  path_index: int = 0) -> NoisePath:
    """Sample a Brownian increment path on a uniform grid.

    The generator is keyed by (seed, path_index), so distinct paths from the
    same seed never share randomness and re-running any subset reproduces it
    bit for bit.
    """
    if dt <= 0.0 or horizon <= 0.0:
        raise ValueError("dt and horizon must be positive")
    n = int(round(horizon / dt))
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, abs(horizon)):
        raise ValueError("horizon must be an integer multiple of dt")
    rng = _philox(seed, path_index)
    inc = rng.standard_normal((n, dim_noise)) * math.sqrt(dt)
    return NoisePath(seed=seed, dt=dt, increments=inc, path_index=path_index)


@dataclass
class ExplosivePath:
    """Piecewise-linear path on a uniform grid, possibly killed at a grid point.

    states rows at indices >= explosion_index are not meaningful (filled with
    nan); queries there return DEATH. explosion_index = None means the path
    stayed in the domain over the whole grid.
    """

    times: np.ndarray
    states: np.ndarray
    explosion_index: Optional[int] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.states, dtype=float)
        if t.ndim != 1 or x.ndim != 2 or x.shape[0] != t.shape[0]:
            raise ValueError("times (n,) and states (n, d) must align")
        if t[0] != 0.0 or (len(t) > 1 and np.any(np.diff(t) <= 0.0)):
            raise ValueError("times must increase from 0")
        if self.explosion_index is not None and not (
            0 < self.explosion_index < len(t)
        ):
            raise ValueError("explosion_index out of range")
        self.times = t
        self.states = x

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def explosion_time(self) -> float:
        if self.explosion_index is None:
            return math.inf
        return float(self.times[self.explosion_index])

    def state_at(self, t: float):
        """Linear interpolation on the grid; DEATH at or after explosion."""
        if t < 0.0:
            raise ValueError("t must be nonnegative")
        if t >= self.explosion_time:
            return DEATH
        if t > self.horizon + 1e-12 * max(1.0, self.horizon):
            raise ValueError("t beyond path horizon")
        t = min(t, self.horizon)
        return np.array(
            [np.interp(t, self.times, self.states[:, j]) for j in range(self.dim)]
        )

    def alive_slice(self) -> "tuple[np.ndarray, np.ndarray]":
        """(times, states) restricted to the grid points before explosion."""
        end = len(self.times) if self.explosion_index is None else self.explosion_index
        return self.times[:end], self.states[:end]


def path_distance(g: ExplosivePath, h: ExplosivePath, s: float) -> float:
    """Uniform distance sup_{u <= s} |g_u - h_u|, infinite past either explosion.

    Both paths must cover [0, s] (either by their grid or by exploding before
    s). Cross-grid comparison interpolates linearly onto the merged grid.
    """
    if s < 0.0:
        raise ValueError("s must be nonnegative")
    if g.dim != h.dim:
        raise ValueError("dimension mismatch")
    if s >= g.explosion_time or s >= h.explosion_time:
        return math.inf
    for p in (g, h):
        if s > p.horizon + 1e-12 * max(1.0, s):
            raise ValueError("path horizon does not cover [0, s]")
    grid = np.union1d(g.times[g.times <= s], h.times[h.times <= s])
    grid = np.union1d(grid, [s])
    gv = np.column_stack(
        [np.interp(grid, g.times, g.states[:, j]) for j in range(g.dim)]
    )
    hv = np.column_stack(
        [np.interp(grid, h.times, h.states[:, j]) for j in range(h.dim)]
    )
    return float(np.max(np.linalg.norm(gv - hv, axis=1)))


def _check_coeff(value: np.ndarray, what: str, state: np.ndarray, step: int):
    if not np.all(np.isfinite(value)):
        raise NumericalFailure(
            f"{what} evaluated to non-finite values at step {step}",
            state=state, step=step,
        )


def simulate_sde(system: SdeSystem, x0, noise: NoisePath, scheme: str = "euler",
                 horizon: Optional[float] = None) -> ExplosivePath:
    """Simulate the system along the given noise.

    Parameters
    ----------
    system : SdeSystem
    x0 : array_like, shape (d,)
        Initial state; must lie in the domain.
    noise : NoisePath
        For scheme "euler" this carries Brownian increments with
        dim_noise = system.dim_noise. For scheme "exact_linear" the system
        must declare `linear`, and the noise supplies one standard normal
        d-vector per step (dim_noise = system.dim_state, increments scaled
        by sqrt(dt) as usual); the step is an exact draw from the Gaussian
        transition kernel.
    horizon : float, optional
        Defaults to the noise horizon; must not exceed it.

    Explosion is declared at the first grid point whose state is outside the
    domain or non-finite; later rows are nan. Non-finite coefficient values
    at an in-domain state raise NumericalFailure.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (system.dim_state,):
        raise ValueError("x0 has wrong shape")
    if not np.all(np.isfinite(x0)) or not system.domain_contains(x0):
        raise ValueError("x0 must be a finite state inside the domain")
    if horizon is None:
        horizon = noise.horizon
    n = int(round(horizon / noise.dt))
    if n < 1 or abs(n * noise.dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("horizon must be an integer multiple of noise.dt")
    if n > noise.n_steps:
        raise ValueError("horizon exceeds the noise horizon")

    dt = noise.dt
    times = dt * np.arange(n + 1)
    states = np.full((n + 1, system.dim_state), np.nan)
    states[0] = x0
    explosion = None

    if scheme == "euler":
        if noise.dim_noise != system.dim_noise:
            raise ValueError("noise dimension does not match system.dim_noise")
        x = x0.copy()
        for i in range(n):
            with np.errstate(over="ignore", invalid="ignore"):
                b = np.asarray(system.drift(x), dtype=float)
                _check_coeff(b, "drift", x, i)
                sig = np.asarray(system.diffusion(x), dtype=float)
                _check_coeff(sig, "diffusion", x, i)
                x = x + b * dt + sig @ noise.increments[i]
            if not state_alive(x, system.domain_contains):
                explosion = i + 1
                break
            states[i + 1] = x
    elif scheme == "exact_linear":
        lin = system.linear
        if lin is None:
            raise ValueError("exact_linear requires a system with linear structure")
        if noise.dim_noise != system.dim_state:
            raise ValueError(
                "exact_linear consumes one standard normal per state coordinate; "
                "supply noise with dim_noise = dim_state"
            )
        prop = lin.propagator(dt)
        mean_inc = lin.drift_integral(dt)
        d_scale, chol = equilibrated_cholesky(lin.covariance(dt))
        z = noise.standard_normals()
        x = x0.copy()
        for i in range(n):
            x = prop @ x + mean_inc + d_scale * (chol @ z[i])
            if not state_alive(x, system.domain_contains):
                explosion = i + 1
                break
            states[i + 1] = x
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    return ExplosivePath(times=times, states=states, explosion_index=explosion)


# ---------------------------------------------------------------------------
# Serialization: CSV columns t, x1..xd, exploded; JSON mirrors the fields.

def path_to_csv(path: ExplosivePath, fp) -> None:
    close = False
    if isinstance(fp, (str, bytes)):
        fp = open(fp, "w", newline="", encoding="utf-8")
        close = True
    try:
        writer = csv.writer(fp)
        writer.writerow(["t"] + [f"x{j + 1}" for j in range(path.dim)] + ["exploded"])
        expl = path.explosion_index
        for i, t in enumerate(path.times):
            dead = expl is not None and i >= expl
            row = [repr(float(t))]
            row += ["" if dead else repr(float(v)) for v in path.states[i]]
            row.append("1" if dead else "0")
            writer.writerow(row)
    finally:
        if close:
            fp.close()


def path_from_csv(fp) -> ExplosivePath:
    close = False
    if isinstance(fp, (str, bytes)):
        fp = open(fp, "r", newline="", encoding="utf-8")
        close = True
    try:
        reader = csv.reader(fp)
        header = next(reader)
        dim = len(header) - 2
        times, states, explosion = [], [], None
        for i, row in enumerate(reader):
            times.append(float(row[0]))
            if row[-1] == "1":
                if explosion is None:
                    explosion = i
                states.append([math.nan] * dim)
            else:
                states.append([float(v) for v in row[1 : 1 + dim]])
        return ExplosivePath(np.array(times), np.array(states), explosion)
    finally:
        if close:
            fp.close()


def path_to_json_dict(path: ExplosivePath) -> dict:
    return {
        "times": [float(t) for t in path.times],
        "states": [
            None
            if (path.explosion_index is not None and i >= path.explosion_index)
            else [float(v) for v in row]
            for i, row in enumerate(path.states)
        ],
        "explosion_index": path.explosion_index,
    }


def path_from_json_dict(doc: dict) -> ExplosivePath:
    times = np.asarray(doc["times"], dtype=float)
    expl = doc.get("explosion_index")
    dim = next(len(r) for r in doc["states"] if r is not None)
    states = np.array(
        [[math.nan] * dim if r is None else r for r in doc["states"]], dtype=float
    )
    return ExplosivePath(times, states, expl)


def path_to_csv_string(path: ExplosivePath) -> str:
    buf = io.StringIO()
    path_to_csv(path, buf)
    return buf.getvalue()


def path_to_json_string(path: ExplosivePath) -> str:
    return json.dumps(path_to_json_dict(path), sort_keys=True)
