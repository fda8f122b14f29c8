"""Small-time rescaling machinery: contraction families and asymptotic indices.

A contraction family shrinks space around a center point by a positive
multi-index alpha; an asymptotic index turns the time scale eps into the
spatial multi-index alpha = psi(eps). Together they map a path x on [0, eps]
to the rescaled path y_t = Phi_{psi(eps)}(x_{eps t}) on [0, 1], and an SDE to
its rescaled coefficient family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .sde import ExplosivePath, SdeSystem

# Validity ceiling for index evaluation: keeps the iterated logarithm
# strictly above 1 so every power-log coordinate stays monotone near the edge.
EPS_CEILING = 0.99 * math.exp(-math.e)


def rate_scale(eps: float) -> float:
    """Iterated logarithm loglog(1/eps); positive for eps < 1/e."""
    if not 0.0 < eps < math.exp(-1.0):
        raise ValueError("rate_scale requires 0 < eps < 1/e")
    return math.log(math.log(1.0 / eps))


def driving_scale(eps: float) -> float:
    """Noise damping 1/sqrt(loglog(1/eps)) applied to the rescaled driver."""
    return 1.0 / math.sqrt(rate_scale(eps))


def power_log_value(ell: int, k: int, eps: float) -> float:
    """Closed form sqrt(eps^ell * loglog(1/eps)^k), no validity window applied."""
    return power_log_from_log(ell, k, math.log(eps))


def power_log_from_log(ell: int, k: int, log_eps: float) -> float:
    """Same closed form from log(eps); stable for extremely small eps."""
    if log_eps >= -1.0:
        raise ValueError("requires eps < 1/e")
    log_big_l = math.log(math.log(-log_eps))
    return math.exp(0.5 * (ell * log_eps + k * log_big_l))


@dataclass(frozen=True)
class AsymptoticIndex:
    """Multi-index eps -> (sqrt(eps^l_i loglog(1/eps)^k_i))_i on (0, eps_star].

    exponents is a sequence of (l_i, k_i) integer pairs with l_i >= 1 and
    k_i >= 0. eps_star bounds the validity window; it is capped below
    0.99 * e^-e and must keep every coordinate strictly increasing.
    """

    exponents: tuple
    eps_star: float = 1e-2

    def __post_init__(self):
        exps = tuple((int(l), int(k)) for l, k in self.exponents)
        for l, k in exps:
            if l < 1 or k < 0:
                raise ValueError("exponents must satisfy l >= 1, k >= 0")
        if not 0.0 < self.eps_star <= EPS_CEILING:
            raise ValueError(f"eps_star must lie in (0, {EPS_CEILING:.6g}]")
        # Strict increase of eps^l L^k needs l * log(1/eps) * L > k at eps_star
        # (the left side grows as eps decreases, so the window is safe below).
        log_inv = math.log(1.0 / self.eps_star)
        big_l = math.log(log_inv)
        for l, k in exps:
            if l * log_inv * big_l <= k:
                raise ValueError(
                    f"coordinate (l={l}, k={k}) is not increasing at eps_star="
                    f"{self.eps_star:g}; shrink eps_star"
                )
        object.__setattr__(self, "exponents", exps)

    @property
    def dim(self) -> int:
        return len(self.exponents)


def eval_index(psi: AsymptoticIndex, eps: float) -> np.ndarray:
    """Evaluate the multi-index at eps inside the validity window."""
    if not 0.0 < eps <= psi.eps_star:
        raise ValueError(
            f"eps={eps:g} outside validity window (0, {psi.eps_star:g}]"
        )
    log_eps = math.log(eps)
    return np.array([power_log_from_log(l, k, log_eps) for l, k in psi.exponents])


@dataclass(frozen=True)
class ContractionFamily:
    """Family of space contractions indexed by positive alpha.

    kind "diagonal" and "shifted_diagonal": y -> center + (y - center) / alpha,
    an affine bijection fixing the center (diagonal means center = 0).
    kind "affine_detrended" additionally removes a deterministic linear trend
    drift_vector * t before shrinking and restores it afterwards; the trend
    only enters path rescaling, the spatial action at a fixed time matches the
    shifted family.
    """

    kind: str
    center: np.ndarray
    drift_vector: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("diagonal", "shifted_diagonal", "affine_detrended"):
            raise ValueError(f"unknown contraction kind {self.kind!r}")
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if self.kind == "diagonal" and np.any(c != 0.0):
            raise ValueError("diagonal kind requires center = 0")
        v = self.drift_vector
        v = np.zeros_like(c) if v is None else np.asarray(v, dtype=float)
        if v.shape != c.shape:
            raise ValueError("drift_vector must match center shape")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "drift_vector", v)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def apply(self, alpha, y):
        alpha = np.asarray(alpha, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.center + (y - self.center) / alpha

    def apply_inverse(self, alpha, y):
        alpha = np.asarray(alpha, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.center + (y - self.center) * alpha


def rescale_path(path: ExplosivePath, phi: ContractionFamily,
                 psi: AsymptoticIndex, eps: float) -> ExplosivePath:
    """Map x on [0, horizon] to y_t = Phi_{psi(eps)}(x_{eps t}) on [0, horizon/eps].

    For the affine_detrended kind the deterministic trend center + t * v is
    subtracted at the original time scale and restored at the rescaled one.
    Explosion carries over at the same grid index.
    """
    alpha = eval_index(psi, eps)
    t_out = path.times / eps
    trend_out = np.outer(t_out, phi.drift_vector)
    trend_in = eps * trend_out
    with np.errstate(invalid="ignore"):
        states = phi.center + trend_out + (path.states - phi.center - trend_in) / alpha
    if path.explosion_index is not None:
        states[path.explosion_index:] = np.nan
    return ExplosivePath(times=t_out, states=states,
                         explosion_index=path.explosion_index)


def transformed_coefficients(system: SdeSystem, phi: ContractionFamily,
                             psi: AsymptoticIndex, eps: float) -> SdeSystem:
    """Coefficient family (b_eps, sigma_eps) of the rescaled process.

    For an affine contraction the generator term reduces to first order, so

        b_eps(y)     = eps * drift(Phi^{-1} y) / alpha
        sigma_eps(y) = sqrt(eps * loglog(1/eps)) * diffusion(Phi^{-1} y) / alpha

    row by row, with alpha = psi(eps). The rescaled SDE is driven by
    sigma_eps / sqrt(loglog(1/eps)); see rescaled_sde_system. Only the
    diagonal kinds are accepted: the detrended family is time dependent and
    has no autonomous coefficient transform.
    """
    if phi.kind == "affine_detrended":
        raise ValueError("transformed_coefficients requires a diagonal kind")
    alpha = eval_index(psi, eps)
    noise_gain = math.sqrt(eps * rate_scale(eps))
    center = phi.center

    def pullback(y):
        return center + np.asarray(y, dtype=float) * alpha - center * alpha

    def b_eps(y):
        return eps * np.asarray(system.drift(pullback(y)), dtype=float) / alpha

    def sigma_eps(y):
        sig = np.asarray(system.diffusion(pullback(y)), dtype=float)
        return noise_gain * sig / alpha[:, None]

    def domain(y):
        return system.domain_contains(pullback(y))

    return SdeSystem(
        dim_state=system.dim_state,
        dim_noise=system.dim_noise,
        drift=b_eps,
        diffusion=sigma_eps,
        domain_contains=domain,
        label=f"{system.label}|rescaled(eps={eps:g})",
    )


def rescaled_sde_system(system: SdeSystem, phi: ContractionFamily,
                        psi: AsymptoticIndex, eps: float) -> SdeSystem:
    """Simulatable rescaled system: diffusion sigma_eps damped by 1/sqrt(loglog)."""
    base = transformed_coefficients(system, phi, psi, eps)
    damp = driving_scale(eps)

    def sigma(y):
        return damp * base.diffusion(y)

    return SdeSystem(
        dim_state=base.dim_state,
        dim_noise=base.dim_noise,
        drift=base.drift,
        diffusion=sigma,
        domain_contains=base.domain_contains,
        label=base.label + "|driven",
    )


# ---------------------------------------------------------------------------
# Property checkers. These are statistical evidence on sampled probes, not
# proofs; reports serialize to JSON.

@dataclass
class PropertyReport:
    name: str
    passed: bool
    worst: dict = field(default_factory=dict)
    table: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "property": self.name,
            "passed": bool(self.passed),
            "worst_sample": self.worst,
            "table": self.table,
        }


def default_family_probes(dim: int, seed: int = 0, n_samples: int = 64,
                          n_alpha: int = 12, box: float = 2.0):
    """Random (y, z) sample pairs and comparable (alpha, beta) index pairs."""
    rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), 77]))
    samples = rng.uniform(-box, box, size=(n_samples, 2, dim))
    beta = np.exp(rng.uniform(math.log(1e-3), 0.0, size=(n_alpha, dim)))
    ratio = np.exp(rng.uniform(0.0, math.log(20.0), size=(n_alpha, dim)))
    alphas = np.stack([beta * ratio, beta], axis=1)
    return samples, alphas


def check_contraction_family(phi, sample_pairs, alpha_pairs,
                             tolerance: float = 1e-9) -> PropertyReport:
    """Check the three contraction-family properties on sampled probes.

    (i) the center is fixed by every map; (ii) larger indices contract at
    least as much on every sampled pair; (iii) the composition modulus
    |Phi_a(Phi_b^{-1}(y)) - y| shrinks with the index deviation
    |a / b - 1|. phi may be any object with apply/apply_inverse/center.

    sample_pairs: (m, 2, d) state pairs. alpha_pairs: (p, 2, d) index pairs,
    ordered alpha >= beta componentwise for the comparison property
    (incomparable rows are used for (iii) only).
    """
    sample_pairs = np.asarray(sample_pairs, dtype=float)
    alpha_pairs = np.asarray(alpha_pairs, dtype=float)
    center = np.asarray(phi.center, dtype=float)
    ys = sample_pairs.reshape(-1, sample_pairs.shape[-1])
    radius = float(np.max(np.linalg.norm(ys - center, axis=1)))

    worst = {"property": None, "violation": 0.0}
    passed = True
    table = []

    def note(prop, violation, detail):
        nonlocal passed
        if violation > worst["violation"]:
            worst.update({"property": prop, "violation": float(violation), **detail})
        if violation > 0.0:
            passed = False

    # (i) fixed center
    for pair in alpha_pairs:
        for alpha in pair:
            drift = float(np.max(np.abs(phi.apply(alpha, center) - center)))
            note("fixed_center", max(0.0, drift - tolerance),
                 {"alpha": alpha.tolist(), "value": drift})

    # (ii) monotone contraction for comparable pairs
    for alpha, beta in alpha_pairs:
        if not np.all(alpha >= beta):
            continue
        for y, z in sample_pairs:
            da = float(np.linalg.norm(phi.apply(alpha, y) - phi.apply(alpha, z)))
            db = float(np.linalg.norm(phi.apply(beta, y) - phi.apply(beta, z)))
            viol = da - db - tolerance * (1.0 + db)
            note("monotone_contraction", max(0.0, viol),
                 {"alpha": alpha.tolist(), "beta": beta.tolist(), "gap": da - db})

    # (iii) composition modulus controlled by the index deviation
    for alpha, beta in alpha_pairs:
        delta = float(np.max(np.abs(alpha / beta - 1.0)))
        modulus = 0.0
        for y in ys:
            back = phi.apply(alpha, phi.apply_inverse(beta, y))
            modulus = max(modulus, float(np.max(np.abs(back - y))))
        table.append({"index_deviation": delta, "modulus": modulus})
        if delta <= 0.5:
            viol = modulus - (3.0 * delta * radius + tolerance)
            note("composition_modulus", max(0.0, viol),
                 {"index_deviation": delta, "modulus": modulus})

    table.sort(key=lambda row: row["index_deviation"])
    return PropertyReport("contraction_family", passed, worst, table)


def check_asymptotic_index(psi: AsymptoticIndex, c: float, j_range,
                           tolerance: float) -> PropertyReport:
    """Ratio stability over geometric brackets [c^{j+1}, c^j].

    For each probed j the worst ratio deviation max_i |psi_i(d1)/psi_i(d2) - 1|
    over d1, d2 in the bracket is attained at the endpoints because every
    coordinate is monotone; the report records it per j and the first probed
    j from which the deviation stays below tolerance.
    """
    if not 0.0 < c < 1.0:
        raise ValueError("c must lie in (0, 1)")
    j_lo, j_hi = int(j_range[0]), int(j_range[1])
    if j_lo < 0 or j_hi < j_lo:
        raise ValueError("bad j_range")
    if j_hi - j_lo + 1 > 64:
        js = np.unique(np.round(np.geomspace(max(j_lo, 1), j_hi, 64)).astype(int))
        js = np.unique(np.concatenate([[j_lo], js, [j_hi]]))
        js = js[(js >= j_lo) & (js <= j_hi)]
    else:
        js = np.arange(j_lo, j_hi + 1)

    log_c = math.log(c)
    table = []
    for j in js:
        log_hi = j * log_c        # log of c^j
        log_lo = (j + 1) * log_c
        if log_hi >= -1.0:        # bracket reaches eps >= 1/e, undefined there
            raise ValueError(f"bracket at j={j} leaves the validity range")
        dev = 0.0
        for l, k in psi.exponents:
            log_ratio = (
                0.5 * (l * (log_hi - log_lo)
                       + k * (math.log(math.log(-log_hi))
                              - math.log(math.log(-log_lo))))
            )
            dev = max(dev, abs(math.expm1(log_ratio)))
        table.append({"j": int(j), "deviation": dev})

    first_ok = None
    for row in reversed(table):
        if row["deviation"] < tolerance:
            first_ok = row["j"]
        else:
            break
    passed = first_ok is not None
    worst = max(table, key=lambda r: r["deviation"])
    report = PropertyReport("asymptotic_index_ratio", passed,
                            {"max_deviation": worst["deviation"], "at_j": worst["j"],
                             "first_j_below_tolerance": first_ok},
                            table)
    return report
