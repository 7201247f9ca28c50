"""Dirichlet data model and closed-form identities: mean, uncertainties, entropy, KL, sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .specfn import digamma, ln_gamma


@dataclass(frozen=True)
class DirichletParams:
    """Concentration vector of a Dirichlet over C >= 2 classes, every entry >= 1."""

    alpha: tuple[float, ...]

    def __init__(self, alpha: Sequence[float]):
        alpha = tuple(float(a) for a in alpha)
        if len(alpha) < 2:
            raise ValueError(f"need at least 2 classes, got {len(alpha)}")
        for a in alpha:
            if not math.isfinite(a) or a < 1.0:
                raise ValueError(f"concentrations must be finite and >= 1, got {a!r}")
        object.__setattr__(self, "alpha", alpha)

    @property
    def n_classes(self) -> int:
        return len(self.alpha)

    @property
    def alpha0(self) -> float:
        return math.fsum(self.alpha)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.alpha, dtype=float)


@dataclass(frozen=True)
class SimplexVector:
    """Probability vector: nonnegative entries summing to 1 within 1e-12."""

    p: tuple[float, ...]

    def __init__(self, p: Sequence[float]):
        p = tuple(float(v) for v in p)
        if any(v < 0.0 or not math.isfinite(v) for v in p):
            raise ValueError("simplex entries must be finite and nonnegative")
        total = math.fsum(p)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"simplex entries sum to {total!r}, expected 1")
        object.__setattr__(self, "p", p)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.p, dtype=float)


def _check_class_index(d: DirichletParams, c: int) -> int:
    c = int(c)
    if not 0 <= c < d.n_classes:
        raise IndexError(f"class index {c} out of range for {d.n_classes} classes")
    return c


def ln_beta_vector(d: DirichletParams) -> float:
    """ln of the multivariate beta function B(alpha)."""
    return math.fsum(ln_gamma(a) for a in d.alpha) - ln_gamma(d.alpha0)


def mean_probability(d: DirichletParams) -> SimplexVector:
    """Expected class probabilities alpha_k / alpha0."""
    a0 = d.alpha0
    return SimplexVector(tuple(a / a0 for a in d.alpha))


def epistemic_uncertainty(d: DirichletParams) -> float:
    """C / alpha0: large when total evidence is small, 1 at the flat prior."""
    return d.n_classes / d.alpha0


def aleatoric_uncertainty(d: DirichletParams) -> float:
    """Negative maximum expected class probability."""
    return -max(mean_probability(d).p)


def dirichlet_entropy(d: DirichletParams) -> float:
    """Differential entropy of Dir(alpha)."""
    a0 = d.alpha0
    value = ln_beta_vector(d) + (a0 - d.n_classes) * digamma(a0)
    value -= math.fsum((a - 1.0) * digamma(a) for a in d.alpha)
    return value


def dirichlet_kl(d: DirichletParams, target: DirichletParams) -> float:
    """KL divergence KL(Dir(alpha) || Dir(alpha_hat)); zero iff the parameters agree."""
    if d.n_classes != target.n_classes:
        raise ValueError(
            f"dimension mismatch: {d.n_classes} vs {target.n_classes} classes"
        )
    a0 = d.alpha0
    psi_a0 = digamma(a0)
    cross = math.fsum(
        (a - t) * (digamma(a) - psi_a0) for a, t in zip(d.alpha, target.alpha)
    )
    return ln_beta_vector(target) - ln_beta_vector(d) + cross


def expected_p_log_p(d: DirichletParams, c: int) -> float:
    """E[p_c ln p_c] = (alpha_c/alpha0) [psi(alpha_c + 1) - psi(alpha0 + 1)]; always <= 0."""
    c = _check_class_index(d, c)
    a0 = d.alpha0
    ac = d.alpha[c]
    return ac / a0 * (digamma(ac + 1.0) - digamma(a0 + 1.0))


def expected_categorical_entropy(d: DirichletParams) -> float:
    """E[H(p)] under Dir(alpha); lies in [0, ln C]."""
    return -math.fsum(expected_p_log_p(d, k) for k in range(d.n_classes))


def gamma_variates(shape: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Gamma(shape, 1) draws, one per entry, via the Marsaglia-Tsang squeeze method.

    Shapes below 1 use the standard boost: draw for shape+1 and scale by
    U^(1/shape). Consumption of the stream depends only on the rng state, so a
    fixed seed reproduces draws bit-exactly.
    """
    a = np.asarray(shape, dtype=float)
    if a.size == 0:
        return np.empty(a.shape)
    if not np.all(np.isfinite(a)) or np.any(a <= 0.0):
        raise ValueError("gamma shapes must be positive and finite")
    flat = a.reshape(-1)
    boosted = flat < 1.0
    d = np.where(boosted, flat + 1.0, flat) - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(flat.shape)
    pending = np.arange(flat.size)
    while pending.size:
        x = rng.standard_normal(pending.size)
        u = rng.random(pending.size)
        dp = d[pending]
        v = (1.0 + c[pending] * x) ** 3
        pos = v > 0.0
        accept = pos & (u < 1.0 - 0.0331 * x**4)
        log_needed = pos & ~accept
        if log_needed.any():
            vl = np.where(log_needed, v, 1.0)
            accept |= log_needed & (
                np.log(u) < 0.5 * x * x + dp * (1.0 - v + np.log(vl))
            )
        out[pending[accept]] = dp[accept] * v[accept]
        pending = pending[~accept]
    if boosted.any():
        out[boosted] *= rng.random(boosted.sum()) ** (1.0 / flat[boosted])
    return out.reshape(a.shape)


def sample(d: DirichletParams, rng: np.random.Generator) -> SimplexVector:
    """One draw p ~ Dir(alpha) via normalized independent Gamma(alpha_k, 1) variates."""
    g = gamma_variates(d.as_array(), rng)
    return SimplexVector(tuple(g / g.sum()))


def sample_array(d: DirichletParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """(n, C) array of Dirichlet draws; the workhorse behind the Monte-Carlo oracles."""
    shape = np.broadcast_to(d.as_array(), (int(n), d.n_classes))
    g = gamma_variates(shape, rng)
    return g / g.sum(axis=1, keepdims=True)
