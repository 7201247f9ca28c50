"""Loss functions: evidential family (UCE, UFCE, EUS, ER, combined) and deterministic baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .dirichlet import DirichletParams, SimplexVector, dirichlet_kl
from .specfn import digamma, ln_gamma

# Fixed weight of the energy-bound penalty inside the energy-bounded objectives.
ENERGY_BOUND_WEIGHT = 1e-4

ROLE_ID = "ID"
ROLE_PSEUDO_OOD = "pseudo-OOD"


class SaturationError(ValueError):
    """A probability hit zero where a log is required."""


@dataclass(frozen=True)
class LossConfig:
    """Hyperparameters shared by all loss kinds.

    gamma: focal exponent; beta: smoothing-regularizer weight; lambda_: weight
    of the flat-prior target loss on pseudo-OOD samples; xi: evidence-scaling
    strength; temperature and the two margins parameterize the energy scores.
    """

    gamma: float = 1.0
    beta: float = 0.001
    lambda_: float = 0.01
    xi: float = 64.0
    temperature: float = 1.0
    m_in: float = -6.0
    m_out: float = -2.0
    positive_class_weight: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 5.0:
            raise ValueError(f"gamma must lie in [0, 5], got {self.gamma!r}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be positive, got {self.temperature!r}")
        for name in ("beta", "lambda_", "xi"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        if self.positive_class_weight <= 0.0:
            raise ValueError("positive_class_weight must be positive")


@dataclass(frozen=True)
class SupervisedSample:
    """One training sample: predicted concentrations plus its supervision role."""

    alpha: DirichletParams
    true_class: int | None = None
    role: str = ROLE_ID

    def __post_init__(self):
        if self.role not in (ROLE_ID, ROLE_PSEUDO_OOD):
            raise ValueError(f"unknown role {self.role!r}")
        if (self.true_class is not None) != (self.role == ROLE_ID):
            raise ValueError("true_class must be present exactly for ID samples")


def _check_index(alpha: DirichletParams, c_star: int) -> int:
    c_star = int(c_star)
    if not 0 <= c_star < alpha.n_classes:
        raise IndexError(
            f"class index {c_star} out of range for {alpha.n_classes} classes"
        )
    return c_star


def uce(alpha: DirichletParams, c_star: int) -> float:
    """Expected cross-entropy under Dir(alpha): psi(alpha0) - psi(alpha_{c*})."""
    c_star = _check_index(alpha, c_star)
    return digamma(alpha.alpha0) - digamma(alpha.alpha[c_star])


def uce_digamma_sum(alpha_c: float, n_classes: int) -> float:
    """UCE as a finite harmonic-style sum under alpha0 = alpha_c + K - 1."""
    if alpha_c < 1.0:
        raise ValueError("alpha_c must be >= 1")
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    return math.fsum(1.0 / (alpha_c + k) for k in range(n_classes - 1))


def _ln_beta_ratio(alpha0: float, alpha_c: float, gamma: float) -> float:
    # ln[ G(alpha0) G(alpha0 - alpha_c + gamma) / (G(alpha0 + gamma) G(alpha0 - alpha_c)) ]
    return (
        ln_gamma(alpha0)
        + ln_gamma(alpha0 - alpha_c + gamma)
        - ln_gamma(alpha0 + gamma)
        - ln_gamma(alpha0 - alpha_c)
    )


def ufce(alpha: DirichletParams, c_star: int, gamma: float) -> float:
    """Expected focal cross-entropy under Dir(alpha), evaluated in log-gamma space."""
    c_star = _check_index(alpha, c_star)
    if gamma < 0.0:
        raise ValueError(f"gamma must be nonnegative, got {gamma!r}")
    if gamma == 0.0:
        # exact reduction; keeps gamma=0 runs bit-identical to the plain loss
        return uce(alpha, c_star)
    a0 = alpha.alpha0
    ac = alpha.alpha[c_star]
    value = math.exp(_ln_beta_ratio(a0, ac, gamma)) * (digamma(a0 + gamma) - digamma(ac))
    if not math.isfinite(value):
        raise ArithmeticError(
            f"non-finite focal expectation for alpha0={a0!r}, alpha_c={ac!r}, gamma={gamma!r}"
        )
    return value


def ufce_integer_gamma(alpha_c: float, n_classes: int, gamma: int) -> float:
    """Gamma-ratio form of the focal expectation for integer gamma >= 1, alpha0 = alpha_c + K - 1."""
    if not float(gamma).is_integer() or gamma < 1:
        raise ValueError(f"gamma must be a positive integer, got {gamma!r}")
    gamma = int(gamma)
    if alpha_c < 1.0 or n_classes < 2:
        raise ValueError("need alpha_c >= 1 and at least 2 classes")
    a0 = alpha_c + n_classes - 1
    ratio = math.exp(
        ln_gamma(a0) + ln_gamma(n_classes - 1 + gamma)
        - ln_gamma(a0 + gamma) - ln_gamma(n_classes - 1)
    )
    return ratio * math.fsum(1.0 / (alpha_c + k) for k in range(n_classes - 1 + gamma))


def ent_regularizer(alpha: DirichletParams) -> float:
    """KL from Dir(alpha) to the flat prior; penalizes peaked predictions."""
    flat = DirichletParams((1.0,) * alpha.n_classes)
    return dirichlet_kl(alpha, flat)


def uce_ent_objective(alpha: DirichletParams, c_star: int, beta: float) -> float:
    """UCE plus beta times the flat-prior KL (smoothing direction)."""
    if beta < 0.0:
        raise ValueError("beta must be nonnegative")
    value = uce(alpha, c_star)
    if beta:
        value += beta * ent_regularizer(alpha)
    return value


def eus_multiplier(alpha0: float, n_classes: int, xi: float) -> float:
    """Per-sample weight 1 + C xi / alpha0, larger for low-evidence samples."""
    if alpha0 < n_classes:
        raise ValueError("alpha0 must be at least the class count")
    if xi < 0.0:
        raise ValueError("xi must be nonnegative")
    return 1.0 + n_classes * xi / alpha0


def ufce_eus(alpha: DirichletParams, c_star: int, gamma: float, xi: float) -> float:
    """Evidence-scaled focal expectation.

    The multiplier is a constant with respect to gradients: differentiation
    treats it as frozen at the current alpha0 (see gradients module).
    """
    return eus_multiplier(alpha.alpha0, alpha.n_classes, xi) * ufce(alpha, c_star, gamma)


def er_loss(alpha: DirichletParams) -> float:
    """Flat-prior KL used as the target loss on pseudo-OOD samples."""
    return ent_regularizer(alpha)


def combined_objective(batch: Sequence[SupervisedSample], cfg: LossConfig) -> float:
    """Mean evidence-scaled focal loss over ID samples plus lambda_ times the mean pseudo-OOD target loss."""
    if not batch:
        raise ValueError("batch must be nonempty")
    id_terms = [
        ufce_eus(s.alpha, s.true_class, cfg.gamma, cfg.xi)
        for s in batch
        if s.role == ROLE_ID
    ]
    if not id_terms:
        raise ValueError("batch contains no ID samples")
    ood_terms = [er_loss(s.alpha) for s in batch if s.role == ROLE_PSEUDO_OOD]
    value = math.fsum(id_terms) / len(id_terms)
    if ood_terms:
        value += cfg.lambda_ * math.fsum(ood_terms) / len(ood_terms)
    return value


def cross_entropy(p: SimplexVector, c_star: int) -> float:
    """Negative log probability of the true class."""
    c_star = int(c_star)
    if not 0 <= c_star < len(p.p):
        raise IndexError(f"class index {c_star} out of range")
    pc = p.p[c_star]
    if pc == 0.0:
        raise SaturationError("true-class probability is exactly zero")
    return -math.log(pc)


def focal(p: SimplexVector, c_star: int, gamma: float) -> float:
    """Focal loss -(1 - p_{c*})^gamma ln p_{c*}; equals cross-entropy at gamma 0."""
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    base = cross_entropy(p, c_star)
    return (1.0 - p.p[int(c_star)]) ** gamma * base


def softmax_entropy(logits: Sequence[float]) -> float:
    """Entropy of softmax(logits), max-subtracted for stability."""
    ls = [float(v) for v in logits]
    if not ls or any(not math.isfinite(v) for v in ls):
        raise ValueError("logits must be a nonempty finite sequence")
    m = max(ls)
    exps = [math.exp(v - m) for v in ls]
    z = math.fsum(exps)
    # H = ln z - sum  e_i (l_i - m) / z
    return math.log(z) - math.fsum(e * (v - m) for e, v in zip(exps, ls)) / z


def energy_score(logits: Sequence[float], temperature: float = 1.0) -> float:
    """-T ln sum exp(l / T), max-subtracted; lower for confidently scored inputs."""
    ls = [float(v) for v in logits]
    if not ls or any(not math.isfinite(v) for v in ls):
        raise ValueError("logits must be a nonempty finite sequence")
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    m = max(ls)
    z = math.fsum(math.exp((v - m) / temperature) for v in ls)
    return -m - temperature * math.log(z)


def energy_bound_penalty(
    e_in: Sequence[float], e_out: Sequence[float], m_in: float, m_out: float
) -> float:
    """Squared hinge penalties pushing ID energies below m_in and OOD energies above m_out."""
    e_in = [float(v) for v in e_in]
    e_out = [float(v) for v in e_out]
    if not e_in and not e_out:
        raise ValueError("at least one energy sequence must be nonempty")
    value = 0.0
    if e_in:
        value += math.fsum(max(0.0, e - m_in) ** 2 for e in e_in) / len(e_in)
    if e_out:
        value += math.fsum(max(0.0, m_out - e) ** 2 for e in e_out) / len(e_out)
    return value
