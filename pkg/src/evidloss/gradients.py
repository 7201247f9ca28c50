"""Analytic gradients of the evidential losses, the gradient-gap function f,
its derivative, the beta-function ratio g, and the sign-crossing threshold finder."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .dirichlet import DirichletParams
from .specfn import digamma, ln_beta, ln_gamma, tetragamma, trigamma


@dataclass(frozen=True)
class GradGapPoint:
    """One evaluation of the gradient-gap function f at feasible (p_bar, alpha0, gamma)."""

    p_bar: float
    alpha0: float
    gamma: float
    value: float

    def __post_init__(self):
        if self.alpha0 <= 2.0:
            raise ValueError("alpha0 must exceed 2")
        if not 1.0 / self.alpha0 < self.p_bar < 1.0 - 1.0 / self.alpha0:
            raise ValueError(
                f"p_bar={self.p_bar!r} outside the feasible window for alpha0={self.alpha0!r}"
            )
        if not 0.0 <= self.gamma <= 5.0:
            raise ValueError("gamma must lie in [0, 5]")


def uce_grad_alpha(alpha: DirichletParams, c_star: int) -> list[float]:
    """d UCE / d alpha: psi_1(alpha0) - psi_1(alpha_{c*}) at c*, psi_1(alpha0) elsewhere."""
    c_star = int(c_star)
    if not 0 <= c_star < alpha.n_classes:
        raise IndexError(f"class index {c_star} out of range")
    t0 = trigamma(alpha.alpha0)
    grad = [t0] * alpha.n_classes
    grad[c_star] = t0 - trigamma(alpha.alpha[c_star])
    return grad


def ufce_grad_alpha(alpha: DirichletParams, c_star: int, gamma: float) -> list[float]:
    """d UFCE / d alpha via the closed form; reduces exactly to the UCE gradient at gamma 0."""
    c_star = int(c_star)
    if not 0 <= c_star < alpha.n_classes:
        raise IndexError(f"class index {c_star} out of range")
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    if gamma == 0.0:
        return uce_grad_alpha(alpha, c_star)
    a0 = alpha.alpha0
    ac = alpha.alpha[c_star]
    rest = a0 - ac
    ratio = math.exp(
        ln_gamma(a0) + ln_gamma(rest + gamma) - ln_gamma(a0 + gamma) - ln_gamma(rest)
    )
    psi_a0 = digamma(a0)
    psi_a0g = digamma(a0 + gamma)
    dig_diff = psi_a0g - digamma(ac)
    grad_c = ratio * ((psi_a0 - psi_a0g) * dig_diff + (trigamma(a0 + gamma) - trigamma(ac)))
    # off-components vary only through alpha0
    grad_off = ratio * (
        (psi_a0 + digamma(rest + gamma) - psi_a0g - digamma(rest)) * dig_diff
        + trigamma(a0 + gamma)
    )
    grad = [grad_off] * alpha.n_classes
    grad[c_star] = grad_c
    return grad


def gradient_gap_f(p_bar: float, alpha0: float, gamma: float) -> float:
    """Signed difference between the focal and plain gradient magnitudes at the true class.

    f = -A B + psi_1(alpha0) - psi_1(p_bar alpha0), where A is the beta-function
    ratio and B the bracketed digamma/trigamma combination.
    """
    ac = p_bar * alpha0
    rest = alpha0 - ac
    if ac <= 0.0 or rest <= 0.0:
        raise ValueError(
            f"p_bar={p_bar!r} infeasible for alpha0={alpha0!r}: both p_bar*alpha0 and "
            "the remainder must be positive"
        )
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    if gamma == 0.0:
        return 0.0
    a = math.exp(
        ln_gamma(alpha0) + ln_gamma(rest + gamma) - ln_gamma(alpha0 + gamma) - ln_gamma(rest)
    )
    b = (digamma(alpha0) - digamma(alpha0 + gamma)) * (
        digamma(alpha0 + gamma) - digamma(ac)
    ) + (trigamma(alpha0 + gamma) - trigamma(ac))
    return -a * b + (trigamma(alpha0) - trigamma(ac))


def gradient_gap_f_derivative(p_bar: float, alpha0: float, gamma: float) -> float:
    """Total derivative of the gradient-gap function with respect to p_bar."""
    ac = p_bar * alpha0
    rest = alpha0 - ac
    if ac <= 0.0 or rest <= 0.0:
        raise ValueError("p_bar outside the feasible domain")
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    if gamma == 0.0:
        return 0.0
    a = math.exp(
        ln_gamma(alpha0) + ln_gamma(rest + gamma) - ln_gamma(alpha0 + gamma) - ln_gamma(rest)
    )
    dig_gap = digamma(alpha0) - digamma(alpha0 + gamma)
    b = dig_gap * (digamma(alpha0 + gamma) - digamma(ac)) + (
        trigamma(alpha0 + gamma) - trigamma(ac)
    )
    da = a * (-alpha0 * digamma(rest + gamma) + alpha0 * digamma(rest))
    db = dig_gap * (-alpha0 * trigamma(ac)) - alpha0 * tetragamma(ac)
    return -da * b - a * db - alpha0 * tetragamma(ac)


def beta_ratio_g(alpha0: float, alpha_c: float, gamma: float) -> float:
    """Beta-function ratio B(alpha0, gamma) / B(alpha0 - alpha_c, gamma) in (0, 1]."""
    if not (alpha0 > alpha_c >= 0.0):
        raise ValueError("need alpha0 > alpha_c >= 0")
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    return math.exp(ln_beta(alpha0, gamma) - ln_beta(alpha0 - alpha_c, gamma))


class ThresholdResult(NamedTuple):
    tau1: float
    tau2: float
    flag: str | None


# p_bar scan floor: alpha0 = alpha_c / p_bar stays finite above it
_SCAN_STEP = 1e-4
_BISECT_TOL = 1e-8


def _bisect_sign_change(fn, lo: float, hi: float) -> float:
    flo = fn(lo)
    for _ in range(200):
        if hi - lo <= _BISECT_TOL:
            break
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if (fm > 0.0) == (flo > 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_crossing_thresholds(
    alpha_c_star: float, gamma: float, n_classes: int = 2
) -> ThresholdResult:
    """Locate the sign-change window of f along p_bar at fixed true-class evidence.

    Each candidate p_bar implies alpha0 = alpha_c_star / p_bar; the window keeps
    every other class at concentration >= 1. Returns tau1 (largest p_bar below
    which f stays nonnegative) and tau2 (smallest p_bar above which f stays
    nonpositive) after a dense sign scan plus bisection refinement.
    """
    if alpha_c_star <= 1.0:
        raise ValueError("alpha_c_star must exceed 1 for a nonempty window")
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    p_hi = alpha_c_star / (alpha_c_star + n_classes - 1)
    p_lo = _SCAN_STEP

    def f_along_path(p: float) -> float:
        return gradient_gap_f(p, alpha_c_star / p, gamma)

    n_steps = int((p_hi - p_lo) / _SCAN_STEP)
    grid = [p_lo + i * _SCAN_STEP for i in range(n_steps + 1)]
    values = [f_along_path(p) for p in grid]

    if all(v == 0.0 for v in values):
        return ThresholdResult(p_lo, p_hi, "degenerate")
    if all(v >= 0.0 for v in values):
        return ThresholdResult(p_hi, p_hi, "no_sign_change")
    if all(v <= 0.0 for v in values):
        return ThresholdResult(p_lo, p_lo, "no_sign_change")

    first_neg = next(i for i, v in enumerate(values) if v < 0.0)
    last_pos = max(i for i, v in enumerate(values) if v > 0.0)
    tau1 = (
        _bisect_sign_change(f_along_path, grid[first_neg - 1], grid[first_neg])
        if first_neg > 0
        else grid[0]
    )
    tau2 = (
        _bisect_sign_change(f_along_path, grid[last_pos], grid[last_pos + 1])
        if last_pos + 1 < len(grid)
        else grid[-1]
    )
    return ThresholdResult(min(tau1, tau2), max(tau1, tau2), None)
