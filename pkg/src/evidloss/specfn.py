"""Scalar special functions: log-gamma, digamma, trigamma, tetragamma, log-beta.

All routines use upward recurrence to shift the argument above ``_SHIFT`` and
then evaluate an asymptotic (Bernoulli-number) series. Arguments must be
positive finite reals; there is no analytic continuation to x <= 0.
"""

from __future__ import annotations

import math

EULER_MASCHERONI = 0.5772156649015329
PI_SQ_OVER_6 = 1.6449340668482264

# Asymptotic series kick in above this argument; below it we recurse upward.
_SHIFT = 12.0

_HALF_LN_TWO_PI = 0.5 * math.log(2.0 * math.pi)

# B_{2n} / (2n (2n-1)) for n = 1..8, the Stirling-series coefficients.
_STIRLING = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
)

# Bernoulli numbers B_2..B_16.
_BERNOULLI = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
)

# zeta(2), zeta(3), ... for the Taylor branches around the zeros of ln-gamma.
_ZETA = (
    1.6449340668482264,
    1.2020569031595942,
    1.0823232337111381,
    1.03692775514337,
    1.0173430619844492,
    1.008349277381923,
    1.0040773561979444,
    1.0020083928260821,
    1.000994575127818,
    1.0004941886041194,
    1.000246086553308,
    1.0001227133475785,
    1.0000612481350588,
    1.000030588236307,
    1.0000152822594086,
    1.0000076371976379,
    1.000003817293265,
    1.0000019082127165,
    1.0000009539620338,
    1.0000004769329869,
    1.0000002384505027,
    1.000000119219926,
    1.000000059608189,
    1.0000000298035034,
    1.0000000149015549,
    1.0000000074507118,
    1.000000003725334,
    1.0000000018626598,
    1.0000000009313275,
    1.0000000004656628,
    1.000000000232831,
    1.0000000001164155,
    1.0000000000582077,
)


def _require_positive(name: str, x: float) -> float:
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise ValueError(f"{name} requires a positive finite argument, got {x!r}")
    return x


def _ln_gamma_near_one(t: float) -> float:
    # ln G(1+t) = -g_E t + sum_{k>=2} (-1)^k zeta(k) t^k / k; the root at t=0 is
    # factored out, so relative accuracy survives the cancellation region.
    acc = 0.0
    for k in range(len(_ZETA) + 1, 1, -1):
        coef = _ZETA[k - 2] / k
        if k % 2:
            coef = -coef
        acc = acc * t + coef
    return t * (acc * t - EULER_MASCHERONI)


def _ln_gamma_near_two(t: float) -> float:
    # ln G(2+t) = (1-g_E) t + sum_{k>=2} (-1)^k (zeta(k)-1) t^k / k.
    acc = 0.0
    for k in range(len(_ZETA) + 1, 1, -1):
        coef = (_ZETA[k - 2] - 1.0) / k
        if k % 2:
            coef = -coef
        acc = acc * t + coef
    return t * (acc * t + (1.0 - EULER_MASCHERONI))


def ln_gamma(x: float) -> float:
    """Natural log of the gamma function for x > 0."""
    x = _require_positive("ln_gamma", x)
    if abs(x - 1.0) <= 0.25:
        return _ln_gamma_near_one(x - 1.0)
    if abs(x - 2.0) <= 0.25:
        return _ln_gamma_near_two(x - 2.0)
    shift = []
    while x < _SHIFT:
        shift.append(math.log(x))
        x += 1.0
    r = 1.0 / x
    r2 = r * r
    tail = 0.0
    for c in reversed(_STIRLING):
        tail = tail * r2 + c
    value = (x - 0.5) * math.log(x) - x + _HALF_LN_TWO_PI + tail * r
    if shift:
        value -= math.fsum(shift)
    return value


def digamma(x: float) -> float:
    """Logarithmic derivative of gamma, psi(x), for x > 0."""
    x = _require_positive("digamma", x)
    shift = []
    while x < _SHIFT:
        shift.append(1.0 / x)
        x += 1.0
    r = 1.0 / x
    r2 = r * r
    # psi(x) ~ ln x - 1/(2x) - sum B_2n / (2n x^{2n})
    tail = 0.0
    for n in range(len(_BERNOULLI) - 1, -1, -1):
        tail = tail * r2 + _BERNOULLI[n] / (2.0 * (n + 1))
    value = math.log(x) - 0.5 * r - tail * r2
    if shift:
        value -= math.fsum(shift)
    return value


def trigamma(x: float) -> float:
    """First derivative of digamma, psi_1(x), for x > 0."""
    x = _require_positive("trigamma", x)
    shift = []
    while x < _SHIFT:
        shift.append(1.0 / (x * x))
        x += 1.0
    r = 1.0 / x
    r2 = r * r
    # psi_1(x) ~ 1/x + 1/(2x^2) + sum B_2n x^{-2n-1}
    tail = 0.0
    for c in reversed(_BERNOULLI):
        tail = tail * r2 + c
    value = r + 0.5 * r2 + tail * r2 * r
    if shift:
        value += math.fsum(shift)
    return value


def tetragamma(x: float) -> float:
    """Second derivative of digamma, psi_2(x), for x > 0."""
    x = _require_positive("tetragamma", x)
    shift = []
    while x < _SHIFT:
        shift.append(2.0 / (x * x * x))
        x += 1.0
    r = 1.0 / x
    r2 = r * r
    # psi_2(x) ~ -1/x^2 - 1/x^3 - sum (2n+1) B_2n x^{-2n-2}
    tail = 0.0
    for n in range(len(_BERNOULLI) - 1, -1, -1):
        tail = tail * r2 + (2 * n + 3) * _BERNOULLI[n]
    value = -r2 - r2 * r - tail * r2 * r2
    if shift:
        value -= math.fsum(shift)
    return value


def ln_beta(a: float, b: float) -> float:
    """ln B(a, b) = ln G(a) + ln G(b) - ln G(a + b) for a, b > 0."""
    a = _require_positive("ln_beta", a)
    b = _require_positive("ln_beta", b)
    return ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
