"""
Scalar special functions used inside the density constants and gradients.

``digamma`` and ``log_gamma`` are evaluated by shifting the argument upward
with the recurrence relations and then summing the Stirling / asymptotic
series, which is accurate to a few ulp once ``x >= 10``.
"""

import math

__all__ = ["digamma", "log_gamma"]

_SHIFT = 10.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# B_{2n} / (2n), n = 1..8
_DIGAMMA_COEF = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
)

# B_{2n} / (2n (2n - 1)), n = 1..8
_STIRLING_COEF = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
)


def _check(x: float) -> float:
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise ValueError(f"argument must be finite and positive, got {x!r}")
    return x


def digamma(x: float) -> float:
    """Logarithmic derivative of the gamma function for ``x > 0``."""
    x = _check(x)
    shift = 0.0
    while x < _SHIFT:
        shift += 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    for c in reversed(_DIGAMMA_COEF):
        series = series * inv2 + c
    return math.log(x) - 0.5 / x - series * inv2 - shift


def log_gamma(x: float) -> float:
    """Natural log of the gamma function for ``x > 0``."""
    x = _check(x)
    log_prod = 0.0
    while x < _SHIFT:
        log_prod += math.log(x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    for c in reversed(_STIRLING_COEF):
        series = series * inv2 + c
    return (x - 0.5) * math.log(x) - x + _HALF_LOG_2PI + series * inv - log_prod
