"""
Sigmoid skewing functions and the product skewing function ``g_m``.

Every skewing function satisfies ``g(z) + g(-z) = 1`` and ``0 <= g <= 1``.
``log_sigmoid`` is evaluated in a form that stays finite far into the lower
tail (at least ``z = -700``), and ``dlog_sigmoid`` is ``g'(z) / g(z)``.

The skewing matrix ``lambda`` is ``m x k`` with structural zeros below the
diagonal (``lambda[i, j] = 0`` for ``j < i``).  The convention is the same
for ``m < k`` and ``m > k``; in the latter case rows ``i >= k`` are entirely
structural zeros and contribute a constant factor ``1/2`` each.  A
``diagonal_only`` matrix keeps only the ``(i, i)`` entries free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, log_ndtr, ndtr

from .special import log_gamma

__all__ = [
    "SIGMOID_KINDS",
    "SigmoidKind",
    "SkewingMatrix",
    "sigmoid",
    "log_sigmoid",
    "dlog_sigmoid",
    "log_gm",
    "grad_lambda_log_gm",
    "t_cdf",
    "log_t_cdf",
    "log_t_pdf",
]

SIGMOID_KINDS = (
    "logistic",
    "error",
    "hyperbolic_secant",
    "arctan",
    "reciprocal_sqrt",
    "student_t_cdf",
)
_LOG_2_OVER_PI = math.log(2.0 / math.pi)
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SigmoidKind:
    """A skewing function; ``nu`` is used only by ``student_t_cdf``."""

    kind: str
    nu: float | None = None

    def __post_init__(self):
        if self.kind not in SIGMOID_KINDS:
            raise ValueError(f"unknown sigmoid kind {self.kind!r}; expected one of {SIGMOID_KINDS}")
        if self.kind == "student_t_cdf":
            if self.nu is None or not (math.isfinite(float(self.nu)) and float(self.nu) > 0):
                raise ValueError("student_t_cdf requires a positive nu")
            object.__setattr__(self, "nu", float(self.nu))
        else:
            object.__setattr__(self, "nu", None)


def _kind(kind) -> SigmoidKind:
    return kind if isinstance(kind, SigmoidKind) else SigmoidKind(kind)


# ---------------------------------------------------------------------------
# Student t cdf helpers (also used by the canonical baselines)
# ---------------------------------------------------------------------------


def _t_lower_tail(x, nu):
    """P(T <= -|x|) for a t variable with ``nu`` degrees of freedom.

    Near the centre ``nu / (nu + x^2)`` rounds towards 1, so the complementary
    form in ``x^2 / (nu + x^2)`` is used while ``x^2 < min(nu / 10, 1)``.
    """
    x = np.asarray(x, dtype=float)
    x2 = x * x
    central = x2 < min(0.1 * nu, 1.0)
    inner = 0.5 - 0.5 * betainc(0.5, 0.5 * nu, np.where(central, x2 / (nu + x2), 0.0))
    outer = 0.5 * betainc(0.5 * nu, 0.5, np.where(central, 1.0, nu / (nu + x2)))
    return np.where(central, inner, outer)


def t_cdf(x, nu):
    """Univariate Student t cdf via the regularized incomplete beta function."""
    x = np.asarray(x, dtype=float)
    tail = _t_lower_tail(x, nu)
    out = np.where(x < 0.0, tail, 1.0 - tail)
    return float(out) if out.ndim == 0 else out


def log_t_cdf(x, nu):
    x = np.asarray(x, dtype=float)
    tail = _t_lower_tail(x, nu)
    with np.errstate(divide="ignore"):
        out = np.where(x < 0.0, np.log(np.maximum(tail, 1e-320)), np.log1p(-tail))
    return float(out) if out.ndim == 0 else out


def log_t_pdf(x, nu):
    x = np.asarray(x, dtype=float)
    c = log_gamma(0.5 * (nu + 1.0)) - log_gamma(0.5 * nu) - 0.5 * math.log(nu * math.pi)
    out = c - 0.5 * (nu + 1.0) * np.log1p(x * x / nu)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Per-kind forms.  Each returns (log g, log g') on a float array.
# ---------------------------------------------------------------------------


def _logistic(z):
    log_g = -np.logaddexp(0.0, -z)
    log_dg = -np.logaddexp(0.0, -z) - np.logaddexp(0.0, z)
    return log_g, log_dg


def _error(z):
    return log_ndtr(z), -0.5 * z * z - 0.5 * _LOG_2PI


def _hyperbolic_secant(z):
    a = 0.5 * math.pi * z
    neg = a <= 0.0
    # arctan(e^a) = pi/2 - arctan(e^-a) avoids cancellation for a > 0
    y_neg = np.exp(np.where(neg, a, 0.0))
    ratio = np.where(y_neg > 0.0, np.arctan(y_neg) / np.where(y_neg > 0.0, y_neg, 1.0), 1.0)
    log_g_neg = _LOG_2_OVER_PI + a + np.log(ratio)
    y_pos = np.exp(-np.where(neg, 0.0, a))
    log_g_pos = np.log1p(-np.arctan(y_pos) / (0.5 * math.pi))
    log_g = np.where(neg, log_g_neg, log_g_pos)
    # g' = 1 / (2 cosh a)
    abs_a = np.abs(a)
    log_dg = -abs_a - np.log1p(np.exp(-2.0 * abs_a))
    return log_g, log_dg


def _arctan(z):
    neg = z < 0.0
    with np.errstate(divide="ignore"):
        inv = np.where(z != 0.0, 1.0 / np.where(z != 0.0, z, 1.0), np.inf)
    # for z < 0: 1/2 + arctan(z)/pi = arctan(-1/z)/pi
    log_g_neg = np.log(np.arctan(-np.where(neg, inv, -1.0))) - math.log(math.pi)
    log_g_pos = np.log1p(-np.arctan(np.where(neg, 1.0, inv)) / math.pi)
    log_g = np.where(neg, log_g_neg, log_g_pos)
    log_dg = -math.log(math.pi) - np.log1p(z * z)
    return log_g, log_dg


def _reciprocal_sqrt(z):
    abs_z = np.abs(z)
    h = np.hypot(1.0, abs_z)
    # g(-|z|) = 1 / (2 (h + |z|) h), h = sqrt(1 + z^2)
    log_lower = -math.log(2.0) - np.log(h + abs_z) - np.log(h)
    log_g = np.where(z < 0.0, log_lower, np.log1p(-np.exp(log_lower)))
    log_dg = -math.log(2.0) - 3.0 * np.log(h)
    return log_g, log_dg


def _student_t_cdf(z, nu):
    return log_t_cdf(z, nu), log_t_pdf(z, nu)


def _forms(kind: SigmoidKind, z):
    z = np.asarray(z, dtype=float)
    if kind.kind == "logistic":
        return _logistic(z)
    if kind.kind == "error":
        return _error(z)
    if kind.kind == "hyperbolic_secant":
        return _hyperbolic_secant(z)
    if kind.kind == "arctan":
        return _arctan(z)
    if kind.kind == "reciprocal_sqrt":
        return _reciprocal_sqrt(z)
    return _student_t_cdf(z, kind.nu)


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def sigmoid(kind, z):
    """Value of the skewing function ``g(z)``."""
    kind = _kind(kind)
    z = np.asarray(z, dtype=float)
    if kind.kind == "logistic":
        out = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    elif kind.kind == "error":
        out = ndtr(z)
    elif kind.kind == "hyperbolic_secant":
        out = np.arctan(np.exp(0.5 * math.pi * np.minimum(z, 0.0))) / (0.5 * math.pi)
        out = np.where(z > 0.0, 1.0 - np.arctan(np.exp(-0.5 * math.pi * np.maximum(z, 0.0))) / (0.5 * math.pi), out)
    elif kind.kind == "student_t_cdf":
        out = t_cdf(z, kind.nu)
    else:
        out = np.exp(_forms(kind, z)[0])
    return _scalar(np.asarray(out, dtype=float))


def log_sigmoid(kind, z):
    return _scalar(_forms(_kind(kind), z)[0])


def dlog_sigmoid(kind, z):
    """``g'(z) / g(z)``, computed as ``exp(log g' - log g)``."""
    log_g, log_dg = _forms(_kind(kind), z)
    return _scalar(np.exp(log_dg - log_g))


def log_and_dlog(kind, z):
    """``(log g(z), g'(z) / g(z))`` in one pass; used by the likelihood code."""
    log_g, log_dg = _forms(_kind(kind), z)
    return log_g, np.exp(log_dg - log_g)


# ---------------------------------------------------------------------------
# Skewing matrix
# ---------------------------------------------------------------------------


def free_mask(m: int, k: int, diagonal_only: bool = False) -> np.ndarray:
    """Boolean ``m x k`` mask of the optimizable entries of ``lambda``."""
    i, j = np.indices((m, k))
    return (j == i) if diagonal_only else (j >= i)


@dataclass(frozen=True, eq=False)
class SkewingMatrix:
    """An ``m x k`` skewing matrix with its structural-zero pattern."""

    lam: np.ndarray
    diagonal_only: bool = False

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float, ndmin=2)
        if lam.ndim != 2 or lam.shape[0] < 1 or lam.shape[1] < 1:
            raise ValueError(f"lambda must be a non-empty matrix, got shape {lam.shape}")
        if not np.all(np.isfinite(lam)):
            raise ValueError("lambda has non-finite entries")
        mask = free_mask(*lam.shape, self.diagonal_only)
        if np.any(lam[~mask] != 0.0):
            raise ValueError(
                "lambda has non-zero entries at structural positions "
                + ("(off the diagonal)" if self.diagonal_only else "(below the diagonal)")
            )
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "diagonal_only", bool(self.diagonal_only))

    @classmethod
    def zeros(cls, m: int, k: int, diagonal_only: bool = False) -> SkewingMatrix:
        return cls(np.zeros((m, k)), diagonal_only)

    @property
    def m(self) -> int:
        return self.lam.shape[0]

    @property
    def k(self) -> int:
        return self.lam.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return free_mask(self.m, self.k, self.diagonal_only)

    @property
    def n_free(self) -> int:
        return int(self.mask.sum())

    def free_values(self) -> np.ndarray:
        return self.lam[self.mask]

    def with_free_values(self, values) -> SkewingMatrix:
        lam = np.zeros((self.m, self.k))
        lam[self.mask] = values
        return SkewingMatrix(lam, self.diagonal_only)


def _check_v(sm: SkewingMatrix, v):
    v = np.asarray(v, dtype=float)
    if v.shape[-1:] != (sm.k,) or v.ndim > 2:
        raise ValueError(f"v must have trailing dimension {sm.k}, got shape {v.shape}")
    return v


def log_gm(sm: SkewingMatrix, kind, v):
    """``sum_i log g(lambda_i . v)`` for a point ``(k,)`` or rows ``(n, k)``."""
    v = _check_v(sm, v)
    s = v @ sm.lam.T
    return _scalar(np.sum(_forms(_kind(kind), s)[0], axis=-1))


def grad_lambda_log_gm(sm: SkewingMatrix, kind, v):
    """Gradient of :func:`log_gm` with respect to ``lambda`` (zeros at structural entries)."""
    v = _check_v(sm, v)
    s = v @ sm.lam.T
    log_g, log_dg = _forms(_kind(kind), s)
    w = np.exp(log_dg - log_g)
    return w[..., :, None] * v[..., None, :] * sm.mask
