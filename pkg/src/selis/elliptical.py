"""
Spherical / elliptical density kernels, their parameter gradients and
spherical samplers.

All elliptical laws are parameterized by a location ``mu`` and the inverse
scale factor ``linv = A^{-1}`` (lower triangular, positive diagonal), so the
scale matrix is ``Sigma = A A^T`` and the standardised residual is
``z = linv (x - mu)``.  No matrix is ever inverted: the log-determinant is
``sum(log(diag(linv)))`` and every gradient is assembled from ``z`` and the
raw residual ``d = x - mu``.

Three kernels are supported, written in terms of ``q = z^T z``::

    normal             exp(-q / 2)
    student_t (nu)     (1 + q / nu) ** (-(nu + k) / 2)
    power_exponential  exp(-q ** beta / 2)          (beta)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainccinv, gammaincinv

from .errors import UnsupportedOperationError
from .special import digamma, log_gamma

__all__ = [
    "DIAG_FLOOR",
    "SphericalFamily",
    "EllipticalParams",
    "log_density",
    "grad_mu",
    "grad_linv",
    "grad_shape",
    "sample_spherical",
    "log_norm_const",
    "log_kernel",
    "dlog_kernel_dq",
    "dlog_dshape",
    "digamma",
    "log_gamma",
]

DIAG_FLOOR = 1e-10
KINDS = ("normal", "student_t", "power_exponential")
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SphericalFamily:
    """Which elliptical kernel to use and its shape parameter.

    ``shape`` is the degrees of freedom for ``student_t`` and the exponent
    ``beta`` for ``power_exponential``; it is ignored (stored as ``None``) for
    ``normal``.
    """

    kind: str
    shape: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "normal":
            object.__setattr__(self, "shape", None)
            return
        if self.shape is None:
            raise ValueError(f"{self.kind} requires a shape parameter")
        shape = float(self.shape)
        if not (math.isfinite(shape) and shape > 0.0):
            raise ValueError(f"shape must be finite and positive, got {self.shape!r}")
        object.__setattr__(self, "shape", shape)

    @classmethod
    def normal(cls) -> SphericalFamily:
        return cls("normal")

    @classmethod
    def student_t(cls, nu: float) -> SphericalFamily:
        return cls("student_t", nu)

    @classmethod
    def power_exponential(cls, beta: float) -> SphericalFamily:
        return cls("power_exponential", beta)

    @property
    def has_shape(self) -> bool:
        return self.kind != "normal"

    def with_shape(self, shape: float) -> SphericalFamily:
        if not self.has_shape:
            return self
        return SphericalFamily(self.kind, shape)


def _as_lower(linv, k=None) -> np.ndarray:
    linv = np.array(linv, dtype=float, ndmin=2)
    if linv.ndim != 2 or linv.shape[0] != linv.shape[1]:
        raise ValueError(f"linv must be a square matrix, got shape {linv.shape}")
    if k is not None and linv.shape[0] != k:
        raise ValueError(f"linv must be {k}x{k}, got {linv.shape}")
    if not np.all(np.isfinite(linv)):
        raise ValueError("linv has non-finite entries")
    if np.any(np.triu(linv, 1) != 0.0):
        raise ValueError("linv must be lower triangular")
    if np.any(np.diag(linv) < DIAG_FLOOR):
        raise ValueError(f"diagonal of linv must be >= {DIAG_FLOOR}")
    return linv


@dataclass(frozen=True, eq=False)
class EllipticalParams:
    """Location, inverse scale factor and family of an elliptical law."""

    mu: np.ndarray
    linv: np.ndarray
    family: SphericalFamily

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float, ndmin=1)
        if mu.ndim != 1:
            raise ValueError("mu must be a vector")
        if not np.all(np.isfinite(mu)):
            raise ValueError("mu has non-finite entries")
        linv = _as_lower(self.linv, mu.shape[0])
        mu.setflags(write=False)
        linv.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "linv", linv)

    @property
    def k(self) -> int:
        return self.mu.shape[0]

    def replace(self, **changes) -> EllipticalParams:
        fields = {"mu": self.mu, "linv": self.linv, "family": self.family}
        fields.update(changes)
        return EllipticalParams(**fields)


# ---------------------------------------------------------------------------
# Kernel pieces, vectorized over q.  Exposed so that the SELIS likelihood can
# reuse the same formulas on whole data matrices.
# ---------------------------------------------------------------------------


def log_norm_const(family: SphericalFamily, k: int) -> float:
    """Log normalizing constant of the spherical law with identity scale."""
    if family.kind == "normal":
        return -0.5 * k * _LOG_2PI
    s = family.shape
    if family.kind == "student_t":
        return (
            log_gamma(0.5 * (s + k))
            - log_gamma(0.5 * s)
            - 0.5 * k * math.log(s * math.pi)
        )
    a = k / (2.0 * s)
    return (
        math.log(k)
        + log_gamma(0.5 * k)
        - 0.5 * k * math.log(math.pi)
        - log_gamma(1.0 + a)
        - (1.0 + a) * math.log(2.0)
    )


def log_kernel(family: SphericalFamily, k: int, q):
    q = np.asarray(q, dtype=float)
    if family.kind == "normal":
        return -0.5 * q
    s = family.shape
    if family.kind == "student_t":
        return -0.5 * (s + k) * np.log1p(q / s)
    return -0.5 * q**s


def dlog_kernel_dq(family: SphericalFamily, k: int, q):
    """Derivative of :func:`log_kernel` with respect to ``q``.

    For power-exponential with ``beta < 1`` the derivative is infinite at
    ``q = 0``; it is returned as 0 there because every caller multiplies it
    by a vector that vanishes at ``q = 0``.
    """
    q = np.asarray(q, dtype=float)
    if family.kind == "normal":
        return np.full_like(q, -0.5)
    s = family.shape
    if family.kind == "student_t":
        return -0.5 * (s + k) / (s + q)
    if s >= 1.0:
        return -0.5 * s * q ** (s - 1.0)
    safe = np.where(q > 0.0, q, 1.0)
    return np.where(q > 0.0, -0.5 * s * safe ** (s - 1.0), 0.0)


def dlog_dshape(family: SphericalFamily, k: int, q):
    """Derivative of the spherical log-density with respect to the shape."""
    q = np.asarray(q, dtype=float)
    if not family.has_shape:
        raise UnsupportedOperationError("normal family has no shape parameter")
    s = family.shape
    if family.kind == "student_t":
        const = 0.5 * (digamma(0.5 * (s + k)) - digamma(0.5 * s)) - 0.5 * k / s
        return const - 0.5 * np.log1p(q / s) + 0.5 * (s + k) * q / (s * (s + q))
    a = k / (2.0 * s)
    const = a / s * (digamma(1.0 + a) + math.log(2.0))
    safe = np.where(q > 0.0, q, 1.0)
    return const - 0.5 * np.where(q > 0.0, safe**s * np.log(safe), 0.0)


# ---------------------------------------------------------------------------
# Public per-point operations
# ---------------------------------------------------------------------------


def _residuals(p: EllipticalParams, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (p.k,) or x.ndim > 2:
        raise ValueError(f"x must have trailing dimension {p.k}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x has non-finite entries")
    d = x - p.mu
    z = d @ p.linv.T
    return d, z, np.einsum("...i,...i->...", z, z)


def log_density(p: EllipticalParams, x):
    """Log-density at ``x`` (a point of shape ``(k,)`` or rows of ``(n, k)``)."""
    _, _, q = _residuals(p, x)
    logdet = np.sum(np.log(np.diag(p.linv)))
    out = log_norm_const(p.family, p.k) + logdet + log_kernel(p.family, p.k, q)
    return float(out) if np.ndim(out) == 0 else out


def grad_mu(p: EllipticalParams, x):
    """Gradient of :func:`log_density` with respect to ``mu``.

    Equals ``-2 kappa'(q) Sigma^{-1} (x - mu)``, formed as ``linv^T z``.
    """
    _, z, q = _residuals(p, x)
    w = -2.0 * dlog_kernel_dq(p.family, p.k, q)
    return (w[..., None] * z) @ p.linv


def grad_linv(p: EllipticalParams, x):
    """Gradient of :func:`log_density` with respect to the lower triangle of ``linv``.

    The log-determinant contributes ``1 / diag(linv)`` on the diagonal and the
    kernel contributes ``2 kappa'(q) z (x - mu)^T``; entries above the
    diagonal are structurally zero.
    """
    d, z, q = _residuals(p, x)
    w = 2.0 * dlog_kernel_dq(p.family, p.k, q)
    g = w[..., None, None] * z[..., :, None] * d[..., None, :]
    g = g + np.diag(1.0 / np.diag(p.linv))
    return np.tril(g)


def grad_shape(p: EllipticalParams, x):
    """Derivative of :func:`log_density` with respect to ``nu`` or ``beta``."""
    if not p.family.has_shape:
        raise UnsupportedOperationError("normal family has no shape parameter")
    _, _, q = _residuals(p, x)
    out = dlog_dshape(p.family, p.k, q)
    return float(out) if np.ndim(out) == 0 else out


def sample_spherical(family: SphericalFamily, k: int, n: int, seed) -> np.ndarray:
    """Draw ``n`` points from the ``k``-variate spherical law of ``family``.

    Radial laws are drawn by inverse CDF from a single uniform per row, so for
    a fixed seed the draws move smoothly with the shape parameter (common
    random numbers across shapes).

    Parameters
    ----------
    family : SphericalFamily
    k, n : int
        Dimension and number of draws, both >= 1.
    seed : int or numpy.random.SeedSequence
        Seed for a private generator.

    Returns
    -------
    ndarray, shape (n, k)
    """
    if int(k) < 1 or int(n) < 1:
        raise ValueError("k and n must be >= 1")
    k, n = int(k), int(n)
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal((n, k))
    if family.kind == "normal":
        return gauss
    # (0, 1]; an endpoint maps to a zero-probability radius and is harmless
    u = 1.0 - rng.random(n)
    s = family.shape
    if family.kind == "student_t":
        # lower tail of chi-square is the heavy tail of t, invert it directly
        chi2 = 2.0 * gammaincinv(0.5 * s, u)
        with np.errstate(divide="ignore"):
            scale = np.sqrt(s / chi2)
        scale[~np.isfinite(scale)] = 0.0
        return gauss * scale[:, None]
    radial_pow = 2.0 * gammainccinv(k / (2.0 * s), u)
    radius = radial_pow ** (1.0 / (2.0 * s))
    norms = np.linalg.norm(gauss, axis=1)
    norms[norms == 0.0] = 1.0
    return gauss * (radius / norms)[:, None]
