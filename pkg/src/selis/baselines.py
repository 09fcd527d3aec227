"""
Closed-form comparison models fitted by direct BFGS.

* :class:`GseUnivariateModel` -- univariate skew-t of the form
  ``2 t(z; nu) g(arg)`` where ``g`` is one of the sigmoid skewing functions or
  a Student t cdf ("canonical" variants).
* :class:`AmstModel` -- the Azzalini-type multivariate skew-t with one hidden
  truncation dimension, parameterized like SELIS (``mu``, ``linv`` and a skew
  vector ``alpha`` acting on the standardized residual).

Two canonical univariate variants exist:

``canonical``
    ``g = T(lam z sqrt((nu + 1) / (nu + z^2)); nu + 1)``, the proper skew-t
    and the ``k = 1`` case of :class:`AmstModel`.
``canonical_st``
    ``g = T(lam z; nu + 1)``, the simplified form without the radial scaling.

Both integrate to one.  Fitted log-likelihoods are exact (no Monte Carlo).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .elliptical import DIAG_FLOOR, _as_lower
from .errors import DegenerateDataError
from .estimate import bfgs_minimize, information_criteria, initial_linv
from .skewing import SigmoidKind, log_and_dlog, log_t_cdf, log_t_pdf, t_cdf
from .special import digamma, log_gamma

__all__ = [
    "CANONICAL_KINDS",
    "GseUnivariateModel",
    "AmstModel",
    "BaselineFit",
    "student_t_cdf_scalar",
    "gse_log_pdf",
    "amst_log_pdf",
    "fit_univariate",
    "fit_amst",
]

CANONICAL_KINDS = ("canonical", "canonical_st")
_LOG2 = math.log(2.0)


def student_t_cdf_scalar(x: float, nu: float) -> float:
    """Student t cdf at a scalar, via the regularized incomplete beta function."""
    if not nu > 0:
        raise ValueError("nu must be positive")
    return float(t_cdf(float(x), float(nu)))


def _dlog_t_cdf_ddof(a, dof):
    """d/d(dof) of ``log T(a; dof)`` by a 5-point central difference."""
    h = 1e-3 * dof
    f = [log_t_cdf(a, dof + j * h) for j in (-2, -1, 1, 2)]
    return (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * h)


# ---------------------------------------------------------------------------
# Univariate GSE
# ---------------------------------------------------------------------------


def _gse_kind(kind):
    if isinstance(kind, SigmoidKind):
        return kind
    if kind in CANONICAL_KINDS:
        return kind
    return SigmoidKind(kind)


def _kind_label(kind) -> str:
    return kind if isinstance(kind, str) else kind.kind


@dataclass(frozen=True)
class GseUnivariateModel:
    location: float
    scale: float
    nu: float
    lam_s: float
    kind: SigmoidKind | str = "logistic"

    def __post_init__(self):
        for name in ("location", "scale", "nu", "lam_s"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.scale <= 0 or self.nu <= 0:
            raise ValueError("scale and nu must be positive")
        object.__setattr__(self, "kind", _gse_kind(self.kind))

    @property
    def label(self) -> str:
        return _kind_label(self.kind)


def _gse_terms(loc, scale, nu, lam, kind, x, want_grad):
    """Log-pdf rows and, optionally, their gradient in (loc, log scale, log nu, lam)."""
    z = (x - loc) / scale
    z2 = z * z
    logpdf = _LOG2 + log_t_pdf(z, nu) - math.log(scale)
    if kind == "canonical":
        root = np.sqrt((nu + 1.0) / (nu + z2))
        a = lam * z * root
    else:
        a = lam * z
    if isinstance(kind, SigmoidKind):
        log_g, r = log_and_dlog(kind, a)
    else:
        log_g = log_t_cdf(a, nu + 1.0)
        r = np.exp(log_t_pdf(a, nu + 1.0) - log_g)
    logpdf = logpdf + log_g
    if not want_grad:
        return logpdf, None

    # d/dz of the symmetric part and of the skewing argument
    dsym_dz = -(nu + 1.0) * z / (nu + z2)
    if kind == "canonical":
        da_dz = lam * root * nu / (nu + z2)
        da_dlam = z * root
        da_dnu = a * 0.5 * (z2 - 1.0) / ((nu + 1.0) * (nu + z2))
    else:
        da_dz = lam
        da_dlam = z
        da_dnu = 0.0
    dl_dz = dsym_dz + r * da_dz
    g_loc = -dl_dz / scale
    g_logscale = -dl_dz * z - 1.0
    dconst = 0.5 * digamma(0.5 * (nu + 1.0)) - 0.5 * digamma(0.5 * nu) - 0.5 / nu
    dnu = dconst - 0.5 * np.log1p(z2 / nu) + 0.5 * (nu + 1.0) * z2 / (nu * (nu + z2)) + r * da_dnu
    if not isinstance(kind, SigmoidKind):
        dnu = dnu + _dlog_t_cdf_ddof(a, nu + 1.0)
    grad = np.stack([g_loc, g_logscale, nu * dnu, r * da_dlam], axis=-1)
    return logpdf, grad


def gse_log_pdf(model: GseUnivariateModel, x):
    """Log-density of a univariate GSE model at scalar or array ``x``."""
    x = np.asarray(x, dtype=float)
    out, _ = _gse_terms(model.location, model.scale, model.nu, model.lam_s, model.kind, x, False)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# AMST
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AmstModel:
    mu: np.ndarray
    linv: np.ndarray
    nu: float
    alpha: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float, ndmin=1)
        k = mu.size
        linv = _as_lower(self.linv, k)
        alpha = np.array(self.alpha, dtype=float, ndmin=1)
        if mu.ndim != 1 or alpha.shape != (k,):
            raise ValueError(f"mu and alpha must both be vectors of length {k}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(alpha))):
            raise ValueError("mu and alpha must be finite")
        nu = float(self.nu)
        if not (math.isfinite(nu) and nu > 0):
            raise ValueError("nu must be positive")
        for arr in (mu, linv, alpha):
            arr.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "linv", linv)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "nu", nu)

    @property
    def k(self) -> int:
        return self.mu.size


def _amst_terms(mu, linv, nu, alpha, x, want_grad):
    k = mu.size
    d = x - mu
    z = d @ linv.T
    q = np.einsum("ij,ij->i", z, z)
    const = log_gamma(0.5 * (nu + k)) - log_gamma(0.5 * nu) - 0.5 * k * math.log(nu * math.pi)
    logdet = float(np.sum(np.log(np.diag(linv))))
    root = np.sqrt((nu + k) / (nu + q))
    a = (z @ alpha) * root
    log_T = log_t_cdf(a, nu + k)
    logpdf = _LOG2 + const + logdet - 0.5 * (nu + k) * np.log1p(q / nu) + log_T
    if not want_grad:
        return logpdf, None

    r = np.exp(log_t_pdf(a, nu + k) - log_T)
    g_z = -((nu + k) / (nu + q))[:, None] * z + r[:, None] * (
        root[:, None] * alpha - (a / (nu + q))[:, None] * z
    )
    n = x.shape[0]
    g_mu = -(g_z @ linv).sum(axis=0)
    g_linv = np.tril(g_z.T @ d) + n * np.diag(1.0 / np.diag(linv))
    dconst = 0.5 * digamma(0.5 * (nu + k)) - 0.5 * digamma(0.5 * nu) - 0.5 * k / nu
    dnu = (
        dconst
        - 0.5 * np.log1p(q / nu)
        + 0.5 * (nu + k) * q / (nu * (nu + q))
        + r * a * (q - k) / (2.0 * (nu + q) * (nu + k))
        + _dlog_t_cdf_ddof(a, nu + k)
    )
    g_alpha = (r * root) @ z
    return logpdf, (g_mu, g_linv, float(np.sum(dnu)), g_alpha)


def _amst_data(model: AmstModel, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (model.k,) or x.ndim > 2:
        raise ValueError(f"x must have trailing dimension {model.k}, got shape {x.shape}")
    return x


def amst_log_pdf(model: AmstModel, x):
    """Log-density of an AMST model at a point ``(k,)`` or rows ``(n, k)``."""
    x = _amst_data(model, x)
    out, _ = _amst_terms(model.mu, model.linv, model.nu, model.alpha, np.atleast_2d(x), False)
    return float(out[0]) if x.ndim == 1 else out


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class BaselineFit:
    """Outcome of a direct maximum-likelihood fit.

    ``runtime_seconds`` covers the optimizer only.  ``stalled`` is set when
    the line search failed or the iteration cap was reached before the
    gradient tolerance; the best iterate is returned either way.
    """

    model: GseUnivariateModel | AmstModel
    loglik: float
    param_count: int
    n_obs: int
    runtime_seconds: float
    n_iter: int
    stalled: bool

    @property
    def aic(self) -> float:
        return information_criteria(self.loglik, self.param_count, self.n_obs)[0]

    @property
    def bic(self) -> float:
        return information_criteria(self.loglik, self.param_count, self.n_obs)[1]


def _minimize(objective, x0, mask, max_iters, gtol):
    base = np.asarray(x0, dtype=float)

    def fun(free):
        full = base.copy()
        full[mask] = free
        value, grad = objective(full)
        return value, grad[mask]

    start = time.perf_counter()
    res = bfgs_minimize(fun, base[mask], max_iters, gtol=gtol)
    elapsed = time.perf_counter() - start
    full = base.copy()
    full[mask] = res.x
    return full, res, elapsed


def fit_univariate(data, kind="logistic", symmetric: bool = False, max_iters: int = 500, gtol: float = 1e-8) -> BaselineFit:
    """Maximum-likelihood fit of a univariate GSE model.

    Optimizes ``(location, log scale, log nu, lam_s)`` from a moment start
    (median, standard deviation, ``nu = 10``, ``lam_s = 0``).  The objective
    is the per-observation negative log-likelihood.  ``symmetric=True`` pins
    ``lam_s`` at zero, giving the plain Student t fit.
    """
    x = np.asarray(data, dtype=float).ravel()
    if x.size < 5:
        raise DegenerateDataError(f"need at least 5 observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("data has non-finite entries")
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        raise DegenerateDataError("data are constant")
    kind = _gse_kind(kind)
    n = x.size

    def objective(theta):
        loc, log_s, log_nu, lam = theta
        if not (abs(log_s) < 700 and abs(log_nu) < 700):
            return math.inf, np.zeros(4)
        rows, grad = _gse_terms(loc, math.exp(log_s), math.exp(log_nu), lam, kind, x, True)
        value = -float(np.sum(rows)) / n
        return (value, -grad.sum(axis=0) / n) if math.isfinite(value) else (math.inf, np.zeros(4))

    theta0 = np.array([float(np.median(x)), math.log(sd), math.log(10.0), 0.0])
    mask = np.array([True, True, True, not symmetric])
    theta, res, elapsed = _minimize(objective, theta0, mask, max_iters, gtol)
    model = GseUnivariateModel(theta[0], math.exp(theta[1]), math.exp(theta[2]), theta[3], kind)
    return BaselineFit(model, -res.fun * n, 3 if symmetric else 4, n, elapsed, res.n_iter, not res.converged)


def fit_amst(data, symmetric: bool = False, max_iters: int = 500, gtol: float = 1e-8) -> BaselineFit:
    """Maximum-likelihood fit of an AMST model.

    Optimizes ``(mu, free entries of linv, log nu, alpha)`` from the sample
    mean, the inverse Cholesky factor of the sample covariance, ``nu = 10``
    and ``alpha = 0``.  ``symmetric=True`` pins ``alpha`` at zero (the
    multivariate t fit).
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ValueError("data must be a 2-D array")
    if not np.all(np.isfinite(x)):
        raise ValueError("data has non-finite entries")
    n, k = x.shape
    linv0 = initial_linv(x)
    rows, cols = np.tril_indices(k)
    n_l = rows.size
    diag = np.flatnonzero(rows == cols)

    def unpack(theta):
        mu = theta[:k]
        linv = np.zeros((k, k))
        linv[rows, cols] = theta[k : k + n_l]
        return mu, linv, math.exp(theta[k + n_l]), theta[k + n_l + 1 :]

    def objective(theta):
        if np.any(theta[k + diag] < DIAG_FLOOR) or abs(theta[k + n_l]) >= 700:
            return math.inf, np.zeros_like(theta)
        mu, linv, nu, alpha = unpack(theta)
        ll, (g_mu, g_linv, g_nu, g_alpha) = _amst_terms(mu, linv, nu, alpha, x, True)
        value = -float(np.sum(ll)) / n
        if not math.isfinite(value):
            return math.inf, np.zeros_like(theta)
        grad = np.concatenate([g_mu, g_linv[rows, cols], [nu * g_nu], g_alpha])
        return value, -grad / n

    theta0 = np.concatenate([x.mean(axis=0), linv0[rows, cols], [math.log(10.0)], np.zeros(k)])
    mask = np.ones(theta0.size, dtype=bool)
    if symmetric:
        mask[k + n_l + 1 :] = False
    theta, res, elapsed = _minimize(objective, theta0, mask, max_iters, gtol)
    mu, linv, nu, alpha = unpack(theta)
    p = k + n_l + 1 + (0 if symmetric else k)
    return BaselineFit(AmstModel(mu, linv, nu, alpha), -res.fun * n, p, n, elapsed, res.n_iter, not res.converged)
