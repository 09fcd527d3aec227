"""
The SELIS density: an elliptical law tilted by a product of ``m`` sigmoids,

    f(x) = g_m(lambda linv (x - mu)) El(x; mu, A A^T) / E_U[g_m(lambda U)],

with ``U`` spherical.  The numerator is closed form; the normalizer is
``2^-m`` in the analytic cases (at most one non-zero skewing row, or a
diagonal skewing matrix) and a Monte Carlo average otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from . import _parallel
from .elliptical import (
    DIAG_FLOOR,
    EllipticalParams,
    SphericalFamily,
    dlog_dshape,
    dlog_kernel_dq,
    log_kernel,
    log_norm_const,
    sample_spherical,
)
from .errors import BudgetExceededError, NumericalDegeneracyError
from .skewing import SigmoidKind, SkewingMatrix, log_and_dlog, log_sigmoid

__all__ = [
    "SelisModel",
    "McDraws",
    "NormalizerEstimate",
    "SampleResult",
    "derive_seed",
    "unnormalized_log_pdf",
    "analytic_normalizer",
    "estimate_normalizer",
    "log_likelihood",
    "quasi_log_likelihood",
    "grad_quasi",
    "quasi_value_and_grad",
    "sample",
]

LOG_HALF = math.log(0.5)


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed of ``seed`` for the integer ``keys``."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *[int(k) for k in keys]])
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


@dataclass(frozen=True, eq=False)
class SelisModel:
    """Location, inverse scale factor, family, skewing matrix and sigmoid."""

    ell: EllipticalParams
    skew: SkewingMatrix
    sigmoid: SigmoidKind

    def __post_init__(self):
        if self.skew.k != self.ell.k:
            raise ValueError(
                f"skewing matrix has {self.skew.k} columns but the elliptical part has dimension {self.ell.k}"
            )
        if not isinstance(self.sigmoid, SigmoidKind):
            object.__setattr__(self, "sigmoid", SigmoidKind(self.sigmoid))

    @classmethod
    def build(cls, mu, linv, lam, family, sigmoid="logistic", diagonal_only=False) -> SelisModel:
        return cls(
            EllipticalParams(mu, linv, family),
            SkewingMatrix(lam, diagonal_only),
            sigmoid if isinstance(sigmoid, SigmoidKind) else SigmoidKind(sigmoid),
        )

    @property
    def k(self) -> int:
        return self.ell.k

    @property
    def m(self) -> int:
        return self.skew.m

    @property
    def mu(self) -> np.ndarray:
        return self.ell.mu

    @property
    def linv(self) -> np.ndarray:
        return self.ell.linv

    @property
    def lam(self) -> np.ndarray:
        return self.skew.lam

    @property
    def family(self) -> SphericalFamily:
        return self.ell.family

    @property
    def structurally_analytic(self) -> bool:
        """Whether the normalizer is ``2^-m`` for every value of the free entries."""
        rows_with_free = int(np.any(self.skew.mask, axis=1).sum())
        return self.skew.diagonal_only or rows_with_free <= 1

    def with_family(self, family: SphericalFamily) -> SelisModel:
        return SelisModel(self.ell.replace(family=family), self.skew, self.sigmoid)

    # -- flat optimizer coordinates: mu, lower triangle of linv, free lambda --

    @property
    def n_coords(self) -> int:
        k = self.k
        return k + k * (k + 1) // 2 + self.skew.n_free

    def to_vector(self) -> np.ndarray:
        rows, cols = np.tril_indices(self.k)
        return np.concatenate([self.mu, self.linv[rows, cols], self.skew.free_values()])

    def split_vector(self, vec):
        """Split a flat coordinate vector into ``(mu, linv, lam)`` arrays (not validated)."""
        vec = np.asarray(vec, dtype=float)
        k = self.k
        ntri = k * (k + 1) // 2
        mu = vec[:k]
        linv = np.zeros((k, k))
        linv[np.tril_indices(k)] = vec[k : k + ntri]
        lam = np.zeros((self.m, k))
        lam[self.skew.mask] = vec[k + ntri :]
        return mu, linv, lam

    def from_vector(self, vec, clip_diagonal: bool = True) -> SelisModel:
        mu, linv, lam = self.split_vector(vec)
        if clip_diagonal:
            idx = np.diag_indices(self.k)
            linv[idx] = np.maximum(linv[idx], DIAG_FLOOR)
        return SelisModel(
            EllipticalParams(mu, linv, self.family),
            SkewingMatrix(lam, self.skew.diagonal_only),
            self.sigmoid,
        )

    def pack_grad(self, g_mu, g_linv, g_lam) -> np.ndarray:
        rows, cols = np.tril_indices(self.k)
        return np.concatenate([g_mu, g_linv[rows, cols], g_lam[self.skew.mask]])


@dataclass(frozen=True, eq=False)
class McDraws:
    """A reproducible block of spherical draws used for normalizer estimates."""

    family: SphericalFamily
    k: int
    count: int
    seed: int
    samples: np.ndarray = field(repr=False)

    @classmethod
    def generate(cls, family: SphericalFamily, k: int, count: int, seed: int) -> McDraws:
        if int(count) < 1:
            raise ValueError("McDraws needs at least one draw")
        samples = sample_spherical(family, k, count, seed)
        samples.setflags(write=False)
        return cls(family, int(k), int(count), int(seed), samples)


@dataclass(frozen=True)
class NormalizerEstimate:
    """Estimate of ``E_U[g_m(lambda U)]``; ``log_value`` avoids underflow."""

    value: float
    std_error: float
    analytic: bool
    log_value: float


@dataclass(frozen=True, eq=False)
class SampleResult:
    samples: np.ndarray
    acceptance_rate: float
    attempts: int


# ---------------------------------------------------------------------------
# Validation helpers
# ---------------------------------------------------------------------------


def _as_data(model: SelisModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim > 2 or x.shape[-1:] != (model.k,):
        raise ValueError(f"data must have {model.k} columns, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("data has non-finite entries")
    return x


def _check_draws(model: SelisModel, draws: McDraws):
    if draws.count < 1 or draws.samples.shape[0] == 0:
        raise ValueError("McDraws is empty")
    if draws.k != model.k:
        raise ValueError(f"draws have dimension {draws.k}, model has {model.k}")
    if draws.family != model.family:
        raise ValueError(f"draws were generated for {draws.family}, model uses {model.family}")


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


def _data_rows(mu, linv, lam, family, sigmoid, x, want_grad):
    """Per-row pieces of the unnormalized log-density on a chunk of data."""
    k = linv.shape[0]
    d = x - mu
    z = d @ linv.T
    q = np.einsum("ij,ij->i", z, z)
    s = z @ lam.T
    if not want_grad:
        return np.sum(log_sigmoid(sigmoid, s), axis=1) + log_kernel(family, k, q), None
    log_g, w = log_and_dlog(sigmoid, s)
    value = np.sum(log_g, axis=1) + log_kernel(family, k, q)
    kq = dlog_kernel_dq(family, k, q)
    r = 2.0 * kq[:, None] * z + w @ lam
    g_linv = r.T @ d
    g_mu = -np.sum(r, axis=0) @ linv
    g_lam = w.T @ z
    g_shape = np.sum(dlog_dshape(family, k, q)) if family.has_shape else 0.0
    return value, (g_mu, g_linv, g_lam, g_shape)


def _log_det(linv) -> float:
    return float(np.sum(np.log(np.diag(linv))))


def _data_term(mu, linv, lam, family, sigmoid, x, want_grad=False):
    """Sum of the unnormalized log-density over rows of ``x`` (plus gradients)."""
    k = linv.shape[0]
    parts = _parallel.map_rows(lambda c: _data_rows(mu, linv, lam, family, sigmoid, c, want_grad), x)
    n = x.shape[0]
    value = float(np.sum(np.concatenate([p[0] for p in parts])))
    value += n * (log_norm_const(family, k) + _log_det(linv))
    if not want_grad:
        return value, None
    g_mu = sum((p[1][0] for p in parts), np.zeros(k))
    g_linv = sum((p[1][1] for p in parts), np.zeros((k, k)))
    g_linv = np.tril(g_linv) + n * np.diag(1.0 / np.diag(linv))
    g_lam = sum((p[1][2] for p in parts), np.zeros(lam.shape))
    g_shape = float(sum(p[1][3] for p in parts))
    return value, (g_mu, g_linv, g_lam, g_shape)


def unnormalized_log_pdf(model: SelisModel, x):
    """``log g_m(lambda z) + log El(x)`` at a point or on rows of ``x``."""
    x = _as_data(model, x)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    k = model.k
    vals = np.concatenate(
        _parallel.map_rows(
            lambda c: _data_rows(model.mu, model.linv, model.lam, model.family, model.sigmoid, c, False)[0],
            rows,
        )
    )
    vals = vals + log_norm_const(model.family, k) + _log_det(model.linv)
    return float(vals[0]) if single else vals


def log_pdf(model: SelisModel, x, draws: McDraws | None = None):
    """Normalized log-density; ``draws`` is required unless the normalizer is analytic."""
    norm = analytic_normalizer(model)
    if norm is None:
        if draws is None:
            raise ValueError("Monte Carlo draws are required for a non-analytic normalizer")
        log_norm = estimate_normalizer(model, draws).log_value
    else:
        log_norm = math.log(norm)
    return unnormalized_log_pdf(model, x) - log_norm


# ---------------------------------------------------------------------------
# Normalizer
# ---------------------------------------------------------------------------


def analytic_normalizer(model: SelisModel) -> float | None:
    """``2^-m`` when at most one skewing row is non-zero or lambda is diagonal, else ``None``."""
    lam = model.lam
    nonzero_rows = int(np.any(lam != 0.0, axis=1).sum())
    off_diag = lam.copy()
    np.fill_diagonal(off_diag, 0.0)
    if model.skew.diagonal_only or nonzero_rows <= 1 or not np.any(off_diag):
        return 2.0 ** (-model.m)
    return None


def _draw_log_gm(lam, sigmoid, u, want_dlog=False):
    def rows(c):
        if not want_dlog:
            return np.sum(log_sigmoid(sigmoid, c @ lam.T), axis=1), None
        log_g, w = log_and_dlog(sigmoid, c @ lam.T)
        return np.sum(log_g, axis=1), w

    parts = _parallel.map_rows(rows, u)
    lg = np.concatenate([p[0] for p in parts])
    w = np.concatenate([p[1] for p in parts]) if want_dlog else None
    return lg, w


def _log_mean_exp(lg: np.ndarray):
    top = np.max(lg)
    if not np.isfinite(top):
        raise NumericalDegeneracyError(
            "Monte Carlo normalizer is zero: every skewing product underflowed"
        )
    e = np.exp(lg - top)
    mean_e = float(np.mean(e))
    log_value = float(top) + math.log(mean_e)
    rel_se = float(np.std(e, ddof=1) / (mean_e * math.sqrt(e.size))) if e.size > 1 else 0.0
    return log_value, rel_se


def estimate_normalizer(model: SelisModel, draws: McDraws, use_analytic: bool = True) -> NormalizerEstimate:
    """Normalizer of ``model``: analytic when possible, else a mean over ``draws``.

    ``use_analytic=False`` forces the Monte Carlo average even when a closed
    form exists (for checking one against the other).
    """
    _check_draws(model, draws)
    exact = analytic_normalizer(model) if use_analytic else None
    if exact is not None:
        return NormalizerEstimate(exact, 0.0, True, math.log(exact))
    lg, _ = _draw_log_gm(model.lam, model.sigmoid, draws.samples)
    log_value, rel_se = _log_mean_exp(lg)
    value = math.exp(log_value)
    if value == 0.0:
        raise NumericalDegeneracyError("Monte Carlo normalizer underflowed to zero")
    return NormalizerEstimate(value, value * rel_se, False, float(log_value))


# ---------------------------------------------------------------------------
# Likelihoods
# ---------------------------------------------------------------------------


def log_likelihood(model: SelisModel, data, draws: McDraws | None) -> tuple[float, float]:
    """Log-likelihood and its delta-method Monte Carlo standard error.

    ``draws`` may be ``None`` when the normalizer is analytic.
    """
    x = np.atleast_2d(_as_data(model, data))
    n = x.shape[0]
    value, _ = _data_term(model.mu, model.linv, model.lam, model.family, model.sigmoid, x)
    exact = analytic_normalizer(model)
    if exact is not None:
        return float(value - n * math.log(exact)), 0.0
    if draws is None:
        raise ValueError("Monte Carlo draws are required for a non-analytic normalizer")
    _check_draws(model, draws)
    lg, _ = _draw_log_gm(model.lam, model.sigmoid, draws.samples)
    log_value, rel_se = _log_mean_exp(lg)
    return float(value - n * log_value), float(n * rel_se)


def quasi_log_likelihood(model: SelisModel, data, draws: McDraws) -> float:
    """Deterministic quasi-log-likelihood on fixed draws.

    The normalizer is replaced by the draw average of ``g_m(lambda u_j)``,
    computed as a max-shifted log-sum-exp.  For skewing structures whose
    normalizer is ``2^-m`` for all parameter values the exact constant is used.
    """
    return _quasi(model, data, draws, want_grad=False)[0]


def grad_quasi(model: SelisModel, data, draws: McDraws):
    """Gradient of :func:`quasi_log_likelihood`.

    Returns
    -------
    grad : ndarray
        Exact gradient at fixed draws over the flat coordinates
        ``(mu, lower triangle of linv, free lambda)``; see
        :meth:`SelisModel.to_vector`.
    grad_shape : float or None
        Stochastic derivative in the shape parameter.  The normalizer part is
        the self-normalized draw average of the spherical score weighted by
        ``g_m``.  ``None`` for the normal family.
    """
    _, grad, grad_shape = _quasi(model, data, draws, want_grad=True)
    return grad, grad_shape


def quasi_value_and_grad(model: SelisModel, data, draws: McDraws):
    """``(quasi_log_likelihood, grad, grad_shape)`` from a single pass over the data."""
    return _quasi(model, data, draws, want_grad=True)


def _quasi(model: SelisModel, data, draws: McDraws, want_grad: bool):
    x = np.atleast_2d(_as_data(model, data))
    n = x.shape[0]
    value, grads = _data_term(
        model.mu, model.linv, model.lam, model.family, model.sigmoid, x, want_grad
    )
    if model.structurally_analytic:
        value -= n * model.m * LOG_HALF
        if not want_grad:
            return value, None, None
        g_mu, g_linv, g_lam, g_shape = grads
        return (
            value,
            model.pack_grad(g_mu, g_linv, g_lam),
            g_shape if model.family.has_shape else None,
        )

    _check_draws(model, draws)
    u = draws.samples
    lg, w = _draw_log_gm(model.lam, model.sigmoid, u, want_dlog=want_grad)
    lse = logsumexp(lg)
    if not np.isfinite(lse):
        raise NumericalDegeneracyError(
            "Monte Carlo normalizer is zero: every skewing product underflowed"
        )
    value -= n * (float(lse) - math.log(u.shape[0]))
    if not want_grad:
        return value, None, None

    g_mu, g_linv, g_lam, g_shape = grads
    p = np.exp(lg - lse)
    g_lam = g_lam - n * ((p[:, None] * w).T @ u)
    grad = model.pack_grad(g_mu, g_linv, g_lam)
    if model.family.has_shape:
        q = np.einsum("ij,ij->i", u, u)
        score = dlog_dshape(model.family, model.k, q)
        g_shape = g_shape - n * float(np.dot(p, score))
        return value, grad, g_shape
    return value, grad, None


# ---------------------------------------------------------------------------
# Rejection sampler
# ---------------------------------------------------------------------------


def sample(model: SelisModel, n: int, seed: int, max_attempts: int | None = None) -> SampleResult:
    """Rejection sampler: spherical proposal ``v``, accept with probability ``g_m(lambda v)``.

    Accepted proposals are mapped to ``x = mu + A v`` by a triangular solve
    against ``linv``.  Raises :class:`BudgetExceededError` (carrying the draws
    accepted so far) when ``max_attempts`` proposals do not yield ``n``
    acceptances; the default budget is ``1000 n 2^m``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if max_attempts is None:
        max_attempts = 1000 * n * 2**model.m
    max_attempts = int(max_attempts)
    k = model.k
    batch = int(min(max(1024, 2 * n * 2**model.m), 1 << 20))
    rng = np.random.default_rng(seed)
    accepted = []
    n_acc = 0
    attempts = 0
    while n_acc < n and attempts < max_attempts:
        size = min(batch, max_attempts - attempts)
        v = sample_spherical(model.family, k, size, int(rng.integers(0, 2**63)))
        log_u = np.log(1.0 - rng.random(size))
        lg, _ = _draw_log_gm(model.lam, model.sigmoid, v)
        keep = np.flatnonzero(log_u < lg)
        need = n - n_acc
        if keep.size >= need:
            keep = keep[:need]
            attempts += int(keep[-1]) + 1
        else:
            attempts += size
        accepted.append(v[keep])
        n_acc += keep.size
    v = np.concatenate(accepted) if accepted else np.zeros((0, k))
    x = model.mu + solve_triangular(model.linv, v.T, lower=True).T if v.size else v
    if n_acc < n:
        raise BudgetExceededError(
            f"rejection sampler accepted {n_acc} of {n} draws within {attempts} attempts",
            partial=x,
            attempts=attempts,
        )
    return SampleResult(x, n_acc / attempts, attempts)
