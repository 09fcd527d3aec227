"""
Fitting procedures for SELIS models.

* :func:`bfgs_minimize` -- BFGS with Armijo backtracking and a hard iteration
  cap, used both for "loose" maximization of the quasi-log-likelihood and for
  the closed-form baselines.
* :func:`sgd_fit` -- plain stochastic gradient ascent with fresh Monte Carlo
  draws at every step.
* :func:`qmle_fit` -- alternation of a capped BFGS run on the quasi-log-likelihood
  at fixed draws with a few stochastic gradient steps on the shape parameter.

Gradients fed to the stochastic updates are per-observation averages, so the
step size does not have to be rescaled with the sample size.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .elliptical import DIAG_FLOOR, EllipticalParams, SphericalFamily
from .errors import DegenerateDataError, FitAbortedError
from .model import (
    McDraws,
    SelisModel,
    analytic_normalizer,
    derive_seed,
    grad_quasi,
    log_likelihood,
    quasi_log_likelihood,
    quasi_value_and_grad,
)
from .skewing import SigmoidKind, SkewingMatrix

__all__ = [
    "FitConfig",
    "FitResult",
    "TraceRecord",
    "BfgsResult",
    "initialize",
    "bfgs_minimize",
    "sgd_fit",
    "qmle_fit",
    "information_criteria",
    "param_count",
]

log = logging.getLogger(__name__)

# derive_seed stream tags
_QMLE_DRAWS, _SHAPE_DRAWS, _EVAL_DRAWS, _FINAL_DRAWS, _SGD_DRAWS, _SGD_BATCH = range(6)
MIN_SHAPE = 0.1
# relative size of a change in f that floating point can still resolve
_F_RESOLUTION = 4.0 * np.finfo(float).eps
_SHAPE_HALVINGS = 20


@dataclass(frozen=True)
class FitConfig:
    """Settings shared by :func:`qmle_fit` and :func:`sgd_fit`.

    ``convergence_tol`` is the relative change of the evaluation-set
    log-likelihood below which fitting stops; 0 disables the test.  Changes
    are taken between the means of consecutive windows of
    ``convergence_window`` outer iterations, since single iterations jitter
    with the Monte Carlo draws, and all of the last three windows must agree.  When the objective is stochastic, the returned
    model is the average of the last ``average_last`` outer iterates (1 returns
    the last iterate); exact objectives return the last iterate.
    ``shape_step`` is the step size of the stochastic shape updates, taken on
    ``log(shape)`` with per-observation gradients.
    """

    outer_iters: int = 50
    bfgs_max_iters: int = 10
    mc_size: int = 10_000
    sgd_step: float = 0.01
    sgd_batch: int | str = "full"
    shape_sgd_iters: int = 5
    shape_step: float = 1.0
    seed: int = 0
    convergence_tol: float = 1e-4
    divergence_nats: float = 1e3
    fix_skew: bool = False
    fix_shape: bool = False
    convergence_window: int = 5
    average_last: int = 10

    def __post_init__(self):
        for name in (
            "outer_iters",
            "bfgs_max_iters",
            "mc_size",
            "shape_sgd_iters",
            "convergence_window",
            "average_last",
        ):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.sgd_step < 0 or self.shape_step < 0:
            raise ValueError("step sizes must be non-negative")
        if self.convergence_tol < 0:
            raise ValueError("convergence_tol must be non-negative")
        if self.sgd_batch != "full" and int(self.sgd_batch) < 1:
            raise ValueError("sgd_batch must be 'full' or a positive integer")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    loglik: float
    std_error: float
    elapsed: float
    shape: float | None


@dataclass(eq=False)
class FitResult:
    model: SelisModel
    loglik: float
    std_error: float
    aic: float
    bic: float
    param_count: int
    n_obs: int
    elapsed_seconds: float
    method: str
    trace: list[TraceRecord] = field(default_factory=list)
    converged: bool = False


@dataclass(eq=False)
class BfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    stalled: bool
    converged: bool
    inv_hessian: np.ndarray | None = None


def information_criteria(loglik: float, param_count: int, n: int) -> tuple[float, float]:
    """``(AIC, BIC) = (-2 loglik + 2 p, -2 loglik + p log n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return -2.0 * loglik + 2.0 * param_count, -2.0 * loglik + param_count * math.log(n)


def param_count(model: SelisModel) -> int:
    k = model.k
    return k + k * (k + 1) // 2 + model.skew.n_free + (1 if model.family.has_shape else 0)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def initial_linv(data: np.ndarray) -> np.ndarray:
    """Inverse of the lower Cholesky factor of the sample covariance."""
    x = np.asarray(data, dtype=float)
    n, k = x.shape
    if n < k + 2:
        raise DegenerateDataError(f"need at least k + 2 = {k + 2} observations, got {n}")
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    sd = np.sqrt(np.diag(cov))
    if np.any(sd <= 0.0) or not np.all(np.isfinite(cov)):
        raise DegenerateDataError(
            "sample covariance is singular (a column is constant); add jitter or drop the column"
        )
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        chol = None
    # relative pivot test catches rank deficiency that Cholesky lets through
    if chol is None or np.min(np.diag(chol) / sd) < 1e-7:
        raise DegenerateDataError(
            "sample covariance is singular or nearly so; add jitter to the data"
        )
    return solve_triangular(chol, np.eye(k), lower=True)


def initialize(
    data,
    family,
    sigmoid="logistic",
    skew_shape="full",
    m: int | None = None,
    skew_start: str = "zero",
) -> SelisModel:
    """Moment-based starting model: sample mean, inverse Cholesky factor, zero skewing.

    Parameters
    ----------
    data : array_like, shape (n, k)
    family : SphericalFamily or str
        A kind name is given the default starting shape (``nu = 10``,
        ``beta = 1``); a family instance is taken as is.
    sigmoid : SigmoidKind or str
    skew_shape : {"full", "diag"}
        ``"diag"`` forces ``m = k`` and a diagonal skewing matrix.
    m : int, optional
        Number of skewing rows for ``"full"``; defaults to ``k``.
    skew_start : {"zero", "skewness"}
        ``"skewness"`` sets each diagonal skewing entry to the sample skewness
        of the matching standardized residual, clipped to [-1, 1].  At the
        zero start the skewing gradient vanishes (residuals sum to zero), and
        with a normal kernel the whole gradient does, so a fit cannot leave
        the symmetric model.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ValueError("data must be a 2-D array")
    if not np.all(np.isfinite(x)):
        raise ValueError("data has non-finite entries")
    k = x.shape[1]
    if isinstance(family, str):
        family = {
            "normal": SphericalFamily.normal(),
            "student_t": SphericalFamily.student_t(10.0),
            "power_exponential": SphericalFamily.power_exponential(1.0),
        }[family]
    linv = initial_linv(x)
    if skew_shape not in ("full", "diag"):
        raise ValueError("skew_shape must be 'full' or 'diag'")
    diagonal = skew_shape == "diag"
    rows = k if (diagonal or m is None) else int(m)
    if rows < 1:
        raise ValueError("m must be >= 1")
    if skew_start not in ("zero", "skewness"):
        raise ValueError("skew_start must be 'zero' or 'skewness'")
    sig = sigmoid if isinstance(sigmoid, SigmoidKind) else SigmoidKind(sigmoid)
    mu = x.mean(axis=0)
    skew = SkewingMatrix.zeros(rows, k, diagonal)
    if skew_start == "skewness":
        z = (x - mu) @ linv.T
        gamma = np.mean(z**3, axis=0) / np.mean(z**2, axis=0) ** 1.5
        lam = np.zeros((rows, k))
        d = min(rows, k)
        lam[np.arange(d), np.arange(d)] = np.clip(gamma[:d], -1.0, 1.0)
        skew = SkewingMatrix(lam, diagonal)
    return SelisModel(EllipticalParams(mu, linv, family), skew, sig)


# ---------------------------------------------------------------------------
# BFGS
# ---------------------------------------------------------------------------


def bfgs_minimize(
    fun,
    x0,
    max_iters: int,
    gtol: float = 1e-8,
    c1: float = 1e-4,
    shrink: float = 0.5,
    max_halvings: int = 40,
    h0=None,
) -> BfgsResult:
    """Minimize ``fun`` (returning ``(value, gradient)``) with BFGS.

    Each iteration takes a backtracking (Armijo) step along the quasi-Newton
    direction.  The inverse Hessian starts at the identity, so the first
    iteration is a line-searched steepest-descent step; it is rescaled by
    ``y's / y'y`` before the first update.  A trial point where ``fun`` is not
    finite counts as an Armijo failure, which lets callers encode simple
    bounds by returning ``inf``.

    Stops after ``max_iters`` iterations, when the gradient norm drops below
    ``gtol``, or when ``max_halvings`` halvings fail to find an acceptable step
    (``stalled=True``).  The best iterate found is returned, together with the
    final inverse-Hessian approximation, which can be passed back as ``h0`` to
    warm-start a related problem.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=float)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise ValueError("objective or gradient is not finite at the starting point")
    n = x.size
    scale_first = h0 is None
    h = np.eye(n) if h0 is None else np.array(h0, dtype=float)
    stalled = converged = False
    it = 0
    for it in range(1, int(max_iters) + 1):
        if np.linalg.norm(g) <= gtol:
            converged = True
            it -= 1
            break
        p = -h @ g
        slope = float(g @ p)
        if not slope < 0.0:
            h = np.eye(n)
            p = -g
            slope = -float(g @ g)
        if -slope <= _F_RESOLUTION * max(1.0, abs(f)):
            # the predicted decrease is below the resolution of f
            converged = True
            it -= 1
            break
        t = 1.0
        for _ in range(max_halvings + 1):
            x_new = x + t * p
            f_new, g_new = fun(x_new)
            f_new = float(f_new)
            if np.isfinite(f_new) and f_new <= f + c1 * t * slope and np.all(np.isfinite(g_new)):
                break
            t *= shrink
        else:
            stalled = True
            it -= 1
            break
        g_new = np.asarray(g_new, dtype=float)
        s = x_new - x
        y = g_new - g
        ys = float(y @ s)
        if ys > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if it == 1 and scale_first:
                h = np.eye(n) * (ys / float(y @ y))
            rho = 1.0 / ys
            hy = h @ y
            h = h + ((ys + y @ hy) * rho * rho) * np.outer(s, s) - rho * (np.outer(hy, s) + np.outer(s, hy))
        x, f, g = x_new, f_new, g_new
    else:
        converged = bool(np.linalg.norm(g) <= gtol)
    return BfgsResult(x, f, g, it, stalled, converged, h)


# ---------------------------------------------------------------------------
# Shared pieces of the fitters
# ---------------------------------------------------------------------------


def _check_inputs(data, model: SelisModel) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.k:
        raise ValueError(f"data must be an (n, {model.k}) matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("data has non-finite entries")
    return x


def _coord_mask(model: SelisModel, config: FitConfig) -> np.ndarray:
    mask = np.ones(model.n_coords, dtype=bool)
    if config.fix_skew:
        mask[model.n_coords - model.skew.n_free :] = False
    return mask


def _diag_positions(model: SelisModel) -> np.ndarray:
    k = model.k
    rows, cols = np.tril_indices(k)
    return k + np.flatnonzero(rows == cols)


def _evaluate(model: SelisModel, data, mc_size: int, seed: int) -> tuple[float, float]:
    if model.structurally_analytic:
        return log_likelihood(model, data, None)
    draws = McDraws.generate(model.family, model.k, mc_size, seed)
    return log_likelihood(model, data, draws)


def _result(model, data, config, method, trace, start, converged) -> FitResult:
    elapsed = time.perf_counter() - start
    ll, se = _evaluate(model, data, 4 * config.mc_size, derive_seed(config.seed, _FINAL_DRAWS))
    p = param_count(model)
    n = data.shape[0]
    aic, bic = information_criteria(ll, p, n)
    return FitResult(model, ll, se, aic, bic, p, n, elapsed, method, trace, converged)


def _converged(trace: list[TraceRecord], tol: float, window: int) -> bool:
    if tol <= 0.0 or len(trace) < 3 * window:
        return False
    values = [t.loglik for t in trace[-3 * window :]]
    means = [sum(values[i : i + window]) / window for i in range(0, 3 * window, window)]
    return all(abs(b - a) <= tol * max(abs(a), 1e-300) for a, b in zip(means, means[1:]))


def _exact_objective(model: SelisModel, config: FitConfig) -> bool:
    """Whether every quasi-likelihood the fit sees is the exact likelihood."""
    if model.structurally_analytic:
        return True
    return config.fix_skew and analytic_normalizer(model) is not None


def _tail_average(history: list[SelisModel], count: int) -> SelisModel:
    """Average of the last ``count`` iterates; shape is averaged on log scale."""
    tail = history[-count:]
    last = tail[-1]
    vectors = [m.to_vector() for m in tail]
    shapes = {m.family.shape for m in tail}
    if all(np.array_equal(v, vectors[0]) for v in vectors) and len(shapes) == 1:
        return last
    vec = np.mean(vectors, axis=0)
    model = last.from_vector(vec)
    if last.family.has_shape:
        shape = math.exp(sum(math.log(m.family.shape) for m in tail) / len(tail))
        model = model.with_family(last.family.with_shape(shape))
    return model


def _step_shape(shape: float, delta: float) -> float:
    """Move ``log(shape)`` by ``delta``, keeping the shape above the floor."""
    if delta == 0.0:
        return shape
    return max(math.exp(math.log(shape) + delta), MIN_SHAPE)


def _shape_of(model: SelisModel):
    return model.family.shape if model.family.has_shape else None


# ---------------------------------------------------------------------------
# SGD
# ---------------------------------------------------------------------------


def sgd_fit(data, model0: SelisModel, config: FitConfig = FitConfig()) -> FitResult:
    """Stochastic gradient ascent on the log-likelihood.

    Every step draws a data batch and ``mc_size`` fresh spherical draws and
    moves all free coordinates (including ``log(shape)``) by ``sgd_step`` times
    the per-observation gradient.  A trace record, measured on a fixed
    evaluation draw set, is taken every ``bfgs_max_iters`` steps, for at most
    ``outer_iters`` records.
    """
    x = _check_inputs(data, model0)
    n = x.shape[0]
    batch = n if config.sgd_batch == "full" else min(int(config.sgd_batch), n)
    mask = _coord_mask(model0, config)
    diag_pos = _diag_positions(model0)
    batch_rng = np.random.default_rng(derive_seed(config.seed, _SGD_BATCH))
    eval_seed = derive_seed(config.seed, _EVAL_DRAWS)

    model = model0
    trace: list[TraceRecord] = []
    history: list[SelisModel] = []
    start = time.perf_counter()
    converged = False
    step = 0
    for outer in range(config.outer_iters):
        for _ in range(config.bfgs_max_iters):
            xb = x if batch == n else x[np.sort(batch_rng.choice(n, size=batch, replace=False))]
            draws = McDraws.generate(model.family, model.k, config.mc_size, derive_seed(config.seed, _SGD_DRAWS, step))
            g, g_shape = grad_quasi(model, xb, draws)
            if not np.all(np.isfinite(g)) or (g_shape is not None and not math.isfinite(g_shape)):
                raise FitAbortedError(f"non-finite gradient at SGD step {step}", iteration=step, trace=trace)
            vec = model.to_vector()
            vec[mask] += config.sgd_step * g[mask] / batch
            vec[diag_pos] = np.maximum(vec[diag_pos], DIAG_FLOOR)
            new = model.from_vector(vec)
            if g_shape is not None and not config.fix_shape:
                shape = model.family.shape
                new = new.with_family(model.family.with_shape(_step_shape(shape, config.sgd_step * shape * g_shape / batch)))
            model = new
            step += 1
        ll, se = _evaluate(model, x, config.mc_size, eval_seed)
        trace.append(TraceRecord(outer, ll, se, time.perf_counter() - start, _shape_of(model)))
        log.debug("sgd outer %d loglik %.4f", outer, ll)
        history.append(model)
        if _converged(trace, config.convergence_tol, config.convergence_window):
            converged = True
            break
    if not (_exact_objective(model, config) and batch == n):
        model = _tail_average(history, config.average_last)
    return _result(model, x, config, "sgd", trace, start, converged)


# ---------------------------------------------------------------------------
# QMLE / SGD alternation
# ---------------------------------------------------------------------------


def _quasi_objective(model: SelisModel, data, draws: McDraws, mask, base_vec):
    """Negative per-observation quasi-log-likelihood over the free coordinates."""
    n = data.shape[0]
    diag_pos = _diag_positions(model)

    def fun_and_grad(free):
        vec = base_vec.copy()
        vec[mask] = free
        if np.any(vec[diag_pos] < DIAG_FLOOR):
            return math.inf, np.zeros_like(free)
        trial = model.from_vector(vec, clip_diagonal=False)
        value, g, _ = quasi_value_and_grad(trial, data, draws)
        return -value / n, -g[mask] / n

    return fun_and_grad


def _shape_steps(model: SelisModel, x, config: FitConfig, outer: int) -> SelisModel:
    """Stochastic gradient steps on ``log(shape)``, each safeguarded by backtracking.

    Radial draws from one seed are common random numbers across shapes, so the
    quasi-log-likelihood on those draws is a smooth function of the shape.  A
    step is halved until that function does not decrease; without this the
    fixed step diverges where the curvature in ``log(shape)`` is large.
    """
    n, k = x.shape
    for j in range(config.shape_sgd_iters):
        seed = derive_seed(config.seed, _SHAPE_DRAWS, outer, j)
        draws = McDraws.generate(model.family, k, config.mc_size, seed)
        value, _, g_shape = quasi_value_and_grad(model, x, draws)
        if not (math.isfinite(g_shape) and math.isfinite(value)):
            raise FitAbortedError(f"non-finite shape gradient at outer iteration {outer}", iteration=outer)
        shape = model.family.shape
        delta = config.shape_step * shape * g_shape / n
        for _ in range(_SHAPE_HALVINGS):
            trial = model.with_family(model.family.with_shape(_step_shape(shape, delta)))
            trial_value = quasi_log_likelihood(trial, x, McDraws.generate(trial.family, k, config.mc_size, seed))
            if trial_value >= value:
                model = trial
                break
            delta *= 0.5
    return model


def qmle_fit(data, model0: SelisModel, config: FitConfig = FitConfig()) -> FitResult:
    """Quasi-maximum-likelihood fit with loose BFGS maximization.

    Each outer iteration regenerates ``mc_size`` spherical draws at the current
    shape, runs at most ``bfgs_max_iters`` BFGS iterations on the resulting
    deterministic quasi-log-likelihood over ``(mu, linv, lambda)``, then takes
    ``shape_sgd_iters`` stochastic gradient steps on ``log(shape)`` (floored at
    0.1) with fresh draws per step, each step halved until the
    quasi-log-likelihood on its draws does not decrease.  The log-likelihood recorded in the trace
    is measured on a fixed evaluation draw set; the reported log-likelihood
    uses a separate set of ``4 * mc_size`` draws.

    Raises
    ------
    FitAbortedError
        If the evaluation log-likelihood drops by more than ``divergence_nats``
        between outer iterations, the usual symptom of the quasi-likelihood
        being overfitted to its draws (it is unbounded in ``lambda``).
    """
    x = _check_inputs(data, model0)
    mask = _coord_mask(model0, config)
    eval_seed = derive_seed(config.seed, _EVAL_DRAWS)
    model = model0
    trace: list[TraceRecord] = []
    history: list[SelisModel] = []
    start = time.perf_counter()
    converged = False
    for outer in range(config.outer_iters):
        draws = McDraws.generate(
            model.family, model.k, config.mc_size, derive_seed(config.seed, _QMLE_DRAWS, outer)
        )
        base = model.to_vector()
        objective = _quasi_objective(model, x, draws, mask, base)
        res = bfgs_minimize(objective, base[mask], config.bfgs_max_iters)
        vec = base.copy()
        vec[mask] = res.x
        model = model.from_vector(vec)
        if model.family.has_shape and not config.fix_shape:
            model = _shape_steps(model, x, config, outer)
        ll, se = _evaluate(model, x, config.mc_size, eval_seed)
        if not math.isfinite(ll):
            raise FitAbortedError(f"non-finite log-likelihood at outer iteration {outer}", iteration=outer, trace=trace)
        trace.append(TraceRecord(outer, ll, se, time.perf_counter() - start, _shape_of(model)))
        log.debug("qmle outer %d loglik %.4f (bfgs iters %d)", outer, ll, res.n_iter)
        if len(trace) >= 2 and trace[-2].loglik - ll > config.divergence_nats:
            raise FitAbortedError(
                f"log-likelihood fell by {trace[-2].loglik - ll:.1f} nats at outer iteration {outer}: "
                "the quasi-log-likelihood is unbounded and is being overfitted to its Monte Carlo draws; "
                "lower bfgs_max_iters or raise mc_size",
                iteration=outer,
                trace=trace,
            )
        history.append(model)
        if _converged(trace, config.convergence_tol, config.convergence_window):
            converged = True
            break
    if not _exact_objective(model, config):
        model = _tail_average(history, config.average_last)
    return _result(model, x, config, "qmle", trace, start, converged)
