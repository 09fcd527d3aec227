"""
Command-line front end.

Sub-commands: ``fit``, ``sample``, ``loglik``, ``compare``, ``skewbench`` and
``densgrid``.  Exit codes: 0 success, 1 input error (bad usage, unreadable or
malformed data or model file, column mismatch), 2 fit aborted (including
degenerate data found at initialization), 3 sampling budget exhausted.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import sys
import zlib

import numpy as np

from . import modelfile
from .baselines import (
    CANONICAL_KINDS,
    AmstModel,
    GseUnivariateModel,
    amst_log_pdf,
    fit_amst,
    fit_univariate,
    gse_log_pdf,
)
from .dataset import DataLoadError, fingerprint, load_dataset
from .errors import BudgetExceededError, DegenerateDataError, FitAbortedError, NumericalDegeneracyError
from .estimate import _FINAL_DRAWS, FitConfig, _evaluate, information_criteria, initialize, param_count, qmle_fit, sgd_fit
from .model import SelisModel, derive_seed, sample, unnormalized_log_pdf
from .modelfile import ModelFile, ModelFileError, encode_float
from .skewing import SigmoidKind

__all__ = ["main", "model_label", "parse_model_name"]

EXIT_OK, EXIT_INPUT, EXIT_FIT, EXIT_BUDGET = 0, 1, 2, 3

KERNELS = {"normal": "normal", "t": "student_t", "pexp": "power_exponential"}
KERNEL_PREFIX = {"normal": "GMSN", "student_t": "GMST", "power_exponential": "GMSPE"}
SKEWS = {
    "logistic": "logistic",
    "error": "error",
    "sech": "hyperbolic_secant",
    "arctan": "arctan",
    "rsqrt": "reciprocal_sqrt",
    "tcdf": "student_t_cdf",
}
SKEW_LABEL = {
    "logistic": "Logistic",
    "error": "Error",
    "hyperbolic_secant": "Sech",
    "arctan": "Arctan",
    "reciprocal_sqrt": "Rsqrt",
    "student_t_cdf": "Tcdf",
}
DEFAULT_SKEW_NU = 5.0
MAX_GRID = 2000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with other input errors; 2 means "fit aborted"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------


def model_label(model) -> str:
    """Table label such as ``GMST-Logistic-D`` or ``AMST``."""
    if isinstance(model, AmstModel):
        return "AMST"
    if isinstance(model, GseUnivariateModel):
        kind = model.kind if isinstance(model.kind, str) else model.kind.kind
        return f"GSE-{SKEW_LABEL.get(kind, kind)}"
    label = f"{KERNEL_PREFIX[model.family.kind]}-{SKEW_LABEL[model.sigmoid.kind]}"
    return label + "-D" if model.skew.diagonal_only else label


def parse_model_name(name: str):
    """Map a ``compare`` model name to ``("amst", None)`` or ``("selis", (family, skew, diag))``."""
    key = name.strip().lower()
    if key == "amst":
        return "amst", None
    parts = key.split("-")
    diag = len(parts) == 3 and parts[2] == "d"
    if len(parts) not in (2, 3) or (len(parts) == 3 and not diag):
        raise UsageError(f"unknown model {name!r}")
    prefixes = {v.lower(): k for k, v in KERNEL_PREFIX.items()}
    if parts[0] not in prefixes or parts[1] not in SKEWS:
        raise UsageError(
            f"unknown model {name!r}; expected amst or <gmst|gmsn|gmspe>-<skewing>[-d], "
            f"skewing one of {', '.join(SKEWS)}"
        )
    return "selis", (prefixes[parts[0]], SKEWS[parts[1]], diag)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _fmt(x, digits=2) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "-"
    return f"{x:.{digits}f}"


def format_table(headers, rows) -> str:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) for i, h in enumerate(headers)]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(str(c).rjust(w) if i else str(c).ljust(w) for i, (c, w) in enumerate(zip(r, widths))))
    return "\n".join(lines)


def _write_csv(path, headers, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(headers)
        w.writerows(rows)


def _fail(code: int, stage: str, message) -> int:
    print(f"error: {stage}: {message}", file=sys.stderr)
    return code


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


# ---------------------------------------------------------------------------
# Fitting plumbing shared by fit and compare
# ---------------------------------------------------------------------------


def _config(args, seed: int) -> FitConfig:
    return FitConfig(
        outer_iters=args.outer_iters,
        bfgs_max_iters=args.bfgs_iters,
        mc_size=args.mc_samples,
        sgd_step=args.step_size,
        shape_step=args.shape_step,
        seed=seed,
    )


def _sigmoid(skew: str, skew_nu: float) -> SigmoidKind:
    return SigmoidKind(skew, skew_nu if skew == "student_t_cdf" else None)


def _fit_selis(data, kind, skew, diag, m, config, method, skew_nu, skew_start):
    model0 = initialize(
        data, kind, _sigmoid(skew, skew_nu), "diag" if diag else "full", None if diag else m, skew_start
    )
    fitter = qmle_fit if method == "qmle" else sgd_fit
    return fitter(data, model0, config)


def _fit_meta(result, config: FitConfig, record_timing: bool) -> dict:
    return {
        "method": result.method,
        "seed": config.seed,
        "config": dataclasses.asdict(config),
        "loglik": encode_float(result.loglik),
        "std_error": encode_float(result.std_error),
        "aic": encode_float(result.aic),
        "bic": encode_float(result.bic),
        "param_count": result.param_count,
        "n_obs": result.n_obs,
        "converged": result.converged,
        "outer_iterations": len(result.trace),
        "trace": [
            [t.iteration, encode_float(t.loglik), encode_float(t.std_error), None if t.shape is None else encode_float(t.shape)]
            for t in result.trace
        ],
        "elapsed_seconds": encode_float(result.elapsed_seconds) if record_timing else None,
    }


def _load_data(args, columns=None):
    cols = args.columns if getattr(args, "columns", None) else columns
    return load_dataset(args.data, cols, getattr(args, "log_transform", False), getattr(args, "rows", None))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    try:
        data = _load_data(args)
    except DataLoadError as exc:
        return _fail(EXIT_INPUT, "load", exc)
    kind = KERNELS[args.kernel]
    skew = SKEWS[args.skew]
    diag = args.skew_shape == "diag"
    if diag and args.m is not None:
        _warn("--m is ignored with --skew-shape diag (m = k)")
    if args.m is not None and args.m < 1:
        return _fail(EXIT_INPUT, "usage", "--m must be a positive integer")
    try:
        config = _config(args, args.seed)
    except ValueError as exc:
        return _fail(EXIT_INPUT, "usage", exc)
    try:
        result = _fit_selis(data.values, kind, skew, diag, args.m, config, args.method, args.skew_nu, args.skew_start)
    except DegenerateDataError as exc:
        return _fail(EXIT_FIT, "initialize", exc)
    except (FitAbortedError, NumericalDegeneracyError) as exc:
        return _fail(EXIT_FIT, "fit", exc)

    label = model_label(result.model)
    meta = fingerprint(data)
    meta["log_transform"] = bool(args.log_transform)
    fit_meta = _fit_meta(result, config, args.record_timing)
    fit_meta["skew_start"] = args.skew_start
    mf = ModelFile(result.model, label, fit_meta, meta)
    if args.out:
        try:
            modelfile.save(args.out, mf)
        except OSError as exc:
            return _fail(EXIT_INPUT, "write", f"cannot write {args.out}: {exc.strerror or exc}")

    headers = ["Model", "Log-likelihood", "Std. error", "AIC", "BIC", "Params", "Runtime (s)"]
    row = [
        label,
        _fmt(result.loglik),
        _fmt(result.std_error),
        _fmt(result.aic),
        _fmt(result.bic),
        result.param_count,
        _fmt(result.elapsed_seconds),
    ]
    print(f"data: {data.path} (n={data.n}, k={data.k}); method={result.method}; seed={config.seed}")
    print(format_table(headers, [row]))
    status = "converged" if result.converged else "iteration limit reached"
    print(f"outer iterations: {len(result.trace)} ({status})")
    if args.out:
        print(f"model written to {args.out}")
    return EXIT_OK


def _load_model(path):
    return modelfile.load(path)


def _model_k(model) -> int:
    return 1 if isinstance(model, GseUnivariateModel) else model.k


def _column_names(mf: ModelFile) -> list[str]:
    if mf.data and mf.data.get("columns"):
        return list(mf.data["columns"])
    return [f"x{i + 1}" for i in range(_model_k(mf.model))]


def _evaluate_any(model, x, mc_size, seed):
    """Returns ``(loglik, std_error, param_count)``."""
    if isinstance(model, SelisModel):
        ll, se = _evaluate(model, x, mc_size, derive_seed(seed, _FINAL_DRAWS))
        return ll, se, param_count(model)
    if isinstance(model, AmstModel):
        return float(np.sum(amst_log_pdf(model, x))), 0.0, 2 * model.k + model.k * (model.k + 1) // 2 + 1
    return float(np.sum(gse_log_pdf(model, x[:, 0]))), 0.0, 4


def cmd_loglik(args) -> int:
    try:
        mf = _load_model(args.model)
    except ModelFileError as exc:
        return _fail(EXIT_INPUT, "model", exc)
    stored = _column_names(mf)
    has_names = bool(mf.data and mf.data.get("columns"))
    args.log_transform = args.log_transform or bool(mf.data and mf.data.get("log_transform"))
    try:
        data = _load_data(args, stored if has_names else None)
    except DataLoadError as exc:
        return _fail(EXIT_INPUT, "load", exc)
    k = _model_k(mf.model)
    if data.k != k:
        return _fail(EXIT_INPUT, "columns", f"model has {k} dimension(s) but {data.k} column(s) were selected")
    if has_names and list(data.columns) != stored and not args.allow_column_mismatch:
        return _fail(
            EXIT_INPUT,
            "columns",
            f"data columns {','.join(data.columns)} differ from the model's {','.join(stored)} "
            "(pass --allow-column-mismatch to evaluate anyway)",
        )
    fit = mf.fit or {}
    mc = args.mc_samples if args.mc_samples is not None else 4 * int(fit.get("config", {}).get("mc_size", 10_000))
    seed = args.seed if args.seed is not None else int(fit.get("seed", 0))
    try:
        ll, se, p = _evaluate_any(mf.model, data.values, mc, seed)
    except NumericalDegeneracyError as exc:
        return _fail(EXIT_FIT, "evaluate", exc)
    aic, bic = information_criteria(ll, p, data.n)
    print(f"model: {mf.label}; data: {data.path} (n={data.n}, k={data.k})")
    print(f"loglik: {ll:.6f} +/- {se:.6f}")
    print(f"AIC: {aic:.6f}")
    print(f"BIC: {bic:.6f}")
    return EXIT_OK


def cmd_sample(args) -> int:
    try:
        mf = _load_model(args.model)
    except ModelFileError as exc:
        return _fail(EXIT_INPUT, "model", exc)
    if not isinstance(mf.model, SelisModel):
        return _fail(EXIT_INPUT, "usage", f"sampling supports SELIS models only, not {mf.kind}")
    if args.n < 1:
        return _fail(EXIT_INPUT, "usage", "--n must be a positive integer")
    try:
        res = sample(mf.model, args.n, args.seed, args.max_attempts)
    except BudgetExceededError as exc:
        got = 0 if exc.partial is None else len(exc.partial)
        return _fail(EXIT_BUDGET, "sample", f"{exc} ({got} of {args.n} draws accepted after {exc.attempts} proposals)")
    rows = [[encode_float(v) for v in r] for r in res.samples]
    try:
        _write_csv(args.out, _column_names(mf), rows)
    except OSError as exc:
        return _fail(EXIT_INPUT, "write", f"cannot write {args.out}: {exc.strerror or exc}")
    print(f"drew {args.n} samples from {mf.label} in {res.attempts} proposals")
    print(f"acceptance rate: {res.acceptance_rate:.6f}")
    print(f"samples written to {args.out}")
    return EXIT_OK


def _mark_best(values):
    finite = [v for v in values if v is not None and math.isfinite(v)]
    best = min(finite) if finite else None
    return [best is not None and v == best for v in values]


def cmd_compare(args) -> int:
    names = [n for n in args.models.split(",") if n.strip()]
    if len(names) < 2:
        return _fail(EXIT_INPUT, "usage", "compare needs at least two models")
    try:
        specs = [parse_model_name(n) for n in names]
    except UsageError as exc:
        return _fail(EXIT_INPUT, "usage", exc)
    try:
        data = _load_data(args)
    except DataLoadError as exc:
        return _fail(EXIT_INPUT, "load", exc)

    results = []
    for name, (what, spec) in zip(names, specs):
        seed = derive_seed(args.seed, zlib.crc32(name.strip().lower().encode()))
        try:
            if what == "amst":
                fit = fit_amst(data.values)
                results.append(("AMST", fit.loglik, 0.0, fit.param_count, fit.runtime_seconds, "stalled" if fit.stalled else "ok"))
            else:
                kind, skew, diag = spec
                res = _fit_selis(
                    data.values, kind, skew, diag, None, _config(args, seed), args.method, args.skew_nu, args.skew_start
                )
                status = "converged" if res.converged else "ok"
                results.append((model_label(res.model), res.loglik, res.std_error, res.param_count, res.elapsed_seconds, status))
        except (DegenerateDataError, FitAbortedError, NumericalDegeneracyError, ValueError) as exc:
            results.append((name, None, None, None, None, f"failed: {exc}"))

    aics, bics = [], []
    for _, ll, _, p, _, _ in results:
        if ll is None:
            aics.append(None)
            bics.append(None)
        else:
            a, b = information_criteria(ll, p, data.n)
            aics.append(a)
            bics.append(b)
    best_aic, best_bic = _mark_best(aics), _mark_best(bics)

    text_rows, csv_rows = [], []
    for (label, ll, se, p, rt, status), a, b, ba, bb in zip(results, aics, bics, best_aic, best_bic):
        text_rows.append(
            [
                label,
                _fmt(ll),
                _fmt(se),
                _fmt(a) + (" *" if ba else "  "),
                _fmt(b) + (" *" if bb else "  "),
                "-" if p is None else p,
                _fmt(rt),
                status,
            ]
        )
        csv_rows.append(
            [
                label,
                "" if ll is None else encode_float(ll),
                "" if se is None else encode_float(se),
                "" if a is None else encode_float(a),
                "" if b is None else encode_float(b),
                "" if p is None else p,
                "" if rt is None else f"{rt:.3f}",
                int(ba),
                int(bb),
                status,
            ]
        )
    print(f"data: {data.path} (n={data.n}, k={data.k}); seed={args.seed}")
    print(format_table(["Model", "Log-likelihood", "Std. error", "AIC", "BIC", "Params", "Runtime (s)", "Status"], text_rows))
    print("* best (lowest) AIC / BIC")
    if args.out:
        try:
            _write_csv(
                args.out,
                ["model", "loglik", "std_error", "aic", "bic", "params", "runtime_seconds", "best_aic", "best_bic", "status"],
                csv_rows,
            )
        except OSError as exc:
            return _fail(EXIT_INPUT, "write", f"cannot write {args.out}: {exc.strerror or exc}")
    return EXIT_OK


SKEWBENCH_KINDS = ("student_t_cdf", "error", "hyperbolic_secant", "logistic", "arctan", "reciprocal_sqrt") + CANONICAL_KINDS
_BENCH_LABEL = {**SKEW_LABEL, "canonical": "Canonical", "canonical_st": "Canonical-st"}


def cmd_skewbench(args) -> int:
    args.columns = args.column
    try:
        data = _load_data(args)
    except DataLoadError as exc:
        return _fail(EXIT_INPUT, "load", exc)
    if data.k != 1:
        return _fail(EXIT_INPUT, "usage", "--column must name exactly one column")
    x = data.values[:, 0]
    rows = []
    for kind in SKEWBENCH_KINDS:
        skew = kind if kind in CANONICAL_KINDS else _sigmoid(kind, args.skew_nu)
        try:
            fit = fit_univariate(x, skew)
        except DegenerateDataError as exc:
            return _fail(EXIT_FIT, "fit", exc)
        rows.append((_BENCH_LABEL[kind], fit))
    best = max(f.loglik for _, f in rows)
    text_rows = [
        [label, _fmt(f.loglik) + (" *" if f.loglik == best else "  "), _fmt(f.runtime_seconds, 3), f.n_iter, "yes" if f.stalled else "no"]
        for label, f in rows
    ]
    print(f"data: {data.path}, column {data.columns[0]} (n={data.n})")
    print(format_table(["Skewing function", "Log-likelihood", "Runtime (s)", "Iterations", "Stalled"], text_rows))
    print("* best log-likelihood")
    if args.out:
        try:
            _write_csv(
                args.out,
                ["skewing", "loglik", "runtime_seconds", "iterations", "stalled", "best"],
                [[label, encode_float(f.loglik), f"{f.runtime_seconds:.4f}", f.n_iter, int(f.stalled), int(f.loglik == best)] for label, f in rows],
            )
        except OSError as exc:
            return _fail(EXIT_INPUT, "write", f"cannot write {args.out}: {exc.strerror or exc}")
    return EXIT_OK


def _parse_range(spec: str):
    try:
        parts = [tuple(float(v) for v in p.split(":")) for p in spec.split(",")]
    except ValueError:
        raise UsageError(f"--range must be 'auto' or LO:HI,LO:HI, got {spec!r}") from None
    if len(parts) != 2 or any(len(p) != 2 or not p[0] < p[1] for p in parts):
        raise UsageError(f"--range must be 'auto' or LO:HI,LO:HI with LO < HI, got {spec!r}")
    return parts


def density_grid(model, dims, n_grid, ranges):
    """Slice of the log-density on an ``n_grid x n_grid`` grid; other coordinates at ``mu``.

    Returns ``(xs, ys, values)`` with values scaled so the grid maximum is 1.
    """
    i, j = dims
    xs = np.linspace(ranges[0][0], ranges[0][1], n_grid)
    ys = np.linspace(ranges[1][0], ranges[1][1], n_grid)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.tile(np.asarray(model.mu, dtype=float), (n_grid * n_grid, 1))
    pts[:, i] = gx.ravel()
    pts[:, j] = gy.ravel()
    if isinstance(model, SelisModel):
        logv = unnormalized_log_pdf(model, pts)
    else:
        logv = amst_log_pdf(model, pts)
    logv = np.asarray(logv).reshape(n_grid, n_grid)
    return xs, ys, np.exp(logv - np.max(logv))


def _auto_range(model, dims):
    cov = np.linalg.inv(model.linv.T @ model.linv)
    return [(model.mu[d] - 5.0 * math.sqrt(cov[d, d]), model.mu[d] + 5.0 * math.sqrt(cov[d, d])) for d in dims]


def cmd_densgrid(args) -> int:
    try:
        mf = _load_model(args.model)
    except ModelFileError as exc:
        return _fail(EXIT_INPUT, "model", exc)
    model = mf.model
    k = _model_k(model)
    try:
        dims = [int(v) for v in args.dims.split(",")]
    except ValueError:
        return _fail(EXIT_INPUT, "usage", f"--dims must be two comma-separated indices, got {args.dims!r}")
    if len(dims) != 2 or dims[0] == dims[1] or not all(0 <= d < k for d in dims):
        return _fail(EXIT_INPUT, "usage", f"--dims must name two distinct indices in 0..{k - 1}, got {args.dims!r}")
    if not 2 <= args.grid <= MAX_GRID:
        return _fail(EXIT_INPUT, "usage", f"--grid must be between 2 and {MAX_GRID}")
    try:
        ranges = _auto_range(model, dims) if args.range == "auto" else _parse_range(args.range)
    except UsageError as exc:
        return _fail(EXIT_INPUT, "usage", exc)
    xs, ys, vals = density_grid(model, dims, args.grid, ranges)
    names = _column_names(mf)
    buf = io.StringIO()
    others = [names[d] for d in range(k) if d not in dims]
    fixed = f"other coordinates ({', '.join(others)}) fixed at mu" if others else "no other coordinates"
    buf.write(f"# conditional slice of the joint density over {names[dims[0]]},{names[dims[1]]}; {fixed}; scaled so the grid maximum is 1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([names[dims[0]], names[dims[1]], "relative_density"])
    for a, xv in enumerate(xs):
        for b, yv in enumerate(ys):
            w.writerow([encode_float(xv), encode_float(yv), encode_float(vals[a, b])])
    try:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        return _fail(EXIT_INPUT, "write", f"cannot write {args.out}: {exc.strerror or exc}")
    print(f"wrote {args.grid}x{args.grid} slice of {mf.label} over dims {dims[0]},{dims[1]} to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_data_args(p, columns=True):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    if columns:
        p.add_argument("--columns", help="comma-separated column names (default: all)")
    p.add_argument("--log-transform", action="store_true", help="take the natural log of every value")
    p.add_argument("--rows", help="keep data rows START:STOP (0-based, header excluded)")


def _add_fit_args(p):
    p.add_argument("--kernel", choices=sorted(KERNELS), default="t")
    p.add_argument("--skew", choices=list(SKEWS), default="logistic")
    p.add_argument("--skew-nu", type=float, default=DEFAULT_SKEW_NU, help="degrees of freedom of the tcdf skewing function")
    p.add_argument("--mc-samples", type=_positive_int, default=10_000)
    p.add_argument("--bfgs-iters", type=_positive_int, default=10)
    p.add_argument("--outer-iters", type=_positive_int, default=50)
    p.add_argument("--step-size", type=float, default=0.01, help="SGD step size")
    p.add_argument("--shape-step", type=float, default=1.0, help="step size of the shape updates")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=("qmle", "sgd"), default="qmle")
    p.add_argument(
        "--skew-start",
        choices=("skewness", "zero"),
        default="skewness",
        help="starting skewing diagonal: clipped residual skewness, or zero",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="selis", description="Skew elliptical distributions with independent skewing functions.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a SELIS model")
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--skew-shape", choices=("full", "diag"), default="full")
    p.add_argument("--m", type=int, help="number of skewing rows (full shape only; default k)")
    p.add_argument("--out", help="model file to write")
    p.add_argument("--record-timing", action="store_true", help="store wall-clock time in the model file")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sample", help="draw from a fitted SELIS model")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-attempts", type=_positive_int, help="proposal budget (default 1000 * n * 2^m)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("loglik", help="evaluate a model on data")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--mc-samples", type=_positive_int, help="normalizer draws (default 4 x the fit's)")
    p.add_argument("--seed", type=int, help="seed for the normalizer draws (default: the fit's)")
    p.add_argument("--allow-column-mismatch", action="store_true")
    p.set_defaults(func=cmd_loglik)

    p = sub.add_parser("compare", help="fit several models and tabulate loglik, AIC and BIC")
    _add_data_args(p)
    p.add_argument("--models", required=True, help="comma-separated, e.g. amst,gmst-logistic,gmst-logistic-d")
    _add_fit_args(p)
    p.add_argument("--out", help="CSV table to write")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("skewbench", help="univariate skew-t fits with every skewing function")
    _add_data_args(p, columns=False)
    p.add_argument("--column", required=True)
    p.add_argument("--skew-nu", type=float, default=DEFAULT_SKEW_NU)
    p.add_argument("--out", help="CSV table to write")
    p.set_defaults(func=cmd_skewbench)

    p = sub.add_parser("densgrid", help="export a 2-D density slice on a grid")
    p.add_argument("--model", required=True)
    p.add_argument("--dims", required=True, help="two 0-based coordinate indices, e.g. 0,1")
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--range", default="auto", help="'auto' (mu +/- 5 sd) or LO:HI,LO:HI")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_densgrid)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        return _fail(EXIT_INPUT, args.command, exc)


if __name__ == "__main__":
    sys.exit(main())
