"""Acceptance criteria 1 to 9.

Each test records one PASS/FAIL line that is printed in the terminal summary
(see ``conftest.py``).  Run on its own with ``pytest tests/test_acceptance.py``
or ``python tests/test_acceptance.py``.
"""

import csv
import math
import os
import sys
import time

import mpmath
import numpy as np
import pytest
from scipy import integrate

from selis import cli
from selis.elliptical import (
    EllipticalParams,
    SphericalFamily,
    grad_linv,
    grad_mu,
    grad_shape,
    log_density,
)
from selis.estimate import _FINAL_DRAWS, FitConfig, _evaluate, initialize, qmle_fit
from selis.model import (
    McDraws,
    SelisModel,
    derive_seed,
    estimate_normalizer,
    log_pdf,
    quasi_value_and_grad,
    sample,
    unnormalized_log_pdf,
)
from selis.skewing import SIGMOID_KINDS, SigmoidKind, SkewingMatrix, free_mask, grad_lambda_log_gm, log_gm

RESULTS = {}


def record(number, title, ok, detail):
    RESULTS[number] = f"criterion {number} ({title}): {'PASS' if ok else 'FAIL'}; {detail}"
    return ok


# --------------------------------------------------------------------------
# random instances
# --------------------------------------------------------------------------


def random_family(rng, which=None, min_nu=2.0):
    which = rng.integers(3) if which is None else which
    if which == 0:
        return SphericalFamily.normal()
    if which == 1:
        return SphericalFamily.student_t(float(rng.uniform(min_nu, 12.0)))
    return SphericalFamily.power_exponential(float(rng.uniform(0.4, 3.0)))


def random_sigmoid(rng):
    kind = SIGMOID_KINDS[rng.integers(len(SIGMOID_KINDS))]
    if kind == "student_t_cdf":
        return SigmoidKind(kind, float(rng.uniform(1.0, 10.0)))
    return SigmoidKind(kind)


def random_linv(rng, k):
    return np.tril(rng.normal(0.0, 0.4, (k, k)), -1) + np.diag(rng.uniform(0.5, 2.0, k))


def random_model(rng, m, k, family=None, diagonal=False, scale=1.5):
    mask = free_mask(m, k, diagonal)
    lam = np.where(mask, rng.normal(0.0, scale, (m, k)), 0.0)
    return SelisModel.build(
        rng.normal(size=k),
        random_linv(rng, k),
        lam,
        family if family is not None else random_family(rng),
        random_sigmoid(rng),
        diagonal,
    )


def fd_grad(f, x, rel_step=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        g[i] = (f(up) - f(down)) / (up[i] - down[i])
    return g


def normwise_rel_err(analytic, numeric):
    analytic = np.ravel(analytic)
    numeric = np.ravel(numeric)
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-300))


# --------------------------------------------------------------------------
# 1. normalizer identities
# --------------------------------------------------------------------------


def test_criterion_1_normalizer_identities():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_z, failures, exact_failures = 0.0, [], 0
    cases = []
    for i in range(50):
        k = int(rng.integers(1, 5))
        model = random_model(rng, k, k, random_family(rng, i % 3), diagonal=bool(i % 2), scale=2.0)
        if not model.skew.diagonal_only:
            model = SelisModel.build(model.mu, model.linv, np.diag(np.diag(model.lam)), model.family, model.sigmoid)
        cases.append(("diagonal", model, 2.0 ** -k))
    for i in range(20):
        k = int(rng.integers(1, 5))
        lam = rng.normal(0.0, 2.0, (1, k))
        model = SelisModel.build(rng.normal(size=k), random_linv(rng, k), lam, random_family(rng, i % 3), random_sigmoid(rng))
        cases.append(("single row", model, 0.5))
    for j, (label, model, target) in enumerate(cases):
        draws = McDraws.generate(model.family, model.k, 100_000, 5000 + j)
        mc = estimate_normalizer(model, draws, use_analytic=False)
        z = abs(mc.value - target) / mc.std_error
        worst_z = max(worst_z, z)
        if z > 3.0:
            failures.append(f"{label} case {j}: z={z:.2f}")
        exact = estimate_normalizer(model, draws)
        if not (exact.analytic and exact.value == target and exact.std_error == 0.0):
            exact_failures += 1
    elapsed = time.perf_counter() - start
    ok = not failures and exact_failures == 0 and elapsed < 30.0
    record(
        1,
        "normalizer identities",
        ok,
        f"{len(cases) - len(failures)}/{len(cases)} Monte Carlo estimates within 3 SE (worst {worst_z:.2f} SE), "
        f"{len(cases) - exact_failures}/{len(cases)} analytic values exact, {elapsed:.1f} s",
    )
    assert ok, failures


# --------------------------------------------------------------------------
# 2. upper bound 2^-m for full lambda
# --------------------------------------------------------------------------


def test_criterion_2_normalizer_upper_bound():
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    violations, max_ratio = 0, 0.0
    for j in range(200):
        m, k = int(rng.integers(2, 4)), int(rng.integers(2, 5))
        model = random_model(rng, m, k, scale=float(rng.choice([0.5, 2.0, 6.0])))
        draws = McDraws.generate(model.family, k, 100_000, 9000 + j)
        est = estimate_normalizer(model, draws, use_analytic=False)
        bound = 2.0 ** -m
        max_ratio = max(max_ratio, est.value / bound)
        if est.value > bound + 3.0 * est.std_error:
            violations += 1
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 60.0
    record(2, "normalizer upper bound", ok, f"{violations} violations in 200 models, largest estimate/bound {max_ratio:.4f}, {elapsed:.1f} s")
    assert ok


# --------------------------------------------------------------------------
# 3. gradient suite
# --------------------------------------------------------------------------


def elliptical_instance(rng, shaped=False):
    k = int(rng.integers(1, 6))
    family = random_family(rng, int(rng.integers(1, 3)) if shaped else None)
    p = EllipticalParams(rng.normal(size=k), random_linv(rng, k), family)
    x = p.mu + rng.normal(0.0, 1.5, k)
    return p, x


def test_criterion_3_gradient_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(303)
    worst = {}

    def note(name, err):
        worst[name] = max(worst.get(name, 0.0), err)

    for _ in range(100):
        p, x = elliptical_instance(rng)
        numeric = fd_grad(lambda mu: log_density(EllipticalParams(mu, p.linv, p.family), x), p.mu)
        note("mu", normwise_rel_err(grad_mu(p, x), numeric))

        p, x = elliptical_instance(rng)
        rows, cols = np.tril_indices(p.k)

        def at_linv(vals):
            linv = np.zeros((p.k, p.k))
            linv[rows, cols] = vals
            return log_density(EllipticalParams(p.mu, linv, p.family), x)

        numeric = fd_grad(at_linv, p.linv[rows, cols])
        note("linv", normwise_rel_err(grad_linv(p, x)[rows, cols], numeric))

        p, x = elliptical_instance(rng, shaped=True)
        shape = p.family.shape
        numeric = fd_grad(lambda s: log_density(EllipticalParams(p.mu, p.linv, p.family.with_shape(s[0])), x), [shape])
        note("shape", normwise_rel_err(grad_shape(p, x), numeric))

        k = int(rng.integers(1, 6))
        m = int(rng.integers(1, k + 1))
        mask = free_mask(m, k, bool(rng.integers(2)))
        sm = SkewingMatrix(np.where(mask, rng.normal(0.0, 1.5, (m, k)), 0.0), False)
        kind = random_sigmoid(rng)
        v = rng.normal(0.0, 1.5, k)
        numeric = fd_grad(lambda vals: log_gm(SkewingMatrix(np.where(mask, vals.reshape(m, k), 0.0)), kind, v), sm.lam.ravel())
        note("lambda", normwise_rel_err(grad_lambda_log_gm(sm, kind, v)[mask], numeric.reshape(m, k)[mask]))

        k = int(rng.integers(1, 6))
        m = int(rng.integers(1, k + 1))
        model = random_model(rng, m, k, scale=1.0)
        data = model.mu + rng.normal(size=(15, k))
        draws = McDraws.generate(model.family, k, 500, int(rng.integers(2**31)))
        _, grad, _ = quasi_value_and_grad(model, data, draws)
        vec = model.to_vector()
        numeric = fd_grad(lambda w: quasi_value_and_grad(model.from_vector(w, clip_diagonal=False), data, draws)[0], vec)
        note("quasi", normwise_rel_err(grad, numeric))
    elapsed = time.perf_counter() - start
    limits = {"mu": 1e-5, "linv": 1e-5, "shape": 1e-4, "lambda": 1e-5, "quasi": 1e-5}
    ok = all(worst[name] <= limit for name, limit in limits.items()) and elapsed < 120.0
    detail = ", ".join(f"{name} {worst[name]:.1e}" for name in limits)
    record(3, "gradient suite", ok, f"worst relative error over 100 instances each: {detail}; {elapsed:.1f} s")
    assert ok, worst


# --------------------------------------------------------------------------
# 4. skew-normal equivalence
# --------------------------------------------------------------------------


def skew_normal_logpdf(x, loc, scale, alpha):
    mpmath.mp.dps = 40
    z = (mpmath.mpf(x) - loc) / scale
    dens = 2 * mpmath.npdf(z) * mpmath.ncdf(alpha * z) / scale
    return float(mpmath.log(dens))


def test_criterion_4_skew_normal_equivalence():
    loc, scale = 0.7, 1.9
    xs = np.linspace(loc - 6.0 * scale, loc + 6.0 * scale, 101)
    worst = 0.0
    for alpha in (-5.0, -1.0, 0.0, 1.0, 5.0):
        model = SelisModel.build([loc], [[1.0 / scale]], [[alpha]], SphericalFamily.normal(), "error")
        got = log_pdf(model, xs[:, None])
        want = np.array([skew_normal_logpdf(x, loc, scale, alpha) for x in xs])
        worst = max(worst, float(np.max(np.abs(got - want))))
    ok = worst <= 1e-10
    record(4, "skew-normal equivalence", ok, f"max abs error {worst:.1e} over 5 x 101 points")
    assert ok


# --------------------------------------------------------------------------
# 5. fit recovery
# --------------------------------------------------------------------------

SKEWED_TRUTH = SelisModel.build(
    [1.0, -0.5],
    [[1.0, 0.0], [0.4, 1.5]],
    [[3.0, -1.0], [0.0, 2.0]],
    SphericalFamily.student_t(5.0),
    "logistic",
)


def test_criterion_5_fit_recovery():
    # the truth is scored on the fit's own evaluation draws, so both numbers
    # share the Monte Carlo error of the normalizer
    start = time.perf_counter()
    gaps = []
    for seed in range(10):
        x = sample(SKEWED_TRUTH, 5000, 100 + seed).samples
        config = FitConfig(seed=seed)
        fit = qmle_fit(x, initialize(x, "student_t", "logistic", "full"), config)
        true_ll, _ = _evaluate(SKEWED_TRUTH, x, 4 * config.mc_size, derive_seed(seed, _FINAL_DRAWS))
        gaps.append(fit.loglik - true_ll)
    elapsed = time.perf_counter() - start
    hits = sum(g >= -5.0 for g in gaps)
    ok = hits >= 9 and elapsed < 600.0
    record(
        5,
        "fit recovery",
        ok,
        f"{hits}/10 seeds within 5 nats of the true-parameter loglik "
        f"(fit minus truth from {min(gaps):+.2f} to {max(gaps):+.2f}), {elapsed:.0f} s",
    )
    assert ok, gaps


# --------------------------------------------------------------------------
# 6. overfitting with long inner BFGS runs
# --------------------------------------------------------------------------


def k5_truth():
    k = 5
    rng = np.random.default_rng(7)
    lam = np.where(free_mask(k, k), rng.normal(0.0, 1.5, (k, k)), 0.0)
    linv = np.eye(k) + np.tril(rng.normal(0.0, 0.3, (k, k)), -1)
    return SelisModel.build(np.zeros(k), linv, lam, SphericalFamily.student_t(5.0), "logistic")


def test_criterion_6_overfitting_fluctuation():
    truth = k5_truth()
    ratios = []
    for seed in range(10):
        x = sample(truth, 2000, 500 + seed).samples
        spread = []
        for bfgs_iters in (10, 100):
            config = FitConfig(seed=seed, bfgs_max_iters=bfgs_iters, convergence_tol=0.0, divergence_nats=math.inf)
            fit = qmle_fit(x, initialize(x, "student_t", "logistic", "full"), config)
            trace = np.array([t.loglik for t in fit.trace])
            spread.append(np.std(trace[-20:], ddof=1))
        ratios.append(spread[1] / spread[0])
    hits = sum(r >= 3.0 for r in ratios)
    ok = hits >= 7
    record(
        6,
        "overfitting fluctuation",
        ok,
        f"{hits}/10 seeds with trace std ratio >= 3 (ratios {', '.join(f'{r:.1f}' for r in ratios)})",
    )
    assert ok, ratios


# --------------------------------------------------------------------------
# 7. sampler consistency
# --------------------------------------------------------------------------


def quadrature_moments(model):
    def dens(x):
        return math.exp(float(unnormalized_log_pdf(model, [x])))

    sd = 1.0 / model.linv[0, 0]
    mu = float(model.mu[0])
    points = [mu - 3 * sd, mu, mu + 3 * sd]

    def moment(j):
        total = 0.0
        for lo, hi in ((-np.inf, points[0]), (points[0], points[1]), (points[1], points[2]), (points[2], np.inf)):
            total += integrate.quad(lambda x: x**j * dens(x), lo, hi, epsabs=0.0, epsrel=1e-11, limit=200)[0]
        return total

    mass = moment(0)
    return [moment(j) / mass for j in (1, 2, 3, 4)]


def test_criterion_7_sampler_consistency():
    start = time.perf_counter()
    rng = np.random.default_rng(707)
    n = 20_000
    rate_failures, moment_failures, n_moment_models, worst_z = [], [], 0, 0.0
    for j in range(20):
        k = 1 + j % 3
        m = int(rng.integers(1, 4))
        family = random_family(rng, min_nu=6.0)
        model = random_model(rng, m, k, family)
        result = sample(model, n, 40 + j)
        est = estimate_normalizer(model, McDraws.generate(family, k, 500_000, 60 + j))
        p = est.value
        se = math.sqrt(p * (1.0 - p) / result.attempts + est.std_error**2)
        z = abs(result.acceptance_rate - p) / se
        worst_z = max(worst_z, z)
        if z > 3.0:
            rate_failures.append((j, z))
        if k == 1:
            n_moment_models += 1
            m1, m2, m3, m4 = quadrature_moments(model)
            x = result.samples[:, 0]
            se1 = math.sqrt((m2 - m1**2) / n)
            se2 = math.sqrt((m4 - m2**2) / n)
            if abs(x.mean() - m1) > 3 * se1 or abs(np.mean(x**2) - m2) > 3 * se2:
                moment_failures.append(j)
    elapsed = time.perf_counter() - start
    ok = not rate_failures and not moment_failures and elapsed < 120.0
    record(
        7,
        "sampler consistency",
        ok,
        f"{20 - len(rate_failures)}/20 acceptance rates within 3 SE (binomial and normalizer; worst {worst_z:.2f}), "
        f"{n_moment_models - len(moment_failures)}/{n_moment_models} k=1 moment pairs within 3 SE, {elapsed:.1f} s",
    )
    assert ok, (rate_failures, moment_failures)


# --------------------------------------------------------------------------
# 8. SELIS with diagonal skewing against AMST
# --------------------------------------------------------------------------

DIAGONAL_TRUTH = SelisModel.build(
    [0.5, -1.0],
    [[1.0, 0.0], [0.5, 1.2]],
    [[3.0, 0.0], [0.0, -2.5]],
    SphericalFamily.student_t(5.0),
    "logistic",
    True,
)


def write_csv(path, x):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "b"])
        w.writerows(x.tolist())


def test_criterion_8_diagonal_selis_beats_amst(tmp_path, capsys):
    wins, deltas = 0, []
    for seed in range(10):
        data = tmp_path / f"d{seed}.csv"
        out = tmp_path / f"c{seed}.csv"
        write_csv(data, sample(DIAGONAL_TRUTH, 5000, 800 + seed).samples)
        code = cli.main(["compare", "--data", str(data), "--models", "gmst-logistic-d,amst", "--seed", str(seed), "--out", str(out)])
        capsys.readouterr()
        assert code == 0
        with open(out, newline="") as fh:
            aic = {r["model"]: float(r["aic"]) for r in csv.DictReader(fh)}
        deltas.append(aic["AMST"] - aic["GMST-Logistic-D"])
        wins += deltas[-1] > 0
    ok = wins >= 8
    record(
        8,
        "diagonal SELIS versus AMST",
        ok,
        f"GMST-Logistic-D has lower AIC in {wins}/10 seeds (AIC margin {min(deltas):.1f} to {max(deltas):.1f}); "
        "the AIS reference fit needs the external dataset and is run only when supplied",
    )
    assert ok, deltas


@pytest.mark.skipif("SELIS_AIS_CSV" not in os.environ, reason="set SELIS_AIS_CSV to the AIS data file")
def test_criterion_8_optional_ais_reference(tmp_path, capsys):
    """Optional: GMST-Logistic-D on the AIS data should reach loglik -4856 +/- 10.

    ``SELIS_AIS_COLUMNS`` selects the eleven numeric columns when the file has
    others.
    """
    out = tmp_path / "ais.json"
    argv = ["fit", "--data", os.environ["SELIS_AIS_CSV"], "--skew-shape", "diag", "--out", str(out)]
    if "SELIS_AIS_COLUMNS" in os.environ:
        argv += ["--columns", os.environ["SELIS_AIS_COLUMNS"]]
    assert cli.main(argv) == 0
    capsys.readouterr()
    from selis.modelfile import load

    loglik = float(load(out).fit["loglik"])
    assert abs(loglik - (-4856.0)) <= 10.0, loglik


# --------------------------------------------------------------------------
# 9. determinism across thread counts
# --------------------------------------------------------------------------


def test_criterion_9_determinism(tmp_path, monkeypatch, capsys):
    data = tmp_path / "data.csv"
    write_csv(data, sample(SKEWED_TRUTH, 12_000, 3).samples)
    outputs = []
    for threads in ("1", "3", "3", "1"):
        monkeypatch.setenv("SELIS_NUM_THREADS", threads)
        run = tmp_path / f"run{len(outputs)}"
        run.mkdir()
        fit_args = ["fit", "--data", str(data), "--outer-iters", "4", "--mc-samples", "20000", "--seed", "11"]
        assert cli.main([*fit_args, "--out", str(run / "model.json")]) == 0
        assert cli.main(["sample", "--model", str(run / "model.json"), "--n", "10000", "--seed", "5", "--out", str(run / "draws.csv")]) == 0
        capsys.readouterr()
        outputs.append(((run / "model.json").read_bytes(), (run / "draws.csv").read_bytes()))
    ok = all(o == outputs[0] for o in outputs)
    record(9, "determinism", ok, "fit and sample files byte-identical over 4 runs with 1 and 3 threads" if ok else "output files differ")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", *sys.argv[1:]]))
