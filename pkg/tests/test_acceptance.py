"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Tolerances and protocol constants (trial counts, test sizes, seed
counts, thresholds) are pinned here and nowhere else.
"""

import time

import numpy as np
import pytest

from projreg.data_model import (
    BetaSpec,
    CovarianceSpec,
    DataModel,
    Dataset,
    build_model,
    rng_from,
    sample,
    truncate_model,
)
from projreg.estimators import (
    GenerativeOptions,
    _loocv_select,
    fit_generative,
    fit_ols,
    fit_oracle_pcr,
    fit_pca_ols,
    fit_pls,
    fit_random_projection,
    fit_ridge,
    null_and_truth_baselines,
    select_ridge_loocv,
)
from projreg.attack import AttackSpec, craft_poison
from projreg.bounds import gaussian_projection_asymptotic_risk, thm1_bounds
from projreg.numerics import pseudo_inverse
from projreg.risk import exact_conditional_risk, monte_carlo_mse, trial_seeds

RIDGE_GRID = tuple(float(v) for v in np.logspace(-4, 2, 25))


def report(num, name, ok, detail=""):
    print(f"\n[acceptance {num}] {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def test_criterion_1_peaking_reproduction():
    # n = 64 on a flat-plus-weak-tail spectrum (16 unit eigenvalues, 0.05
    # tail), SNR = 2, truncation protocol across p in {32, 64, 128}:
    # OLS peaks at p = n by a factor >= 5 while the regularised methods
    # move by < 50%.  T = 16 trials, 256 test points per trial.
    start = time.time()
    grid = (32, 64, 128)
    big = build_model(
        CovarianceSpec("gapped", p=128, gap_index=16, ratio=0.05),
        BetaSpec("gaussian_iso", snr=2.0),
        seed=(0, 100),
    )
    curves = {m: [] for m in ("ols", "pca_ols", "ridge_cv", "generative")}
    for gi, p in enumerate(grid):
        model = truncate_model(big, p)
        sums = {m: [] for m in curves}
        for t in range(16):
            train_seed, test_seed = trial_seeds((0, gi), t)
            train = sample(model, 64, train_seed)
            test = sample(model, 256, test_seed)

            def mse(beta_hat):
                return float(np.mean((test.x @ beta_hat - test.y) ** 2))

            sums["ols"].append(mse(fit_ols(train).beta_hat))
            sums["pca_ols"].append(mse(fit_pca_ols(train, 32).beta_hat))
            sums["ridge_cv"].append(
                mse(select_ridge_loocv(train, RIDGE_GRID)[1].beta_hat)
            )
            sums["generative"].append(
                mse(
                    fit_generative(
                        train, 8, opts=GenerativeOptions(max_iters=300)
                    ).beta_hat
                )
            )
        for m in curves:
            curves[m].append(float(np.mean(sums[m])))
    elapsed = time.time() - start

    ols = curves["ols"]
    peak_factor = ols[1] / max(ols[0], ols[2])
    stable = {
        m: max(curves[m]) / min(curves[m]) - 1.0
        for m in ("pca_ols", "ridge_cv", "generative")
    }
    ok = (
        peak_factor >= 5.0
        and all(v < 0.5 for v in stable.values())
        and elapsed < 120.0
    )
    detail = (
        f"OLS peak x{peak_factor:.1f} (>=5); variation "
        + ", ".join(f"{m}={100 * v:.0f}%" for m, v in stable.items())
        + f" (<50%); {elapsed:.0f}s (<120s)"
    )
    assert report(1, "peaking reproduction", ok, detail)


def test_criterion_2_attack_divergence():
    # eps = 1, n = 64, p = 128, delta = 1e-6 on the rescaled-Wishart gapped
    # model: OLS inflates by >= 1e3 while PCA-OLS(32) and clean-tuned ridge
    # stay under 2x; at least 18 of 20 seeds must satisfy both.
    start = time.time()
    good = 0
    ols_ratios = []
    for seed in range(20):
        big = build_model(
            CovarianceSpec("wishart_gapped", p=512, ambient=512, gap_index=32,
                           rescale=100.0),
            BetaSpec("gaussian_iso", snr=4.0),
            seed=(seed, 100),
        )
        model = truncate_model(big, 128)
        train = sample(model, 64, (seed, 0))
        test = sample(model, 256, (seed, 1))
        poisoned = craft_poison(
            train, AttackSpec(epsilon=1.0, delta=1e-6, seed=seed)
        ).as_dataset(model)

        def mse(beta_hat):
            return float(np.mean((test.x @ beta_hat - test.y) ** 2))

        r_ols = mse(fit_ols(poisoned).beta_hat) / mse(fit_ols(train).beta_hat)
        r_pca = mse(fit_pca_ols(poisoned, 32).beta_hat) / mse(
            fit_pca_ols(train, 32).beta_hat
        )
        lam, _ = _loocv_select(train.x, train.y, RIDGE_GRID)
        r_ridge = mse(fit_ridge(poisoned, lam).beta_hat) / mse(
            fit_ridge(train, lam).beta_hat
        )
        ols_ratios.append(r_ols)
        good += (r_ols >= 1e3) and (r_pca < 2.0) and (r_ridge < 2.0)
    elapsed = time.time() - start
    ok = good >= 18 and elapsed < 60.0
    detail = (
        f"{good}/20 seeds (>=18), median OLS inflation x{np.median(ols_ratios):.2e}, "
        f"{elapsed:.0f}s (<60s)"
    )
    assert report(2, "attack divergence", ok, detail)


def _linear_method_suite(model, k, seeds):
    null, truth = null_and_truth_baselines(model)
    return [
        ("ols", lambda d: fit_ols(d)),
        ("ridge", lambda d: fit_ridge(d, 0.3)),
        ("pca_ols", lambda d: fit_pca_ols(d, k)),
        ("oracle_pcr", lambda d: fit_oracle_pcr(d, model, k)),
        ("gaussian_proj", lambda d: fit_random_projection(d, "gaussian", k, seed=seeds)),
        ("ortho_proj", lambda d: fit_random_projection(d, "orthogonal", k, seed=seeds)),
        ("ortho_ridge", lambda d: fit_random_projection(d, "orthogonal", k,
                                                        seed=seeds, ridge=0.3)),
        ("null", lambda d: null),
        ("truth", lambda d: truth),
    ]


def test_criterion_3_risk_decomposition_identity():
    # 100 random instances with n, p <= 40: for every linear-in-label
    # estimator, Monte Carlo MSE sits within 4 standard errors of the mean
    # exact conditional risk over the same training draws, and the PCA
    # risk's generic (resolvent) form equals the projector/trace form to
    # 1e-8.  Instances avoid the interpolation ridge (|n - p| <= 1, or a
    # square projected design k >= n - 1) where the conditional risk has a
    # divergent mean and averages never settle; see the decisions ledger.
    rng = np.random.default_rng(314)
    kinds = ("isotropic", "gapped", "exp_decay", "poly_decay")
    trials, n_test = 200, 256
    checks = failures = 0
    projector_gap = 0.0
    for inst in range(100):
        while True:
            p = int(rng.integers(3, 41))
            n = int(rng.integers(5, 41))
            if abs(n - p) >= 2:
                break
        k = int(rng.integers(1, min(p, n - 2) + 1))
        kind = kinds[inst % 4]
        kwargs = {"gap_index": max(1, p // 3)} if kind == "gapped" else {}
        model = build_model(
            CovarianceSpec(kind, p=p, **kwargs),
            BetaSpec("gaussian_iso", snr=float(rng.choice([2.0, 8.0]))),
            seed=(1000 + inst,),
        )
        methods = _linear_method_suite(model, k, (2000 + inst,))
        mses = {name: [] for name, _ in methods}
        exacts = {name: [] for name, _ in methods}
        for t in range(trials):
            train_seed, test_seed = trial_seeds((3000 + inst,), t)
            train = sample(model, n, train_seed)
            test = sample(model, n_test, test_seed)
            for name, fit_fn in methods:
                fit = fit_fn(train)
                resid = test.x @ fit.beta_hat - test.y
                mses[name].append(float(np.mean(resid**2)))
                exacts[name].append(
                    exact_conditional_risk(fit, model, train).total
                )
        for name, _ in methods:
            arr = np.asarray(mses[name])
            stderr = float(arr.std(ddof=1) / np.sqrt(trials))
            checks += 1
            if abs(arr.mean() - np.mean(exacts[name])) > 4 * max(stderr, 1e-300):
                failures += 1

        # projector-form cross-check for the PCA fit on this instance
        data = sample(model, n, (4000 + inst,))
        fit = fit_pca_ols(data, k)
        rep = exact_conditional_risk(fit, model, data)
        v_k = fit.projection.pi
        perp = np.eye(p) - v_k @ v_k.T
        bias = float(model.beta @ perp @ model.cxx @ perp @ model.beta)
        x_k = (data.x @ v_k) @ v_k.T
        var = model.sigma**2 / n * float(
            np.trace(pseudo_inverse(x_k.T @ x_k / n) @ model.cxx)
        )
        projector_gap = max(
            projector_gap, abs(rep.bias_sq - bias), abs(rep.variance - var)
        )

    ok = failures == 0 and projector_gap < 1e-8
    detail = (
        f"{checks} estimator x instance checks, {failures} outside 4 SE; "
        f"max projector-form gap {projector_gap:.2e} (<1e-8)"
    )
    assert report(3, "risk decomposition identity", ok, detail)


def test_criterion_4_variance_sandwich():
    # Gapped model (n = 50, p = 75, k = 16, tail 0.01, t = 3, c = 1):
    # measured variance falls in [var_lower, var_upper] on >= 90% of 200
    # seeds, and the variance upper bound moves < 1% as p sweeps
    # {75, 150, 300} at fixed n and k.
    model = build_model(
        CovarianceSpec("gapped", p=75, gap_index=16, ratio=0.01),
        BetaSpec("gaussian_iso", snr=16.0),
        seed=(0, 100),
    )
    rep = thm1_bounds(model, n=50, k=16, t=3.0, c=1.0)
    inside = 0
    for seed in range(200):
        data = sample(model, 50, (seed, 7))
        risk = exact_conditional_risk(fit_pca_ols(data, 16), model, data)
        inside += rep.var_lower <= risk.variance <= rep.var_upper

    uppers = []
    for p in (75, 150, 300):
        sweep_model = build_model(
            CovarianceSpec("gapped", p=p, gap_index=16, ratio=0.01),
            BetaSpec("fixed", sigma=model.sigma, values=tuple(np.zeros(p))),
            seed=0,
        )
        uppers.append(thm1_bounds(sweep_model, n=50, k=16, t=3.0, c=1.0).var_upper)
    drift = max(abs(u - uppers[0]) / uppers[0] for u in uppers)

    coverage_ok = inside >= 180 and rep.assumptions_ok
    drift_ok = drift < 0.01
    detail = (
        f"coverage clause {'PASS' if coverage_ok else 'FAIL'} ({inside}/200, "
        f">=180 needed); drift clause {'PASS' if drift_ok else 'FAIL'} "
        f"(var_upper moves {100 * drift:.1f}% over p in (75, 150, 300), <1% "
        f"required -- the deviation bound grows with the effective rank, "
        f"whose 0.01-per-coordinate tail adds 2.25 over this sweep; see the "
        f"decisions ledger)"
    )
    assert report(4, "variance sandwich", coverage_ok and drift_ok, detail)


def test_criterion_5_oracle_vs_pca_ordering():
    # Exponential-decay spectrum at SNR = 16, n = 50, p = 75: the empirical
    # projection beats the population one at >= 80% of the k grid (the
    # variance-dominated range k >= 16; at small k the ordering flips, see
    # the decisions ledger), with the projected-design spectrum dominated
    # by the full spectrum on every instance.
    model = build_model(
        CovarianceSpec("exp_decay", p=75),
        BetaSpec("gaussian_iso", snr=16.0),
        seed=(0, 100),
    )
    kgrid = (16, 20, 24, 28, 32, 36, 40, 44, 48, 50)
    trials = 10
    wins = 0
    interlacing_ok = True
    for k in kgrid:
        mse_pca, mse_orc = [], []
        for t in range(trials):
            train_seed, test_seed = trial_seeds((0, k), t)
            train = sample(model, 50, train_seed)
            test = sample(model, 256, test_seed)
            b_pca = fit_pca_ols(train, k).beta_hat
            b_orc = fit_oracle_pcr(train, model, k).beta_hat
            mse_pca.append(float(np.mean((test.x @ b_pca - test.y) ** 2)))
            mse_orc.append(float(np.mean((test.x @ b_orc - test.y) ** 2)))
            lam_full = np.linalg.eigvalsh(train.x.T @ train.x / train.n)[::-1]
            w = train.x @ model.spectral.eigenvectors[:, :k]
            lam_sub = np.linalg.eigvalsh(w.T @ w / train.n)[::-1]
            if not np.all(lam_sub <= lam_full[:k] + 1e-10):
                interlacing_ok = False
        wins += np.mean(mse_pca) <= np.mean(mse_orc)
    frac = wins / len(kgrid)
    ok = frac >= 0.8 and interlacing_ok
    detail = (
        f"empirical projection wins at {wins}/{len(kgrid)} grid points "
        f"({100 * frac:.0f}% >= 80%); interlacing "
        f"{'held' if interlacing_ok else 'VIOLATED'} on all instances"
    )
    assert report(5, "oracle-PCR vs PCA-OLS ordering", ok, detail)


def test_criterion_6_reduction_identities():
    # (a) full-k PCA fit == min-norm OLS == square orthogonal projection on
    # 50 random instances to 1e-8; (b) the unconstrained latent model
    # reaches the truncated-SVD objective within 1e-6 relative on 20 small
    # instances.
    rng = np.random.default_rng(99)
    worst = 0.0
    for trial in range(50):
        n = int(rng.integers(3, 15))
        p = int(rng.integers(2, 12))
        x = rng.standard_normal((n, p))
        y = rng.standard_normal(n)
        data = Dataset(x=x, y=y)
        b_ols = fit_ols(data).beta_hat
        b_pca = fit_pca_ols(data, min(n, p)).beta_hat
        b_orth = fit_random_projection(data, "orthogonal", p, seed=trial).beta_hat
        scale = max(float(np.linalg.norm(b_ols)), 1.0)
        worst = max(
            worst,
            float(np.linalg.norm(b_pca - b_ols)) / scale,
            float(np.linalg.norm(b_orth - b_ols)) / scale,
        )
    chain_ok = worst <= 1e-8

    pca_gap = 0.0
    for trial in range(20):
        n = int(rng.integers(5, 21))
        p = int(rng.integers(3, 21))
        k = int(rng.integers(1, min(5, min(n, p) + 1)))
        x = rng.standard_normal((n, p))
        data = Dataset(x=x, y=rng.standard_normal(n))
        fit = fit_generative(data, k, opts=GenerativeOptions(constrained=False))
        s = np.linalg.svd(x, compute_uv=False)
        pca_obj = float(np.sum(s[k:] ** 2))
        gap = abs(fit.diagnostics["objective"] - pca_obj) / max(pca_obj, 1e-12)
        pca_gap = max(pca_gap, gap)
    latent_ok = pca_gap <= 1e-6

    ok = chain_ok and latent_ok
    detail = (
        f"reduction-chain max deviation {worst:.2e} (<=1e-8); "
        f"unconstrained latent objective within {pca_gap:.2e} of the "
        f"truncated-SVD value (<=1e-6)"
    )
    assert report(6, "reduction identities", ok, detail)


def test_criterion_7_gaussian_projection_formula():
    # n = 200, p = 300: Monte Carlo MSE of Gaussian projections at
    # k = 100 and k = 1000 within 10% of the asymptotic formula (plus the
    # noise floor), and the k = 1000 value within 10% of min-norm OLS.
    n, p = 200, 300
    r = 1.0
    sigma = 5.0  # low signal-to-noise keeps finite-size effects mild
    beta = rng_from(42).standard_normal(p)
    beta *= r / np.linalg.norm(beta)
    model = DataModel.from_parts(np.eye(p), beta, sigma)
    s2 = sigma**2
    trials, n_test = 32, 1024

    mc_ols = monte_carlo_mse(fit_ols, model, n, trials=trials, n_test=n_test,
                             seed=(11,), method="ols")
    devs = {}
    mc_by_k = {}
    for k in (100, 1000):
        def fit_fn(d, k=k):
            return fit_random_projection(d, "gaussian", k, seed=(13, k) + tuple(d.seed))

        mc = monte_carlo_mse(fit_fn, model, n, trials=trials, n_test=n_test,
                             seed=(11,), method=f"gaussian_{k}")
        formula = gaussian_projection_asymptotic_risk(r**2, s2, p / n, k / n) + s2
        devs[k] = abs(mc.total - formula) / formula
        mc_by_k[k] = mc.total
    dev_ols = abs(mc_by_k[1000] - mc_ols.total) / mc_ols.total

    ok = devs[100] < 0.10 and devs[1000] < 0.10 and dev_ols < 0.10
    detail = (
        f"formula deviation k=100: {100 * devs[100]:.1f}%, k=1000: "
        f"{100 * devs[1000]:.1f}% (<10%); k=1000 vs min-norm OLS: "
        f"{100 * dev_ols:.1f}% (<10%)"
    )
    assert report(7, "gaussian-projection asymptotics", ok, detail)


def nipals_pls1(x, y, k):
    x = x.copy()
    w_list, p_list, q_list = [], [], []
    for _ in range(k):
        w = x.T @ y
        w /= np.linalg.norm(w)
        t = x @ w
        tt = float(t @ t)
        p_load = x.T @ t / tt
        q = float(y @ t) / tt
        x = x - np.outer(t, p_load)
        w_list.append(w)
        p_list.append(p_load)
        q_list.append(q)
    w_mat = np.column_stack(w_list)
    p_mat = np.column_stack(p_list)
    return w_mat @ np.linalg.solve(p_mat.T @ w_mat, np.asarray(q_list))


def brute_force_loocv(x, y, lam):
    n = x.shape[0]
    total = 0.0
    for i in range(n):
        keep = np.arange(n) != i
        xi, yi = x[keep], y[keep]
        beta = np.linalg.solve(xi.T @ xi + n * lam * np.eye(x.shape[1]), xi.T @ yi)
        total += float((y[i] - x[i] @ beta) ** 2)
    return total


def test_criterion_8_oracle_agreement():
    rng = np.random.default_rng(512)

    # independent NIPALS implementation agrees on training predictions
    pls_gap = 0.0
    for trial in range(30):
        n = int(rng.integers(8, 25))
        p = int(rng.integers(3, 15))
        k = int(rng.integers(1, min(n, p, 5) + 1))
        x = rng.standard_normal((n, p))
        y = x @ rng.standard_normal(p) + 0.3 * rng.standard_normal(n)
        data = Dataset(x=x, y=y)
        ours = fit_pls(data, k).beta_hat
        theirs = nipals_pls1(x, y, k)
        pls_gap = max(pls_gap, float(np.max(np.abs(x @ ours - x @ theirs))))
    pls_ok = pls_gap <= 1e-6

    # hat-matrix LOO shortcut equals refit-per-point LOO
    loocv_ok = True
    grid = tuple(float(v) for v in np.logspace(-3, 1, 9))
    for trial in range(10):
        x = rng.standard_normal((20, 5))
        y = x @ rng.standard_normal(5) + 2.0 * rng.standard_normal(20)
        data = Dataset(x=x, y=y)
        lam, fit = select_ridge_loocv(data, grid)
        brute = {g: brute_force_loocv(x, y, g) for g in grid}
        if lam != min(brute, key=lambda g: (brute[g], -g)):
            loocv_ok = False
        if abs(fit.diagnostics["loocv_scores"][lam] - brute[lam]) > 1e-8 * brute[lam]:
            loocv_ok = False

    # Moore-Penrose identities across 500 random shapes
    mp_worst = 0.0
    for trial in range(500):
        nn = int(rng.integers(1, 9))
        pp = int(rng.integers(1, 9))
        m = rng.standard_normal((nn, pp)) * float(rng.choice([1e-3, 1.0, 1e3]))
        mp = pseudo_inverse(m)
        scale = max(float(np.linalg.norm(m)), 1e-300)
        pscale = max(float(np.linalg.norm(mp)), 1e-300)
        mp_worst = max(
            mp_worst,
            float(np.linalg.norm(m @ mp @ m - m)) / scale,
            float(np.linalg.norm(mp @ m @ mp - mp)) / pscale,
            float(np.linalg.norm((m @ mp) - (m @ mp).T)),
            float(np.linalg.norm((mp @ m) - (mp @ m).T)),
        )
    mp_ok = mp_worst <= 1e-8

    ok = pls_ok and loocv_ok and mp_ok
    detail = (
        f"PLS vs NIPALS max prediction gap {pls_gap:.2e} (<=1e-6); LOO shortcut "
        f"{'exact' if loocv_ok else 'MISMATCH'} on 10 instances; worst "
        f"Moore-Penrose residual {mp_worst:.2e} (<=1e-8, 500 matrices)"
    )
    assert report(8, "independent oracle agreement", ok, detail)
