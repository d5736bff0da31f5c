"""Exact conditional risk and Monte Carlo out-of-sample MSE.

For an estimator that is linear in the labels (``beta_hat = A @ y``) the
out-of-sample risk conditional on the design decomposes exactly as

    bias^2   = (beta - A X beta)^T C (beta - A X beta)
    variance = sigma^2 * tr(A^T C A)
    total    = bias^2 + variance + sigma^2

with C the population covariance.  Monte Carlo MSE (fresh training and
test draw per trial) is the fallback for estimators without a resolvent
and the cross-check for those with one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import DataModel, Dataset, sample
from .estimators import FitResult, ProjectionMatrix
from .numerics import BadRankError, pseudo_inverse


class NoResolventError(ValueError):
    """Exact risk requested for an estimator that is not linear in y."""


@dataclass
class RiskReport:
    """Bias/variance/noise split of the prediction risk.

    ``mode`` is ``exact`` (conditional on a realised design) or
    ``monte_carlo`` (averaged over fresh draws); in the latter case only
    ``total`` and ``mc_stderr`` are meaningful and the split fields are
    None.
    """

    method: str
    bias_sq: float | None
    variance: float | None
    noise: float
    total: float
    mode: str
    mc_stderr: float | None = None
    failed_trials: int = 0
    n: int | None = None
    p: int | None = None
    k: int | None = None

    def as_record(self) -> dict:
        return {
            "method": self.method,
            "k": self.k,
            "n": self.n,
            "p": self.p,
            "bias_sq": self.bias_sq,
            "variance": self.variance,
            "noise": self.noise,
            "total": self.total,
            "mc_stderr": self.mc_stderr,
            "failed_trials": self.failed_trials,
        }


def exact_conditional_risk(fit: FitResult, model: DataModel, data: Dataset | None) -> RiskReport:
    """Exact risk of a linear-in-y (or constant) fit, conditional on X."""
    c = model.cxx
    beta = model.beta
    if fit.constant:
        d = beta - fit.beta_hat
        bias_sq = float(d @ c @ d)
        variance = 0.0
    elif fit.resolvent is not None:
        if data is None:
            raise ValueError("exact risk of a non-constant fit needs the dataset")
        a = fit.resolvent
        d = beta - a @ (data.x @ beta)
        bias_sq = float(d @ c @ d)
        half = model.cxx_sqrt @ a
        variance = float(model.sigma**2 * np.sum(half * half))
    else:
        raise NoResolventError(
            f"estimator {fit.method!r} is not linear in the labels; "
            "use monte_carlo_mse instead"
        )
    noise = float(model.sigma**2)
    return RiskReport(
        method=fit.method,
        bias_sq=bias_sq,
        variance=variance,
        noise=noise,
        total=bias_sq + variance + noise,
        mode="exact",
        n=None if data is None else data.n,
        p=model.p,
        k=fit.k,
    )


def trial_seeds(master, trial: int) -> tuple[tuple, tuple]:
    """Documented derivation of the (train, test) seeds for one trial.

    Sharing ``master`` across methods yields common random numbers: every
    method sees the same training and test draws within a trial.
    """
    base = master if isinstance(master, tuple) else (master,)
    return base + (trial, 0), base + (trial, 1)


def monte_carlo_mse(
    fit_fn,
    model: DataModel,
    n: int,
    trials: int = 16,
    n_test: int = 256,
    seed=0,
    method: str = "?",
    return_trials: bool = False,
):
    """Out-of-sample MSE over fresh train/test draws.

    ``fit_fn(dataset) -> FitResult`` is refit on an independent training
    set each trial and scored on an independent test set of ``n_test``
    points.  Trials whose fit raises are excluded from the average and
    counted in ``failed_trials`` rather than imputed: divergence at the
    interpolation point is the phenomenon under study, and an infinite
    sample would swamp the mean.
    """
    if trials < 1 or n_test < 1:
        raise ValueError("need at least one trial and one test point")
    per_trial = []
    failures = 0
    for t in range(trials):
        train_seed, test_seed = trial_seeds(seed, t)
        train = sample(model, n, train_seed)
        test = sample(model, n_test, test_seed)
        try:
            fit = fit_fn(train)
        except Exception:
            failures += 1
            per_trial.append(np.nan)
            continue
        resid = test.x @ fit.beta_hat - test.y
        per_trial.append(float(np.mean(resid**2)))
    per_trial = np.asarray(per_trial)
    good = per_trial[np.isfinite(per_trial)]
    if good.size == 0:
        raise RuntimeError(f"all {trials} trials failed for method {method!r}")
    mse = float(np.mean(good))
    stderr = float(np.std(good, ddof=1) / np.sqrt(good.size)) if good.size > 1 else 0.0
    report = RiskReport(
        method=method,
        bias_sq=None,
        variance=None,
        noise=float(model.sigma**2),
        total=mse,
        mode="monte_carlo",
        mc_stderr=stderr,
        failed_trials=failures,
        n=n,
        p=model.p,
    )
    if return_trials:
        return report, per_trial
    return report


def projection_bias_variance_split(
    pi: ProjectionMatrix | np.ndarray, data: Dataset, model: DataModel
) -> RiskReport:
    """Exact bias/variance of the fit ``beta_hat = Pi (X Pi)^+ y``.

    The fitted map ``M = Pi (X Pi)^+ X`` is an oblique projector (an
    identity on the fitted subspace, asserted below); the bias is the
    population-weighted energy of ``(I - M) beta`` and the variance comes
    from the exact trace form.
    """
    mat = pi.pi if isinstance(pi, ProjectionMatrix) else np.asarray(pi, dtype=float)
    if mat.ndim != 2 or mat.shape[1] < 1:
        raise BadRankError(f"projection must be p x k with k >= 1, got {mat.shape}")
    if mat.shape[0] != data.p:
        raise BadRankError(
            f"projection rows {mat.shape[0]} do not match feature count {data.p}"
        )
    a = mat @ pseudo_inverse(data.x @ mat)
    m = a @ data.x
    if not np.allclose(m @ m, m, atol=1e-8 * max(1.0, float(np.abs(m).max()))):
        raise ValueError("fitted map is not idempotent; projection is degenerate")
    d = model.beta - m @ model.beta
    bias_sq = float(d @ model.cxx @ d)
    half = model.cxx_sqrt @ a
    variance = float(model.sigma**2 * np.sum(half * half))
    noise = float(model.sigma**2)
    return RiskReport(
        method="projection",
        bias_sq=bias_sq,
        variance=variance,
        noise=noise,
        total=bias_sq + variance + noise,
        mode="exact",
        n=data.n,
        p=model.p,
        k=mat.shape[1],
    )
