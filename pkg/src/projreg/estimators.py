"""The eight regression estimators, each returning ambient-space coefficients.

Every fit returns a :class:`FitResult` whose ``beta_hat`` lives in R^p.
Estimators that are linear in the labels also carry the resolvent map
``A`` with ``beta_hat = A @ y``; that map is what makes exact conditional
risk evaluation possible downstream.  PLS and the generative model are
not linear in the labels and carry no resolvent.

The two textbook OLS branch formulas (normal equations for n > p, dual
form for p > n) are unified through the pseudo-inverse, which also covers
rank-deficient designs at the interpolation point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_model import DataModel, Dataset, rng_from
from .numerics import (
    DEFAULT_RANK_TOL,
    BadRankError,
    check_finite,
    pseudo_inverse,
    svd,
)


class SingularDesignError(np.linalg.LinAlgError):
    """Ridge at lambda = 0 with a rank-deficient Gram matrix."""


class DegenerateHatError(ValueError):
    """A leave-one-out weight 1 - H_ii collapsed below 1e-12.

    This happens exactly when some lambda in the grid is too small for an
    interpolating design; shrink the grid away from zero.
    """


class DegenerateLatentError(np.linalg.LinAlgError):
    """Latent matrix of the generative model lost rank below k."""


@dataclass(frozen=True)
class ProjectionMatrix:
    """A p x k projection with a record of where it came from."""

    pi: np.ndarray
    provenance: str  # pca | oracle | gaussian | orthogonal | krylov

    def __post_init__(self):
        if self.provenance == "orthogonal" and self.pi.shape[1] <= self.pi.shape[0]:
            gram = self.pi.T @ self.pi
            if not np.allclose(gram, np.eye(self.pi.shape[1]), atol=1e-8):
                raise ValueError("orthogonal projection lost column orthonormality")


@dataclass
class FitResult:
    """Fitted coefficients plus whatever makes them auditable.

    ``resolvent`` is the p x n map A with ``beta_hat = A @ y`` when the
    estimator is linear in the labels, else None.  ``constant`` marks the
    two baselines whose output ignores the labels entirely.
    """

    beta_hat: np.ndarray
    method: str
    resolvent: np.ndarray | None = None
    constant: bool = False
    k: int | None = None
    lam: float | None = None
    projection: ProjectionMatrix | None = None
    diagnostics: dict = field(default_factory=dict)


def _design(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    x = check_finite(data.x, "design matrix")
    y = check_finite(data.y, "labels").reshape(-1)
    if x.shape[0] != y.size:
        raise ValueError(f"x has {x.shape[0]} rows but y has {y.size} entries")
    return x, y


def fit_ols(data: Dataset, rank_tol: float = DEFAULT_RANK_TOL) -> FitResult:
    """Min-norm least squares, ``beta_hat = pinv(X) @ y``.

    At full column rank this reproduces the normal-equation solution; at
    full row rank it interpolates the labels and is orthogonal to the
    null space of X.
    """
    x, y = _design(data)
    if not np.any(x):
        raise ValueError("cannot regress on an all-zero design")
    a = pseudo_inverse(x, rank_tol)
    return FitResult(beta_hat=a @ y, method="ols", resolvent=a)


def _ridge_resolvent(x: np.ndarray, lam: float) -> np.ndarray:
    # A = V diag(s / (s^2 + n lam)) U^T == (X^T X + n lam I)^{-1} X^T
    n = x.shape[0]
    dec = svd(x)
    if lam == 0.0:
        if dec.rank() < x.shape[1]:
            raise SingularDesignError(
                "X^T X is singular; ridge with lambda = 0 is undefined"
            )
        filt = 1.0 / dec.s
    else:
        filt = dec.s / (dec.s**2 + n * lam)
    return (dec.vt.T * filt) @ dec.u.T


def fit_ridge(data: Dataset, lam: float) -> FitResult:
    """Ridge regression with the n-scaled penalty ``n * lam * ||beta||^2``."""
    if lam < 0.0:
        raise ValueError(f"ridge penalty must be >= 0, got {lam}")
    x, y = _design(data)
    a = _ridge_resolvent(x, lam)
    return FitResult(beta_hat=a @ y, method="ridge", resolvent=a, lam=float(lam))


def _loocv_select(x: np.ndarray, y: np.ndarray, grid) -> tuple[float, dict]:
    """Grid argmin of the leave-one-out residual sum, hat-matrix shortcut.

    LOO residual for sample i is ``r_i / (1 - H_ii)`` where r is the
    in-sample residual and H the hat matrix of the penalised fit; this is
    an exact identity, not an approximation.  Ties go to the larger
    penalty.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("LOOCV grid must be nonempty")
    if any(g < 0.0 for g in grid):
        raise ValueError("LOOCV grid entries must be >= 0")
    n = x.shape[0]
    dec = svd(x)
    u, s = dec.u, dec.s
    uty = u.T @ y
    scores = {}
    for lam in sorted(grid):
        if lam == 0.0:
            d = (s > DEFAULT_RANK_TOL * (s[0] if s.size else 0.0)).astype(float)
        else:
            d = s**2 / (s**2 + n * lam)
        h_diag = np.einsum("ij,j,ij->i", u, d, u)
        weight = 1.0 - h_diag
        if np.any(weight < 1e-12):
            raise DegenerateHatError(
                f"1 - H_ii below 1e-12 at lambda = {lam:g}; "
                "the design interpolates at this penalty"
            )
        resid = y - u @ (d * uty)
        scores[lam] = float(np.sum((resid / weight) ** 2))
    best = min(scores, key=lambda lam: (scores[lam], -lam))
    return best, scores


def select_ridge_loocv(data: Dataset, grid) -> tuple[float, FitResult]:
    """Pick the ridge penalty by exact leave-one-out CV and refit."""
    x, y = _design(data)
    lam, scores = _loocv_select(x, y, grid)
    fit = fit_ridge(data, lam)
    fit.method = "ridge_cv"
    fit.diagnostics["loocv_scores"] = scores
    return lam, fit


def fit_pca_ols(data: Dataset, k: int, rank_tol: float = DEFAULT_RANK_TOL) -> FitResult:
    """OLS on the rank-k PCA approximation of the design.

    ``beta_hat = pinv(X_k) @ y`` with ``X_k`` the truncated SVD of X; at
    k = min(n, p) this is plain min-norm OLS.
    """
    x, y = _design(data)
    kmax = min(x.shape)
    if not 1 <= k <= kmax:
        raise BadRankError(f"PCA-OLS needs 1 <= k <= {kmax}, got {k}")
    dec = svd(x)
    s = dec.s[:k]
    cutoff = rank_tol * (dec.s[0] if dec.s.size else 0.0)
    inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    a = (dec.vt[:k].T * inv) @ dec.u[:, :k].T
    proj = ProjectionMatrix(pi=dec.vt[:k].T.copy(), provenance="pca")
    return FitResult(beta_hat=a @ y, method="pca_ols", resolvent=a, k=k, projection=proj)


def fit_oracle_pcr(data: Dataset, model: DataModel, k: int) -> FitResult:
    """Regression after projecting onto the top-k population eigenvectors.

    For a diagonal covariance with descending eigenvalues this reduces to
    truncating the design to its first k columns and zero-padding the
    coefficients back to R^p.
    """
    x, y = _design(data)
    if not 1 <= k <= model.p:
        raise BadRankError(f"oracle PCR needs 1 <= k <= {model.p}, got {k}")
    pi = model.spectral.eigenvectors[:, :k]
    a = pi @ pseudo_inverse(x @ pi)
    proj = ProjectionMatrix(pi=pi.copy(), provenance="oracle")
    return FitResult(beta_hat=a @ y, method="oracle_pcr", resolvent=a, k=k, projection=proj)


#: Residual threshold (relative to the incoming vector) that declares the
#: Krylov iteration exhausted.
_KRYLOV_BREAKDOWN_TOL = 1e-10


def _krylov_basis(a: np.ndarray, s: np.ndarray, k: int) -> tuple[np.ndarray, bool]:
    """Orthonormal basis of span{s, A s, ..., A^{k-1} s}.

    Columns are produced by iterating A on the previous orthonormal
    vector with modified Gram-Schmidt and one reorthogonalisation pass;
    raw Krylov columns are catastrophically ill-conditioned, and in exact
    arithmetic the span (hence the fit) is unchanged.
    """
    cols = []
    v = s.copy()
    for _ in range(k):
        scale = np.linalg.norm(v)
        for _pass in range(2):
            for q in cols:
                v = v - (q @ v) * q
        norm = np.linalg.norm(v)
        if norm <= _KRYLOV_BREAKDOWN_TOL * max(scale, 1e-300):
            return np.column_stack(cols), True
        q = v / norm
        cols.append(q)
        v = a @ q
    return np.column_stack(cols), False


def fit_pls(data: Dataset, k: int) -> FitResult:
    """Partial least squares (univariate response) via its Krylov form.

    Projects the features onto the Krylov space generated by
    ``s = X^T y`` under ``A = X^T X``, then fits OLS on the projected
    design.  If the Krylov space is exhausted before k directions the fit
    stops there and flags ``krylov_breakdown`` in the diagnostics.  Not
    linear in the labels: no resolvent.
    """
    x, y = _design(data)
    if k < 1:
        raise BadRankError(f"PLS needs k >= 1, got {k}")
    s = x.T @ y
    if np.linalg.norm(s) == 0.0:
        raise ValueError("PLS is undefined when X^T y = 0")
    basis, broke = _krylov_basis(x.T @ x, s, k)
    w = x @ basis
    beta = basis @ (pseudo_inverse(w) @ y)
    proj = ProjectionMatrix(pi=basis, provenance="krylov")
    return FitResult(
        beta_hat=beta,
        method="pls",
        k=k,
        projection=proj,
        diagnostics={"krylov_breakdown": broke, "k_effective": basis.shape[1]},
    )


def _haar_orthogonal(p: int, k: int, rng) -> np.ndarray:
    """Haar-uniform p x k frame: orthonormal columns for k <= p, rows otherwise."""
    if k <= p:
        q, r = np.linalg.qr(rng.standard_normal((p, k)))
        return q * np.sign(np.diag(r))
    q, r = np.linalg.qr(rng.standard_normal((k, p)))
    return (q * np.sign(np.diag(r))).T


def fit_random_projection(
    data: Dataset,
    kind: str,
    k: int,
    seed=0,
    ridge: float | None = None,
    lambda_grid=None,
) -> FitResult:
    """Regression on a label-independent random projection of the features.

    kind ``gaussian`` draws projection columns i.i.d. ``N(0, I_p / p)``;
    kind ``orthogonal`` draws a Haar frame (``Pi^T Pi = I_k`` for k <= p,
    ``Pi Pi^T = I_p`` for k >= p).  With ``ridge`` set the penalty
    ``n * lam`` acts on the k projected coefficients; with
    ``lambda_grid`` set the penalty is picked by exact LOOCV on the
    projected design.  Deterministic per seed.
    """
    x, y = _design(data)
    if k < 1:
        raise BadRankError(f"random projection needs k >= 1, got {k}")
    if kind not in ("gaussian", "orthogonal"):
        raise ValueError(f"unknown projection kind {kind!r}")
    if ridge is not None and lambda_grid is not None:
        raise ValueError("pass either a fixed ridge penalty or a grid, not both")
    p = x.shape[1]
    rng = rng_from(seed)
    if kind == "gaussian":
        pi = rng.standard_normal((p, k)) / np.sqrt(p)
    else:
        pi = _haar_orthogonal(p, k, rng)
    w = x @ pi
    lam = ridge
    if lambda_grid is not None:
        lam, _ = _loocv_select(w, y, lambda_grid)
    if lam is None:
        a = pi @ pseudo_inverse(w)
        method = f"{kind}_proj"
    else:
        a = pi @ _ridge_resolvent(w, lam)
        method = f"{kind}_proj_ridge"
    proj = ProjectionMatrix(pi=pi, provenance=kind)
    return FitResult(
        beta_hat=a @ y,
        method=method,
        resolvent=a,
        k=k,
        lam=None if lam is None else float(lam),
        projection=proj,
        diagnostics={"projection_seed": seed},
    )


@dataclass(frozen=True)
class GenerativeOptions:
    """Stopping rule and multi-start policy for the alternating solver."""

    tol: float = 1e-8
    max_iters: int = 500
    seed: int = 0
    n_restarts: int = 1
    constrained: bool = True


def _generative_init(x: np.ndarray, k: int, rng) -> np.ndarray:
    # PCA scores: the unconstrained optimum, so the solver starts adjacent
    # to it.  Directions beyond rank(X) are padded with small noise to
    # keep the latent matrix at full width.
    dec = svd(x)
    r = dec.rank()
    r = min(r, k)
    n = x.shape[0]
    z = np.zeros((n, k))
    z[:, :r] = dec.u[:, :r] * dec.s[:r]
    if r < k:
        pad_scale = (dec.s[r - 1] if r > 0 else 1.0) * 1e-3
        z[:, r:] = rng.standard_normal((n, k - r)) * pad_scale
    return z


def _apply_label_constraint(z: np.ndarray, p_vec: np.ndarray, y: np.ndarray) -> np.ndarray:
    gap = y - z @ p_vec
    return z + np.outer(gap / (p_vec @ p_vec), p_vec)


def _generative_run(x, y, k, p_vec, z, opts):
    n = x.shape[0]
    if opts.constrained:
        z = _apply_label_constraint(z, p_vec, y)
    objective = []
    q = None
    # A latent wider than the design rank can never exceed rank n; only a
    # drop below the achievable width counts as degenerate.
    full_width = min(k, x.shape[0])
    for _ in range(opts.max_iters):
        q, *_ = np.linalg.lstsq(z, x, rcond=None)
        if np.linalg.matrix_rank(z) < full_width:
            raise DegenerateLatentError("latent matrix dropped below rank k")
        if opts.constrained:
            # Row-wise equality-constrained least squares in closed form:
            # minimise |x_i - Q^T z_i|^2 subject to z_i . P = y_i via KKT.
            g = q @ q.T
            kkt = np.zeros((k + 1, k + 1))
            kkt[:k, :k] = 2.0 * g
            kkt[:k, k] = p_vec
            kkt[k, :k] = p_vec
            rhs = np.vstack([2.0 * (q @ x.T), y[None, :]])
            try:
                sol = np.linalg.solve(kkt, rhs)
                if not np.all(np.isfinite(sol)):
                    raise np.linalg.LinAlgError("non-finite KKT solution")
            except np.linalg.LinAlgError as exc:
                if k <= full_width:
                    raise DegenerateLatentError(f"KKT system singular: {exc}") from exc
                # latent wider than rank(X): minimisers are non-unique,
                # take the min-norm one
                sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
            z = sol[:k].T
        else:
            z = x @ pseudo_inverse(q)
        f = float(np.sum((x - z @ q) ** 2))
        objective.append(f)
        if len(objective) >= 2:
            prev = objective[-2]
            if prev - f <= opts.tol * max(prev, np.finfo(float).tiny):
                break
    return z, q, objective


def fit_generative(
    data: Dataset,
    k: int,
    p_vec: np.ndarray | None = None,
    opts: GenerativeOptions | None = None,
) -> FitResult:
    """Latent linear model: min ||X - Z Q||_F^2 subject to Z P = y.

    Alternating minimisation; the Q-step is an unconstrained least
    squares, the Z-step solves one (k+1) x (k+1) KKT system shared by all
    rows.  The label constraint holds exactly at every accepted iterate
    and the objective is non-increasing.  Prediction maps a point through
    the inferred latent coordinates: ``beta_hat = pinv(Q) @ P``.

    P defaults to the first latent coordinate e_1.  Not linear in the
    labels: no resolvent.
    """
    x, y = _design(data)
    if k < 1:
        raise BadRankError(f"generative model needs k >= 1, got {k}")
    opts = opts or GenerativeOptions()
    if p_vec is None:
        p_vec = np.zeros(k)
        p_vec[0] = 1.0
    else:
        p_vec = np.asarray(p_vec, dtype=float).reshape(-1)
        if p_vec.size != k or not np.any(p_vec):
            raise ValueError(f"P must be a nonzero vector of length {k}")

    best = None
    for restart in range(max(1, opts.n_restarts)):
        rng = rng_from((opts.seed, restart))
        z0 = _generative_init(x, k, rng)
        if restart > 0:
            z0 = z0 + rng.standard_normal(z0.shape) * (0.1 * np.abs(z0).max() + 1e-12)
        z, q, objective = _generative_run(x, y, k, p_vec, z0, opts)
        if best is None or objective[-1] < best[2][-1]:
            best = (z, q, objective)

    z, q, objective = best
    beta = pseudo_inverse(q) @ p_vec
    constraint_resid = float(np.max(np.abs(z @ p_vec - y))) if opts.constrained else None
    return FitResult(
        beta_hat=beta,
        method="generative",
        k=k,
        diagnostics={
            "iterations": len(objective),
            "objective": objective[-1],
            "objective_trace": np.asarray(objective),
            "constraint_residual": constraint_resid,
            "latent": z,
            "loading": q,
        },
    )


def null_and_truth_baselines(model: DataModel) -> tuple[FitResult, FitResult]:
    """The zero estimator and the true coefficients, as constant fits."""
    null = FitResult(beta_hat=np.zeros(model.p), method="null", constant=True)
    truth = FitResult(beta_hat=model.beta.copy(), method="truth", constant=True)
    return null, truth
