"""Single-point data-poisoning attacks and robustness evaluation.

The attack appends one pair ``(x0, y0)`` under a norm budget epsilon.
Against min-norm least squares in the overparameterized regime the
damage is governed by the leverage

    h = x0^T (I - X^T (X X^T)^{-1} X) x0,

the squared component of ``x0`` outside the span of the training
samples: an ``x0`` almost inside the span (h -> 0) plants a tiny
singular value and the refit coefficients blow up like 1/h.  Crafting
therefore mixes a random in-span combination with a small off-span
component of relative size delta.

Interaction with the numerics rank policy: if the planted singular value
falls below ``rank_tol * sigma_max`` the pseudo-inverse truncates the
attack direction away entirely.  That truncation is itself a defense; the
crafted h is reported so the caller can see which side of the threshold
an experiment sits on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_model import DataModel, Dataset, rng_from, sample
from .numerics import svd

#: Rank fraction below which the sample span is treated as all of R^p.
_FULL_SPAN_TOL = 1e-12


class FullSpanError(ValueError):
    """The training samples span all of R^p: no off-span direction exists."""


class SingularGramError(np.linalg.LinAlgError):
    """X X^T is singular; the leverage formula needs full row rank."""


@dataclass(frozen=True)
class AttackSpec:
    """Budget and shape of the poison point.

    ``epsilon`` bounds both ``||x0||`` and ``|y0|``; ``delta`` is the
    off-span mixing magnitude (0 puts x0 exactly in the sample span);
    ``alpha_mode`` picks the in-span mixing weights: standard Gaussian
    (``random``) or all-ones (``uniform``, reproducible worst cases).
    ``y0`` defaults to epsilon.

    ``mode`` selects the construction: ``span`` is the near-span point
    that drives the overparameterized divergence and refuses designs
    whose samples already span R^p; ``bottom_eig`` is the heuristic for
    such full-span (underparameterized) designs, a rank-one point along
    the bottom eigenvector of X^T X that pushes the smallest eigenvalue
    toward zero; ``auto`` picks per design.
    """

    epsilon: float = 1.0
    delta: float = 1e-6
    seed: int = 0
    alpha_mode: str = "random"
    y0: float | None = None
    mode: str = "auto"

    def validate(self) -> None:
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.delta < 0.0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.alpha_mode not in ("random", "uniform"):
            raise ValueError(f"unknown alpha_mode {self.alpha_mode!r}")
        if self.y0 is not None and abs(self.y0) > self.epsilon * (1 + 1e-12):
            raise ValueError("|y0| exceeds the epsilon budget")
        if self.mode not in ("auto", "span", "bottom_eig"):
            raise ValueError(f"unknown attack mode {self.mode!r}")


@dataclass(frozen=True)
class PoisonedDataset:
    """Training data with the adversarial row appended last."""

    x_tilde: np.ndarray
    y_tilde: np.ndarray
    h: float
    spec: AttackSpec
    x0: np.ndarray = field(repr=False)
    y0: float = 0.0

    def as_dataset(self, model: DataModel | None = None) -> Dataset:
        return Dataset(x=self.x_tilde, y=self.y_tilde, seed=None, model=model)


def leverage_h(x0, data: Dataset) -> float:
    """``x0^T (I - X^T (X X^T)^{-1} X) x0``: squared off-span component."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    x = data.x
    gram = x @ x.T
    try:
        coef = np.linalg.solve(gram, x @ x0)
    except np.linalg.LinAlgError as exc:
        raise SingularGramError(f"X X^T is singular: {exc}") from exc
    return float(x0 @ x0 - (x @ x0) @ coef)


def _row_space(data: Dataset) -> tuple[np.ndarray, int]:
    dec = svd(data.x)
    r = dec.rank(_FULL_SPAN_TOL)
    return dec.vt[:r].T, r


def craft_poison(data: Dataset, spec: AttackSpec) -> PoisonedDataset:
    """Build the poison pair: in-span mixture plus a delta off-span nudge.

    ``x0 = eps * normalize(sum_i alpha_i v_i + delta * g)`` with ``v_i``
    an orthonormal basis of the span of the training samples and ``g`` a
    unit Gaussian direction orthogonal to that span; ``y0 = eps`` unless
    overridden.  The leverage h of the crafted point rides along.
    """
    spec.validate()
    basis, r = _row_space(data)
    p = data.p
    rng = rng_from(spec.seed)
    mode = spec.mode
    if mode == "auto":
        mode = "bottom_eig" if r >= p else "span"
    if mode == "bottom_eig":
        # Rank-one heuristic for full-span designs.  A poison row exactly
        # along the bottom eigenvector of X^T X self-regularizes (it
        # raises that eigenvalue by eps^2), so the point is only
        # partially aligned: alignment sqrt(lam_min) / eps maximizes the
        # coefficient error injected into the weak direction and needs
        # lam_min < eps^2 to bite.
        dec = svd(data.x)
        v_min = dec.vt[p - 1]
        lam_min = float(dec.s[p - 1] ** 2)
        align = min(1.0, np.sqrt(lam_min) / spec.epsilon)
        other = dec.vt[p - 2] if p >= 2 else v_min
        x0 = spec.epsilon * (align * v_min + np.sqrt(max(0.0, 1.0 - align**2)) * other)
    else:
        if spec.alpha_mode == "random":
            alpha = rng.standard_normal(r)
        else:
            alpha = np.ones(r)
        raw = basis @ alpha
        if spec.delta > 0.0:
            if r >= p:
                raise FullSpanError(
                    "training samples span all of R^p; no off-span direction "
                    "exists for delta > 0"
                )
            g = rng.standard_normal(p)
            g -= basis @ (basis.T @ g)
            norm = np.linalg.norm(g)
            if norm == 0.0:
                raise FullSpanError("failed to find an off-span direction")
            raw = raw + spec.delta * (g / norm)
        x0 = spec.epsilon * raw / np.linalg.norm(raw)
    y0 = spec.epsilon if spec.y0 is None else float(spec.y0)
    if data.n <= p:
        try:
            h = leverage_h(x0, data)
        except SingularGramError:
            h = _projector_h(x0, basis)
    else:
        h = _projector_h(x0, basis)
    h = max(h, 0.0)
    return PoisonedDataset(
        x_tilde=np.vstack([data.x, x0[None, :]]),
        y_tilde=np.concatenate([data.y, [y0]]),
        h=h,
        spec=spec,
        x0=x0,
        y0=y0,
    )


def _projector_h(x0: np.ndarray, basis: np.ndarray) -> float:
    resid = x0 - basis @ (basis.T @ x0)
    return float(resid @ resid)


@dataclass
class AttackOutcome:
    """Clean-versus-poisoned test MSE for one method."""

    method: str
    mse_clean: float | None
    mse_poisoned: float | None
    ratio: float | None
    h: float
    error: str | None = None


def evaluate_attack(
    methods,
    data: Dataset,
    model: DataModel,
    spec: AttackSpec,
    trials: int = 16,
    n_test: int = 256,
    seed=0,
) -> list[AttackOutcome]:
    """Refit each method on clean and poisoned data and compare test MSE.

    ``methods`` is an iterable of ``(name, fit_fn)`` with
    ``fit_fn(dataset) -> FitResult``.  Both fits of a method are scored
    on the same ``trials`` fresh test draws from the clean model.
    Per-method failures are recorded in the outcome, never raised.
    """
    poisoned = craft_poison(data, spec)
    pdata = poisoned.as_dataset(model)
    base = seed if isinstance(seed, tuple) else (seed,)
    tests = [sample(model, n_test, base + (t, 1)) for t in range(trials)]
    outcomes = []
    for name, fit_fn in methods:
        try:
            fit_clean = fit_fn(data)
            fit_poison = fit_fn(pdata)
            mse_c = float(
                np.mean([np.mean((ts.x @ fit_clean.beta_hat - ts.y) ** 2) for ts in tests])
            )
            mse_p = float(
                np.mean([np.mean((ts.x @ fit_poison.beta_hat - ts.y) ** 2) for ts in tests])
            )
            outcomes.append(
                AttackOutcome(
                    method=name,
                    mse_clean=mse_c,
                    mse_poisoned=mse_p,
                    ratio=mse_p / mse_c if mse_c > 0 else float("inf"),
                    h=poisoned.h,
                )
            )
        except Exception as exc:  # noqa: BLE001 - per-method failures are data
            outcomes.append(
                AttackOutcome(
                    method=name,
                    mse_clean=None,
                    mse_poisoned=None,
                    ratio=None,
                    h=poisoned.h,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
    return outcomes


def poison_outlier_scores(pdata: PoisonedDataset, k: int) -> tuple[float, np.ndarray]:
    """Residuals off the top-k principal subspace: poison row vs clean rows.

    A defender-side diagnostic: the subspace is computed from the
    poisoned matrix itself (that is all a defender sees).  Returns the
    poison row's residual norm and the array of clean-row residual norms;
    an attack that moves the k-th empirical eigenvalue necessarily
    protrudes from the top-k subspace and shows up as an outlier here.
    """
    x = pdata.x_tilde
    dec = svd(x)
    if not 1 <= k < min(x.shape):
        raise ValueError(f"need 1 <= k < min(n, p) = {min(x.shape)}, got {k}")
    basis = dec.vt[:k].T
    resid = x - (x @ basis) @ basis.T
    norms = np.linalg.norm(resid, axis=1)
    return float(norms[-1]), norms[:-1]
