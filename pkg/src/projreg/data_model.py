"""Population models and Gaussian sampling.

A :class:`DataModel` is the ground truth every risk computation and bound
consumes: a PSD feature covariance ``cxx``, a coefficient vector ``beta``
and a noise level ``sigma``.  Rows of a sampled design are i.i.d.
``N(0, cxx)`` and labels are ``y = x @ beta + eps`` with
``eps ~ N(0, sigma^2)``.

RNG contract
------------
All randomness flows through :func:`rng_from`, a Philox (counter-based)
generator keyed by a ``numpy.random.SeedSequence`` over a tuple of small
integers.  :func:`sample` draws the design ``Z`` (row-major, n*p normals)
first and the noise vector (n normals) second, so a given seed replays
bit-exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import SpectralDecomposition, check_finite, eig_sym

COVARIANCE_KINDS = ("isotropic", "gapped", "exp_decay", "poly_decay", "wishart_gapped")
BETA_KINDS = ("gaussian_iso", "aligned_constant", "misaligned_ramp", "fixed")

#: Relative slack on the smallest eigenvalue when validating PSD-ness.
PSD_TOL = 1e-10


class BadSpecError(ValueError):
    """Covariance or beta specification with invalid parameters."""


def rng_from(seed) -> np.random.Generator:
    """Philox generator keyed by ``SeedSequence(seed)``.

    ``seed`` may be an int or a tuple of ints; tuples are the documented
    way to derive independent child streams (master, trial, role, ...).
    """
    return np.random.Generator(np.random.Philox(seed=np.random.SeedSequence(seed)))


@dataclass(frozen=True)
class CovarianceSpec:
    """Recipe for a population covariance.

    kind:
        - ``isotropic``: identity.
        - ``gapped``: ``gap_index`` eigenvalues at 1, the rest at ``ratio``.
        - ``exp_decay``: ``lambda_i = 2 ** (-(i - 1) * rate)``.
        - ``poly_decay``: ``lambda_i = i ** (-exponent)``.
        - ``wishart_gapped``: eigenvalues of ``W @ W.T`` (``W`` an
          ``ambient`` x ``ambient`` standard Gaussian) with the top
          ``gap_index`` eigenvalues multiplied by ``rescale``; the
          leading ``p`` x ``p`` block is returned.  Not normalised.

    The four deterministic kinds are diagonal with ``lambda_1 = 1``.
    """

    kind: str
    p: int
    gap_index: int = 16
    ratio: float = 0.01
    rate: float = 0.5
    exponent: float = 2.0
    ambient: int = 512
    rescale: float = 100.0

    def validate(self) -> None:
        if self.kind not in COVARIANCE_KINDS:
            raise BadSpecError(f"unknown covariance kind {self.kind!r}")
        if self.p < 1:
            raise BadSpecError(f"dimension p must be >= 1, got {self.p}")
        if self.kind in ("gapped", "wishart_gapped"):
            bound = self.p if self.kind == "gapped" else self.ambient
            if not 1 <= self.gap_index <= bound:
                raise BadSpecError(
                    f"gap_index must lie in [1, {bound}], got {self.gap_index}"
                )
        if self.kind == "gapped" and not 0.0 < self.ratio <= 1.0:
            raise BadSpecError(f"gap ratio must lie in (0, 1], got {self.ratio}")
        if self.kind == "exp_decay" and self.rate <= 0.0:
            raise BadSpecError(f"decay rate must be positive, got {self.rate}")
        if self.kind == "poly_decay" and self.exponent <= 0.0:
            raise BadSpecError(f"decay exponent must be positive, got {self.exponent}")
        if self.kind == "wishart_gapped":
            if self.ambient < self.p:
                raise BadSpecError(
                    f"ambient dimension {self.ambient} smaller than p = {self.p}"
                )
            if self.rescale <= 0.0:
                raise BadSpecError(f"rescale must be positive, got {self.rescale}")


@dataclass(frozen=True)
class BetaSpec:
    """Recipe for the true coefficients and the noise level.

    Exactly one of ``snr`` (sigma = ||beta|| / snr) or ``sigma`` must be
    given.  ``misaligned_ramp`` places coefficient ``i`` on the i-th
    population eigenvector, so the largest weights sit on the smallest
    eigenvalues; for a diagonal covariance this is the literal
    ``beta = [1, 2, ..., p]``.  ``aligned_constant`` places equal unit
    weights on every eigenvector.
    """

    kind: str
    snr: float | None = None
    sigma: float | None = None
    values: tuple[float, ...] | None = None

    def validate(self) -> None:
        if self.kind not in BETA_KINDS:
            raise BadSpecError(f"unknown beta kind {self.kind!r}")
        if (self.snr is None) == (self.sigma is None):
            raise BadSpecError("exactly one of snr or sigma must be set")
        if self.snr is not None and self.snr <= 0.0:
            raise BadSpecError(f"snr must be positive, got {self.snr}")
        if self.sigma is not None and self.sigma < 0.0:
            raise BadSpecError(f"sigma must be >= 0, got {self.sigma}")
        if self.kind == "fixed" and not self.values:
            raise BadSpecError("fixed beta requires explicit values")


@dataclass(frozen=True)
class DataModel:
    """Population quantities (cxx, beta, sigma) plus the cached spectrum."""

    cxx: np.ndarray
    beta: np.ndarray
    sigma: float
    spectral: SpectralDecomposition = field(repr=False, compare=False)
    cxx_sqrt: np.ndarray = field(repr=False, compare=False)

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    @classmethod
    def from_parts(cls, cxx, beta, sigma: float) -> "DataModel":
        cxx = check_finite(cxx, "cxx")
        beta = check_finite(beta, "beta").reshape(-1)
        if cxx.shape != (beta.size, beta.size):
            raise BadSpecError(
                f"cxx shape {cxx.shape} incompatible with beta length {beta.size}"
            )
        if sigma < 0.0:
            raise BadSpecError(f"sigma must be >= 0, got {sigma}")
        spectral = eig_sym(cxx)
        lam = spectral.eigenvalues
        if lam[-1] < -PSD_TOL * max(lam[0], 1.0):
            raise BadSpecError(f"cxx is not PSD: min eigenvalue {lam[-1]:.3e}")
        root = np.sqrt(np.clip(lam, 0.0, None))
        cxx_sqrt = (spectral.eigenvectors * root) @ spectral.eigenvectors.T
        return cls(cxx=cxx, beta=beta, sigma=float(sigma), spectral=spectral,
                   cxx_sqrt=cxx_sqrt)


@dataclass(frozen=True)
class Dataset:
    """A sampled design ``x`` (n x p), labels ``y`` (n,) and their seed."""

    x: np.ndarray
    y: np.ndarray
    seed: object = None
    model: DataModel | None = None

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


def _covariance_eigenvalues(spec: CovarianceSpec) -> np.ndarray:
    i = np.arange(1, spec.p + 1, dtype=float)
    if spec.kind == "isotropic":
        return np.ones(spec.p)
    if spec.kind == "gapped":
        lam = np.full(spec.p, spec.ratio)
        lam[: spec.gap_index] = 1.0
        return lam
    if spec.kind == "exp_decay":
        return 2.0 ** (-(i - 1.0) * spec.rate)
    if spec.kind == "poly_decay":
        return i ** (-spec.exponent)
    raise BadSpecError(f"no closed-form eigenvalues for kind {spec.kind!r}")


def build_covariance(spec: CovarianceSpec, seed=0) -> np.ndarray:
    """Construct the p x p population covariance for ``spec``.

    Deterministic kinds are diagonal with the eigenvalues given by the
    spec formula; ``wishart_gapped`` draws its Wishart factor from
    ``rng_from(seed)``.
    """
    spec.validate()
    if spec.kind != "wishart_gapped":
        return np.diag(_covariance_eigenvalues(spec))
    rng = rng_from(seed)
    w = rng.standard_normal((spec.ambient, spec.ambient))
    dec = eig_sym(w @ w.T)
    lam = dec.eigenvalues.copy()
    lam[: spec.gap_index] *= spec.rescale
    big = (dec.eigenvectors * lam) @ dec.eigenvectors.T
    return big[: spec.p, : spec.p]


def build_beta(
    spec: BetaSpec, p: int, seed=0, eigenvectors: np.ndarray | None = None
) -> tuple[np.ndarray, float]:
    """Construct ``(beta, sigma)`` for a p-dimensional model.

    ``eigenvectors`` (columns, descending eigenvalue order) anchor the
    aligned/misaligned kinds to the covariance eigenbasis; identity is
    assumed when omitted, which is exact for the diagonal kinds.
    """
    spec.validate()
    if spec.kind == "gaussian_iso":
        beta = rng_from(seed).standard_normal(p)
    elif spec.kind == "aligned_constant":
        coef = np.ones(p)
        beta = coef if eigenvectors is None else eigenvectors @ coef
    elif spec.kind == "misaligned_ramp":
        coef = np.arange(1, p + 1, dtype=float)
        beta = coef if eigenvectors is None else eigenvectors @ coef
    else:
        beta = np.asarray(spec.values, dtype=float)
        if beta.size != p:
            raise BadSpecError(f"fixed beta has length {beta.size}, expected {p}")
    sigma = spec.sigma if spec.sigma is not None else float(np.linalg.norm(beta)) / spec.snr
    return beta, float(sigma)


def build_model(
    cov_spec: CovarianceSpec, beta_spec: BetaSpec, seed=0
) -> DataModel:
    """Assemble a DataModel; covariance and beta use child streams of ``seed``."""
    base = seed if isinstance(seed, tuple) else (seed,)
    cxx = build_covariance(cov_spec, seed=base + (0,))
    spectral = eig_sym(cxx)
    beta, sigma = build_beta(
        beta_spec, cov_spec.p, seed=base + (1,), eigenvectors=spectral.eigenvectors
    )
    return DataModel.from_parts(cxx, beta, sigma)


def truncate_model(big: DataModel, p: int) -> DataModel:
    """Leading p x p principal block of ``big.cxx`` with ``beta[:p]``.

    This is the protocol for sweeping the feature count at a fixed
    ambient model: sigma is unchanged and the truncated covariance keeps
    the gap structure of the parent because its eigenvectors are
    incoherent with the axes.
    """
    from .numerics import BadRankError

    if not 1 <= p <= big.p:
        raise BadRankError(f"cannot truncate a {big.p}-dim model to p = {p}")
    return DataModel.from_parts(big.cxx[:p, :p], big.beta[:p], big.sigma)


def sample(model: DataModel, n: int, seed) -> Dataset:
    """Draw ``n`` i.i.d. rows ``x ~ N(0, cxx)`` and labels ``y = x beta + eps``.

    The design is ``Z @ cxx^{1/2}`` with ``Z`` standard normal, drawn
    before the noise; both come from the single Philox stream keyed by
    ``seed``, so the dataset is a pure function of (model, n, seed).
    """
    if n < 1:
        raise BadSpecError(f"need n >= 1 samples, got {n}")
    rng = rng_from(seed)
    z = rng.standard_normal((n, model.p))
    x = z @ model.cxx_sqrt
    eps = rng.standard_normal(n) * model.sigma
    y = x @ model.beta + eps
    return Dataset(x=x, y=y, seed=seed, model=model)


def dataset_to_csv(data: Dataset, path) -> None:
    """Write ``x_1,...,x_p,y`` rows with 17 significant digits."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x_{j + 1}" for j in range(data.p)] + ["y"])
        for i in range(data.n):
            row = [f"{v:.17g}" for v in data.x[i]] + [f"{data.y[i]:.17g}"]
            writer.writerow(row)


def dataset_from_csv(path, model: DataModel | None = None) -> Dataset:
    """Read a dataset written by :func:`dataset_to_csv`."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "y" or header[0] != "x_1":
            raise BadSpecError(f"unrecognised dataset header: {header!r}")
        rows = [[float(v) for v in row] for row in reader if row]
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != len(header):
        raise BadSpecError("ragged or empty dataset file")
    return Dataset(x=arr[:, :-1], y=arr[:, -1], seed=None, model=model)
