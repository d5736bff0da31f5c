"""Dense matrix kernels shared by the whole package.

Everything here is a thin, policy-carrying wrapper around LAPACK (via
numpy): symmetric eigendecomposition, SVD, Moore-Penrose pseudo-inverse,
rank-k truncation and orthogonal projectors.  The one policy that matters
is rank truncation: singular values below ``rank_tol * sigma_max`` are
treated as exact zeros.  Results near the interpolation point (p ~ n) are
sensitive to this threshold, so it is a surfaced parameter everywhere a
pseudo-inverse is formed.

All functions are pure; arrays are never modified in place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Relative singular-value cutoff below which a direction counts as null.
DEFAULT_RANK_TOL = 1e-12

#: Relative asymmetry admitted by eig_sym.
SYMMETRY_TOL = 1e-10


class NotFiniteError(ValueError):
    """Matrix contains NaN or Inf entries."""


class NotSymmetricError(ValueError):
    """Asymmetry exceeds ``SYMMETRY_TOL`` times the operator norm."""


class BadRankError(ValueError):
    """Requested rank outside the valid range for the given shape."""


def check_finite(m, name: str = "matrix") -> np.ndarray:
    """Return ``m`` as a float ndarray, rejecting NaN/Inf entries."""
    m = np.asarray(m, dtype=float)
    if m.size and not np.all(np.isfinite(m)):
        raise NotFiniteError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of a symmetric matrix, eigenvalues sorted descending.

    ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]``; the eigenvector
    matrix has orthonormal columns.  Ties keep the order produced by the
    underlying LAPACK routine, which makes top-k truncation deterministic
    but (necessarily) arbitrary inside a repeated-eigenvalue subspace.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


@dataclass(frozen=True)
class SvdDecomposition:
    """Thin SVD ``m = u @ diag(s) @ vt`` with ``s`` descending and >= 0."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray

    def rank(self, rank_tol: float = DEFAULT_RANK_TOL) -> int:
        if self.s.size == 0 or self.s[0] == 0.0:
            return 0
        return int(np.sum(self.s > rank_tol * self.s[0]))


def operator_norm(m) -> float:
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def eig_sym(m) -> SpectralDecomposition:
    """Eigendecomposition of a symmetric matrix, descending order.

    Raises
    ------
    NotSymmetricError
        If ``max|m - m.T|`` exceeds ``SYMMETRY_TOL * ||m||_op``.
    NotFiniteError
        On NaN/Inf entries.
    """
    m = check_finite(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetricError(f"expected a square matrix, got shape {m.shape}")
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    scale = operator_norm(m)
    if asym > SYMMETRY_TOL * max(scale, np.finfo(float).tiny):
        raise NotSymmetricError(
            f"asymmetry {asym:.3e} exceeds {SYMMETRY_TOL:.0e} * ||m||_op = "
            f"{SYMMETRY_TOL * scale:.3e}"
        )
    sym = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(sym)
    order = np.argsort(w, kind="stable")[::-1]
    return SpectralDecomposition(eigenvalues=w[order], eigenvectors=v[:, order])


def svd(m) -> SvdDecomposition:
    """Thin SVD with the package-wide finiteness check."""
    m = check_finite(m)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return SvdDecomposition(u=u, s=s, vt=vt)


def pseudo_inverse(m, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with an explicit rank cutoff.

    Singular values at or below ``rank_tol * sigma_max`` are inverted to
    exact zeros; the inverse is formed only on the surviving directions.

    Parameters
    ----------
    m : array, shape (r, c)
    rank_tol : float in (0, 1)
        Relative cutoff, default 1e-12.
    """
    if not 0.0 < rank_tol < 1.0:
        raise ValueError(f"rank_tol must lie in (0, 1), got {rank_tol}")
    dec = svd(m)
    r = dec.rank(rank_tol)
    if r == 0:
        return np.zeros((m.shape[1], m.shape[0]))
    inv = 1.0 / dec.s[:r]
    return (dec.vt[:r].T * inv) @ dec.u[:, :r].T


def rank_k_approx(m, k: int) -> np.ndarray:
    """Best rank-k approximation in Frobenius norm (truncated SVD)."""
    m = np.asarray(m, dtype=float)
    kmax = min(m.shape)
    if not 1 <= k <= kmax:
        raise BadRankError(f"k must lie in [1, {kmax}] for shape {m.shape}, got {k}")
    dec = svd(m)
    return (dec.u[:, :k] * dec.s[:k]) @ dec.vt[:k]


def projector_onto_columns(m, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthogonal projector onto the column span of ``m``.

    Returns P with P = P^2 = P^T, P @ m = m and trace(P) = rank(m).  To
    project onto a row span, pass ``m.T``.
    """
    dec = svd(m)
    r = dec.rank(rank_tol)
    if r == 0:
        raise ValueError("cannot project onto the span of a zero matrix")
    u = dec.u[:, :r]
    return u @ u.T
