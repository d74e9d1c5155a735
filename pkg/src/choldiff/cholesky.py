"""Cholesky parameterisation of the diffusion matrix.

The sampler's native volatility parameterisation is a lower-triangular
factor ``C`` with positive diagonal.  ``C`` is linked to the interpretable
scale/correlation parameters ``(c_i, rho_ij)`` through ``V = C C'`` with
``V_ii = c_i**2`` and ``V_ij = rho_ij * c_i * c_j``; the mapping is an
exact bijection, implemented in closed form in both directions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class PositiveDefiniteError(ValueError):
    """Raised when a matrix expected to be positive definite is not."""


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular matrix with strictly positive diagonal."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("Cholesky factor must be a square matrix")
        if np.any(entries[np.triu_indices_from(entries, k=1)] != 0.0):
            raise ValueError("entries above the diagonal must be exactly zero")
        if np.any(np.diag(entries) <= 0.0):
            raise ValueError("diagonal entries must be strictly positive")
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def inverse(self) -> np.ndarray:
        """Lower-triangular inverse of the factor."""
        return solve_lower(self.entries, np.eye(self.dim))

    def log_det(self) -> float:
        return float(np.sum(np.log(np.diag(self.entries))))

    def product(self) -> np.ndarray:
        """The symmetric positive definite matrix ``C C'``."""
        return self.entries @ self.entries.T


@dataclass(frozen=True)
class CorrScaleSpec:
    """Scales ``c_i > 0`` and correlations ``rho_ij`` of the V matrix."""

    scales: np.ndarray
    correlations: np.ndarray  # strictly lower triangular, entries in (-1, 1)

    def __post_init__(self):
        scales = np.asarray(self.scales, dtype=float)
        corr = np.asarray(self.correlations, dtype=float)
        d = scales.shape[0]
        if corr.shape != (d, d):
            raise ValueError("correlations must be a d x d matrix")
        if np.any(scales <= 0.0):
            raise ValueError("scales must be strictly positive")
        if np.any(corr[np.triu_indices(d)] != 0.0):
            raise ValueError("correlations must be strictly lower triangular")
        if np.any(np.abs(corr) >= 1.0):
            raise ValueError("correlations must lie in (-1, 1)")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "correlations", corr)

    @property
    def dim(self) -> int:
        return self.scales.shape[0]

    def correlation_matrix(self) -> np.ndarray:
        """Symmetric correlation matrix R with unit diagonal."""
        r = self.correlations + self.correlations.T
        np.fill_diagonal(r, 1.0)
        return r


@dataclass(frozen=True)
class SparsityMask:
    """Sparsity pattern on the lower triangle of C.

    ``zero`` marks strictly-lower entries fixed at 0 (zeroed correlations);
    ``redundant`` marks diagonal entries determined by other parameters and
    therefore never proposed by the sampler.
    """

    zero: np.ndarray
    redundant: np.ndarray = None

    def __post_init__(self):
        zero = np.asarray(self.zero, dtype=bool)
        d = zero.shape[0]
        if zero.shape != (d, d):
            raise ValueError("mask must be square")
        if np.any(zero[np.triu_indices(d)]):
            raise ValueError("only strictly lower entries may be zero-masked")
        redundant = self.redundant
        if redundant is None:
            redundant = np.zeros(d, dtype=bool)
        redundant = np.asarray(redundant, dtype=bool)
        if redundant.shape != (d,):
            raise ValueError("redundant flags must be a d-vector")
        object.__setattr__(self, "zero", zero)
        object.__setattr__(self, "redundant", redundant)

    @property
    def dim(self) -> int:
        return self.zero.shape[0]

    def is_free(self, i: int, j: int) -> bool:
        """Whether entry (i, j) of C is updated by the sampler."""
        if j > i:
            return False
        if i == j:
            return not self.redundant[i]
        return not self.zero[i, j]

    def free_entries(self) -> list[tuple[int, int]]:
        """Row-major list of free lower-triangular index pairs."""
        d = self.dim
        return [(i, j) for i in range(d) for j in range(i + 1) if self.is_free(i, j)]

    @staticmethod
    def dense(d: int) -> "SparsityMask":
        """Mask with every lower-triangular entry free."""
        return SparsityMask(np.zeros((d, d), dtype=bool))


def solve_lower(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Forward substitution for a lower-triangular system."""
    from scipy.linalg import solve_triangular

    return solve_triangular(L, b, lower=True)


def build_V(spec: CorrScaleSpec) -> np.ndarray:
    """Assemble the symmetric positive definite V matrix.

    ``V_ii = c_i**2`` and ``V_ij = rho_ij c_i c_j``.  Raises
    :class:`PositiveDefiniteError` naming the offending leading minor when
    the implied correlation matrix is not positive definite.
    """
    r = spec.correlation_matrix()
    _check_pd(r)
    return r * np.outer(spec.scales, spec.scales)


def _check_pd(r: np.ndarray):
    d = r.shape[0]
    for k in range(1, d + 1):
        if np.linalg.det(r[:k, :k]) <= 0.0:
            raise PositiveDefiniteError(
                f"correlation matrix is not positive definite: "
                f"leading minor of order {k} is non-positive"
            )


def chol_decompose(V: np.ndarray) -> CholeskyFactor:
    """Cholesky factor of a symmetric positive definite matrix."""
    V = np.asarray(V, dtype=float)
    if not np.allclose(V, V.T):
        raise ValueError("matrix must be symmetric")
    try:
        entries = np.linalg.cholesky(V)
    except np.linalg.LinAlgError as exc:
        # locate the failing pivot for the error message
        pivot = _failing_pivot(V)
        raise PositiveDefiniteError(
            f"matrix is not positive definite (pivot {pivot})"
        ) from exc
    return CholeskyFactor(entries)


def _failing_pivot(V: np.ndarray) -> int:
    for k in range(1, V.shape[0] + 1):
        try:
            np.linalg.cholesky(V[:k, :k])
        except np.linalg.LinAlgError:
            return k - 1
    return V.shape[0] - 1


def chol_to_corr(C: CholeskyFactor) -> CorrScaleSpec:
    """Exact closed-form inverse of :func:`corr_to_chol`.

    Row norms give the scales, normalised row inner products the
    correlations; no nonlinear solve is involved.
    """
    L = C.entries
    V = L @ L.T
    scales = np.sqrt(np.diag(V))
    corr = V / np.outer(scales, scales)
    corr = np.tril(corr, k=-1)
    return CorrScaleSpec(scales, corr)


def corr_to_chol(spec: CorrScaleSpec, mask: SparsityMask | None = None) -> CholeskyFactor:
    """Cholesky factor of the V matrix implied by ``spec``.

    With a mask, zeroed correlations are forced to zero before the
    decomposition; the resulting C then carries the documented zero
    entries exactly.
    """
    if mask is not None:
        if mask.dim != spec.dim:
            raise ValueError("mask dimension does not match spec")
        corr = np.where(mask.zero, 0.0, spec.correlations)
        spec = CorrScaleSpec(spec.scales, corr)
    factor = chol_decompose(build_V(spec))
    if mask is not None:
        # zeroed correlations must yield exact structural zeros, not
        # round-off residue from the decomposition
        entries = np.where(_zero_pattern(mask), 0.0, factor.entries)
        factor = CholeskyFactor(entries)
    return factor


def _zero_pattern(mask: SparsityMask) -> np.ndarray:
    """Entries of C that are structurally zero under the mask.

    C_ij = 0 whenever rho_ij = 0 and every earlier column shared by rows
    i and j is also masked off; for the block-sparse patterns supported
    here the zeroed-correlation pattern itself is the zero pattern.
    """
    return mask.zero


class DiagonalRejection(Exception):
    """Signals a proposed non-positive diagonal entry (Metropolis auto-reject)."""


def perturb_entry(C: CholeskyFactor, i: int, j: int, new_value: float,
                  mask: SparsityMask | None = None) -> CholeskyFactor:
    """Return a copy of C with entry (i, j) replaced.

    Off-diagonal entries accept any real value; a non-positive diagonal
    value raises :class:`DiagonalRejection`, which callers treat as a
    Metropolis auto-reject rather than an error.
    """
    if j > i:
        raise ValueError(f"entry ({i}, {j}) is above the diagonal")
    if mask is not None and not mask.is_free(i, j):
        raise ValueError(f"entry ({i}, {j}) is fixed by the sparsity mask")
    if i == j and new_value <= 0.0:
        raise DiagonalRejection(f"proposed C[{i},{i}] = {new_value} <= 0")
    entries = C.entries.copy()
    entries[i, j] = new_value
    return CholeskyFactor(entries)
