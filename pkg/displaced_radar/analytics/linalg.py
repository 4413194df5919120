"""Symmetric inversion with an eigenvalue floor and Schur-complement reduction."""

from __future__ import annotations

import numpy as np
from scipy import linalg

from displaced_radar.errors import ConditioningError

DEFAULT_EIG_FLOOR = 1e-12


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    return 0.5 * (matrix + matrix.T)


def symmetric_inverse(matrix: np.ndarray, rel_floor: float = DEFAULT_EIG_FLOOR) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via eigendecomposition.

    Raises ConditioningError when the smallest eigenvalue is not above
    ``rel_floor`` times the largest one.
    """
    sym = symmetrize(matrix)
    eigenvalues, eigenvectors = linalg.eigh(sym)
    largest = float(np.max(np.abs(eigenvalues))) if eigenvalues.size else 0.0
    if largest == 0.0 or eigenvalues[0] <= rel_floor * largest:
        condition = np.inf if eigenvalues[0] <= 0 else largest / eigenvalues[0]
        raise ConditioningError(
            f"matrix of size {sym.shape[0]} below eigenvalue floor "
            f"(min={eigenvalues[0]:.3e}, max={largest:.3e}, condition={condition:.3e})",
            eigenvalues=eigenvalues,
        )
    return symmetrize((eigenvectors / eigenvalues) @ eigenvectors.T)


def schur_complement(matrix: np.ndarray, n_keep: int, rel_floor: float = DEFAULT_EIG_FLOOR) -> np.ndarray:
    """F_pp - F_pa F_aa^-1 F_ap for the leading ``n_keep`` parameters."""
    sym = symmetrize(matrix)
    if n_keep == sym.shape[0]:
        return sym
    keep = sym[:n_keep, :n_keep]
    cross = sym[:n_keep, n_keep:]
    nuisance_inverse = symmetric_inverse(sym[n_keep:, n_keep:], rel_floor)
    return symmetrize(keep - cross @ nuisance_inverse @ cross.T)
