"""Spectral utilities for symmetric positive definite matrices.

Every matrix function goes through a symmetric eigendecomposition and the
result is re-symmetrized, so products of symmetric factors do not drift.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DefinitenessError, DimensionError

REL_TOL = 1e-12


@dataclass(frozen=True)
class SpdCheck:
    min_eigenvalue: float
    max_eigenvalue: float
    is_spd: bool


def _as_square(m: ArrayLike) -> NDArray:
    m = np.asarray(m, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionError(f"expected a non-empty square matrix, got shape {m.shape}")
    return m


def symmetrize(m: ArrayLike) -> NDArray:
    """Return ``(m + m.T) / 2`` as a new float array."""
    m = _as_square(m)
    return 0.5 * (m + m.T)


def spd_check(m: ArrayLike) -> SpdCheck:
    """Extreme eigenvalues of a symmetric matrix and whether it is SPD.

    ``is_spd`` holds when the smallest eigenvalue exceeds ``REL_TOL`` times the
    largest one (and the largest is positive).
    """
    w = np.linalg.eigvalsh(symmetrize(m))
    lo, hi = float(w[0]), float(w[-1])
    ok = bool(np.all(np.isfinite(w))) and hi > 0.0 and lo > REL_TOL * hi
    return SpdCheck(min_eigenvalue=lo, max_eigenvalue=hi, is_spd=ok)


def _spd_eigh(m: ArrayLike, what: str = "matrix") -> tuple[NDArray, NDArray]:
    s = symmetrize(m)
    if not np.all(np.isfinite(s)):
        raise DefinitenessError(f"{what} has non-finite entries")
    w, v = np.linalg.eigh(s)
    check = SpdCheck(float(w[0]), float(w[-1]), bool(w[-1] > 0 and w[0] > REL_TOL * w[-1]))
    if not check.is_spd:
        raise DefinitenessError(
            f"{what} is not positive definite (eigenvalues in [{check.min_eigenvalue:.3e}, "
            f"{check.max_eigenvalue:.3e}])",
            check,
        )
    return w, v


def spectral_function(m: ArrayLike, fn, what: str = "matrix") -> NDArray:
    """Apply a scalar function to the spectrum of an SPD matrix."""
    w, v = _spd_eigh(m, what)
    out = (v * fn(w)) @ v.T
    return 0.5 * (out + out.T)


def sqrt_spd(m: ArrayLike) -> NDArray:
    """Principal square root of an SPD matrix."""
    return spectral_function(m, np.sqrt)


def inv_sqrt_spd(m: ArrayLike) -> NDArray:
    """Inverse of the principal square root of an SPD matrix."""
    return spectral_function(m, lambda w: 1.0 / np.sqrt(w))


def inv_spd(m: ArrayLike) -> NDArray:
    return spectral_function(m, np.reciprocal)


def logdet_spd(m: ArrayLike) -> float:
    w, _ = _spd_eigh(m)
    return float(np.sum(np.log(w)))


def frobenius(m: ArrayLike) -> float:
    return float(np.linalg.norm(np.asarray(m, dtype=float)))


def require_spd(m: ArrayLike, what: str = "matrix") -> NDArray:
    """Symmetrize ``m`` and raise :class:`DefinitenessError` unless it is SPD."""
    s = symmetrize(m)
    check = spd_check(s)
    if not check.is_spd:
        raise DefinitenessError(
            f"{what} is not positive definite (min eigenvalue {check.min_eigenvalue:.6g})",
            check,
        )
    return s


def sandwich(outer: NDArray, inner: NDArray) -> NDArray:
    """``outer @ inner @ outer.T``, symmetrized."""
    out = outer @ inner @ outer.T
    return 0.5 * (out + out.T)
