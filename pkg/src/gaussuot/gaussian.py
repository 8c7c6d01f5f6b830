"""Gaussian measures and the functionals the closed form is assembled from.

KL divergences follow the generalized convention for finite measures,
``KL(rho | eta) = int (r log r - r + 1) d eta`` with ``r = d rho / d eta``, so
probability-measure KL is the mass-one special case.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionError
from .linalg_spd import inv_spd, inv_sqrt_spd, logdet_spd, require_spd, sandwich, sqrt_spd

LOG_2PI = float(np.log(2.0 * np.pi))


def _frozen(a: NDArray) -> NDArray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GaussianMeasure:
    """``mass * N(mean, cov)`` with an SPD covariance."""

    mass: float
    mean: NDArray
    cov: NDArray

    def __post_init__(self):
        mass = float(self.mass)
        if not np.isfinite(mass) or mass <= 0:
            raise ValueError(f"mass must be positive and finite, got {self.mass!r}")
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1:
            raise DimensionError(f"mean must be a vector, got shape {mean.shape}")
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean has non-finite entries")
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 0:
            cov = cov.reshape(1, 1)
        if cov.shape != (mean.size, mean.size):
            raise DimensionError(f"cov has shape {cov.shape}, mean has length {mean.size}")
        cov = require_spd(cov, "covariance")
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))

    @property
    def dim(self) -> int:
        return self.mean.size

    def normalized(self) -> "GaussianMeasure":
        return GaussianMeasure(1.0, self.mean, self.cov)

    def scaled(self, mass: float) -> "GaussianMeasure":
        return GaussianMeasure(mass, self.mean, self.cov)


@dataclass(frozen=True)
class UotProblem:
    """KL-unbalanced transport between ``alpha`` and ``beta`` with penalties ``tau0``, ``tau1``."""

    alpha: GaussianMeasure
    beta: GaussianMeasure
    tau0: float
    tau1: float

    def __post_init__(self):
        if self.alpha.dim != self.beta.dim:
            raise DimensionError(f"alpha has dimension {self.alpha.dim}, beta {self.beta.dim}")
        for name in ("tau0", "tau1"):
            t = float(getattr(self, name))
            if not np.isfinite(t) or t <= 0:
                raise ValueError(f"{name} must be positive and finite, got {t!r}")
            object.__setattr__(self, name, t)

    @property
    def dim(self) -> int:
        return self.alpha.dim

    def swapped(self) -> "UotProblem":
        return UotProblem(self.beta, self.alpha, self.tau1, self.tau0)

    @classmethod
    def from_arrays(cls, a, m0, cov0, b, m1, cov1, tau0, tau1) -> "UotProblem":
        return cls(GaussianMeasure(a, m0, cov0), GaussianMeasure(b, m1, cov1), tau0, tau1)


def as_points(x: ArrayLike, d: int) -> tuple[NDArray, bool]:
    """Coerce ``x`` to an ``(n, d)`` batch; report whether it was a single point.

    A scalar is one point. A 1-D array is one point when ``d > 1`` and a batch
    of scalars when ``d == 1``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1), True
    if x.ndim == 1:
        if d == 1:
            return x.reshape(-1, 1), False
        if x.size != d:
            raise DimensionError(f"point has length {x.size}, expected dimension {d}")
        return x[None, :], True
    if x.ndim == 2 and x.shape[1] == d:
        return x, False
    raise DimensionError(f"points of shape {x.shape} do not match dimension {d}")


def _check_same_dim(*gs):
    dims = {g.dim for g in gs}
    if len(dims) != 1:
        raise DimensionError(f"dimension mismatch: {sorted(dims)}")


def mass_kl_split(M: float, unit_kl: float, ref_mass: float) -> float:
    """Generalized KL of ``M p`` against ``ref_mass * mu`` given ``KL(p | mu)``.

    ``KL(M p | a mu) = M KL(p | mu) + M log(M / a) - M + a``.
    """
    if M <= 0 or ref_mass <= 0:
        raise ValueError(f"masses must be positive, got M={M!r}, ref_mass={ref_mass!r}")
    if np.isinf(unit_kl):
        return np.inf
    return M * unit_kl + M * np.log(M / ref_mass) - M + ref_mass


def gaussian_kl(p: GaussianMeasure, m: GaussianMeasure) -> float:
    """Generalized KL divergence ``KL(p | m)`` between two Gaussian measures.

    For mass-one inputs this is the usual relative entropy
    ``0.5 * [tr(S^-1 P) + (u - mu)^T S^-1 (u - mu) - d + log det S - log det P]``.
    """
    _check_same_dim(p, m)
    d = p.dim
    prec = inv_spd(m.cov)
    diff = p.mean - m.mean
    unit = 0.5 * (
        float(np.sum(prec * p.cov))
        + float(diff @ prec @ diff)
        - d
        + logdet_spd(m.cov)
        - logdet_spd(p.cov)
    )
    unit = max(unit, 0.0)
    if p.mass == 1.0 and m.mass == 1.0:
        return unit
    return mass_kl_split(p.mass, unit, m.mass)


def bures_sq(p: ArrayLike, q: ArrayLike) -> float:
    """Squared Bures distance ``tr(P + Q - 2 (P^1/2 Q P^1/2)^1/2)``."""
    p = require_spd(p, "P")
    q = require_spd(q, "Q")
    if p.shape != q.shape:
        raise DimensionError(f"shapes {p.shape} and {q.shape} differ")
    rp = sqrt_spd(p)
    cross = sqrt_spd(sandwich(rp, q))
    return max(float(np.trace(p) + np.trace(q) - 2.0 * np.trace(cross)), 0.0)


def w2_sq_gaussian(g0: GaussianMeasure, g1: GaussianMeasure) -> float:
    """Squared 2-Wasserstein distance between the normalized Gaussians."""
    _check_same_dim(g0, g1)
    diff = g0.mean - g1.mean
    return float(diff @ diff) + bures_sq(g0.cov, g1.cov)


def monge_map(p: ArrayLike, q: ArrayLike) -> NDArray:
    """SPD matrix ``L`` with ``L p L = q``: the linear W2 map from N(0, p) to N(0, q)."""
    p = require_spd(p, "P")
    q = require_spd(q, "Q")
    if p.shape != q.shape:
        raise DimensionError(f"shapes {p.shape} and {q.shape} differ")
    rp = sqrt_spd(p)
    rp_inv = inv_sqrt_spd(p)
    return sandwich(rp_inv, sqrt_spd(sandwich(rp, q)))


def log_density(g: GaussianMeasure, x: ArrayLike) -> NDArray:
    """Log of the Lebesgue density of ``g`` (including its mass) at ``x``.

    ``x`` is a single point or a batch, see :func:`as_points`.
    """
    pts, single = as_points(x, g.dim)
    diff = pts - g.mean
    prec = inv_spd(g.cov)
    quad = np.einsum("ni,ij,nj->n", diff, prec, diff)
    out = np.log(g.mass) - 0.5 * (g.dim * LOG_2PI + logdet_spd(g.cov) + quad)
    return float(out[0]) if single else out
