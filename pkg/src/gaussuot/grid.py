"""Finite-grid verification for one-dimensional problems.

Two independent checks of the closed form live here:

* a discrete KL-unbalanced dual on a uniform grid, solved by log-domain
  generalized Sinkhorn with epsilon continuation and finished by a c-transform
  projection so the returned potentials are exactly feasible;
* a numerical check that replacing non-Gaussian marginals by the Gaussians with
  the same first two moments never increases the reduced objective.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import simpson
from scipy.special import log_ndtr, logsumexp, xlogy

from .errors import ConvergenceError, DimensionError, QuadratureError
from .gaussian import GaussianMeasure, UotProblem, gaussian_kl, w2_sq_gaussian

logger = logging.getLogger(__name__)

GRID_HALF_WIDTH = 6.0


@dataclass(frozen=True)
class Grid1D:
    points: NDArray
    spacing: float
    alpha_weights: NDArray
    beta_weights: NDArray

    @property
    def n(self) -> int:
        return self.points.size


@dataclass(frozen=True)
class SinkhornConfig:
    eps_start: float = 1.0
    eps_final: float = 1e-5
    tol: float = 1e-8
    max_iterations: int = 100_000


@dataclass(frozen=True)
class DiscreteDualResult:
    phi: NDArray
    psi: NDArray
    dual_value: float
    max_violation: float
    iterations: int
    epsilon_final: float
    # entropic plan at the final epsilon, before projection
    plan: NDArray = field(repr=False, default=None)


def _std(g: GaussianMeasure) -> float:
    return float(np.sqrt(g.cov[0, 0]))


def build_grid(prob: UotProblem, n: int) -> Grid1D:
    """Uniform grid over the union of both ``mean +- 6 sd`` intervals.

    Weights are the unnormalized rule ``mass * density(x_i) * spacing``.
    """
    if prob.dim != 1:
        raise DimensionError(f"grid benchmark is one-dimensional, got d={prob.dim}")
    if n < 2:
        raise ValueError(f"need at least two grid points, got n={n}")
    m0, s0 = float(prob.alpha.mean[0]), _std(prob.alpha)
    m1, s1 = float(prob.beta.mean[0]), _std(prob.beta)
    lo = min(m0 - GRID_HALF_WIDTH * s0, m1 - GRID_HALF_WIDTH * s1)
    hi = max(m0 + GRID_HALF_WIDTH * s0, m1 + GRID_HALF_WIDTH * s1)
    x = np.linspace(lo, hi, n)
    dx = (hi - lo) / (n - 1)

    def weights(g, m, s):
        z = (x - m) / s
        return g.mass * np.exp(-0.5 * z * z) / (s * np.sqrt(2 * np.pi)) * dx

    return Grid1D(
        points=x,
        spacing=dx,
        alpha_weights=weights(prob.alpha, m0, s0),
        beta_weights=weights(prob.beta, m1, s1),
    )


def cost_matrix(grid: Grid1D) -> NDArray:
    x = grid.points
    return (x[:, None] - x[None, :]) ** 2


def discrete_dual_objective(phi, psi, alpha_w, beta_w, tau0, tau1) -> float:
    return float(
        tau0 * np.sum(alpha_w * -np.expm1(-phi / tau0))
        + tau1 * np.sum(beta_w * -np.expm1(-psi / tau1))
    )


def _log_weights(w: NDArray) -> NDArray:
    with np.errstate(divide="ignore"):
        return np.log(w)


def c_transform_projection(phi: NDArray, C: NDArray) -> tuple[NDArray, NDArray]:
    """``psi_j = min_i (C_ij - phi_i)`` then ``phi_i = min_j (C_ij - psi_j)``.

    Each step can only raise the (monotone) dual objective once the pair is
    feasible, and the result satisfies ``phi_i + psi_j <= C_ij``.
    """
    psi = np.min(C - phi[:, None], axis=0)
    phi = np.min(C - psi[None, :], axis=1)
    return phi, psi


def optimal_translation(phi: NDArray, psi: NDArray, aw: NDArray, bw: NDArray, tau0: float, tau1: float):
    """Best shift ``(phi + s, psi - s)``; the sums ``phi_i + psi_j`` and hence feasibility are unchanged.

    The objective is concave in ``s`` and its stationary point is explicit. The
    entropic iterations converge very slowly along this direction for small
    epsilon, so the step is applied once after projection.
    """
    la = logsumexp(-phi / tau0, b=aw) if np.any(aw > 0) else -np.inf
    lb = logsumexp(-psi / tau1, b=bw) if np.any(bw > 0) else -np.inf
    if not (np.isfinite(la) and np.isfinite(lb)):
        return phi, psi
    s = (la - lb) / (1.0 / tau0 + 1.0 / tau1)
    return phi + s, psi - s


def solve_discrete_dual(
    grid: Grid1D, prob: UotProblem, cfg: SinkhornConfig = SinkhornConfig()
) -> DiscreteDualResult:
    """Maximize the discrete KL-UOT dual subject to ``phi_i + psi_j <= (x_i - x_j)^2``.

    Entropic continuation from ``cfg.eps_start`` down to ``cfg.eps_final`` by
    halving; at each stage iterate until the relative change of the
    regularized dual drops below ``cfg.tol``.
    """
    t0, t1 = prob.tau0, prob.tau1
    aw, bw = grid.alpha_weights, grid.beta_weights
    C = cost_matrix(grid)
    la, lb = _log_weights(aw), _log_weights(bw)
    n = grid.n
    phi = np.zeros(n)
    psi = np.zeros(n)
    eps = cfg.eps_start
    total = 0

    def reg_dual(phi, psi, eps):
        K = np.exp(la[:, None] + lb[None, :] + (phi[:, None] + psi[None, :] - C) / eps)
        return discrete_dual_objective(phi, psi, aw, bw, t0, t1) - eps * (np.sum(K) - aw.sum() * bw.sum())

    while True:
        f0 = t0 * eps / (t0 + eps)
        f1 = t1 * eps / (t1 + eps)
        prev = None
        while True:
            phi = -f0 * logsumexp(lb[None, :] + (psi[None, :] - C) / eps, axis=1)
            psi = -f1 * logsumexp(la[:, None] + (phi[:, None] - C) / eps, axis=0)
            total += 1
            val = reg_dual(phi, psi, eps)
            if prev is not None and abs(val - prev) <= cfg.tol * max(1.0, abs(val)):
                break
            prev = val
            if total >= cfg.max_iterations:
                raise ConvergenceError(
                    f"Sinkhorn did not converge in {cfg.max_iterations} iterations at eps={eps:g}",
                    last_iterate={"phi": phi, "psi": psi, "epsilon": eps, "iterations": total},
                )
        logger.debug("eps=%g iterations=%d regularized dual=%.12g", eps, total, val)
        if eps <= cfg.eps_final:
            break
        eps = max(0.5 * eps, cfg.eps_final)

    plan = np.exp(la[:, None] + lb[None, :] + (phi[:, None] + psi[None, :] - C) / eps)
    phi_f, psi_f = c_transform_projection(phi, C)
    phi_f, psi_f = optimal_translation(phi_f, psi_f, aw, bw, t0, t1)
    violation = float(np.max(phi_f[:, None] + psi_f[None, :] - C))
    return DiscreteDualResult(
        phi=phi_f,
        psi=psi_f,
        dual_value=discrete_dual_objective(phi_f, psi_f, aw, bw, t0, t1),
        max_violation=violation,
        iterations=total,
        epsilon_final=eps,
        plan=plan,
    )


def generalized_kl(rho: NDArray, eta: NDArray) -> float:
    """``sum(rho log(rho / eta) - rho + eta)`` with ``0 log 0 = 0``; ``inf`` if rho is not << eta."""
    rho = np.asarray(rho, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if np.any((eta == 0) & (rho > 0)):
        return np.inf
    pos = rho > 0
    return float(
        np.sum(xlogy(rho[pos], rho[pos]) - rho[pos] * np.log(eta[pos])) - rho.sum() + eta.sum()
    )


def discrete_primal_value(grid: Grid1D, prob: UotProblem, plan: NDArray) -> float:
    plan = np.asarray(plan, dtype=float)
    if np.any(plan < 0):
        raise ValueError("plan has negative entries")
    transport = float(np.sum(cost_matrix(grid) * plan))
    return (
        transport
        + prob.tau0 * generalized_kl(plan.sum(axis=1), grid.alpha_weights)
        + prob.tau1 * generalized_kl(plan.sum(axis=0), grid.beta_weights)
    )


# ---------------------------------------------------------------------------
# Gaussian reduction check on mixtures


@dataclass(frozen=True)
class Mixture1D:
    """Probability mixture ``sum_k weights[k] N(means[k], sds[k]^2)``."""

    weights: tuple
    means: tuple
    sds: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not (len(self.weights) == len(self.means) == len(self.sds)):
            raise ValueError("weights, means and sds must have equal length")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to one")
        if np.any(np.asarray(self.sds, dtype=float) <= 0):
            raise ValueError("component standard deviations must be positive")

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.means))

    @property
    def var(self) -> float:
        w, m, s = map(np.asarray, (self.weights, self.means, self.sds))
        return float(np.dot(w, s**2 + m**2) - self.mean**2)

    def moment_gaussian(self) -> GaussianMeasure:
        return GaussianMeasure(1.0, [self.mean], [[self.var]])

    def logpdf(self, x: NDArray) -> NDArray:
        w, m, s = map(np.asarray, (self.weights, self.means, self.sds))
        z = (np.asarray(x)[..., None] - m) / s
        return logsumexp(np.log(w) - 0.5 * z * z - np.log(s * np.sqrt(2 * np.pi)), axis=-1)

    def _log_tail(self, x: NDArray, upper: bool) -> NDArray:
        w, m, s = map(np.asarray, (self.weights, self.means, self.sds))
        z = (np.asarray(x)[..., None] - m) / s
        return logsumexp(np.log(w) + log_ndtr(-z if upper else z), axis=-1)

    def quantile_at_normal_scores(self, z: NDArray) -> NDArray:
        """Quantile ``F^-1(Phi(z))`` by vectorized bisection on log tail masses."""
        z = np.asarray(z, dtype=float)
        m, s = np.asarray(self.means), np.asarray(self.sds)
        span = np.max(np.abs(z)) + 10.0
        lo = np.full(z.shape, np.min(m) - span * np.max(s))
        hi = np.full(z.shape, np.max(m) + span * np.max(s))
        lower = z <= 0
        target = np.where(lower, log_ndtr(z), log_ndtr(-z))
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            # below the quantile iff F(mid) < Phi(z), i.e. S(mid) > Phi(-z)
            below = np.where(
                lower,
                self._log_tail(mid, upper=False) < target,
                self._log_tail(mid, upper=True) > target,
            )
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid))):
                break
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ReductionReport:
    objective_mixture: float
    objective_gaussian: float
    slack: float
    w2_sq_mixture: float
    kl0_mixture: float
    kl1_mixture: float


def _normal_score_nodes(count: int, half_width: float) -> tuple[NDArray, NDArray]:
    z = np.linspace(-half_width, half_width, count)
    return z, np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)


def w2_sq_mixtures(p: Mixture1D, q: Mixture1D, nodes: int = 10_001, half_width: float = 12.0) -> float:
    """``int_0^1 (F_p^-1(t) - F_q^-1(t))^2 dt`` with ``t = Phi(z)`` nodes and Simpson in ``z``."""
    z, dens = _normal_score_nodes(nodes, half_width)
    qp = p.quantile_at_normal_scores(z)
    qq = q.quantile_at_normal_scores(z)
    return float(simpson((qp - qq) ** 2 * dens, x=z))


def kl_mixture_gaussian(p: Mixture1D, ref: GaussianMeasure, nodes: int = 20_001, width: float = 12.0) -> float:
    """``KL(p | ref)`` by Simpson quadrature over ``+- width`` sd of every component."""
    mr, sr = float(ref.mean[0]), float(np.sqrt(ref.cov[0, 0]))
    lo = min(min(m - width * s for m, s in zip(p.means, p.sds)), mr - width * sr)
    hi = max(max(m + width * s for m, s in zip(p.means, p.sds)), mr + width * sr)
    x = np.linspace(lo, hi, nodes)
    lp = p.logpdf(x)
    lr = -0.5 * ((x - mr) / sr) ** 2 - np.log(sr * np.sqrt(2 * np.pi))
    dens_p = np.exp(lp)
    integrand = dens_p * (lp - lr) - dens_p + np.exp(lr)
    return float(simpson(integrand, x=x))


def reduced_objective_mixtures(prob: UotProblem, p: Mixture1D, q: Mixture1D, refine: int = 1):
    w2 = w2_sq_mixtures(p, q, nodes=10_000 * refine + 1)
    kl0 = kl_mixture_gaussian(p, prob.alpha.normalized(), nodes=20_000 * refine + 1)
    kl1 = kl_mixture_gaussian(q, prob.beta.normalized(), nodes=20_000 * refine + 1)
    return w2, kl0, kl1


def reduction_check(prob: UotProblem, p: Mixture1D, q: Mixture1D) -> ReductionReport:
    """Compare the reduced objective at ``(p, q)`` with its value at the moment-matched Gaussians."""
    if prob.dim != 1:
        raise DimensionError("reduction_check is one-dimensional")
    for refine in (1, 2):
        with np.errstate(over="ignore", invalid="ignore"):
            w2, kl0, kl1 = reduced_objective_mixtures(prob, p, q, refine)
        if np.all(np.isfinite([w2, kl0, kl1])):
            break
        logger.warning("non-finite quadrature, refining (factor %d)", 2 * refine)
    else:
        raise QuadratureError(f"quadrature failed after refinement: w2={w2}, kl0={kl0}, kl1={kl1}")
    A_mix = w2 + prob.tau0 * kl0 + prob.tau1 * kl1
    g0, g1 = p.moment_gaussian(), q.moment_gaussian()
    A_gauss = (
        w2_sq_gaussian(g0, g1)
        + prob.tau0 * gaussian_kl(g0, prob.alpha.normalized())
        + prob.tau1 * gaussian_kl(g1, prob.beta.normalized())
    )
    return ReductionReport(
        objective_mixture=A_mix,
        objective_gaussian=A_gauss,
        slack=A_mix - A_gauss,
        w2_sq_mixture=w2,
        kl0_mixture=kl0,
        kl1_mixture=kl1,
    )


def mixture_corpus(count: int = 25, seed: int = 2024) -> list[tuple[UotProblem, Mixture1D, Mixture1D]]:
    """Fixed-seed family of (problem, p, q) instances for the reduction check."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        prob = UotProblem.from_arrays(
            rng.uniform(0.5, 2.0), [rng.normal()], [[rng.uniform(0.3, 2.0) ** 2]],
            rng.uniform(0.5, 2.0), [rng.normal()], [[rng.uniform(0.3, 2.0) ** 2]],
            rng.uniform(0.3, 3.0), rng.uniform(0.3, 3.0),
        )
        mixes = []
        for _ in range(2):
            w = rng.uniform(0.15, 0.85)
            mixes.append(
                Mixture1D(
                    weights=(w, 1.0 - w),
                    means=tuple(rng.normal(0.0, 1.5, size=2)),
                    sds=tuple(rng.uniform(0.3, 1.5, size=2)),
                )
            )
        out.append((prob, *mixes))
    return out


__all__ = [
    "Grid1D",
    "SinkhornConfig",
    "DiscreteDualResult",
    "build_grid",
    "cost_matrix",
    "c_transform_projection",
    "optimal_translation",
    "solve_discrete_dual",
    "discrete_primal_value",
    "generalized_kl",
    "Mixture1D",
    "ReductionReport",
    "reduction_check",
    "mixture_corpus",
]
