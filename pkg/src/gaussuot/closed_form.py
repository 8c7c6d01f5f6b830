"""Closed-form KL-unbalanced transport between two Gaussian measures.

The minimizer is ``M_* pi_*`` where ``pi_*`` is the W2-optimal (graph) coupling
between the adjusted marginals ``p_* = N(u_*, P_*)`` and ``q_* = N(v_*, Q_*)``.
The covariance map ``L_*`` is the positive definite root of

    L C1 L - kappa L = C0,   C0 = A0 + r0 I,  C1 = A1 + r1 I,  kappa = r1 - r0,

with ``A_i`` the input precisions and ``r_i = 2 / tau_i``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .errors import DefinitenessError, DimensionError, NumericalError
from .gaussian import GaussianMeasure, UotProblem, gaussian_kl, mass_kl_split, w2_sq_gaussian
from .linalg_spd import (
    frobenius,
    inv_spd,
    inv_sqrt_spd,
    require_spd,
    sandwich,
    spectral_function,
    sqrt_spd,
    symmetrize,
)

RICCATI_REL_TOL = 1e-12


@dataclass(frozen=True)
class DerivedCoefficients:
    r0: float
    r1: float
    A0: NDArray
    A1: NDArray
    C0: NDArray
    C1: NDArray
    kappa: float


@dataclass(frozen=True)
class RiccatiSolution:
    S_star: NDArray
    L_star: NDArray
    residual: float


@dataclass(frozen=True)
class ClosedFormSolution:
    P_star: NDArray
    Q_star: NDArray
    u_star: NDArray
    v_star: NDArray
    h_star: NDArray
    A_star: float
    M_star: float
    value: float
    map_linear: NDArray
    map_offset: NDArray
    coefficients: DerivedCoefficients
    riccati: RiccatiSolution
    # pieces of A_star, kept for the certificate and the primal reconstruction
    w2_sq: float
    kl0: float
    kl1: float

    @property
    def L_star(self) -> NDArray:
        return self.map_linear

    @property
    def dim(self) -> int:
        return self.u_star.size

    @property
    def p_star(self) -> GaussianMeasure:
        return GaussianMeasure(1.0, self.u_star, self.P_star)

    @property
    def q_star(self) -> GaussianMeasure:
        return GaussianMeasure(1.0, self.v_star, self.Q_star)

    def transport(self, x: NDArray) -> NDArray:
        """Optimal map ``T(x) = v_* + L_* (x - u_*)``; rows of ``x`` are points."""
        x = np.asarray(x, dtype=float)
        return self.map_offset + x @ self.map_linear.T

    def joint_covariance(self) -> NDArray:
        """Covariance ``[[P, P L], [L P, Q]]`` of the graph coupling (rank ``d``).

        Derived from ``Y = v_* + L_* (X - u_*)``; it is not stated as such in the
        source derivation.
        """
        PL = self.P_star @ self.map_linear
        return np.block([[self.P_star, PL], [PL.T, self.Q_star]])


def derive_coefficients(prob: UotProblem) -> DerivedCoefficients:
    d = prob.dim
    eye = np.eye(d)
    r0 = 2.0 / prob.tau0
    r1 = 2.0 / prob.tau1
    A0 = inv_spd(prob.alpha.cov)
    A1 = inv_spd(prob.beta.cov)
    return DerivedCoefficients(
        r0=r0,
        r1=r1,
        A0=A0,
        A1=A1,
        C0=symmetrize(A0 + r0 * eye),
        C1=symmetrize(A1 + r1 * eye),
        kappa=r1 - r0,
    )


def _positive_root(kappa: float, lam: NDArray) -> NDArray:
    # positive root of s^2 - kappa s = lam; the second form avoids cancellation for kappa < 0
    disc = np.sqrt(kappa * kappa + 4.0 * lam)
    if kappa >= 0:
        return 0.5 * (kappa + disc)
    return 2.0 * lam / (disc - kappa)


def riccati_residual(L: NDArray, c: DerivedCoefficients) -> float:
    """Frobenius norm of ``L C1 L - kappa L - C0``."""
    return frobenius(L @ c.C1 @ L - c.kappa * L - c.C0)


def solve_riccati(c: DerivedCoefficients) -> RiccatiSolution:
    """Unique SPD solution of ``L C1 L - kappa L = C0`` via ``S = C1^1/2 L C1^1/2``."""
    c1_half = sqrt_spd(c.C1)
    c1_inv_half = inv_sqrt_spd(c.C1)
    B = sandwich(c1_half, c.C0)
    S = spectral_function(B, lambda lam: _positive_root(c.kappa, lam), "C1^1/2 C0 C1^1/2")
    L = sandwich(c1_inv_half, S)
    require_spd(L, "L_*")
    return RiccatiSolution(S_star=S, L_star=L, residual=riccati_residual(L, c))


def adjusted_covariances(c: DerivedCoefficients, r: RiccatiSolution) -> tuple[NDArray, NDArray]:
    """``P_* = [A0 + r0 (I - L_*)]^-1`` and ``Q_* = L_* P_* L_*``."""
    eye = np.eye(c.A0.shape[0])
    try:
        P_inv = require_spd(c.A0 + c.r0 * (eye - r.L_star), "P_*^-1")
    except DefinitenessError as exc:
        raise NumericalError(f"inconsistent Riccati solution: {exc}") from exc
    P = inv_spd(P_inv)
    Q = sandwich(r.L_star, P)
    return P, Q


def adjusted_means(prob: UotProblem, c: DerivedCoefficients) -> tuple[NDArray, NDArray, NDArray]:
    """Solve ``(I + r0 S0 + r1 S1) h = m0 - m1``; return ``(h_*, u_*, v_*)``."""
    S0, S1 = prob.alpha.cov, prob.beta.cov
    m0, m1 = prob.alpha.mean, prob.beta.mean
    system = symmetrize(np.eye(prob.dim) + c.r0 * S0 + c.r1 * S1)
    h = scipy.linalg.cho_solve(scipy.linalg.cho_factor(system), m0 - m1)
    u = m0 - c.r0 * (S0 @ h)
    v = m1 + c.r1 * (S1 @ h)
    return h, u, v


def optimal_mass(a: float, b: float, tau0: float, tau1: float, A: float) -> float:
    """``a^(tau0/T) b^(tau1/T) exp(-A / T)`` with ``T = tau0 + tau1``."""
    T = tau0 + tau1
    return float(np.exp((tau0 * np.log(a) + tau1 * np.log(b) - A) / T))


def assemble(prob, c, riccati, covs, means) -> ClosedFormSolution:
    P, Q = covs
    h, u, v = means
    p_star = GaussianMeasure(1.0, u, P)
    q_star = GaussianMeasure(1.0, v, Q)
    w2 = w2_sq_gaussian(p_star, q_star)
    kl0 = gaussian_kl(p_star, prob.alpha.normalized())
    kl1 = gaussian_kl(q_star, prob.beta.normalized())
    A = w2 + prob.tau0 * kl0 + prob.tau1 * kl1
    a, b = prob.alpha.mass, prob.beta.mass
    M = optimal_mass(a, b, prob.tau0, prob.tau1, A)
    value = prob.tau0 * a + prob.tau1 * b - (prob.tau0 + prob.tau1) * M
    L = riccati.L_star
    return ClosedFormSolution(
        P_star=P,
        Q_star=Q,
        u_star=u,
        v_star=v,
        h_star=u - v,
        A_star=A,
        M_star=M,
        value=value,
        map_linear=L,
        map_offset=v - L @ u,
        coefficients=c,
        riccati=riccati,
        w2_sq=w2,
        kl0=kl0,
        kl1=kl1,
    )


def _check_solution(sol: ClosedFormSolution, prob: UotProblem) -> ClosedFormSolution:
    upper = prob.tau0 * prob.alpha.mass + prob.tau1 * prob.beta.mass
    if not (np.isfinite(sol.value) and sol.M_star > 0 and sol.value < upper):
        raise NumericalError(
            f"closed form did not beat the zero-mass plan: value={sol.value!r}, "
            f"M_*={sol.M_star!r}, zero-mass value={upper!r}"
        )
    return sol


def solve(prob: UotProblem) -> ClosedFormSolution:
    """Closed-form minimizer and value of the KL-unbalanced Gaussian problem."""
    c = derive_coefficients(prob)
    ric = solve_riccati(c)
    covs = adjusted_covariances(c, ric)
    means = adjusted_means(prob, c)
    return _check_solution(assemble(prob, c, ric, covs, means), prob)


def solve_1d(prob: UotProblem) -> ClosedFormSolution:
    """Scalar evaluation of the closed form for one-dimensional problems."""
    if prob.dim != 1:
        raise DimensionError(f"solve_1d needs a one-dimensional problem, got d={prob.dim}")
    a, b = prob.alpha.mass, prob.beta.mass
    t0, t1 = prob.tau0, prob.tau1
    m0, m1 = float(prob.alpha.mean[0]), float(prob.beta.mean[0])
    var0, var1 = float(prob.alpha.cov[0, 0]), float(prob.beta.cov[0, 0])
    r0, r1 = 2.0 / t0, 2.0 / t1
    C0, C1 = 1.0 / var0 + r0, 1.0 / var1 + r1
    kappa = r1 - r0
    disc = np.sqrt(kappa * kappa + 4.0 * C0 * C1)
    L = (kappa + disc) / (2.0 * C1) if kappa >= 0 else 2.0 * C0 / (disc - kappa)
    P = 1.0 / (1.0 / var0 + r0 * (1.0 - L))
    Q = L * L * P
    h = (m0 - m1) / (1.0 + r0 * var0 + r1 * var1)
    u = m0 - r0 * var0 * h
    v = m1 + r1 * var1 * h

    w2 = (u - v) ** 2 + (np.sqrt(P) - np.sqrt(Q)) ** 2
    kl0 = 0.5 * (P / var0 + (u - m0) ** 2 / var0 - 1.0 + np.log(var0 / P))
    kl1 = 0.5 * (Q / var1 + (v - m1) ** 2 / var1 - 1.0 + np.log(var1 / Q))
    A = w2 + t0 * kl0 + t1 * kl1
    M = optimal_mass(a, b, t0, t1, A)
    value = t0 * a + t1 * b - (t0 + t1) * M

    mat = lambda s: np.array([[float(s)]])
    vec = lambda s: np.array([float(s)])
    c = DerivedCoefficients(
        r0=r0, r1=r1, A0=mat(1.0 / var0), A1=mat(1.0 / var1), C0=mat(C0), C1=mat(C1), kappa=kappa
    )
    ric = RiccatiSolution(
        S_star=mat(C1 * L), L_star=mat(L), residual=abs(L * C1 * L - kappa * L - C0)
    )
    sol = ClosedFormSolution(
        P_star=mat(P),
        Q_star=mat(Q),
        u_star=vec(u),
        v_star=vec(v),
        h_star=vec(u - v),
        A_star=float(A),
        M_star=M,
        value=float(value),
        map_linear=mat(L),
        map_offset=vec(v - L * u),
        coefficients=c,
        riccati=ric,
        w2_sq=float(w2),
        kl0=float(kl0),
        kl1=float(kl1),
    )
    return _check_solution(sol, prob)


def transport_cost(sol: ClosedFormSolution) -> float:
    """``int ||x - y||^2 d pi_*`` for the graph coupling (per unit mass)."""
    eye = np.eye(sol.dim)
    D = eye - sol.map_linear
    return float(sol.h_star @ sol.h_star + np.trace(D @ sol.P_star @ D))


def primal_objective(sol: ClosedFormSolution, prob: UotProblem) -> float:
    """Evaluate the unbalanced objective at ``gamma_* = M_* pi_*`` term by term."""
    M = sol.M_star
    kl0 = gaussian_kl(sol.p_star, prob.alpha.normalized())
    kl1 = gaussian_kl(sol.q_star, prob.beta.normalized())
    return (
        M * transport_cost(sol)
        + prob.tau0 * mass_kl_split(M, kl0, prob.alpha.mass)
        + prob.tau1 * mass_kl_split(M, kl1, prob.beta.mass)
    )


def positivity_identity_residual(sol: ClosedFormSolution) -> float:
    """Relative Frobenius residual of

    ``(I - L)^2 + A0 / r0 + L A1 L / r1 = (r0 + r1) / (r0 r1) * P^-1``.
    """
    c = sol.coefficients
    L = sol.map_linear
    eye = np.eye(sol.dim)
    lhs = (eye - L) @ (eye - L) + c.A0 / c.r0 + L @ c.A1 @ L / c.r1
    rhs = (c.r0 + c.r1) / (c.r0 * c.r1) * (c.A0 + c.r0 * (eye - L))
    return frobenius(lhs - rhs) / frobenius(rhs)


def backsub_residual(sol: ClosedFormSolution) -> float:
    """Relative residual of ``Q^-1 = A1 + r1 (I - L^-1)``."""
    c = sol.coefficients
    eye = np.eye(sol.dim)
    rhs = c.A1 + c.r1 * (eye - inv_spd(sol.map_linear))
    Q_inv = inv_spd(sol.Q_star)
    return frobenius(Q_inv - rhs) / frobenius(Q_inv)


def foc_residuals(sol: ClosedFormSolution) -> tuple[float, float]:
    """Relative residuals of both covariance first-order equations."""
    c = sol.coefficients
    eye = np.eye(sol.dim)
    L = sol.map_linear
    P_inv = inv_spd(sol.P_star)
    res_p = frobenius(P_inv - c.A0 - c.r0 * (eye - L)) / frobenius(P_inv)
    return res_p, backsub_residual(sol)
