"""Large-relaxation behaviour: ``tau_i = lam * bar_tau_i`` with ``lam -> inf``.

With ``theta_i = bar_tau_i / (bar_tau_0 + bar_tau_1)`` and ``G = a^theta0 b^theta1``,

    value = lam * [bar_tau0 a + bar_tau1 b - (bar_tau0 + bar_tau1) G] + G W2^2(mu0, mu1) + o(1).
"""

from dataclasses import dataclass

import numpy as np

from .closed_form import solve
from .gaussian import UotProblem, w2_sq_gaussian

# masses closer than this (relative) are treated as equal
MASS_TIE = 1e-12


@dataclass(frozen=True)
class LimitExpansion:
    theta0: float
    theta1: float
    G: float
    leading_coeff: float
    constant_term: float

    def predict(self, lam: float) -> float:
        return lam * self.leading_coeff + self.constant_term


@dataclass(frozen=True)
class SweepRow:
    lam: float
    value: float
    M_star: float
    residual: float
    P_error: float
    Q_error: float
    u_error: float
    v_error: float


def limit_expansion(prob: UotProblem, bar_tau0: float, bar_tau1: float) -> LimitExpansion:
    if bar_tau0 <= 0 or bar_tau1 <= 0:
        raise ValueError("bar_tau0 and bar_tau1 must be positive")
    a, b = prob.alpha.mass, prob.beta.mass
    T = bar_tau0 + bar_tau1
    theta0 = bar_tau0 / T
    theta1 = 1.0 - theta0
    G = float(np.exp(theta0 * np.log(a) + theta1 * np.log(b)))
    # leading coefficient T * (theta0 a + theta1 b - G) >= 0 by weighted AM-GM
    if abs(a - b) <= MASS_TIE * (a + b):
        lead = 0.0
    else:
        lead = max(bar_tau0 * a + bar_tau1 * b - T * G, 0.0)
    w2 = w2_sq_gaussian(prob.alpha.normalized(), prob.beta.normalized())
    return LimitExpansion(theta0=theta0, theta1=theta1, G=G, leading_coeff=lead, constant_term=G * w2)


def sweep(prob: UotProblem, bar_taus: tuple[float, float], lambdas) -> list[SweepRow]:
    """Solve at ``tau_i = lam * bar_tau_i`` for each ``lam``; rows are ordered by ``lam``."""
    lambdas = sorted(float(lam) for lam in lambdas)
    if not lambdas or lambdas[0] <= 0:
        raise ValueError("lambdas must be a non-empty list of positive numbers")
    bt0, bt1 = bar_taus
    exp = limit_expansion(prob, bt0, bt1)
    rows = []
    for lam in lambdas:
        scaled = UotProblem(prob.alpha, prob.beta, lam * bt0, lam * bt1)
        sol = solve(scaled)
        rows.append(
            SweepRow(
                lam=lam,
                value=sol.value,
                M_star=sol.M_star,
                residual=sol.value - exp.predict(lam),
                P_error=float(np.linalg.norm(sol.P_star - prob.alpha.cov)),
                Q_error=float(np.linalg.norm(sol.Q_star - prob.beta.cov)),
                u_error=float(np.linalg.norm(sol.u_star - prob.alpha.mean)),
                v_error=float(np.linalg.norm(sol.v_star - prob.beta.mean)),
            )
        )
    return rows
