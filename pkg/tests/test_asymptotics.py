import numpy as np
import pytest

from conftest import random_problem
from gaussuot.asymptotics import limit_expansion, sweep
from gaussuot.gaussian import UotProblem, w2_sq_gaussian


def corpus(seed, count):
    rng = np.random.default_rng(seed)
    return [random_problem(rng, int(rng.choice([1, 2, 3]))) for _ in range(count)]


class TestLimitExpansion:
    def test_equal_masses(self, problem_2d):
        prob = UotProblem.from_arrays(
            0.8, problem_2d.alpha.mean, problem_2d.alpha.cov, 0.8, problem_2d.beta.mean, problem_2d.beta.cov, 1, 1
        )
        exp = limit_expansion(prob, 0.7, 1.9)
        assert exp.leading_coeff == 0.0
        w2 = w2_sq_gaussian(prob.alpha.normalized(), prob.beta.normalized())
        assert exp.constant_term == pytest.approx(0.8 * w2, rel=1e-14)
        assert exp.G == pytest.approx(0.8, rel=1e-15)

    def test_four_and_one(self):
        prob = UotProblem.from_arrays(4.0, [0.0], [[1.0]], 1.0, [1.0], [[1.0]], 1, 1)
        exp = limit_expansion(prob, 0.6, 0.6)
        assert exp.G == pytest.approx(2.0, rel=1e-15)
        assert exp.leading_coeff == pytest.approx(0.6, rel=1e-14)
        assert exp.theta0 == exp.theta1 == 0.5

    def test_thetas_sum_to_one(self, rng):
        for _ in range(50):
            exp = limit_expansion(random_problem(rng, 1), *rng.uniform(0.01, 10, 2))
            assert abs(exp.theta0 + exp.theta1 - 1) <= 1e-15
            assert exp.leading_coeff >= 0

    def test_zero_lead_characterizes_equal_masses(self, rng):
        for k in range(100):
            prob = random_problem(rng, 1)
            if k % 2 == 0:
                prob = UotProblem(prob.alpha, prob.beta.scaled(prob.alpha.mass / prob.beta.mass), 1, 1)
            exp = limit_expansion(prob, *rng.uniform(0.1, 5, 2))
            a, b = prob.alpha.mass, prob.beta.mass
            assert (exp.leading_coeff == 0) == (abs(a - b) <= 1e-12 * (a + b))

    @pytest.mark.parametrize("bt", [(0.0, 1.0), (1.0, -2.0)])
    def test_rejects_nonpositive(self, ref_problem, bt):
        with pytest.raises(ValueError):
            limit_expansion(ref_problem, *bt)

    def test_predict_is_affine(self, ref_problem):
        exp = limit_expansion(ref_problem, 1.0, 2.0)
        assert exp.predict(0.0) == exp.constant_term
        assert exp.predict(3.0) - exp.predict(2.0) == pytest.approx(exp.leading_coeff)


class TestSweep:
    def test_rows_sorted(self, ref_problem):
        rows = sweep(ref_problem, (1.4, 2.2), [100, 1, 10])
        assert [r.lam for r in rows] == [1.0, 10.0, 100.0]

    def test_rejects_empty_and_nonpositive(self, ref_problem):
        with pytest.raises(ValueError):
            sweep(ref_problem, (1, 1), [])
        with pytest.raises(ValueError):
            sweep(ref_problem, (1, 1), [0.0, 1.0])

    def test_residual_decays_reference_example(self, ref_problem):
        rows = sweep(ref_problem, (1.4, 2.2), [1, 10, 100, 1000])
        assert abs(rows[3].residual) < abs(rows[1].residual)

    def test_factor_two_per_decade(self):
        lams = [1e2, 1e3, 1e4]
        for prob in corpus(99, 20):
            bt = (prob.tau0, prob.tau1)
            G = limit_expansion(prob, *bt).G
            rows = sweep(prob, bt, lams)
            for col in ("P_error", "Q_error", "residual"):
                errs = [abs(getattr(r, col)) for r in rows]
                assert errs[1] <= 0.5 * errs[0] and errs[2] <= 0.5 * errs[1], col
            gaps = [abs(r.M_star - G) for r in rows]
            assert gaps[1] <= 0.5 * gaps[0] and gaps[2] <= 0.5 * gaps[1]

    def test_equal_mass_limit(self, problem_2d):
        for m in (0.3, 1.0, 2.5):
            prob = UotProblem(problem_2d.alpha.normalized().scaled(m), problem_2d.beta.normalized().scaled(m), 1, 1)
            w2 = w2_sq_gaussian(prob.alpha.normalized(), prob.beta.normalized())
            (row,) = sweep(prob, (1.0, 1.5), [1e6])
            assert abs(row.value - m * w2) <= 1e-3 * (1 + m * w2)
            assert abs(row.residual) <= 1e-3 * (1 + m * w2)

    def test_marginals_approach_inputs(self, problem_2d):
        rows = sweep(problem_2d, (1.0, 1.5), [1e2, 1e5])
        for col in ("P_error", "Q_error", "u_error", "v_error"):
            assert getattr(rows[1], col) < 1e-2 * max(getattr(rows[0], col), 1e-12) + 1e-12
