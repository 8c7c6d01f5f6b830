import json
import math
from pathlib import Path

import numpy as np
import pytest

import gaussuot.cli as cli
from conftest import REF_MASS, REF_VALUE
from gaussuot.errors import NumericalError, ProblemFileError

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"
REF_FILE = PROBLEMS / "reference_1d.json"


def write(tmp_path, doc, name="p.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return str(path)


def minimal(**over):
    doc = {
        "alpha": {"mass": 1.0, "mean": [0.0], "cov": [[1.0]]},
        "beta": {"mass": 1.0, "mean": [0.0], "cov": [[1.0]]},
        "tau0": 1.0,
        "tau1": 1.0,
    }
    doc.update(over)
    return doc


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestParse:
    def test_minimal_file(self, tmp_path):
        prob, opts = cli.parse_problem(write(tmp_path, minimal()))
        assert prob.dim == 1
        assert opts.samples == 100_000 and opts.seed == 42
        assert opts.sizes == (21, 31, 41, 51)
        assert opts.lambdas == (1.0, 10.0, 100.0, 1000.0)
        assert (opts.bar_tau0, opts.bar_tau1) == (1.0, 1.0)

    def test_reference_parameters_round_trip(self):
        prob, opts = cli.parse_problem(REF_FILE)
        assert prob.alpha.mean[0] == 0.2 and prob.beta.mean[0] == 1.3
        assert math.sqrt(prob.alpha.cov[0, 0]) == 1.1 and math.sqrt(prob.beta.cov[0, 0]) == 0.7
        assert (prob.alpha.mass, prob.beta.mass, prob.tau0, prob.tau1) == (1.0, 0.8, 1.4, 2.2)
        echo = cli.problem_echo(prob)
        again, _ = cli.problem_from_dict(json.loads(json.dumps(cli._round(echo))))
        for g, h in ((prob.alpha, again.alpha), (prob.beta, again.beta)):
            assert g.mass == h.mass
            np.testing.assert_array_equal(g.mean, h.mean)
            np.testing.assert_array_equal(g.cov, h.cov)

    @pytest.mark.parametrize(
        "mutate, field",
        [
            (lambda d: d.update(alpha={"mass": 1, "mean": [0, 0], "cov": [[1, 2], [2, 1]]},
                                beta={"mass": 1, "mean": [0, 0], "cov": [[1, 0], [0, 1]]}), "alpha.cov"),
            (lambda d: d["beta"].update(mass=0.0), "beta.mass"),
            (lambda d: d["alpha"].update(mass=-1.0), "alpha.mass"),
            (lambda d: d.update(tau0=0.0), "tau0"),
            (lambda d: d.update(tau1=-2), "tau1"),
            (lambda d: d.pop("tau1"), "tau1"),
            (lambda d: d["alpha"].update(mean=["x"]), "alpha.mean[0]"),
            (lambda d: d["beta"].update(cov=[[1.0, 0.0]]), "beta.cov"),
            (lambda d: d["beta"].update(mean=[0.0, 1.0], cov=[[1, 0], [0, 1]]), "beta.mean"),
            (lambda d: d["alpha"].update(cov=[[float("nan")]]), "alpha.cov"),
            (lambda d: d.update(grid={"sizes": [21, 1]}), "grid.sizes"),
            (lambda d: d.update(grid={"sizes": ["a"]}), "grid.sizes[0]"),
            (lambda d: d.update(sweep=[1]), "sweep"),
            (lambda d: d.update(sweep={"lambdas": [1, -1]}), "sweep.lambdas[1]"),
            (lambda d: d.update(certify={"samples": 0}), "certify.samples"),
        ],
    )
    def test_rejects_with_field(self, tmp_path, mutate, field):
        doc = minimal()
        mutate(doc)
        with pytest.raises(ProblemFileError) as err:
            cli.parse_problem(write(tmp_path, doc))
        assert str(err.value).startswith(field)

    def test_malformed_json(self, tmp_path):
        with pytest.raises(ProblemFileError, match="malformed"):
            cli.parse_problem(write(tmp_path, "{not json"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ProblemFileError, match="cannot read"):
            cli.parse_problem(tmp_path / "absent.json")


class TestRound:
    def test_twelve_digits(self):
        assert cli._round(0.39520644610115196) == 0.395206446101
        assert cli._round({"a": [np.float64(1 / 3)]}) == {"a": [0.333333333333]}

    def test_non_finite_and_ints(self):
        assert cli._round([math.inf, np.int64(3), True]) == ["inf", 3, True]


class TestCommands:
    def test_identical_inputs_value_zero(self, tmp_path, capsys):
        code, out, _ = run(capsys, "solve", "--input", write(tmp_path, minimal()))
        assert code == 0
        rep = json.loads(out)
        assert rep["solution"]["value"] == 0.0
        assert rep["schema_version"] == cli.SCHEMA_VERSION
        assert rep["problem"]["tau0"] == 1.0

    def test_solve_reference_example(self, capsys):
        code, out, _ = run(capsys, "solve", "--input", str(REF_FILE))
        sol = json.loads(out)["solution"]
        assert code == 0
        assert sol["value"] == pytest.approx(REF_VALUE, abs=1e-11)
        assert sol["M_star"] == pytest.approx(REF_MASS, abs=1e-11)

    def test_certify_table_rows(self, capsys):
        code, out, _ = run(capsys, "certify", "--input", str(REF_FILE), "--samples", "2000")
        rep = json.loads(out)
        assert code == 0
        assert set(rep["certificate"]["table"]) == {
            "closed_form_value",
            "optimal_mass",
            "riccati_residual_frobenius",
            "min_sampled_dual_slack",
            "max_graph_equality_error",
            "min_eigenvalue_P_inv",
        }
        assert rep["certificate"]["failed_checks"] == []
        assert rep["options"] == {"samples": 2000, "seed": 42}

    def test_grid_bench_gap_decreasing(self, capsys):
        code, out, _ = run(capsys, "grid-bench", "--input", str(REF_FILE))
        rows = json.loads(out)["grid_benchmark"]["rows"]
        assert code == 0
        assert [r["n"] for r in rows] == [21, 31, 41, 51]
        gaps = [r["absolute_gap"] for r in rows]
        assert all(g1 < g0 for g0, g1 in zip(gaps, gaps[1:]))
        assert all(r["max_violation"] <= 1e-12 for r in rows)

    def test_grid_bench_rejects_2d(self, capsys):
        code, _, err = run(capsys, "grid-bench", "--input", str(PROBLEMS / "noncommuting_2d.json"))
        assert code == 2 and "one-dimensional" in err

    def test_limit_sweep(self, capsys):
        code, out, _ = run(capsys, "limit-sweep", "--input", str(REF_FILE), "--lambdas", "1000,10,100")
        sw = json.loads(out)["limit_sweep"]
        assert code == 0
        assert [r["lambda"] for r in sw["rows"]] == [10, 100, 1000]
        assert abs(sw["rows"][-1]["residual"]) < abs(sw["rows"][0]["residual"])

    def test_bar_taus_flag(self, capsys):
        code, out, _ = run(capsys, "limit-sweep", "--input", str(REF_FILE), "--bar-taus", "1,3")
        sw = json.loads(out)["limit_sweep"]
        assert code == 0 and sw["theta0"] == 0.25

    def test_bad_flag_values(self, capsys):
        assert run(capsys, "limit-sweep", "--input", str(REF_FILE), "--bar-taus", "1")[0] == 2
        assert run(capsys, "certify", "--input", str(REF_FILE), "--samples", "0")[0] == 2

    def test_indefinite_cov_exit_2(self, tmp_path, capsys):
        doc = minimal(
            alpha={"mass": 1, "mean": [0, 0], "cov": [[1, 2], [2, 1]]},
            beta={"mass": 1, "mean": [0, 0], "cov": [[1, 0], [0, 1]]},
        )
        code, out, err = run(capsys, "solve", "--input", write(tmp_path, doc))
        assert code == 2 and out == "" and "alpha.cov" in err

    def test_output_file_and_determinism(self, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path in (a, b):
            assert cli.main(["certify", "--input", str(REF_FILE), "--samples", "5000", "--output", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert capsys.readouterr().out == ""

    def test_timings_opt_in(self, capsys):
        _, out, _ = run(capsys, "solve", "--input", str(REF_FILE))
        assert "timings_seconds" not in json.loads(out)
        _, out, _ = run(capsys, "solve", "--input", str(REF_FILE), "--timings")
        assert set(json.loads(out)["timings_seconds"]) == {"solve"}

    def test_compute_error_exit_3(self, capsys, monkeypatch):
        def broken(prob):
            raise NumericalError("forced")

        monkeypatch.setattr(cli, "solve", broken)
        code, out, err = run(capsys, "solve", "--input", str(REF_FILE))
        assert code == 3
        assert json.loads(out)["error"] == {"type": "NumericalError", "message": "forced"}

    def test_certificate_failure_exit_4(self, capsys, monkeypatch):
        monkeypatch.setattr(cli, "failures", lambda report: ["graph_equality"])
        code, out, err = run(capsys, "certify", "--input", str(REF_FILE), "--samples", "1000")
        assert code == 4 and "certificate failed" in err
        assert json.loads(out)["certificate"]["failed_checks"] == ["graph_equality"]

    def test_module_entry_point(self):
        import subprocess
        import sys

        res = subprocess.run(
            [sys.executable, "-m", "gaussuot", "solve", "--input", str(REF_FILE)],
            capture_output=True, text=True, check=False,
        )
        assert res.returncode == 0
        assert json.loads(res.stdout)["solution"]["value"] == pytest.approx(REF_VALUE, abs=1e-11)
