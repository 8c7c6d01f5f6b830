"""Command-line front end.

Every subcommand reads one JSON problem file, solves the closed form first and
then runs its own stage. Reports are JSON with numbers rounded to 12
significant digits; identical inputs give byte-identical reports unless
``--timings`` is requested.

Exit codes: 0 success, 2 invalid input, 3 computation error, 4 certificate failed.
"""

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import limit_expansion, sweep
from .certificate import certify, failures
from .closed_form import ClosedFormSolution, solve
from .errors import GaussUOTError, ProblemFileError
from .gaussian import GaussianMeasure, UotProblem
from .grid import SinkhornConfig, build_grid, solve_discrete_dual
from .linalg_spd import spd_check

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_COMPUTE, EXIT_CERTIFICATE = 0, 2, 3, 4

DEFAULT_SAMPLES = 100_000
DEFAULT_SEED = 42
DEFAULT_SIZES = (21, 31, 41, 51)
DEFAULT_LAMBDAS = (1.0, 10.0, 100.0, 1000.0)


@dataclass
class ProblemOptions:
    samples: int = DEFAULT_SAMPLES
    seed: int = DEFAULT_SEED
    sizes: tuple = DEFAULT_SIZES
    bar_tau0: float = None
    bar_tau1: float = None
    lambdas: tuple = DEFAULT_LAMBDAS
    raw: dict = field(default_factory=dict, repr=False)


def _finite(value, where: str) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ProblemFileError(f"{where}: expected a number, got {value!r}") from None
    if not math.isfinite(x):
        raise ProblemFileError(f"{where}: must be finite, got {value!r}")
    return x


def _positive(value, where: str) -> float:
    x = _finite(value, where)
    if x <= 0:
        raise ProblemFileError(f"{where}: must be positive, got {value!r}")
    return x


def _require(doc: dict, key: str, where: str):
    if not isinstance(doc, dict) or key not in doc:
        raise ProblemFileError(f"{where}{key}: missing required field")
    return doc[key]


def _measure(doc, name: str) -> GaussianMeasure:
    mass = _positive(_require(doc, "mass", f"{name}."), f"{name}.mass")
    mean_raw = _require(doc, "mean", f"{name}.")
    cov_raw = _require(doc, "cov", f"{name}.")
    mean = np.array([_finite(v, f"{name}.mean[{i}]") for i, v in enumerate(np.atleast_1d(mean_raw))])
    try:
        cov = np.array(cov_raw, dtype=float)
    except (TypeError, ValueError):
        raise ProblemFileError(f"{name}.cov: not a numeric matrix") from None
    if cov.ndim == 0:
        cov = cov.reshape(1, 1)
    if cov.shape != (mean.size, mean.size):
        raise ProblemFileError(f"{name}.cov: shape {cov.shape} does not match mean of length {mean.size}")
    if not np.all(np.isfinite(cov)):
        raise ProblemFileError(f"{name}.cov: entries must be finite")
    if not np.array_equal(cov, cov.T):
        raise ProblemFileError(f"{name}.cov: matrix is not symmetric")
    check = spd_check(cov)
    if not check.is_spd:
        raise ProblemFileError(
            f"{name}.cov: not positive definite (min eigenvalue {check.min_eigenvalue:.6g})"
        )
    return GaussianMeasure(mass, mean, cov)


def _int_list(values, where: str) -> tuple:
    if not isinstance(values, (list, tuple)) or not values:
        raise ProblemFileError(f"{where}: expected a non-empty list")
    out = []
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not float(v).is_integer():
            raise ProblemFileError(f"{where}[{i}]: expected an integer, got {v!r}")
        out.append(int(v))
    return tuple(out)


def _section(doc: dict, key: str) -> dict:
    sec = doc.get(key, {})
    if not isinstance(sec, dict):
        raise ProblemFileError(f"{key}: expected an object")
    return sec


def problem_from_dict(doc: dict) -> tuple[UotProblem, ProblemOptions]:
    if not isinstance(doc, dict):
        raise ProblemFileError("problem file must contain a JSON object")
    alpha = _measure(_require(doc, "alpha", ""), "alpha")
    beta = _measure(_require(doc, "beta", ""), "beta")
    if alpha.dim != beta.dim:
        raise ProblemFileError(f"beta.mean: dimension {beta.dim} differs from alpha dimension {alpha.dim}")
    tau0 = _positive(_require(doc, "tau0", ""), "tau0")
    tau1 = _positive(_require(doc, "tau1", ""), "tau1")
    prob = UotProblem(alpha, beta, tau0, tau1)

    opts = ProblemOptions(bar_tau0=tau0, bar_tau1=tau1, raw=doc)
    cert = _section(doc, "certify")
    if "samples" in cert:
        opts.samples = _int_list([cert["samples"]], "certify.samples")[0]
        if opts.samples < 1:
            raise ProblemFileError("certify.samples: must be positive")
    if "seed" in cert:
        opts.seed = _int_list([cert["seed"]], "certify.seed")[0]
    grid = _section(doc, "grid")
    if "sizes" in grid:
        opts.sizes = _int_list(grid["sizes"], "grid.sizes")
        if min(opts.sizes) < 2:
            raise ProblemFileError("grid.sizes: every size must be at least 2")
    sw = _section(doc, "sweep")
    if "bar_tau0" in sw:
        opts.bar_tau0 = _positive(sw["bar_tau0"], "sweep.bar_tau0")
    if "bar_tau1" in sw:
        opts.bar_tau1 = _positive(sw["bar_tau1"], "sweep.bar_tau1")
    if "lambdas" in sw:
        if not isinstance(sw["lambdas"], list) or not sw["lambdas"]:
            raise ProblemFileError("sweep.lambdas: expected a non-empty list")
        opts.lambdas = tuple(_positive(v, f"sweep.lambdas[{i}]") for i, v in enumerate(sw["lambdas"]))
    return prob, opts


def parse_problem(path) -> tuple[UotProblem, ProblemOptions]:
    """Read and validate a JSON problem file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ProblemFileError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{path}: malformed JSON ({exc})") from exc
    return problem_from_dict(doc)


# ---------------------------------------------------------------------------
# report fragments


def _round(x):
    """Recursively round floats to 12 significant digits for serialization."""
    if isinstance(x, dict):
        return {k: _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v) for v in x]
    if isinstance(x, np.ndarray):
        return _round(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.12g}")
    return x


def problem_echo(prob: UotProblem) -> dict:
    def measure(g):
        return {"mass": g.mass, "mean": g.mean, "cov": g.cov}

    return {"alpha": measure(prob.alpha), "beta": measure(prob.beta), "tau0": prob.tau0, "tau1": prob.tau1}


def solution_dict(sol: ClosedFormSolution) -> dict:
    return {
        "value": sol.value,
        "M_star": sol.M_star,
        "A_star": sol.A_star,
        "P_star": sol.P_star,
        "Q_star": sol.Q_star,
        "u_star": sol.u_star,
        "v_star": sol.v_star,
        "h_star": sol.h_star,
        "S_star": sol.riccati.S_star,
        "L_star": sol.map_linear,
        "map_linear": sol.map_linear,
        "map_offset": sol.map_offset,
        "riccati_residual": sol.riccati.residual,
    }


def run_solve(prob: UotProblem) -> tuple[ClosedFormSolution, dict]:
    sol = solve(prob)
    return sol, {"solution": solution_dict(sol)}


def run_certify(prob: UotProblem, sol: ClosedFormSolution, samples: int, seed: int) -> tuple[dict, list]:
    report = certify(sol, prob, sample_count=samples, seed=seed)
    failed = failures(report)
    table = {
        "closed_form_value": sol.value,
        "optimal_mass": sol.M_star,
        "riccati_residual_frobenius": report.riccati_residual,
        "min_sampled_dual_slack": report.min_sampled_slack,
        "max_graph_equality_error": report.max_graph_equality_error,
        "min_eigenvalue_P_inv": report.min_eig_P_inv,
    }
    return {"certificate": {**report.to_dict(), "table": table, "failed_checks": failed}}, failed


def run_grid_bench(prob: UotProblem, sol: ClosedFormSolution, sizes) -> dict:
    rows = []
    for n in sizes:
        res = solve_discrete_dual(build_grid(prob, n), prob, SinkhornConfig())
        rows.append(
            {
                "n": n,
                "dual_value": res.dual_value,
                "absolute_gap": abs(res.dual_value - sol.value),
                "max_violation": max(res.max_violation, 0.0),
                "iterations": res.iterations,
                "epsilon_final": res.epsilon_final,
            }
        )
    return {"grid_benchmark": {"closed_form_value": sol.value, "rows": rows}}


def run_limit_sweep(prob: UotProblem, bar_taus, lambdas) -> dict:
    exp = limit_expansion(prob, *bar_taus)
    rows = sweep(prob, bar_taus, lambdas)
    return {
        "limit_sweep": {
            "bar_tau0": bar_taus[0],
            "bar_tau1": bar_taus[1],
            "theta0": exp.theta0,
            "theta1": exp.theta1,
            "G": exp.G,
            "leading_coeff": exp.leading_coeff,
            "constant_term": exp.constant_term,
            "rows": [
                {
                    "lambda": r.lam,
                    "value": r.value,
                    "M_star": r.M_star,
                    "residual": r.residual,
                    "P_error": r.P_error,
                    "Q_error": r.Q_error,
                    "u_error": r.u_error,
                    "v_error": r.v_error,
                }
                for r in rows
            ],
        }
    }


def render(report: dict) -> str:
    return json.dumps(_round(report), indent=2) + "\n"


# ---------------------------------------------------------------------------
# entry point


def _csv(cast):
    def parse(text):
        try:
            return tuple(cast(t) for t in text.split(",") if t.strip())
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaussuot", description="Closed-form KL-unbalanced OT between Gaussian measures."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--input", required=True, help="JSON problem file")
        p.add_argument("--output", help="write the report here instead of stdout")
        p.add_argument("--timings", action="store_true", help="include wall-clock timings")

    common(sub.add_parser("solve", help="closed-form solution"))
    p = sub.add_parser("certify", help="solution plus dual certificate")
    common(p)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p = sub.add_parser("grid-bench", help="finite-grid discrete dual benchmark (d = 1)")
    common(p)
    p.add_argument("--sizes", type=_csv(int))
    p = sub.add_parser("limit-sweep", help="large-relaxation sweep")
    common(p)
    p.add_argument("--lambdas", type=_csv(float))
    p.add_argument("--bar-taus", type=_csv(float), help="bar_tau0,bar_tau1")
    return parser


def _options_echo(args, opts: ProblemOptions) -> dict:
    if args.command == "certify":
        return {"samples": opts.samples, "seed": opts.seed}
    if args.command == "grid-bench":
        return {"sizes": list(opts.sizes)}
    if args.command == "limit-sweep":
        return {"bar_tau0": opts.bar_tau0, "bar_tau1": opts.bar_tau1, "lambdas": list(opts.lambdas)}
    return {}


def _apply_flags(args, opts: ProblemOptions):
    if getattr(args, "samples", None) is not None:
        if args.samples < 1:
            raise ProblemFileError("--samples: must be positive")
        opts.samples = args.samples
    if getattr(args, "seed", None) is not None:
        opts.seed = args.seed
    if getattr(args, "sizes", None):
        if min(args.sizes) < 2:
            raise ProblemFileError("--sizes: every size must be at least 2")
        opts.sizes = args.sizes
    if getattr(args, "lambdas", None):
        if min(args.lambdas) <= 0:
            raise ProblemFileError("--lambdas: values must be positive")
        opts.lambdas = args.lambdas
    if getattr(args, "bar_taus", None):
        if len(args.bar_taus) != 2 or min(args.bar_taus) <= 0:
            raise ProblemFileError("--bar-taus: expected two positive numbers")
        opts.bar_tau0, opts.bar_tau1 = args.bar_taus


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        prob, opts = parse_problem(args.input)
        _apply_flags(args, opts)
        if args.command == "grid-bench" and prob.dim != 1:
            raise ProblemFileError(f"grid-bench needs a one-dimensional problem, got d={prob.dim}")
    except ProblemFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    report = {
        "schema_version": SCHEMA_VERSION,
        "library_version": __version__,
        "command": args.command,
        "problem": problem_echo(prob),
        "options": _options_echo(args, opts),
    }
    timings = {}
    failed = []
    try:
        t = time.perf_counter()
        sol, frag = run_solve(prob)
        timings["solve"] = time.perf_counter() - t
        report.update(frag)
        t = time.perf_counter()
        if args.command == "certify":
            frag, failed = run_certify(prob, sol, opts.samples, opts.seed)
        elif args.command == "grid-bench":
            frag = run_grid_bench(prob, sol, opts.sizes)
        elif args.command == "limit-sweep":
            frag = run_limit_sweep(prob, (opts.bar_tau0, opts.bar_tau1), opts.lambdas)
        else:
            frag = {}
        timings[args.command] = time.perf_counter() - t
        report.update(frag)
    except GaussUOTError as exc:
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        _emit(report, args.output)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE

    if args.timings:
        report["timings_seconds"] = timings
    _emit(report, args.output)
    if failed:
        print(f"certificate failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CERTIFICATE
    return EXIT_OK


def _emit(report: dict, output):
    text = render(report)
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
