"""
Command-line interface.

    dadmms run <config>            run one algorithm, write series/manifest
    dadmms compare <config>        run the [compare] algorithms on one dataset
    dadmms sweep <config>          D-ADMMS penalty ablation
    dadmms ablate-init <config>    D-ADMMS initial-distribution ablation
    dadmms theory <config>         theory constants (--json, --latex)
    dadmms verify lemma1 <config>  (Z, beta) recursion against D-ADMMS
    dadmms verify kkt <config>     KKT residuals at the pooled minimizer
    dadmms verify bound <config>   measured W2 against the convergence bound
    dadmms selftest                property suites
"""

import argparse
import logging
import sys
from typing import List, Optional

from .checks import SUITES, run_all
from .config import AlgorithmConfig, ConfigError, ExperimentConfig, load_config
from .graph import laplacians_integer
from .harness import compare_algorithms, compare_configs, init_ablation, run_experiment, sweep_rho
from .problems import LinRegProblem
from .report import check_table, series_table, theory_json, theory_latex, theory_text
from .theory import NotContractiveError, bound_containment, kkt_residuals, lemma1_equivalence, theory_report

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(verbosity: int):
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT)


def _add_run_overrides(p: argparse.ArgumentParser):
    p.add_argument("config", help="TOML experiment file")
    p.add_argument("--seed", type=int, help="Root seed")
    p.add_argument("--trials", type=int, help="Number of independent trials")
    p.add_argument("--iters", type=int, help="Iterations per chain")
    p.add_argument("--out", help="Output directory")
    p.add_argument("--workers", type=int, help="Worker threads (default: $DADMMS_WORKERS or 1)")
    p.add_argument("--progress", action="store_true", help="Show a progress bar")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dadmms", description="Distributed ADMM sampling experiments")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logs")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_overrides(sub.add_parser("run", help="Run one algorithm"))
    _add_run_overrides(sub.add_parser("compare", help="Compare algorithms on one dataset"))

    sweep = sub.add_parser("sweep", help="Penalty (rho) ablation for D-ADMMS")
    _add_run_overrides(sweep)
    sweep.add_argument("--rho", type=float, nargs="+", help="Penalties (default: [sweep].rho)")

    ablate = sub.add_parser("ablate-init", help="Initial-distribution ablation for D-ADMMS")
    _add_run_overrides(ablate)
    ablate.add_argument("--random", type=int, default=9, help="Number of random initial distributions")

    theory = sub.add_parser("theory", help="Print theory constants")
    theory.add_argument("config", help="TOML experiment file")
    fmt = theory.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", help="Emit JSON")
    fmt.add_argument("--latex", action="store_true", help="Emit a LaTeX table")

    verify = sub.add_parser("verify", help="Numerical verification of the theory")
    verify.add_argument("what", choices=("lemma1", "kkt", "bound"))
    verify.add_argument("config", help="TOML experiment file")
    verify.add_argument("--iters", type=int, default=50, help="Iterations (default 50)")
    verify.add_argument("--trials", type=int, help="Trials for the bound check")
    verify.add_argument("--seed", type=int, help="Root seed")

    selftest = sub.add_parser("selftest", help="Run the property suites")
    selftest.add_argument("--suite", choices=sorted(SUITES), action="append", help="Restrict to a suite")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    overrides = {
        "seed": getattr(args, "seed", None),
        "n_trials": getattr(args, "trials", None),
        "n_iters": getattr(args, "iters", None),
        "output": getattr(args, "out", None),
        "workers": getattr(args, "workers", None),
    }
    return cfg.with_overrides(**overrides)


def _print_result(result):
    print(series_table(result.series))
    if result.manifest.failures:
        print(f"{len(result.manifest.failures)} trial(s) failed; see manifest")
    if result.output_dir is not None:
        print(f"results written to {result.output_dir}")


def cmd_run(args) -> int:
    _print_result(run_experiment(_load(args), progress=args.progress))
    return 0


def cmd_compare(args) -> int:
    _print_result(compare_algorithms(compare_configs(_load(args)), progress=args.progress))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    rhos = args.rho or cfg.sweep_rho
    if not rhos:
        raise ConfigError("sweep.rho", "no penalties given (use [sweep].rho or --rho)")
    _print_result(sweep_rho(cfg, rhos, progress=args.progress))
    return 0


def cmd_ablate_init(args) -> int:
    _print_result(init_ablation(_load(args), args.random, progress=args.progress))
    return 0


def cmd_theory(args) -> int:
    cfg = load_config(args.config)
    topo = cfg.topology.build()
    t = cfg.theory
    problem = None
    if t.m_f is None or t.tau_f is None:
        problem = cfg.problem.build(topo.n_agents)
    report = theory_report(topo, cfg.problem.d, problem, m_f=t.m_f, tau_f=t.tau_f, kappa=t.kappa, rho=t.rho)
    if args.json:
        print(theory_json(report))
    elif args.latex:
        print(theory_latex(report, laplacians_integer(topo)["l_minus"]))
    else:
        print(theory_text(report))
    return 0


def _admm_rho(cfg: ExperimentConfig) -> float:
    """Penalty of the configured ADMM algorithm, or the published D-ADMMS default."""
    if cfg.algorithm.name in ("dadmms", "admm"):
        return cfg.hyper().rho
    return cfg.hyper(AlgorithmConfig("dadmms", use_published_defaults=True)).rho


def cmd_verify(args) -> int:
    cfg = _load(args)
    topo = cfg.topology.build()
    problem = cfg.problem.build(topo.n_agents)
    rho = _admm_rho(cfg)
    if args.what == "lemma1":
        rep = lemma1_equivalence(problem, topo, rho, args.iters, cfg.run.seed)
        print(f"max |X_alg - X_recursion|   {rep.max_x_deviation:.3e}")
        print(f"max |p - M- beta|           {rep.max_dual_deviation:.3e}")
        print(f"max column-space residual   {rep.max_column_space_residual:.3e}")
        return 0 if rep.max_x_deviation <= 1e-6 and rep.max_dual_deviation <= 1e-9 else 1
    if args.what == "kkt":
        res = kkt_residuals(problem, topo)
        print(f"stationarity  {res.stationarity:.3e}")
        print(f"consensus     {res.consensus:.3e}")
        print(f"z definition  {res.z_definition:.3e}")
        return 0
    if not isinstance(problem, LinRegProblem):
        raise ConfigError("problem.kind", "the bound check needs linreg")
    rep = bound_containment(problem, topo, rho, cfg.run.n_trials, args.iters, cfg.run.seed, cfg.theory.mc_samples)
    print(f"violations          {rep.violations}")
    print(f"max measured/bound  {rep.max_ratio:.4f}")
    print(f"bound floor         {rep.bound.floor:.4f}")
    return 0 if rep.violations == 0 else 1


def cmd_selftest(args) -> int:
    results = run_all(args.suite)
    print(check_table(results))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)} passed, {len(failed)} failed")
    return 1 if failed else 0


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "ablate-init": cmd_ablate_init,
    "theory": cmd_theory,
    "verify": cmd_verify,
    "selftest": cmd_selftest,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns 0 on success, 2 on validation errors and 1 on runtime errors."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, NotContractiveError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except RuntimeError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
