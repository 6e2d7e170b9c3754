# ===================================
# main.py - command-line entry point
# ===================================
import argparse
import logging
import sys
from typing import Dict, List, Optional

from gpe_solver import __version__
from gpe_solver.core.config import settings
from gpe_solver.core.exceptions import GPESolverError

logger = logging.getLogger("gpe_solver")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpe-solver",
        description="Ground states of rotating Bose-Einstein condensates by the energy-adaptive gradient method",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key-value run file (section.key = value)")
    common.add_argument("--tau", type=float, help="fixed step size in (0, 2); implies --policy fixed")
    common.add_argument("--policy", choices=["fixed", "adaptive"])
    common.add_argument("--metric", choices=["adaptive", "h1"])
    common.add_argument("--mesh-n", type=int, dest="mesh_n")
    common.add_argument("--max-iters", type=int, dest="max_iters")
    common.add_argument("--out", help="output directory")
    common.add_argument("--retain-states", action="store_true", dest="retain_states", default=None)
    common.add_argument("--strict-admissibility", action="store_true", dest="strict", default=None)
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--paper-scale", action="store_true", dest="paper_scale", default=None)
    common.add_argument("--svg", action="store_true", default=None)
    common.add_argument("--reference", help="converged state file used for energy and H^1 errors")
    common.add_argument("--log-level", dest="log_level", default=settings.LOG_LEVEL)

    sub.add_parser("solve", parents=[common], help="run the gradient iteration")
    sub.add_parser("compare", parents=[common], help="adaptive metric vs fixed H^1 metric")
    spectrum = sub.add_parser("spectrum", parents=[common], help="spectral diagnostics at a converged state")
    spectrum.add_argument("--state", help="converged state file")
    rates = sub.add_parser("rates", parents=[common], help="empirical contraction rates")
    rates.add_argument("--state", help="converged state file to measure against")
    sub.add_parser("check", parents=[common], help="invariant battery on a short run")
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, object]:
    mapping = {
        "tau": "policy.tau",
        "policy": "policy.mode",
        "metric": "policy.metric",
        "mesh_n": "mesh.n",
        "max_iters": "stop.max_iters",
        "out": "outputs.directory",
        "retain_states": "outputs.retain_states",
        "strict": "model.strict",
        "seed": "run.seed",
        "threads": "run.threads",
        "paper_scale": "run.paper_scale",
        "svg": "outputs.svg",
        "reference": "reference.state_path",
    }
    overrides = {key: getattr(args, attr) for attr, key in mapping.items() if getattr(args, attr, None) is not None}
    if args.tau is not None and args.policy is None:
        overrides["policy.mode"] = "fixed"
    if args.paper_scale and args.mesh_n is None:
        overrides["mesh.n"] = settings.PAPER_MESH_N
    return overrides


def dispatch(args: argparse.Namespace):
    from gpe_solver.api import check, compare, rates, solve, spectrum
    from gpe_solver.api.common import load_run_config

    config = load_run_config(args.config, overrides_from_args(args))
    if args.command == "solve":
        return solve.cmd_solve(config)
    if args.command == "compare":
        return compare.cmd_compare(config)
    if args.command == "spectrum":
        report = spectrum.cmd_spectrum(config, args.state)
        print(spectrum.format_report(report), end="")
        return report
    if args.command == "rates":
        return rates.cmd_rates(config, args.state)
    try:
        report = check.cmd_check(config)
    except GPESolverError as e:
        for r in getattr(e, "failures", []):
            print(f"FAIL {r.name:<20} defect={r.defect:.3e} threshold={r.threshold:.0e}")
        raise
    for r in report.data:
        print(f"PASS {r.name:<20} defect={r.defect:.3e} threshold={r.threshold:.0e}")
    return report


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        dispatch(args)
    except GPESolverError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
