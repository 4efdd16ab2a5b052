"""Command line: ``solve``, ``sweep`` and ``plot``.

Exit codes: 0 success, 2 infeasible problem, 1 usage or solver error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .. import model
from ..aas import aas_solve
from ..model import TrmpInstance
from ..scenario import ScenarioError, load_scenario, place_entities
from ..sqp import sqp_solve
from .oracle import brute_force_oracle
from .plots import emit_plots
from .sweep import SweepConfig, read_results, run_sweep, write_results

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

log = logging.getLogger("rsma_crc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rsma-crc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one scenario")
    p.add_argument("--scenario", required=True, type=Path)
    p.add_argument("--solver", required=True, choices=["sqp", "aas", "oracle"])
    p.add_argument("--delta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int, help="placement and fading seed")
    p.add_argument("--grid", type=int, default=30, help="oracle intervals per axis")
    p.add_argument("--out", type=Path, help="JSON result file (default: stdout)")

    p = sub.add_parser("sweep", help="run a parameter sweep and render its figures")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("plot", help="render figures from a results CSV")
    p.add_argument("--csv", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    return parser


def _solve(args) -> int:
    if args.delta is not None and args.epsilon is not None:
        raise ValueError("give at most one of --delta and --epsilon")
    doc = json.loads(args.scenario.read_text())
    if args.seed is not None:
        doc = {**doc, "placement_seed": args.seed, "fading_seed": args.seed}
    scenario = load_scenario(doc)
    instance = TrmpInstance.from_scenario(scenario, place_entities(scenario))
    result: dict = {"solver": args.solver}
    if args.solver == "sqp":
        rep = sqp_solve(instance)
        alloc, status = rep.allocation, rep.status
        result.update(iterations=rep.iterations, kkt_residual=rep.kkt_residual)
        infeasible = not rep.feasible
    elif args.solver == "aas":
        if args.epsilon is not None:
            res = aas_solve(instance, epsilon=args.epsilon)
        else:
            res = aas_solve(instance, 0.1 if args.delta is None else args.delta)
        alloc, status = res.allocation, res.status
        infeasible = alloc is None
        result.update(error_bound_bps=res.error_bound, certified_objective_bps=res.certified_objective,
                      cubes_total=res.cubes_total, cubes_examined=res.cubes_examined,
                      min_rate_slack_bps=res.min_rate_slack)
    else:
        alloc = brute_force_oracle(instance, args.grid)
        status = "infeasible problem" if alloc is None else "optimal"
        infeasible = alloc is None
    result["status"] = status
    if alloc is not None:
        result["sum_rate_bps"] = model.objective(instance, alloc)
        result["allocation"] = alloc.to_dict()
        result["max_violation"] = model.check_feasibility(instance, alloc).max_violation
    text = json.dumps(result, indent=2)
    if args.out:
        args.out.write_text(text + "\n")
    else:
        print(text)
    return EXIT_INFEASIBLE if infeasible else EXIT_OK


def _sweep(args) -> int:
    config = SweepConfig.from_json(args.config)
    rows = write_results(run_sweep(config), args.out)
    for path in emit_plots(rows, args.out):
        log.info("wrote %s", path)
    failed = [r for r in rows if r.status.startswith("error")]
    if failed:
        log.warning("%d of %d rows failed", len(failed), len(rows))
    return EXIT_OK


def _plot(args) -> int:
    for path in emit_plots(read_results(args.csv), args.out):
        log.info("wrote %s", path)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handlers = {"solve": _solve, "sweep": _sweep, "plot": _plot}
    try:
        return handlers[args.command](args)
    except (ScenarioError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"rsma-crc: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
