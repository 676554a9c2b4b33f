"""Command-line front end.

Exit status: 0 ok, 2 invalid input or scenario, 3 infeasible routing, 1 anything else.
"""

from __future__ import annotations

import argparse
import logging
import sys

from eglb.errors import DomainError, InfeasibleError, ScenarioError
from eglb.sim import (
    MODES,
    POLICIES,
    format_summary,
    load_scenario,
    read_config,
    run_simulation,
    summarize,
    write_allocation,
    write_results,
    write_scenario,
)

log = logging.getLogger("eglb")

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID, EXIT_INFEASIBLE = 0, 1, 2, 3
COMPARE_ORDER = ("glb-cost", "glb-carbon", "glb-dist", "eglb-off", "eglb")


def _non_negative(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eglb", description="Equity-aware geographical load balancing.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, lam_repeat=False):
        p.add_argument("--scenario", required=True, metavar="DIR")
        if lam_repeat:
            p.add_argument("--lambda", dest="lam", type=_non_negative, action="append", required=True)
        else:
            p.add_argument("--lambda", dest="lam", type=_non_negative, default=None)
        p.add_argument("--eta", type=_positive, default=None)
        p.add_argument("--mode", choices=MODES, default="full")
        p.add_argument("--out", required=True, metavar="FILE")
        p.add_argument("--seed", type=int, default=None, help="accepted for forward compatibility; unused")

    run = sub.add_parser("run", help="run one policy")
    common(run)
    run.add_argument("--policy", choices=POLICIES, required=True)
    run.add_argument("--dump-allocation", metavar="FILE", default=None)

    compare = sub.add_parser("compare", help="run all five algorithms")
    common(compare)

    sweep = sub.add_parser("sweep", help="trace the cost/equity frontier over lambda")
    common(sweep, lam_repeat=True)
    sweep.add_argument("--policy", choices=POLICIES, default="eglb-off")

    validate = sub.add_parser("validate", help="check a scenario directory")
    validate.add_argument("--scenario", required=True, metavar="DIR")

    synth = sub.add_parser("synth", help="write a seeded synthetic scenario directory")
    synth.add_argument("--out", required=True, metavar="DIR")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--n-dc", type=int, default=10)
    synth.add_argument("--n-src", type=int, default=5)
    synth.add_argument("--horizon", type=int, default=168)
    synth.add_argument("--reach", type=int, default=None, help="each source may use only its nearest REACH sites")
    synth.add_argument("--lambda", dest="lam", type=_non_negative, default=None)
    return parser


def _defaults(args):
    cfg = read_config(args.scenario)
    eta = args.eta if args.eta is not None else cfg.get("eta")
    return cfg, eta


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    cfg, eta = _defaults(args)
    lam = args.lam if args.lam is not None else cfg.get("lambda", 0.0)
    result = run_simulation(scenario, args.policy, lam, eta, args.mode)
    write_results([result], args.out)
    if args.dump_allocation:
        sc = scenario.with_full_topology() if args.mode == "full" else scenario
        write_allocation(sc, result.allocation, args.dump_allocation)
    return EXIT_OK


def cmd_compare(args) -> int:
    scenario = load_scenario(args.scenario)
    cfg, eta = _defaults(args)
    lam = args.lam if args.lam is not None else cfg.get("lambda", 0.0)
    results = [run_simulation(scenario, p, lam, eta, args.mode, keep_allocation=False) for p in COMPARE_ORDER]
    write_results(results, args.out)
    print(format_summary(summarize(results)))
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    _, eta = _defaults(args)
    results = [run_simulation(scenario, args.policy, lam, eta, args.mode, keep_allocation=False)
               for lam in sorted(args.lam)]
    for prev, cur in zip(results, results[1:]):
        if cur.objective.equity_term > prev.objective.equity_term + 1e-6:
            log.warning("equity term rose from %g to %g between lambda %g and %g",
                        prev.objective.equity_term, cur.objective.equity_term, prev.lam, cur.lam)
        if cur.objective.cost_term < prev.objective.cost_term - 1e-6:
            log.warning("cost term fell from %g to %g between lambda %g and %g",
                        prev.objective.cost_term, cur.objective.cost_term, prev.lam, cur.lam)
    write_results(results, args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    print(f"{args.scenario}: ok ({scenario.n_dc} data centers, {scenario.n_src} sources, {scenario.horizon} steps)")
    return EXIT_OK


def cmd_synth(args) -> int:
    from eglb.synthetic import synthetic_scenario

    sc = synthetic_scenario(args.seed, args.n_dc, args.n_src, args.horizon, reach=args.reach)
    write_scenario(sc, args.out, lam=args.lam)
    print(f"wrote {args.out}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "sweep": cmd_sweep, "validate": cmd_validate, "synth": cmd_synth}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except (ScenarioError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
