"""Command line entry point: ``run``, ``conformance`` and ``replay``."""

from __future__ import annotations

import argparse
import sys

from .conformance import SUITES, run_suite
from .config import load_config
from .errors import ConfigurationError, SimulationError, UnsupportedOperationError
from .experiment import replay, run_experiment


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.runs is not None or args.seed is not None:
        cfg.run.runs = args.runs or cfg.run.runs
        cfg.run.seed = cfg.run.seed if args.seed is None else args.seed
        cfg.run.seeds = None
    out = run_experiment(cfg, args.out, log=lambda m: print(m, file=sys.stderr))
    print(f"wrote {out['out_dir']}")
    grid, mean, std = out["grid"], out["mean"], out["std"]
    if len(grid):
        print(f"final: {grid[-1]} trajectories/agent, return {mean[-1]:.2f} +- {std[-1]:.2f}")
    return 0


def _cmd_conformance(args) -> int:
    kw = {}
    if args.trials is not None:
        if args.suite == "estimators":
            kw["samples"] = args.trials
        else:
            kw["trials"] = args.trials
    rep = run_suite(args.suite, **kw)
    for line in rep.lines():
        print(line)
    # the mean negative control is expected to violate the bound; it is reported as a passing check
    return 0 if rep.passed else 1


def _cmd_replay(args) -> int:
    res = replay(args.ref)
    print(",".join(res["header"]))
    print(",".join(res["recorded"]) + "    (recorded)")
    print(",".join(res["replayed"]) + "    (replayed)")
    print("match" if res["match"] else "MISMATCH")
    return 0 if res["match"] else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="byzpg", description="Byzantine-tolerant federated policy-gradient simulator")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a YAML config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, help="root seed of the first run (later runs use seed+1, ...)")
    r.add_argument("--runs", type=int, help="number of independent runs")
    r.add_argument("--out", help="output directory (default: $BYZPG_OUT or run.output_dir)")
    r.set_defaults(fn=_cmd_run)
    c = sub.add_parser("conformance", help="Monte-Carlo conformance suites")
    c.add_argument("suite", choices=SUITES)
    c.add_argument("--trials", type=int, help="trials (samples for the estimator suite)")
    c.set_defaults(fn=_cmd_conformance)
    rp = sub.add_parser("replay", help="re-run one metrics row and compare, e.g. out/metrics.csv:17")
    rp.add_argument("ref")
    rp.set_defaults(fn=_cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, UnsupportedOperationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
