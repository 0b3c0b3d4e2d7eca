"""Command-line interface.

Subcommands::

    diffnet run CONFIG [--output PREFIX]
    diffnet topology --kind KIND --K K [--weights W] [--edge-probability P]
                     [--seed S] [--csv]
    diffnet theory CONFIG [--json]
    diffnet sweep CONFIG --vary {mu,K} --values V [V ...] [--output PREFIX]

Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure or
divergence.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import runner, theory
from .errors import ConfigError, DiffnetError, InvalidInputError
from .topology import TOPOLOGY_KINDS, build_graph, metropolis_weights, uniform_weights

USAGE_EXIT = 1
NUMERIC_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors (argparse default is 2)
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _build_parser() -> _Parser:
    parser = _Parser(prog="diffnet", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_run = sub.add_parser("run", help="execute an experiment config, write CSV + summary JSON")
    p_run.add_argument("config")
    p_run.add_argument("--output", help="output path prefix (overrides the config's 'output')")

    p_top = sub.add_parser("topology", help="print the spectral report for a topology")
    p_top.add_argument("--kind", required=True, choices=TOPOLOGY_KINDS)
    p_top.add_argument("--K", required=True, type=int)
    p_top.add_argument("--weights", choices=("metropolis", "uniform"))
    p_top.add_argument("--edge-probability", type=float)
    p_top.add_argument("--seed", type=int, default=0)
    p_top.add_argument("--csv", action="store_true", help="also print the dense matrix as CSV")

    p_theory = sub.add_parser("theory", help="print the theory report without simulating")
    p_theory.add_argument("config")
    p_theory.add_argument("--json", action="store_true")
    p_theory.add_argument("--mu", type=float, help="step size to evaluate (default: first method's)")

    p_sweep = sub.add_parser("sweep", help="repeat an experiment across a parameter grid")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--vary", required=True, choices=("mu", "K"))
    p_sweep.add_argument("--values", required=True, nargs="+")
    p_sweep.add_argument("--output", help="output path prefix (overrides the config's 'output')")

    return parser


def _cmd_run(args) -> int:
    config = runner.load_config(args.config)
    prefix = args.output or config.output
    if not prefix:
        raise ConfigError("no output path: set 'output' in the config or pass --output")
    result = runner.execute(config, output_prefix=prefix)
    for method, ss in result.steady.items():
        flag = "" if ss.stationary else "  [non-stationary window]"
        print(f"{method}: steady-state {ss.mean_db:.3f} dB +- {ss.std_error_db:.3f}{flag}")
    for method, message in result.failures.items():
        print(f"{method}: DIVERGED ({message})")
    if result.report is not None:
        print(f"theory: {result.report.msd_theory_db:.3f} dB, regime {result.report.regime.winner}")
    written = [p for p in (result.csv_path, result.json_path) if p]
    print(f"wrote {' and '.join(written)}")
    return NUMERIC_EXIT if result.failures else 0


def _cmd_topology(args) -> int:
    graph = build_graph(args.kind, args.K, args.edge_probability, args.seed)
    weights = args.weights or ("uniform" if args.kind == "complete" else "metropolis")
    comb = uniform_weights(graph) if weights == "uniform" else metropolis_weights(graph)
    print(f"kind = {args.kind}")
    print(f"K = {graph.K}")
    print(f"edges = {len(graph.edges)}")
    print(f"weights = {weights}")
    print(f"lambda2 = {comb.lambda2!r}")
    print(f"lambda_min = {comb.lambda_min!r}")
    print(f"lambda = {comb.lam!r}")
    print(f"gap = {comb.gap!r}")
    if args.csv:
        for row in comb.A:
            print(",".join(repr(float(x)) for x in row))
    return 0


def _cmd_theory(args) -> int:
    config = runner.load_config(args.config)
    _, comb = runner.build_topology(config)
    problem = runner.build_problem(config)
    mu = args.mu if args.mu is not None else config.mus[config.methods[0]]
    report = theory.build_report(problem, comb, mu)
    payload = report.as_dict()
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for key, value in payload.items():
            print(f"{key} = {value}")
    return 0


def _cmd_sweep(args) -> int:
    config = runner.load_config(args.config)
    prefix = args.output or config.output
    if not prefix:
        raise ConfigError("no output path: set 'output' in the config or pass --output")
    results = runner.sweep(config, args.vary, args.values, output_prefix=prefix)
    header = ["value"] + config.methods
    print("\t".join(header))
    failed = False
    for value, res in zip(args.values, results):
        cells = [value]
        for m in config.methods:
            if m in res.failures:
                cells.append("diverged")
                failed = True
            else:
                cells.append(f"{res.steady[m].mean_db:.3f}")
        print("\t".join(cells))
    return NUMERIC_EXIT if failed else 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "topology": _cmd_topology,
        "theory": _cmd_theory,
        "sweep": _cmd_sweep,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, InvalidInputError, FileNotFoundError) as exc:
        print(f"diffnet: error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except DiffnetError as exc:
        print(f"diffnet: numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())
