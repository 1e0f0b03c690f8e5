"""Command-line entry point.

Five subcommands: validate a scenario, run it, query routes, cross-check
the router against the brute-force oracle, and rebuild a report from a
saved trace. Exit codes are stable: 0 success, 1 invalid scenario,
2 aborted run (simulation-bug class), 3 I/O failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from pistack.kernel import SimulationBugError
from pistack.routing import (
    CriteriaWeights,
    InstanceTooLargeError,
    NoPathError,
    Route,
    pareto_paths,
    route_cost,
    shortest_path_scalarized,
)
from pistack.routing_oracle import best_route_bruteforce
from pistack.scenario_io import (
    ScenarioError,
    TruncatedTraceError,
    emit_trace,
    parse_scenario,
    parse_trace,
    summarize,
    validate_scenario,
)
from pistack.simulation import run_scenario

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ABORTED = 2
EXIT_IO = 3


def _load_scenario(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    try:
        return parse_scenario(text)
    except ScenarioError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _parse_weights(text: str) -> CriteriaWeights:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("weights must be three comma-separated numbers: t,c,r")
    try:
        t, c, r = (float(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))
    return CriteriaWeights(t, c, r)


def _format_route(route: Route, weights: CriteriaWeights) -> str:
    legs = [route.hops[0].edge.src]
    for hop in route.hops:
        legs.append(f"-[{hop.mode}]-> {hop.edge.dst}")
    return (
        " ".join(legs)
        + f"\n  time={route.total_time:g} cost={route.total_cost:g} risk={route.total_risk:g}"
        + f" score={route_cost(route, weights):g}"
    )


def cmd_validate(args) -> int:
    scenario = _load_scenario(args.scenario)
    report = validate_scenario(scenario)
    for finding in report.findings:
        print(f"{finding.severity}[{finding.code}]: {finding.message}")
    if report.passed:
        print("scenario OK")
        return EXIT_OK
    return EXIT_INVALID


def cmd_run(args) -> int:
    scenario = _load_scenario(args.scenario)
    report = validate_scenario(scenario)
    if not report.passed:
        for finding in report.findings:
            if finding.severity == "error":
                print(f"error[{finding.code}]: {finding.message}", file=sys.stderr)
        return EXIT_INVALID
    seed = args.seed
    if seed is None and os.environ.get("PI_STACK_SEED"):
        try:
            seed = int(os.environ["PI_STACK_SEED"])
        except ValueError:
            print("error: PI_STACK_SEED must be an integer", file=sys.stderr)
            return EXIT_INVALID
    try:
        result = run_scenario(scenario, seed=seed, horizon=args.horizon, no_faults=args.no_faults)
    except SimulationBugError as exc:
        print(f"aborted[{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    metrics = summarize(result.trace)
    if args.trace:
        try:
            emit_trace(result.trace, args.trace)
        except OSError as exc:
            print(f"error: cannot write trace: {exc}", file=sys.stderr)
            return EXIT_IO
    report_text = metrics.table() + "\n" + metrics.to_json() + "\n"
    if args.report:
        try:
            with open(args.report, "w", encoding="utf-8") as fh:
                fh.write(report_text)
        except OSError as exc:
            print(f"error: cannot write report: {exc}", file=sys.stderr)
            return EXIT_IO
    else:
        print(report_text, end="")
    return EXIT_OK


def cmd_routes(args) -> int:
    scenario = _load_scenario(args.scenario)
    weights = args.weights or scenario.params.weights
    graph = scenario.graph
    if args.src not in graph.nodes or args.dst not in graph.nodes:
        print("error: --from/--to must name existing nodes", file=sys.stderr)
        return EXIT_INVALID
    if args.pareto:
        try:
            front = pareto_paths(graph, args.src, args.dst, max_paths=args.max_paths,
                                 node_bound=scenario.params.pareto_node_bound)
        except InstanceTooLargeError as exc:
            print(f"error[instance_too_large]: {exc}", file=sys.stderr)
            return EXIT_INVALID
        except NoPathError:
            print(f"UNREACHABLE: {args.src} -> {args.dst}")
            return EXIT_OK
        print(f"{len(front)} non-dominated route(s):")
        for route in front:
            print(_format_route(route, weights))
        return EXIT_OK
    try:
        route = shortest_path_scalarized(graph, args.src, args.dst, weights,
                                         allow_expedite=args.expedite or scenario.params.allow_expedite)
    except NoPathError:
        print(f"UNREACHABLE: {args.src} -> {args.dst}")
        return EXIT_OK
    print(_format_route(route, weights))
    return EXIT_OK


def cmd_oracle(args) -> int:
    scenario = _load_scenario(args.scenario)
    graph = scenario.graph
    if len(graph.nodes) > scenario.params.pareto_node_bound:
        print(f"error[instance_too_large]: {len(graph.nodes)} nodes exceed the oracle bound "
              f"{scenario.params.pareto_node_bound}", file=sys.stderr)
        return EXIT_INVALID
    weights = args.weights or scenario.params.weights
    allow_expedite = scenario.params.allow_expedite
    try:
        oracle_route, oracle_score = best_route_bruteforce(graph, args.src, args.dst, weights, allow_expedite)
    except NoPathError:
        try:
            shortest_path_scalarized(graph, args.src, args.dst, weights, allow_expedite)
        except NoPathError:
            print(f"UNREACHABLE (both agree): {args.src} -> {args.dst}")
            return EXIT_OK
        print("DISAGREE: oracle found no path but the router did", file=sys.stderr)
        return EXIT_ABORTED
    try:
        fast = shortest_path_scalarized(graph, args.src, args.dst, weights, allow_expedite)
    except NoPathError:
        print("DISAGREE: router found no path but the oracle did", file=sys.stderr)
        return EXIT_ABORTED
    fast_score = 0.0
    from pistack.routing import hop_score

    for hop in fast.hops:
        fast_score += hop_score(hop.edge, hop.mode, weights)
    print("oracle:")
    print(_format_route(oracle_route, weights))
    print("router:")
    print(_format_route(fast, weights))
    if fast_score == oracle_score and fast.nodes() == oracle_route.nodes():
        print("AGREE")
        return EXIT_OK
    print(f"DISAGREE: router score {fast_score!r} vs oracle {oracle_score!r}", file=sys.stderr)
    return EXIT_ABORTED


def cmd_report(args) -> int:
    try:
        trace = parse_trace(args.trace)
    except OSError as exc:
        print(f"error: cannot read {args.trace}: {exc}", file=sys.stderr)
        return EXIT_IO
    except TruncatedTraceError as exc:
        print(f"error[truncated_trace]: {exc}", file=sys.stderr)
        return EXIT_INVALID
    metrics = summarize(trace)
    print(metrics.table())
    print(metrics.to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pistack",
        description="Deterministic simulator of a seven-layer logistics stack.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and cross-check a scenario file")
    p.add_argument("scenario", help="path to the scenario JSON document")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="execute a scenario and write trace/report")
    p.add_argument("scenario", help="path to the scenario JSON document")
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario seed (default: scenario value, or PI_STACK_SEED)")
    p.add_argument("--horizon", type=int, default=None,
                   help="simulation horizon in minutes (default: scenario value)")
    p.add_argument("--trace", default=None, help="write the JSONL trace to this path (default: discard)")
    p.add_argument("--report", default=None, help="write the report to this path (default: stdout)")
    p.add_argument("--no-faults", action="store_true",
                   help="suppress the fault plan (baseline for paired comparisons)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("routes", help="print the best route or the Pareto front")
    p.add_argument("scenario", help="path to the scenario JSON document")
    p.add_argument("--from", dest="src", required=True, help="origin node id")
    p.add_argument("--to", dest="dst", required=True, help="destination node id")
    p.add_argument("--weights", type=_parse_weights, default=None,
                   help="criteria weights t,c,r (default: scenario weights)")
    p.add_argument("--expedite", action="store_true", help="allow per-hop expedited mode")
    p.add_argument("--pareto", action="store_true", help="print the non-dominated front instead")
    p.add_argument("--max-paths", type=int, default=16, help="front truncation size (default 16)")
    p.set_defaults(func=cmd_routes)

    p = sub.add_parser("oracle", help="brute-force check of the production router")
    p.add_argument("scenario", help="path to the scenario JSON document")
    p.add_argument("--from", dest="src", required=True, help="origin node id")
    p.add_argument("--to", dest="dst", required=True, help="destination node id")
    p.add_argument("--weights", type=_parse_weights, default=None,
                   help="criteria weights t,c,r (default: scenario weights)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("report", help="recompute the metrics report from a saved trace")
    p.add_argument("trace", help="path to a JSONL trace file")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
