"""Shared graph builders for the demo scripts."""

import random

from pistack.routing import EdgeAttrs, LogisticsGraph, NodeAttrs


def build_demo_graph() -> LogisticsGraph:
    """PORT to CITY: a fast/expensive corridor, a cheap detour, a risky shortcut."""
    nodes = [NodeAttrs(node_id=n) for n in ("PORT", "RAIL", "CANAL", "PASS", "CITY")]
    edges = [
        # fast but pricey rail corridor
        EdgeAttrs("PORT", "RAIL", base_time=60, base_cost=40.0, risk=0.0,
                  expedite_time_factor=0.5, expedite_cost_factor=2.0),
        EdgeAttrs("RAIL", "CITY", base_time=60, base_cost=40.0, risk=0.0,
                  expedite_time_factor=0.5, expedite_cost_factor=2.0),
        # slow, cheap canal detour
        EdgeAttrs("PORT", "CANAL", base_time=300, base_cost=5.0, risk=0.0),
        EdgeAttrs("CANAL", "CITY", base_time=300, base_cost=5.0, risk=0.0),
        # short mountain pass, cheap and quick but risky
        EdgeAttrs("PORT", "PASS", base_time=90, base_cost=10.0, risk=0.5),
        EdgeAttrs("PASS", "CITY", base_time=90, base_cost=10.0, risk=0.5),
    ]
    return LogisticsGraph.build(nodes, edges)


def random_demo_graph(rng: random.Random):
    n = rng.randint(3, 7)
    names = [chr(ord("A") + i) for i in range(n)]
    nodes = [NodeAttrs(node_id=name) for name in names]
    edges = []
    for a in names:
        for b in names:
            if a != b and rng.random() < 0.45:
                edges.append(
                    EdgeAttrs(
                        src=a, dst=b,
                        base_time=rng.randint(1, 20),
                        base_cost=float(rng.randint(0, 20)),
                        risk=rng.choice((0.0, 0.25, 0.5)),
                        expedite_time_factor=rng.choice((0.25, 0.5, 1.0)),
                        expedite_cost_factor=rng.choice((1.0, 2.0, 3.0)),
                    )
                )
    return LogisticsGraph.build(nodes, edges), names[0], names[-1]
