"""Shared helpers for the test suite."""

from __future__ import annotations

import random

from pistack.domain import DEFAULT_CLASSES, PiContainer, Product
from pistack.routing import EdgeAttrs, LogisticsGraph, NodeAttrs

RISKS = (0.0, 0.25, 0.5, 1.0)
TIME_FACTORS = (0.25, 0.5, 1.0)
COST_FACTORS = (1.0, 2.0, 3.0)


def graph_from_edges(edges, nodes=None, **node_kwargs) -> LogisticsGraph:
    """Build a graph from (src, dst, time, cost[, risk]) tuples."""
    node_ids = set()
    edge_attrs = []
    for spec in edges:
        src, dst, t, c = spec[0], spec[1], spec[2], spec[3]
        risk = spec[4] if len(spec) > 4 else 0.0
        extra = spec[5] if len(spec) > 5 else {}
        node_ids.update((src, dst))
        edge_attrs.append(EdgeAttrs(src=src, dst=dst, base_time=t, base_cost=float(c), risk=risk, **extra))
    if nodes:
        node_ids.update(nodes)
    node_list = [NodeAttrs(node_id=n, **node_kwargs) for n in sorted(node_ids)]
    return LogisticsGraph.build(node_list, edge_attrs)


def random_graph(rng: random.Random, n_nodes: int, edge_prob: float = 0.4) -> LogisticsGraph:
    """Random directed graph with integer attributes and exact-binary extras."""
    names = [chr(ord("A") + i) for i in range(n_nodes)]
    nodes = [NodeAttrs(node_id=name) for name in names]
    edges = []
    for a in names:
        for b in names:
            if a != b and rng.random() < edge_prob:
                edges.append(
                    EdgeAttrs(
                        src=a,
                        dst=b,
                        base_time=rng.randint(1, 20),
                        base_cost=float(rng.randint(0, 20)),
                        risk=rng.choice(RISKS),
                        expedite_time_factor=rng.choice(TIME_FACTORS),
                        expedite_cost_factor=rng.choice(COST_FACTORS),
                    )
                )
    return LogisticsGraph.build(nodes, edges)


def make_product(quantity=10, unit_weight=100.0, unit_volume=1.0, **flags) -> Product:
    return Product(
        product_code=flags.pop("code", "P1"),
        description="test batch",
        quantity=quantity,
        unit_weight=unit_weight,
        unit_volume=unit_volume,
        **flags,
    )


def make_container(cid="C1", class_id="standard", location="A", contents=None, **kwargs) -> PiContainer:
    return PiContainer(
        container_id=cid,
        cls=DEFAULT_CLASSES[class_id],
        location=location,
        contents=contents,
        **kwargs,
    )
