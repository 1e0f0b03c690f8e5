"""Logistics graph and multi-criteria routing.

The production router is a label-setting search minimizing a weighted sum
of (time, cost, risk) over simple paths; a Pareto enumerator covers the
multi-criteria front on small instances. Both are pure functions over an
immutable graph snapshot; disruptions produce a new snapshot.

Scalarized scores are accumulated hop by hop in path order so that two
algorithms walking the same path produce bit-identical floats.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

NODE_KINDS = ("hub", "depot", "consignor_site", "consignee_site", "disposal")
MODES = ("normal", "expedited")

DEFAULT_PARETO_NODE_BOUND = 12


class RoutingError(Exception):
    """Base class for routing failures; `code` is the stable error name."""

    code = "routing_error"


class NoPathError(RoutingError):
    code = "no_path"


class UnknownEdgeError(RoutingError):
    code = "unknown_edge"


class InstanceTooLargeError(RoutingError):
    code = "instance_too_large"


@dataclass(frozen=True)
class NodeAttrs:
    node_id: str
    kind: str = "hub"
    accepts_dangerous: bool = True
    reefer_plugs: int = 0
    is_container_depot: bool = False

    def __post_init__(self) -> None:
        if self.kind not in NODE_KINDS:
            raise ValueError(f"unknown node kind {self.kind!r}")
        if self.reefer_plugs < 0:
            raise ValueError("reefer_plugs must be >= 0")

    @property
    def is_depot(self) -> bool:
        return self.kind == "depot" or self.is_container_depot


@dataclass(frozen=True)
class EdgeAttrs:
    src: str
    dst: str
    base_time: int  # minutes
    base_cost: float
    risk: float = 0.0
    expedite_time_factor: float = 1.0
    expedite_cost_factor: float = 1.0
    open: bool = True

    def __post_init__(self) -> None:
        if self.base_time <= 0:
            raise ValueError(f"edge {self.src}->{self.dst}: base_time must be > 0")
        if self.base_cost < 0:
            raise ValueError(f"edge {self.src}->{self.dst}: base_cost must be >= 0")
        if not 0.0 <= self.risk <= 1.0:
            raise ValueError(f"edge {self.src}->{self.dst}: risk must be in [0, 1]")
        if not 0.0 < self.expedite_time_factor <= 1.0:
            raise ValueError(f"edge {self.src}->{self.dst}: expedite_time_factor must be in (0, 1]")
        if self.expedite_cost_factor < 1.0:
            raise ValueError(f"edge {self.src}->{self.dst}: expedite_cost_factor must be >= 1")

    def time(self, mode: str) -> float:
        return self.base_time * self.expedite_time_factor if mode == "expedited" else float(self.base_time)

    def cost(self, mode: str) -> float:
        return self.base_cost * self.expedite_cost_factor if mode == "expedited" else self.base_cost


def travel_minutes(edge: EdgeAttrs, mode: str) -> int:
    """Integer traversal duration for the simulation clock.

    Expedited durations are computed in exact rational arithmetic and
    rounded up, so 100 min at factor 0.3 is 30, never 31 from float noise.
    """
    if mode != "expedited":
        return edge.base_time
    exact = edge.base_time * Fraction(str(edge.expedite_time_factor))
    return max(1, math.ceil(exact))


@dataclass(frozen=True)
class CriteriaWeights:
    w_time: float = 1.0
    w_cost: float = 1.0
    w_risk: float = 1.0

    def __post_init__(self) -> None:
        if min(self.w_time, self.w_cost, self.w_risk) < 0:
            raise ValueError("criteria weights must be >= 0")
        if self.w_time + self.w_cost + self.w_risk <= 0:
            raise ValueError("at least one criteria weight must be positive")


def hop_score(edge: EdgeAttrs, mode: str, weights: CriteriaWeights) -> float:
    """Scalarized contribution of one hop. Fixed operation order."""
    return (weights.w_time * edge.time(mode) + weights.w_cost * edge.cost(mode)) + weights.w_risk * edge.risk


def best_mode(edge: EdgeAttrs, weights: CriteriaWeights, allow_expedite: bool) -> str:
    """Per-hop mode choice: expedite only when it strictly lowers the score."""
    if not allow_expedite:
        return "normal"
    return "expedited" if hop_score(edge, "expedited", weights) < hop_score(edge, "normal", weights) else "normal"


@dataclass(frozen=True)
class Hop:
    edge: EdgeAttrs
    mode: str = "normal"


@dataclass(frozen=True)
class Route:
    """An ordered sequence of hops with per-mode totals.

    Totals are folded left to right over the hops, matching how every
    search algorithm in this package accumulates them.
    """

    hops: tuple[Hop, ...]
    total_time: float
    total_cost: float
    total_risk: float

    @classmethod
    def from_hops(cls, hops: tuple[Hop, ...] | list[Hop]) -> "Route":
        t = c = r = 0.0
        for hop in hops:
            t += hop.edge.time(hop.mode)
            c += hop.edge.cost(hop.mode)
            r += hop.edge.risk
        return cls(tuple(hops), t, c, r)

    def nodes(self) -> tuple[str, ...]:
        if not self.hops:
            return ()
        return (self.hops[0].edge.src,) + tuple(h.edge.dst for h in self.hops)

    @property
    def src(self) -> str:
        return self.hops[0].edge.src

    @property
    def dst(self) -> str:
        return self.hops[-1].edge.dst

    def check(self) -> None:
        """Assert structural invariants (contiguity, open edges, totals)."""
        if not self.hops:
            raise ValueError("route must have at least one hop")
        for a, b in zip(self.hops, self.hops[1:]):
            if a.edge.dst != b.edge.src:
                raise ValueError(f"route not contiguous at {a.edge.dst} -> {b.edge.src}")
        if any(not h.edge.open for h in self.hops):
            raise ValueError("route uses a closed edge")
        ref = Route.from_hops(self.hops)
        if (ref.total_time, ref.total_cost, ref.total_risk) != (self.total_time, self.total_cost, self.total_risk):
            raise ValueError("route totals do not match its hops")


def route_cost(route: Route, weights: CriteriaWeights) -> float:
    """Shared scoring used by the router surface, reports and the CLI."""
    return (
        weights.w_time * route.total_time
        + weights.w_cost * route.total_cost
        + weights.w_risk * route.total_risk
    )


@dataclass(frozen=True)
class LogisticsGraph:
    """Immutable snapshot of nodes and directed edges.

    At most one edge per (src, dst) pair; parallel edges would make the
    node-sequence tie-break ambiguous and are rejected at construction.
    """

    nodes: dict[str, NodeAttrs] = field(default_factory=dict)
    edges: dict[tuple[str, str], EdgeAttrs] = field(default_factory=dict)

    @classmethod
    def build(cls, nodes: list[NodeAttrs], edges: list[EdgeAttrs]) -> "LogisticsGraph":
        node_map: dict[str, NodeAttrs] = {}
        for n in nodes:
            if n.node_id in node_map:
                raise ValueError(f"duplicate node id {n.node_id!r}")
            node_map[n.node_id] = n
        edge_map: dict[tuple[str, str], EdgeAttrs] = {}
        for e in edges:
            if e.src not in node_map or e.dst not in node_map:
                raise ValueError(f"edge {e.src}->{e.dst} references an unknown node")
            if e.src == e.dst:
                raise ValueError(f"self-loop edge at {e.src!r}")
            key = (e.src, e.dst)
            if key in edge_map:
                raise ValueError(f"duplicate edge {e.src}->{e.dst}")
            edge_map[key] = e
        return cls(node_map, edge_map)

    def out_edges(self, node_id: str) -> list[EdgeAttrs]:
        """Outgoing edges in deterministic (destination id) order."""
        return sorted(
            (e for (s, _), e in self.edges.items() if s == node_id),
            key=lambda e: e.dst,
        )

    def open_out_edges(self, node_id: str) -> list[EdgeAttrs]:
        return [e for e in self.out_edges(node_id) if e.open]

    def edge(self, src: str, dst: str) -> EdgeAttrs:
        try:
            return self.edges[(src, dst)]
        except KeyError:
            raise UnknownEdgeError(f"unknown_edge: {src}->{dst}") from None

    def node_ids(self) -> list[str]:
        return sorted(self.nodes)


def apply_disruption(
    graph: LogisticsGraph,
    edge_ref: tuple[str, str],
    event: str,
    multiplier: float | None = None,
) -> LogisticsGraph:
    """Return a new graph snapshot with one edge's attributes updated.

    `close` and `reopen` toggle availability; surges multiply cost or time
    and persist until explicitly reversed. Surged times are rounded up to
    keep the clock integral.
    """
    old = graph.edge(*edge_ref)
    if event == "close":
        new = replace(old, open=False)
    elif event == "reopen":
        new = replace(old, open=True)
    elif event == "cost_surge":
        if multiplier is None or multiplier <= 0:
            raise ValueError("cost_surge requires a positive multiplier")
        new = replace(old, base_cost=old.base_cost * multiplier)
    elif event == "delay_surge":
        if multiplier is None or multiplier <= 0:
            raise ValueError("delay_surge requires a positive multiplier")
        surged = max(1, math.ceil(old.base_time * Fraction(str(multiplier))))
        new = replace(old, base_time=surged)
    else:
        raise ValueError(f"unknown disruption event {event!r}")
    edges = dict(graph.edges)
    edges[edge_ref] = new
    return LogisticsGraph(graph.nodes, edges)


def shortest_path_scalarized(
    graph: LogisticsGraph,
    src: str,
    dst: str,
    weights: CriteriaWeights,
    allow_expedite: bool = False,
) -> Route:
    """Minimum weighted-sum route over open edges.

    Ties break on fewer hops, then the lexicographically smallest node-id
    sequence, which makes the result unique and replay-stable. Hop scores
    are non-negative, so the label-setting search never needs an explicit
    simple-path constraint: any walk with a repeated node is strictly
    beaten by its shortcut.
    """
    if src == dst:
        raise ValueError("src and dst must differ")
    if src not in graph.nodes or dst not in graph.nodes:
        raise ValueError("src and dst must both exist in the graph")

    # Heap entries: (score, hop count, node sequence). The sequence is both
    # the tie-break and the path reconstruction.
    heap: list[tuple[float, int, tuple[str, ...]]] = [(0.0, 0, (src,))]
    settled: set[str] = set()
    while heap:
        score, hops, path = heapq.heappop(heap)
        node = path[-1]
        if node in settled:
            continue
        settled.add(node)
        if node == dst:
            route_hops = []
            for a, b in zip(path, path[1:]):
                edge = graph.edges[(a, b)]
                route_hops.append(Hop(edge, best_mode(edge, weights, allow_expedite)))
            return Route.from_hops(route_hops)
        for edge in graph.open_out_edges(node):
            if edge.dst in settled:
                continue
            mode = best_mode(edge, weights, allow_expedite)
            heapq.heappush(heap, (score + hop_score(edge, mode, weights), hops + 1, path + (edge.dst,)))
    raise NoPathError(f"no_path: {src} -> {dst}")


def _dominates(a: tuple[float, float, float], b: tuple[float, float, float]) -> bool:
    """Strict Pareto domination: <= everywhere, < somewhere."""
    return a != b and a[0] <= b[0] and a[1] <= b[1] and a[2] <= b[2]


def pareto_paths(
    graph: LogisticsGraph,
    src: str,
    dst: str,
    max_paths: int = 16,
    node_bound: int = DEFAULT_PARETO_NODE_BOUND,
) -> list[Route]:
    """Non-dominated routes under (time, cost, risk), normal mode.

    Exact on small instances only; larger graphs are refused. A label is
    pruned only when another label at the same node strictly dominates it
    *and* uses a subset of its visited nodes, so every completion of the
    pruned label stays dominated — pruning is sound and the front complete.
    Equal criteria vectors never dominate each other, so distinct paths
    with identical totals all appear on the front.
    """
    if len(graph.nodes) > node_bound:
        raise InstanceTooLargeError(f"instance_too_large: {len(graph.nodes)} nodes > bound {node_bound}")
    if src == dst:
        raise ValueError("src and dst must differ")
    if src not in graph.nodes or dst not in graph.nodes:
        raise ValueError("src and dst must both exist in the graph")
    if max_paths < 1:
        raise ValueError("max_paths must be >= 1")

    start = ((0.0, 0.0, 0.0), (src,))
    heap: list[tuple[tuple[float, float, float], int, tuple[str, ...]]] = [(start[0], 0, start[1])]
    labels_at: dict[str, list[tuple[tuple[float, float, float], tuple[str, ...]]]] = {src: [start]}
    finished: list[tuple[tuple[float, float, float], tuple[str, ...]]] = []
    while heap:
        vec, _hops, path = heapq.heappop(heap)
        node = path[-1]
        if node == dst:
            finished.append((vec, path))
            continue
        for edge in graph.open_out_edges(node):
            if edge.dst in path:
                continue  # simple paths only
            nvec = (vec[0] + edge.time("normal"), vec[1] + edge.cost("normal"), vec[2] + edge.risk)
            npath = path + (edge.dst,)
            npath_set = set(npath)
            pruned = False
            for ovec, opath in labels_at.get(edge.dst, ()):
                if _dominates(ovec, nvec) and set(opath) <= npath_set:
                    pruned = True
                    break
            if pruned:
                continue
            labels_at.setdefault(edge.dst, []).append((nvec, npath))
            heapq.heappush(heap, (nvec, len(npath) - 1, npath))

    if not finished:
        raise NoPathError(f"no_path: {src} -> {dst}")

    front = [
        (vec, path)
        for vec, path in finished
        if not any(_dominates(ovec, vec) for ovec, _ in finished)
    ]
    # Canonical order: unit-weight score, then hops, then node sequence.
    front.sort(key=lambda item: (item[0][0] + item[0][1] + item[0][2], len(item[1]), item[1]))
    routes = []
    for _vec, path in front[:max_paths]:
        hops = tuple(Hop(graph.edges[(a, b)], "normal") for a, b in zip(path, path[1:]))
        routes.append(Route.from_hops(hops))
    return routes
