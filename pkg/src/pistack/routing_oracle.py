"""Brute-force routing oracle.

Exhaustively enumerates every simple path (and, when expediting is
allowed, every per-hop mode assignment) and keeps the best by the same
total order the production router uses. Deliberately naive: this is the
reference the fast router is judged against, so it shares only the
objective definition, never the search strategy.
"""

from __future__ import annotations

from itertools import product as iter_product

from pistack.routing import (
    CriteriaWeights,
    Hop,
    LogisticsGraph,
    NoPathError,
    Route,
    hop_score,
)

MODE_RANK = {"normal": 0, "expedited": 1}


def enumerate_simple_paths(graph: LogisticsGraph, src: str, dst: str) -> list[tuple[str, ...]]:
    """All simple src->dst paths over open edges, in DFS order."""
    paths: list[tuple[str, ...]] = []

    def walk(path: tuple[str, ...]) -> None:
        node = path[-1]
        if node == dst:
            paths.append(path)
            return
        for edge in graph.open_out_edges(node):
            if edge.dst not in path:
                walk(path + (edge.dst,))

    walk((src,))
    return paths


def best_route_bruteforce(
    graph: LogisticsGraph,
    src: str,
    dst: str,
    weights: CriteriaWeights,
    allow_expedite: bool = False,
) -> tuple[Route, float]:
    """Optimal route and score by full enumeration of paths and modes."""
    best_key = None
    best_hops: tuple[Hop, ...] | None = None
    for path in enumerate_simple_paths(graph, src, dst):
        edges = [graph.edges[(a, b)] for a, b in zip(path, path[1:])]
        mode_choices = ("normal", "expedited") if allow_expedite else ("normal",)
        for modes in iter_product(mode_choices, repeat=len(edges)):
            score = 0.0
            for edge, mode in zip(edges, modes):
                score += hop_score(edge, mode, weights)
            key = (score, len(edges), path, tuple(MODE_RANK[m] for m in modes))
            if best_key is None or key < best_key:
                best_key = key
                best_hops = tuple(Hop(e, m) for e, m in zip(edges, modes))
    if best_hops is None:
        raise NoPathError(f"no_path: {src} -> {dst}")
    return Route.from_hops(best_hops), best_key[0]


def scalarized_optimum(
    graph: LogisticsGraph,
    src: str,
    dst: str,
    weights: CriteriaWeights,
    allow_expedite: bool = False,
) -> float:
    """Score of the brute-force optimum (raises NoPathError if unreachable)."""
    _route, score = best_route_bruteforce(graph, src, dst, weights, allow_expedite)
    return score


def pareto_front_bruteforce(graph: LogisticsGraph, src: str, dst: str) -> list[Route]:
    """Non-dominated normal-mode routes by pairwise domination filtering."""
    candidates = []
    for path in enumerate_simple_paths(graph, src, dst):
        edges = [graph.edges[(a, b)] for a, b in zip(path, path[1:])]
        t = c = r = 0.0
        for edge in edges:
            t += edge.time("normal")
            c += edge.cost("normal")
            r += edge.risk
        candidates.append(((t, c, r), path, edges))
    if not candidates:
        raise NoPathError(f"no_path: {src} -> {dst}")

    def dominated(me) -> bool:
        (t, c, r), _path, _edges = me
        for (ot, oc, orr), opath, _ in candidates:
            if opath == me[1]:
                continue
            if (ot, oc, orr) != (t, c, r) and ot <= t and oc <= c and orr <= r:
                return True
        return False

    front = [cand for cand in candidates if not dominated(cand)]
    front.sort(key=lambda cand: (cand[0][0] + cand[0][1] + cand[0][2], len(cand[1]) - 1, cand[1]))
    return [Route.from_hops(tuple(Hop(e, "normal") for e in edges)) for _vec, _path, edges in front]
