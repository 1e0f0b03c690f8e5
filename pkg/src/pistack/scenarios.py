"""Synthetic scenario construction.

Deterministic generators used by the test suite and the demo scripts:
`minimal_scenario` is the smallest valid document, `synthetic_scenario`
builds seeded random networks with demand mixes and optional fault plans,
and `acceptance_suite` assembles the standard battery of runs.
"""

from __future__ import annotations

import random
from typing import Any

EXACT_RISKS = (0.0, 0.25, 0.5)
EXPEDITE_TIME_FACTORS = (0.25, 0.5)
EXPEDITE_COST_FACTORS = (2.0, 3.0)


def minimal_scenario() -> dict[str, Any]:
    """Two nodes, one edge each way, one mean, one demand."""
    return {
        "schema_version": 1,
        "graph": {
            "nodes": [
                {"id": "A", "kind": "consignor_site", "is_container_depot": True},
                {"id": "B", "kind": "consignee_site", "reefer_plugs": 2},
            ],
            "edges": [
                {"from": "A", "to": "B", "base_time": 120, "base_cost": 10},
                {"from": "B", "to": "A", "base_time": 120, "base_cost": 10},
            ],
        },
        "means": [
            {"id": "M1", "kind": "truck", "capacity": 10, "max_weight": 240000.0, "home": "A"},
        ],
        "depots": [
            {"node": "A", "stock": {"standard": 4}, "min": {"standard": 0}, "max": {"standard": 8}},
        ],
        "demands": [
            {
                "id": "D1",
                "product": {"code": "P1", "quantity": 10, "unit_weight": 100.0, "unit_volume": 1.0},
                "consignor": "A",
                "consignee": "B",
                "deadline": 2000,
                "containers": 2,
                "release_time": 10,
                "payment": {"total": 100.0, "milestones": [["departed", 30.0]]},
            }
        ],
        "faults": [],
        "params": {"disposal_node": "A", "horizon": 10080},
    }


def synthetic_scenario(
    seed: int,
    n_nodes: int = 5,
    n_demands: int = 3,
    faults: list[dict] | None = None,
    allow_expedite: bool = False,
    horizon: int = 40320,
    perishable_share: float = 0.0,
    dangerous_share: float = 0.0,
    fragile_share: float = 0.2,
    spares: int = 0,
    reefer_stock_override: int | None = None,
    reject_dangerous_at_consignee: bool = False,
    reposition_pull: bool = False,
    means_per_node: int = 2,
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> dict[str, Any]:
    """A seeded random ring-with-chords network plus a demand mix.

    The ring is bidirectional, so every node stays reachable under any
    single chord closure. Consignors always hold depot stock for what
    their demands need (unless an override engineers a shortage).
    """
    rng = random.Random(seed)
    if n_nodes < 2:
        raise ValueError("need at least 2 nodes")
    node_ids = [f"N{i:02d}" for i in range(n_nodes)]
    disposal = node_ids[-1] if n_nodes >= 3 else None

    consignors = [node_ids[0]]
    if n_nodes >= 5:
        consignors.append(node_ids[1])
    consignee_pool = [n for n in node_ids if n not in consignors and n != disposal]
    if not consignee_pool:
        consignee_pool = [node_ids[-1]]

    nodes = []
    for i, nid in enumerate(node_ids):
        kind = "hub"
        if nid in consignors:
            kind = "consignor_site"
        elif nid == disposal:
            kind = "disposal"
        elif nid in consignee_pool[:2]:
            kind = "consignee_site"
        elif n_nodes >= 6 and i == n_nodes // 2:
            kind = "depot"
        nodes.append(
            {
                "id": nid,
                "kind": kind,
                "accepts_dangerous": not (reject_dangerous_at_consignee and nid == consignee_pool[0]),
                "reefer_plugs": 0 if kind == "disposal" else rng.randint(2, 6),
                "is_container_depot": nid in consignors or kind == "depot",
            }
        )

    edges = []
    seen = set()

    def add_edge(a: str, b: str) -> None:
        if (a, b) in seen or a == b:
            return
        seen.add((a, b))
        edges.append(
            {
                "from": a,
                "to": b,
                "base_time": rng.randint(30, 480),
                "base_cost": float(rng.randint(1, 40)),
                "risk": rng.choice(EXACT_RISKS),
                "expedite_time_factor": rng.choice(EXPEDITE_TIME_FACTORS),
                "expedite_cost_factor": rng.choice(EXPEDITE_COST_FACTORS),
            }
        )

    for i in range(n_nodes):
        a, b = node_ids[i], node_ids[(i + 1) % n_nodes]
        if a != b:
            add_edge(a, b)
            add_edge(b, a)
    for i in range(n_nodes):
        for j in range(n_nodes):
            if i != j and rng.random() < 0.15:
                add_edge(node_ids[i], node_ids[j])

    means = []
    operators = ("OP-A", "OP-B")
    for i, nid in enumerate(node_ids):
        for k in range(means_per_node):
            means.append(
                {
                    "id": f"M-{nid}-{k}",
                    "kind": "truck",
                    "capacity": rng.randint(6, 12),
                    "max_weight": 240000.0,
                    "home": nid,
                    "operator": operators[(i + k) % 2],
                }
            )

    demands = []
    need: dict[str, dict[str, int]] = {c: {"standard": 0, "reefer": 0, "hazmat": 0} for c in consignors}
    for d in range(n_demands):
        consignor = consignors[d % len(consignors)]
        consignee = consignee_pool[rng.randrange(len(consignee_pool))]
        roll = rng.random()
        perishable = roll < perishable_share
        dangerous = not perishable and roll < perishable_share + dangerous_share
        cls = "reefer" if perishable else ("hazmat" if dangerous else "standard")
        containers = rng.randint(1, 3)
        spare_count = spares if d == 0 else 0
        need[consignor][cls] += containers + spare_count
        release = rng.randint(0, 240)
        demands.append(
            {
                "id": f"D{d + 1}",
                "product": {
                    "code": f"P{d + 1}",
                    "quantity": rng.randint(5, 15),
                    "unit_weight": float(rng.randint(50, 800)),
                    "unit_volume": round(rng.uniform(0.2, 1.5), 1),
                    "perishable": perishable,
                    "dangerous": dangerous,
                    "fragile": rng.random() < fragile_share,
                },
                "consignor": consignor,
                "consignee": consignee,
                "deadline": release + rng.randint(4000, 12000),
                "priority": rng.randint(1, 9),
                "containers": containers,
                "release_time": release,
                "payment": {"total": 100.0, "milestones": [["departed", 30.0]]},
                "spares": spare_count,
            }
        )

    depots = []
    for consignor in consignors:
        stock = {}
        min_level = {}
        max_level = {}
        for cls, count in need[consignor].items():
            if count == 0:
                continue
            held = count + 2
            if cls == "reefer" and reefer_stock_override is not None:
                held = reefer_stock_override
            stock[cls] = held
            min_level[cls] = 1
            max_level[cls] = held + 4
        if not stock:
            stock = {"standard": 2}
            min_level = {"standard": 0}
            max_level = {"standard": 6}
        depots.append({"node": consignor, "stock": stock, "min": min_level, "max": max_level})
    if reposition_pull and n_nodes >= 4:
        # A needy depot with nothing, and a donor holding surplus.
        needy = consignee_pool[0]
        donor = node_ids[n_nodes // 2] if node_ids[n_nodes // 2] not in (needy, disposal) else node_ids[1]
        depots.append({"node": needy, "stock": {"standard": 0}, "min": {"standard": 2}, "max": {"standard": 4}})
        if donor not in [d["node"] for d in depots]:
            depots.append({"node": donor, "stock": {"standard": 8}, "min": {"standard": 1}, "max": {"standard": 4}})

    params: dict[str, Any] = {
        "weights": {"time": weights[0], "cost": weights[1], "risk": weights[2]},
        "allow_expedite": allow_expedite,
        "horizon": horizon,
        "seed": seed,
    }
    if disposal is None:
        params["disposal_node"] = node_ids[0]

    return {
        "schema_version": 1,
        "graph": {"nodes": nodes, "edges": edges},
        "means": means,
        "depots": depots,
        "demands": demands,
        "faults": faults or [],
        "params": params,
    }


def loss_pair_scenario(seed: int, with_spare: bool) -> dict[str, Any]:
    """A scenario whose fault plan loses one container mid-flight.

    With a spare at the consignor the recovery resends it; without, the
    product is reordered after the configured delay.
    """
    doc = synthetic_scenario(
        seed,
        n_nodes=4,
        n_demands=2,
        spares=1 if with_spare else 0,
        horizon=40320,
    )
    doc["faults"] = [
        {"kind": "container_loss", "time": _first_transit_minute(doc, "D1"),
         "container": {"demand": "D1", "index": 0}},
    ]
    return doc


def _first_transit_minute(doc: dict[str, Any], demand_id: str) -> int:
    # Shortly after its release the demand's container is riding its first
    # hop: dispatch happens within the release minute when a mean is free.
    [demand] = [d for d in doc["demands"] if d["id"] == demand_id]
    return demand.get("release_time", 0) + 5


def damage_scenario(seed: int) -> dict[str, Any]:
    doc = synthetic_scenario(seed, n_nodes=4, n_demands=2, spares=1)
    doc["faults"] = [
        {"kind": "container_damage", "time": _first_transit_minute(doc, "D1"),
         "container": {"demand": "D1", "index": 0}},
    ]
    return doc


def orphan_scenario(seed: int = 7) -> dict[str, Any]:
    """One mean, two demands: the second waits at the consignor long
    enough for the orphan fault to strike it at rest."""
    return {
        "schema_version": 1,
        "graph": {
            "nodes": [
                {"id": "A", "kind": "consignor_site", "is_container_depot": True},
                {"id": "B", "kind": "consignee_site", "reefer_plugs": 2},
                {"id": "Z", "kind": "disposal"},
            ],
            "edges": [
                {"from": "A", "to": "B", "base_time": 240, "base_cost": 10.0},
                {"from": "B", "to": "A", "base_time": 240, "base_cost": 10.0},
                {"from": "A", "to": "Z", "base_time": 60, "base_cost": 5.0},
                {"from": "Z", "to": "A", "base_time": 60, "base_cost": 5.0},
                {"from": "B", "to": "Z", "base_time": 120, "base_cost": 8.0},
                {"from": "Z", "to": "B", "base_time": 120, "base_cost": 8.0},
            ],
        },
        "means": [
            {"id": "M1", "kind": "truck", "capacity": 4, "max_weight": 240000.0, "home": "A"},
        ],
        "depots": [
            {"node": "A", "stock": {"standard": 6}, "min": {"standard": 0}, "max": {"standard": 10}},
        ],
        "demands": [
            {
                "id": "D1",
                "product": {"code": "P1", "quantity": 10, "unit_weight": 100.0, "unit_volume": 1.0},
                "consignor": "A", "consignee": "B", "deadline": 6000, "containers": 2,
                "release_time": 0,
                "payment": {"total": 100.0, "milestones": []},
            },
            {
                "id": "D2",
                "product": {"code": "P2", "quantity": 10, "unit_weight": 100.0, "unit_volume": 1.0},
                "consignor": "A", "consignee": "B", "deadline": 8000, "containers": 2,
                "release_time": 10,
                "payment": {"total": 100.0, "milestones": []},
            },
        ],
        "faults": [
            {"kind": "orphan", "time": 60, "container": {"demand": "D2", "index": 0}},
        ],
        "params": {"horizon": 40320, "seed": seed},
    }


def reefer_shortage_scenario() -> dict[str, Any]:
    """Perishable demand beyond the reefer stock: fills must wait, and the
    goods never travel in an unrefrigerated box."""
    doc = synthetic_scenario(21, n_nodes=4, n_demands=1, perishable_share=1.0, reefer_stock_override=1)
    doc["demands"][0]["containers"] = 3
    return doc


def dangerous_gate_scenario() -> dict[str, Any]:
    """Dangerous goods aimed at a node that refuses them: withheld at the
    order layer, and the transport guard stays silent."""
    return synthetic_scenario(22, n_nodes=5, n_demands=2, dangerous_share=1.0,
                              reject_dangerous_at_consignee=True)


def standard_fault_plan(doc: dict[str, Any], rng_seed: int) -> list[dict]:
    """A mixed fault plan valid for any generated scenario."""
    rng = random.Random(rng_seed)
    mean_ids = [m["id"] for m in doc["means"]]
    edges = [(e["from"], e["to"]) for e in doc["graph"]["edges"]]
    demands = [d["id"] for d in doc["demands"]]
    release = min(d.get("release_time", 0) for d in doc["demands"])
    plan = [
        {"kind": "mean_delay", "time": release + 5, "mean": rng.choice(mean_ids), "extra_minutes": 60},
        {"kind": "mean_breakdown", "time_range": [release + 6, release + 400], "mean": rng.choice(mean_ids)},
        {"kind": "container_damage", "time": _first_transit_minute(doc, demands[0]),
         "container": {"demand": demands[0], "index": 0}},
        {"kind": "edge_close", "time": release + 30, "edge": list(rng.choice(edges))},
    ]
    if len(demands) > 1:
        plan.append({"kind": "container_loss", "time": _first_transit_minute(doc, demands[1]),
                     "container": {"demand": demands[1], "index": 0}})
    plan.append({"kind": "edge_reopen", "time": release + 2000, "edge": plan[3]["edge"]})
    return plan


def acceptance_suite() -> list[tuple[str, dict[str, Any]]]:
    """At least twenty scenarios spanning 2..12 nodes, 1..50 demands,
    weight mixes, expedite on/off, and fault plans on/off."""
    suite: list[tuple[str, dict[str, Any]]] = []
    sizes = [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]
    for i, n in enumerate(sizes):
        doc = synthetic_scenario(
            100 + i,
            n_nodes=n,
            n_demands=min(1 + 2 * i, 20),
            allow_expedite=(i % 2 == 0),
            fragile_share=0.3,
            perishable_share=0.15 if n >= 3 else 0.0,
        )
        suite.append((f"plain-{n:02d}", doc))
    for i, n in enumerate([4, 5, 6, 8, 10, 12]):
        doc = synthetic_scenario(
            200 + i,
            n_nodes=n,
            n_demands=min(3 + 3 * i, 20),
            allow_expedite=(i % 2 == 1),
            perishable_share=0.2,
            spares=1,
        )
        doc["faults"] = standard_fault_plan(doc, 300 + i)
        suite.append((f"faulted-{n:02d}", doc))
    big = synthetic_scenario(400, n_nodes=9, n_demands=50, means_per_node=3, horizon=80640)
    suite.append(("large-50", big))
    suite.append(("reposition", synthetic_scenario(401, n_nodes=6, n_demands=4, reposition_pull=True)))
    suite.append(("orphan", orphan_scenario()))
    suite.append(("reefer-shortage", reefer_shortage_scenario()))
    suite.append(("dangerous-gate", dangerous_gate_scenario()))
    return suite
