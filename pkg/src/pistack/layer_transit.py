"""Transit layers of the stack: transport (4) and network (3).

Transport combines orders into loads, watches deadlines end to end and
drives loss recovery; network combines loads into blocks and owns their
routing and rerouting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from pistack.domain import PiContainer
from pistack.layer_endpoint import LayerError, Order
from pistack.routing import (
    CriteriaWeights,
    LogisticsGraph,
    NoPathError,
    Route,
    shortest_path_scalarized,
)
from pistack.domain import CheckReport

LOAD_STATUSES = ("pending", "departed", "in_transit", "arrived", "failed")


@dataclass
class Load:
    """Whole orders bound for one destination, packed up to a size cap."""

    load_id: str
    member_orders: list[str]
    container_ids: list[str]
    origin: str
    destination: str
    deadline: int
    kind: str = "demand"
    status: str = "pending"
    # Runtime bookkeeping.
    arrived: set[str] = field(default_factory=set)
    removed: set[str] = field(default_factory=set)

    def __post_init__(self) -> None:
        if not self.member_orders or not self.container_ids:
            raise ValueError("a load cannot be empty")

    def expected(self) -> set[str]:
        return set(self.container_ids) - self.removed

    def is_complete(self) -> bool:
        expected = self.expected()
        return bool(expected) and expected <= self.arrived


@dataclass
class Block:
    """The routing unit: containers moving together along one route."""

    block_id: str
    parent_loads: list[str]
    container_ids: list[str]
    src: str
    dst: str
    kind: str = "demand"
    route: Route | None = None
    progress: int = 0
    # Runtime bookkeeping.
    current_node: str = ""
    parked: bool = False
    departed: bool = False
    hop_arrived: set[str] = field(default_factory=set)
    history: list[tuple[str, str, str]] = field(default_factory=list)
    removed: set[str] = field(default_factory=set)

    def __post_init__(self) -> None:
        if not self.container_ids:
            raise ValueError("a block cannot be empty")
        if not self.current_node:
            self.current_node = self.src

    def members(self) -> list[str]:
        return [cid for cid in self.container_ids if cid not in self.removed]

    def current_hop(self):
        if self.route is None or self.progress >= len(self.route.hops):
            return None
        return self.route.hops[self.progress]


@dataclass
class LedgerEntry:
    deadline: int
    arrival: int | None = None
    late: bool = False


@dataclass
class DeadlineLedger:
    """Per-load deadline bookkeeping: arrival times and late flags."""

    entries: dict[str, LedgerEntry] = field(default_factory=dict)

    def register(self, load_id: str, deadline: int) -> None:
        self.entries[load_id] = LedgerEntry(deadline=deadline)

    def record_arrival(self, load_id: str, t: int) -> LedgerEntry:
        entry = self.entries[load_id]
        entry.arrival = t
        entry.late = t > entry.deadline
        return entry


def check_deadlines(ledger: DeadlineLedger, now: int) -> list[str]:
    """Loads that arrived late plus loads still pending past their deadline."""
    violations = []
    for load_id in sorted(ledger.entries):
        entry = ledger.entries[load_id]
        if entry.arrival is not None and entry.late:
            violations.append(load_id)
        elif entry.arrival is None and now > entry.deadline:
            violations.append(load_id)
    return violations


def build_loads(
    orders: list[Order],
    containers: dict[str, PiContainer],
    max_load_size: int,
    graph: LogisticsGraph | None = None,
    id_factory: Callable[[], str] | None = None,
) -> list[Load]:
    """Pack whole orders into loads, first-fit in deadline order.

    Orders group by (origin, destination, kind); a load never exceeds the
    size cap nor the destination's reefer plug count, and only an order
    larger than the cap itself is ever split across loads.
    """
    counter = [0]

    def default_id() -> str:
        counter[0] += 1
        return f"LOAD-{counter[0]:04d}"

    make_id = id_factory or default_id
    if max_load_size < 1:
        raise ValueError("max_load_size must be >= 1")

    groups: dict[tuple[str, str, str], list[Order]] = {}
    for order in orders:
        groups.setdefault((order.origin, order.destination, order.kind), []).append(order)

    loads: list[Load] = []
    for (origin, destination, kind) in sorted(groups):
        members = sorted(groups[(origin, destination, kind)], key=lambda o: (o.deadline, o.order_id))
        reefer_cap = None
        if graph is not None and destination in graph.nodes:
            reefer_cap = graph.nodes[destination].reefer_plugs

        def reefers_in(cids: list[str]) -> int:
            return sum(1 for cid in cids if containers[cid].cls.class_id == "reefer")

        open_loads: list[tuple[list[str], list[str], int]] = []  # (order ids, container ids, deadline)
        for order in members:
            cids = list(order.container_ids)
            if len(cids) > max_load_size:
                # The only case an order spans loads: chunk it.
                for i in range(0, len(cids), max_load_size):
                    chunk = cids[i : i + max_load_size]
                    open_loads.append(([order.order_id], chunk, order.deadline))
                continue
            placed = False
            for entry in open_loads:
                oids, held, _dl = entry
                if len(held) + len(cids) > max_load_size:
                    continue
                if reefer_cap is not None and reefers_in(held) + reefers_in(cids) > reefer_cap:
                    continue
                if order.order_id not in oids:
                    oids.append(order.order_id)
                held.extend(cids)
                placed = True
                break
            if not placed:
                open_loads.append(([order.order_id], cids, order.deadline))
        for oids, held, _dl in open_loads:
            deadline = min(
                min(n.deadline for n in order.notes)
                for order in members
                if order.order_id in oids
            )
            loads.append(
                Load(
                    load_id=make_id(),
                    member_orders=list(oids),
                    container_ids=list(held),
                    origin=origin,
                    destination=destination,
                    deadline=deadline,
                    kind=kind,
                )
            )
    return loads


def admit_destination(
    load: Load,
    graph: LogisticsGraph,
    containers: dict[str, PiContainer],
) -> CheckReport:
    """Can the final destination handle this load?

    A guard behind the order layer's own feasibility check: in a correct
    pipeline it never fails for loads built from approved orders.
    """
    report = CheckReport()
    attrs = graph.nodes.get(load.destination)
    if attrs is None:
        report.add("unknown_destination", f"{load.destination} does not exist")
        return report
    reefers = 0
    for cid in load.container_ids:
        c = containers[cid]
        if c.cls.class_id == "reefer" and c.contents is not None:
            reefers += 1  # empty refrigerated boxes draw no plug power
        if c.contents and c.contents.dangerous and not attrs.accepts_dangerous:
            report.add("rejects_dangerous", f"{load.destination} does not accept dangerous goods")
    if reefers > attrs.reefer_plugs:
        report.add(
            "insufficient_reefer_plugs",
            f"{reefers} reefers > {attrs.reefer_plugs} plugs at {load.destination}",
        )
    return report


TRACK_EVENTS = ("departed", "hop_completed", "arrived", "exception")


def track(load: Load, event: str, now: int, ledger: DeadlineLedger) -> LedgerEntry | None:
    """Advance a load's end-to-end status; out-of-order events abort the run."""
    if event not in TRACK_EVENTS:
        raise ValueError(f"unknown track event {event!r}")
    if event == "departed":
        if load.status != "pending":
            raise LayerError("out_of_order_event", f"{load.load_id} departed twice")
        load.status = "departed"
    elif event == "hop_completed":
        if load.status == "pending":
            raise LayerError("out_of_order_event", f"{load.load_id} moved before departing")
        load.status = "in_transit"
    elif event == "arrived":
        if load.status == "pending":
            raise LayerError("out_of_order_event", f"{load.load_id} arrived before departing")
        load.status = "arrived"
        return ledger.record_arrival(load.load_id, now)
    elif event == "exception":
        pass  # recorded by the caller; status owned by recovery logic
    return None


@dataclass(frozen=True)
class RecoveryAction:
    """Outcome of loss/damage recovery for one container."""

    action: str  # resend | reorder | unrecoverable
    lost_container_id: str
    spare_id: str | None
    extra_cost: float

    def __post_init__(self) -> None:
        if self.action in ("resend", "reorder") and self.extra_cost <= 0:
            raise ValueError("recovery always carries a strictly positive extra cost")


def recover_loss(
    lost: PiContainer,
    inventory: list[PiContainer],
    reship_cost: float,
    loss_penalty: float,
    consignor_exists: bool = True,
) -> RecoveryAction:
    """Decide how to replace a lost or destroyed consignment.

    A matching filled spare at the consignor site is resent; otherwise the
    product is reordered. Either way the run pays a strictly positive
    extra cost (the reship route plus a flat penalty).
    """
    if not consignor_exists:
        return RecoveryAction("unrecoverable", lost.container_id, None, 0.0)
    extra = reship_cost + loss_penalty
    contract = lost.contract
    if contract is not None:
        for spare in sorted(inventory, key=lambda c: c.container_id):
            if (
                spare.contents is not None
                and spare.integrity == "intact"
                and spare.contents.product_code == contract.product_code
                and spare.contents.quantity == contract.quantity
            ):
                return RecoveryAction("resend", lost.container_id, spare.container_id, extra)
    return RecoveryAction("reorder", lost.container_id, None, extra)


def build_blocks(
    loads: list[Load],
    max_block_size: int,
    id_factory: Callable[[], str] | None = None,
) -> list[Block]:
    """Chunk loads into routing blocks of bounded size.

    Loads group by (current location, destination, kind); containers keep
    deadline order and may share a block across load boundaries.
    """
    counter = [0]

    def default_id() -> str:
        counter[0] += 1
        return f"BLK-{counter[0]:04d}"

    make_id = id_factory or default_id
    if max_block_size < 1:
        raise ValueError("max_block_size must be >= 1")

    groups: dict[tuple[str, str, str], list[Load]] = {}
    for load in loads:
        groups.setdefault((load.origin, load.destination, load.kind), []).append(load)

    blocks: list[Block] = []
    for (origin, destination, kind) in sorted(groups):
        members = sorted(groups[(origin, destination, kind)], key=lambda l: (l.deadline, l.load_id))
        stream = [(cid, load.load_id) for load in members for cid in load.container_ids]
        for i in range(0, len(stream), max_block_size):
            chunk = stream[i : i + max_block_size]
            parent_loads = []
            for _cid, lid in chunk:
                if lid not in parent_loads:
                    parent_loads.append(lid)
            blocks.append(
                Block(
                    block_id=make_id(),
                    parent_loads=parent_loads,
                    container_ids=[cid for cid, _ in chunk],
                    src=origin,
                    dst=destination,
                    kind=kind,
                )
            )
    return blocks


def route_block(
    block: Block,
    graph: LogisticsGraph,
    weights: CriteriaWeights,
    allow_expedite: bool = False,
) -> Block:
    """Attach the scalarized best route and reset progress."""
    if block.src == block.dst:
        raise ValueError("block src and dst must differ")
    block.route = shortest_path_scalarized(graph, block.src, block.dst, weights, allow_expedite)
    block.progress = 0
    block.parked = False
    return block


def reroute(
    block: Block,
    graph: LogisticsGraph,
    weights: CriteriaWeights,
    allow_expedite: bool = False,
) -> bool:
    """Recompute the remaining route from the block's current node.

    Completed hops stay in the history. Returns False (and parks the
    block) when no open path remains.
    """
    node = block.current_node
    if node == block.dst:
        return True
    try:
        rest = shortest_path_scalarized(graph, node, block.dst, weights, allow_expedite)
    except NoPathError:
        block.parked = True
        return False
    block.route = rest
    block.progress = 0
    block.parked = False
    return True


def remaining_route_open(block: Block, graph: LogisticsGraph) -> bool:
    """True when every untraversed hop still exists and is open."""
    if block.route is None:
        return False
    for hop in block.route.hops[block.progress :]:
        current = graph.edges.get((hop.edge.src, hop.edge.dst))
        if current is None or not current.open:
            return False
    return True
