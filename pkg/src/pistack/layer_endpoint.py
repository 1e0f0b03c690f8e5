"""Endpoint layers of the stack: product (7), container (6) and order (5).

Product fills and empties containers and owns contracts; container checks
integrity, forms sets, manages depots, empties and orphans; order issues
dispatch notes, builds orders, checks destination feasibility and runs
transactions. The functions here are pure decision logic; the event-driven
machines in `stack` wire them to the kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

from pistack.domain import (
    CheckReport,
    Contract,
    PiContainer,
    Product,
    check_compatibility,
)
from pistack.routing import (
    CriteriaWeights,
    LogisticsGraph,
    NoPathError,
    route_cost,
    shortest_path_scalarized,
)

ORDER_KINDS = ("demand", "recovery", "reposition", "disposal", "damaged_return")
TRANSFER_KINDS = ("reposition", "disposal", "damaged_return")


class LayerError(Exception):
    """Layer operation failure; `code` is the stable reason name."""

    code = "layer_error"

    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


@dataclass(frozen=True)
class ContainerSet:
    """Containers sharing an origin and destination, grouped at layer 6."""

    set_id: str
    container_ids: tuple[str, ...]
    origin: str
    destination: str

    def __post_init__(self) -> None:
        if not self.container_ids:
            raise ValueError("a container set cannot be empty")


@dataclass(frozen=True)
class DispatchNote:
    """Per-container administrative record issued by the order layer."""

    note_id: str
    container_id: str
    consignor: str
    consignee: str
    deadline: int
    priority: int
    dangerous: bool
    issued_at: int


@dataclass
class TransactionState:
    status: str = "open"  # open | departed | delivered | settled | failed
    paid: float = 0.0

    def __post_init__(self) -> None:
        if self.paid < 0:
            raise ValueError("paid must be >= 0")


@dataclass
class Order:
    """An order: dispatch notes sharing one origin/destination pair."""

    order_id: str
    notes: list[DispatchNote]
    origin: str
    destination: str
    kind: str = "demand"
    transaction: TransactionState = field(default_factory=TransactionState)
    # Runtime bookkeeping, owned by the simulation.
    arrived: set[str] = field(default_factory=set)
    lost: set[str] = field(default_factory=set)
    damaged: set[str] = field(default_factory=set)
    departed: bool = False
    released: bool = False

    def __post_init__(self) -> None:
        if not self.notes:
            raise ValueError("an order cannot be empty")
        if self.kind not in ORDER_KINDS:
            raise ValueError(f"unknown order kind {self.kind!r}")

    @property
    def container_ids(self) -> tuple[str, ...]:
        return tuple(n.container_id for n in self.notes)

    @property
    def deadline(self) -> int:
        return min(n.deadline for n in self.notes)

    def drop_container(self, container_id: str) -> None:
        self.notes = [n for n in self.notes if n.container_id != container_id]

    def is_complete(self) -> bool:
        expected = set(self.container_ids)
        return expected <= (self.arrived | self.lost | self.damaged)


@dataclass
class DepotState:
    """Declared empty-container stock levels at one node."""

    node_id: str
    empty_stock: dict[str, int] = field(default_factory=dict)
    min_level: dict[str, int] = field(default_factory=dict)
    max_level: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for cls, count in self.empty_stock.items():
            if count < 0:
                raise ValueError(f"negative stock for {cls} at {self.node_id}")
        for cls in set(self.min_level) | set(self.max_level):
            lo = self.min_level.get(cls, 0)
            hi = self.max_level.get(cls, 0)
            if lo < 0 or hi < lo:
                raise ValueError(f"bad min/max levels for {cls} at {self.node_id}")


def fill_container(
    batch: Product,
    empty: PiContainer,
    consignor: str,
    consignee: str,
    deadline: int,
    priority: int,
    contract_id: str,
    payment_total: float = 0.0,
    intermediate_payments: tuple[tuple[str, float], ...] = (),
) -> tuple[PiContainer, Contract]:
    """Put a product batch into an empty container and write its contract.

    Containerization lives here and only here, at the top of the stack.
    """
    if empty.contents is not None:
        raise LayerError("not_empty", f"{empty.container_id} already holds {empty.contents.product_code}")
    compat = check_compatibility(batch, empty.cls)
    if not compat.passed:
        raise LayerError("incompatible", "/".join(compat.codes()))
    contract = Contract(
        contract_id=contract_id,
        consignor=consignor,
        consignee=consignee,
        product_code=batch.product_code,
        quantity=batch.quantity,
        deadline=deadline,
        priority=priority,
        payment_total=payment_total,
        intermediate_payments=intermediate_payments,
    )
    empty.contents = batch
    empty.consignor = consignor
    empty.consignee = consignee
    empty.contract = contract
    return empty, contract


def empty_container(filled: PiContainer, expected: Contract) -> tuple[Product, PiContainer]:
    """Release the goods of a filled container against its contract."""
    if filled.contents is None or filled.contract is None:
        raise LayerError("contract_mismatch", f"{filled.container_id} has no contract to match")
    c = filled.contract
    if (c.contract_id, c.product_code, c.quantity) != (
        expected.contract_id,
        expected.product_code,
        expected.quantity,
    ):
        raise LayerError("contract_mismatch", f"{filled.container_id} contract differs from expectation")
    if filled.integrity != "intact":
        raise LayerError("damaged_goods", f"{filled.container_id} arrived damaged")
    delivered = filled.contents
    filled.contents = None
    filled.contract = None
    filled.consignor = None
    filled.consignee = None
    return delivered, filled


def inspect_container(c: PiContainer) -> CheckReport:
    """Physical integrity check; failures are signalled to the order layer."""
    report = CheckReport()
    if c.integrity != "intact":
        report.add("damaged", f"{c.container_id} failed integrity inspection")
    return report


def group_into_sets(
    containers: Iterable[PiContainer],
    id_factory: Callable[[], str] | None = None,
) -> list[ContainerSet]:
    """Partition filled, intact containers into per-(origin, destination) sets.

    Canonical ordering (deadline, then container id) makes the grouping
    independent of input permutation.
    """
    counter = [0]

    def default_factory() -> str:
        counter[0] += 1
        return f"SET-{counter[0]:04d}"

    make_id = id_factory or default_factory
    groups: dict[tuple[str, str], list[PiContainer]] = {}
    for c in containers:
        if c.contents is None or c.integrity != "intact":
            raise ValueError(f"{c.container_id} is not a filled, intact container")
        if c.consignee is None:
            raise ValueError(f"{c.container_id} has no consignee")
        groups.setdefault((c.location, c.consignee), []).append(c)
    sets = []
    for (origin, destination) in sorted(groups):
        members = sorted(
            groups[(origin, destination)],
            key=lambda c: (c.contract.deadline if c.contract else 0, c.container_id),
        )
        sets.append(
            ContainerSet(
                set_id=make_id(),
                container_ids=tuple(c.container_id for c in members),
                origin=origin,
                destination=destination,
            )
        )
    return sets


@dataclass(frozen=True)
class Disposition:
    """Where an orphaned container should go."""

    container_id: str
    action: str  # hold | transfer
    target: str


def handle_orphan(
    c: PiContainer,
    current_node: str,
    graph: LogisticsGraph,
    weights: CriteriaWeights,
    disposal_nodes: list[str],
) -> Disposition:
    """Send an orphan to the cheapest reachable disposal node.

    Orphans are never deleted from the census; unreachable disposal means
    the container is held where it stands.
    """
    if not disposal_nodes:
        raise ValueError("no disposal node configured")
    if current_node in disposal_nodes:
        return Disposition(c.container_id, "hold", current_node)
    best: tuple[float, str] | None = None
    for target in sorted(disposal_nodes):
        try:
            route = shortest_path_scalarized(graph, current_node, target, weights)
        except NoPathError:
            continue
        key = (route_cost(route, weights), target)
        if best is None or key < best:
            best = key
    if best is None:
        return Disposition(c.container_id, "hold", current_node)
    return Disposition(c.container_id, "transfer", best[1])


@dataclass(frozen=True)
class RepositionMove:
    class_id: str
    donor: str
    receiver: str
    count: int


def reposition_empties(
    depots: list[DepotState],
    graph: LogisticsGraph,
    weights: CriteriaWeights,
) -> tuple[list[RepositionMove], list[tuple[str, str, int]]]:
    """Threshold repositioning of empty containers between depots.

    Depots below their minimum request a refill up to their maximum;
    donors are depots above their maximum, matched greedily by cheapest
    route, and never give away stock below their own minimum. Unmet demand
    is returned as (class, node, shortfall) shortages.
    """
    moves: list[RepositionMove] = []
    shortages: list[tuple[str, str, int]] = []
    classes = sorted({cls for d in depots for cls in set(d.empty_stock) | set(d.min_level) | set(d.max_level)})
    stock = {d.node_id: dict(d.empty_stock) for d in depots}
    by_id = {d.node_id: d for d in depots}
    for cls in classes:
        needy = sorted(
            d.node_id
            for d in depots
            if stock[d.node_id].get(cls, 0) < d.min_level.get(cls, 0)
        )
        for receiver in needy:
            want = by_id[receiver].max_level.get(cls, 0) - stock[receiver].get(cls, 0)
            donors = []
            for d in depots:
                if d.node_id == receiver:
                    continue
                if stock[d.node_id].get(cls, 0) <= d.max_level.get(cls, 0):
                    continue
                spare = stock[d.node_id].get(cls, 0) - d.min_level.get(cls, 0)
                if spare <= 0:
                    continue
                try:
                    route = shortest_path_scalarized(graph, d.node_id, receiver, weights)
                except NoPathError:
                    continue
                donors.append((route_cost(route, weights), d.node_id, spare))
            donors.sort(key=lambda t: (t[0], t[1]))
            for _cost, donor, spare in donors:
                if want <= 0:
                    break
                take = min(want, spare)
                moves.append(RepositionMove(cls, donor, receiver, take))
                stock[donor][cls] = stock[donor].get(cls, 0) - take
                stock[receiver][cls] = stock[receiver].get(cls, 0) + take
                want -= take
            if want > 0:
                shortages.append((cls, receiver, want))
    return moves, shortages


@dataclass(frozen=True)
class OrderConstraints:
    deadline_window: int = 1440
    graph: LogisticsGraph | None = None
    suborder_of: dict[str, int] | None = None


def build_orders(
    sets: list[ContainerSet],
    containers: dict[str, PiContainer],
    constraints: OrderConstraints,
    id_factory: Callable[[], str] | None = None,
    note_factory: Callable[[], str] | None = None,
    now: int = 0,
) -> tuple[list[Order], list[tuple[str, str]]]:
    """Turn container sets into orders, splitting and withholding as needed.

    A set splits where member deadlines drift apart by more than the
    window, at declared sub-order boundaries, and so that an order never
    carries more refrigerated containers than its destination has plugs.
    Infeasible containers are withheld with a reason, never dropped.
    """
    counters = {"order": 0, "note": 0}

    def default_order_id() -> str:
        counters["order"] += 1
        return f"ORD-{counters['order']:04d}"

    def default_note_id() -> str:
        counters["note"] += 1
        return f"NOTE-{counters['note']:04d}"

    make_order_id = id_factory or default_order_id
    make_note_id = note_factory or default_note_id
    suborder_of = constraints.suborder_of or {}

    orders: list[Order] = []
    withheld: list[tuple[str, str]] = []
    for cset in sets:
        dest_attrs = constraints.graph.nodes.get(cset.destination) if constraints.graph else None
        feasible: list[PiContainer] = []
        for cid in cset.container_ids:
            c = containers[cid]
            if constraints.graph is not None and dest_attrs is None:
                withheld.append((cid, "infeasible_destination"))
                continue
            if dest_attrs is not None:
                dangerous = bool(c.contents and c.contents.dangerous)
                if dangerous and not dest_attrs.accepts_dangerous:
                    withheld.append((cid, "infeasible_destination"))
                    continue
                if c.cls.class_id == "reefer" and dest_attrs.reefer_plugs < 1:
                    withheld.append((cid, "infeasible_destination"))
                    continue
            feasible.append(c)
        if not feasible:
            continue
        # Sub-order boundaries first, then the deadline window within each.
        by_suborder: dict[int, list[PiContainer]] = {}
        for c in feasible:
            by_suborder.setdefault(suborder_of.get(c.container_id, 0), []).append(c)
        reefer_cap = dest_attrs.reefer_plugs if dest_attrs is not None else None
        for tag in sorted(by_suborder):
            members = sorted(by_suborder[tag], key=lambda c: (c.contract.deadline, c.container_id))
            chunk: list[PiContainer] = []
            chunk_reefers = 0
            for c in members:
                is_reefer = c.cls.class_id == "reefer"
                window_break = chunk and c.contract.deadline - chunk[0].contract.deadline > constraints.deadline_window
                plug_break = is_reefer and reefer_cap is not None and chunk_reefers + 1 > reefer_cap
                if window_break or plug_break:
                    orders.append(_make_order(chunk, cset, make_order_id, make_note_id, now))
                    chunk = []
                    chunk_reefers = 0
                chunk.append(c)
                chunk_reefers += 1 if is_reefer else 0
            if chunk:
                orders.append(_make_order(chunk, cset, make_order_id, make_note_id, now))
    return orders, withheld


def _make_order(
    members: list[PiContainer],
    cset: ContainerSet,
    make_order_id: Callable[[], str],
    make_note_id: Callable[[], str],
    now: int,
) -> Order:
    notes = [
        DispatchNote(
            note_id=make_note_id(),
            container_id=c.container_id,
            consignor=c.consignor or cset.origin,
            consignee=c.consignee or cset.destination,
            deadline=c.contract.deadline,
            priority=c.contract.priority,
            dangerous=bool(c.contents and c.contents.dangerous),
            issued_at=now,
        )
        for c in members
    ]
    return Order(
        order_id=make_order_id(),
        notes=notes,
        origin=cset.origin,
        destination=cset.destination,
    )


def settle_transaction(
    order: Order,
    event: str,
    contracts: list[Contract],
) -> TransactionState:
    """Advance an order's transaction on a transport-layer event.

    Departure pays matching intermediate milestones once; delivery pays the
    remainder and settles; loss or damage fails the order and freezes
    payments. Settling twice is an error; failed orders never settle.
    """
    tx = order.transaction
    if event == "departed":
        if tx.status == "open":
            tx.paid += sum(
                amount
                for contract in contracts
                for milestone, amount in contract.intermediate_payments
                if milestone == "departed"
            )
            tx.status = "departed"
    elif event == "delivered":
        if tx.status == "settled":
            raise LayerError("double_settlement", f"{order.order_id} is already settled")
        if tx.status == "failed":
            return tx  # failed orders never settle
        tx.paid = sum(contract.payment_total for contract in contracts)
        tx.status = "settled"
    elif event in ("lost", "damaged"):
        if tx.status not in ("settled",):
            tx.status = "failed"
    else:
        raise ValueError(f"unknown transaction event {event!r}")
    return tx
