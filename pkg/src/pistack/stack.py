"""The executable seven-layer stack.

One machine per layer, shared across nodes; per-node state lives in the
world registries keyed by node id. Machines communicate exclusively
through kernel events, and a send is only legal between adjacent layers of
the same node, between the physical-handling layers of two nodes (a mean
actually moving), or from the kernel plane (demand arrivals, faults,
timers). That restriction is what makes every trace conform to the
peer-layer communication principle.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Any

from pistack.domain import PiContainer, PiMean, Product, required_class_id
from pistack.kernel import (
    Event,
    Kernel,
    PRIORITY_CONTROL,
    SimulationBugError,
)
from pistack.layer_endpoint import (
    ContainerSet,
    DepotState,
    DispatchNote,
    LayerError,
    Order,
    OrderConstraints,
    build_orders,
    empty_container,
    fill_container,
    group_into_sets,
    handle_orphan,
    inspect_container,
    settle_transaction,
)
from pistack.layer_transit import (
    Block,
    DeadlineLedger,
    Load,
    admit_destination,
    build_blocks,
    build_loads,
    recover_loss,
    remaining_route_open,
    reroute,
    route_block,
    track,
)
from pistack.layer_physical import (
    MeanFault,
    Shipment,
    build_shipments,
    handle_mean_fault,
    plan_stowage,
    record_handover,
    schedule_on_mean,
)
from pistack.routing import (
    LogisticsGraph,
    NoPathError,
    route_cost,
    shortest_path_scalarized,
    travel_minutes,
)
from pistack.scenario_io import DemandSpec, Params

LAYER_HANDLING = 1
LAYER_LINK = 2
LAYER_NETWORK = 3
LAYER_TRANSPORT = 4
LAYER_ORDER = 5
LAYER_CONTAINER = 6
LAYER_PRODUCT = 7

# An idle mean stranded away from home waits this long for local work
# before starting an empty trip back, one hop at a time.
DEADHEAD_GRACE = 120


@dataclass
class FillTask:
    """One container still waiting to be filled (stock shortage)."""

    demand_id: str
    product: Product
    consignor: str
    consignee: str
    deadline: int
    priority: int
    payment_total: float
    milestones: tuple[tuple[str, float], ...]
    suborder: int = 0
    spare: bool = False
    recovery_of: str | None = None


@dataclass
class LinkWork:
    """Containers of one block hop waiting for means at a node."""

    block_id: str
    hop_index: int
    container_ids: list[str]
    deadline: int
    notified_blocked: bool = False


@dataclass
class World:
    """All registries of one run. Mutated only by the layer machines."""

    graph: LogisticsGraph
    base_graph: LogisticsGraph
    classes: dict
    params: Params
    disposal_nodes: list[str]
    containers: dict[str, PiContainer] = field(default_factory=dict)
    contract_of: dict[str, Any] = field(default_factory=dict)
    means: dict[str, PiMean] = field(default_factory=dict)
    depot_stock: dict[str, dict[str, list[str]]] = field(default_factory=dict)
    depot_levels: dict[str, DepotState] = field(default_factory=dict)
    depot_damaged: dict[str, list[str]] = field(default_factory=dict)
    spares: dict[str, list[str]] = field(default_factory=dict)
    demands: dict[str, DemandSpec] = field(default_factory=dict)
    demand_filled: dict[str, list[str]] = field(default_factory=dict)
    container_demand: dict[str, str] = field(default_factory=dict)
    container_kind: dict[str, str] = field(default_factory=dict)
    recovery_link: dict[str, str] = field(default_factory=dict)
    suborder: dict[str, int] = field(default_factory=dict)
    sets: dict[str, ContainerSet] = field(default_factory=dict)
    orders: dict[str, Order] = field(default_factory=dict)
    order_of: dict[str, str] = field(default_factory=dict)
    loads: dict[str, Load] = field(default_factory=dict)
    load_of: dict[str, str] = field(default_factory=dict)
    blocks: dict[str, Block] = field(default_factory=dict)
    block_of: dict[str, str] = field(default_factory=dict)
    block_deadline: dict[str, int] = field(default_factory=dict)
    shipments: dict[str, Shipment] = field(default_factory=dict)
    shipment_of: dict[str, str] = field(default_factory=dict)
    mean_shipment: dict[str, str] = field(default_factory=dict)
    arrival_events: dict[str, Event] = field(default_factory=dict)
    deadhead_events: dict[str, tuple[Event, str]] = field(default_factory=dict)
    ledger: DeadlineLedger = field(default_factory=DeadlineLedger)
    pending_sets: dict[str, dict[str, list[str]]] = field(default_factory=dict)
    flush_scheduled: set = field(default_factory=set)
    waiting_fills: dict[str, list[FillTask]] = field(default_factory=dict)
    link_waiting: dict[str, list[LinkWork]] = field(default_factory=dict)
    custody_last: dict[str, str] = field(default_factory=dict)
    handovers: list = field(default_factory=list)
    lost: set = field(default_factory=set)
    disposed: set = field(default_factory=set)
    withheld: dict[str, str] = field(default_factory=dict)
    orphans_injected: int = 0
    sweep_scheduled: bool = False
    counters: dict[str, int] = field(default_factory=dict)

    def new_id(self, prefix: str) -> str:
        self.counters[prefix] = self.counters.get(prefix, 0) + 1
        return f"{prefix}-{self.counters[prefix]:04d}"

    def withdraw_empty(self, node: str, class_id: str) -> str | None:
        stock = self.depot_stock.get(node, {}).get(class_id)
        if stock:
            return stock.pop(0)
        return None

    def store_empty(self, node: str, cid: str) -> None:
        c = self.containers[cid]
        c.location = node
        bucket = self.depot_stock.setdefault(node, {}).setdefault(c.cls.class_id, [])
        bisect.insort(bucket, cid)

    def depot_states(self) -> list[DepotState]:
        """Current stock levels, declared and implicit depots alike."""
        nodes = sorted(set(self.depot_levels) | set(self.depot_stock))
        out = []
        for node in nodes:
            declared = self.depot_levels.get(node)
            counts = {cls: len(cids) for cls, cids in self.depot_stock.get(node, {}).items() if cids}
            out.append(
                DepotState(
                    node_id=node,
                    empty_stock=counts,
                    min_level=dict(declared.min_level) if declared else {},
                    max_level=dict(declared.max_level) if declared else {},
                )
            )
        return out

    def below_min(self, node: str) -> bool:
        declared = self.depot_levels.get(node)
        if declared is None:
            return False
        counts = {cls: len(cids) for cls, cids in self.depot_stock.get(node, {}).items()}
        return any(counts.get(cls, 0) < lo for cls, lo in declared.min_level.items())

    def idle_carriers(self) -> list[PiMean]:
        return [self.means[mid] for mid in sorted(self.means)]


class SimContext:
    """Shared handles the machines use to talk to the kernel and registries."""

    def __init__(self, world: World, kernel: Kernel):
        self.world = world
        self.kernel = kernel

    @property
    def now(self) -> int:
        return self.kernel.clock

    @property
    def params(self) -> Params:
        return self.world.params

    def emit(self, node: str, layer: int, kind: str, subjects=(), details=None) -> None:
        self.kernel.emit(node, layer, kind, tuple(subjects), details or {})

    def send(
        self,
        src_node: str,
        src_layer: int,
        node: str,
        layer: int,
        kind: str,
        payload: dict | None = None,
        subjects=(),
        note: dict | None = None,
        delay: int = 0,
        priority: int | None = None,
    ) -> Event:
        if src_layer != 0:
            adjacent = node == src_node and abs(layer - src_layer) == 1
            physical_peer = src_layer == 1 and layer == 1 and node != src_node
            if not (adjacent or physical_peer):
                raise SimulationBugError(
                    f"layer-skipping send {src_node}/{src_layer} -> {node}/{layer} ({kind})"
                )
        return self.kernel.schedule(
            time=self.now + delay,
            priority=priority if priority is not None else layer,
            node=node,
            layer=layer,
            kind=kind,
            payload=payload or {},
            src_node=src_node,
            src_layer=src_layer,
            subjects=tuple(subjects),
            note=note or {},
        )

    def kernel_send(self, node, layer, kind, payload=None, subjects=(), note=None, delay=0, priority=PRIORITY_CONTROL):
        return self.send("", 0, node, layer, kind, payload, subjects, note, delay, priority)

    def best_route(self, src: str, dst: str):
        return shortest_path_scalarized(
            self.world.graph, src, dst, self.params.weights, self.params.allow_expedite
        )

    def route_cost_of(self, route) -> float:
        return route_cost(route, self.params.weights)

    def schedule_sweep(self) -> None:
        if not self.world.sweep_scheduled:
            self.world.sweep_scheduled = True
            self.kernel_send("", 0, "reposition.sweep")

    def transfer_deadline(self) -> int:
        # Internal transfers never count against delivery deadlines.
        return max(self.now + 1, self.params.horizon + 1)


class LayerMachine:
    layer = 0

    def __init__(self, ctx: SimContext):
        self.ctx = ctx
        self.world = ctx.world

    def handle(self, ev: Event) -> None:
        handler = getattr(self, "on_" + ev.kind.replace(".", "_"), None)
        if handler is None:
            raise SimulationBugError(f"layer {self.layer} has no handler for {ev.kind!r}")
        handler(ev)


class ProductMachine(LayerMachine):
    """Layer 7: fills and empties containers, owns contracts and recovery."""

    layer = LAYER_PRODUCT

    def _fill_one(self, task: FillTask) -> str | None:
        w = self.world
        cls_id = required_class_id(task.product)
        if cls_id is None:
            self.ctx.emit(task.consignor, self.layer, "fill.rejected", (), {"demand": task.demand_id, "reason": "unsupported_product"})
            return None
        cid = w.withdraw_empty(task.consignor, cls_id)
        if cid is None:
            reason = "reefer_shortage" if cls_id == "reefer" else "stock_shortage"
            w.waiting_fills.setdefault(task.consignor, []).append(task)
            self.ctx.emit(
                task.consignor,
                self.layer,
                "fill.waiting",
                (),
                {"demand": task.demand_id, "reason": reason, "class": cls_id, "spare": task.spare},
            )
            return None
        try:
            container, contract = fill_container(
                task.product,
                w.containers[cid],
                task.consignor,
                task.consignee,
                task.deadline,
                task.priority,
                contract_id=w.new_id("CTR"),
                payment_total=task.payment_total,
                intermediate_payments=task.milestones,
            )
        except LayerError as exc:
            w.store_empty(task.consignor, cid)
            self.ctx.emit(task.consignor, self.layer, "fill.rejected", (cid,), {"demand": task.demand_id, "reason": exc.code})
            return None
        w.contract_of[cid] = contract
        w.container_demand[cid] = task.demand_id
        w.container_kind[cid] = "recovery" if task.recovery_of else "demand"
        w.suborder[cid] = task.suborder
        if task.recovery_of:
            w.recovery_link[cid] = task.recovery_of
        details = {
            "demand": task.demand_id,
            "contract": contract.contract_id,
            "class": cls_id,
            "quantity": task.product.quantity,
            "gross_weight": container.gross_weight,
            "fragile": task.product.fragile,
            "perishable": task.product.perishable,
            "dangerous": task.product.dangerous,
            "consignor": task.consignor,
            "consignee": task.consignee,
            "spare": task.spare,
        }
        if task.recovery_of:
            details["replaces"] = task.recovery_of
        self.ctx.emit(task.consignor, self.layer, "fill", (cid,), details)
        if w.below_min(task.consignor):
            self.ctx.schedule_sweep()
        return cid

    def _submit(self, node: str, cids: list[str]) -> None:
        if not cids:
            return
        kinds = {self.world.container_kind[cid] for cid in cids}
        for kind in sorted(kinds):
            batch = [cid for cid in cids if self.world.container_kind[cid] == kind]
            self.ctx.send(
                node,
                self.layer,
                node,
                LAYER_CONTAINER,
                "containers.submit",
                payload={"kind": kind},
                subjects=batch,
                note={"kind": kind},
            )

    def on_demand_release(self, ev: Event) -> None:
        demand: DemandSpec = ev.payload["demand"]
        w = self.world
        w.demands[demand.demand_id] = demand
        bounds = list(demand.sub_order_boundaries)
        filled = []
        for i in range(demand.containers):
            task = FillTask(
                demand_id=demand.demand_id,
                product=demand.product,
                consignor=demand.consignor,
                consignee=demand.consignee,
                deadline=demand.deadline,
                priority=demand.priority,
                payment_total=demand.payment_total,
                milestones=demand.milestones,
                suborder=bisect.bisect_right(bounds, i),
            )
            cid = self._fill_one(task)
            if cid is not None:
                w.demand_filled.setdefault(demand.demand_id, []).append(cid)
                filled.append(cid)
        for _ in range(demand.spares):
            task = FillTask(
                demand_id=demand.demand_id,
                product=demand.product,
                consignor=demand.consignor,
                consignee=demand.consignee,
                deadline=demand.deadline,
                priority=demand.priority,
                payment_total=0.0,
                milestones=(),
                spare=True,
            )
            cid = self._fill_one(task)
            if cid is not None:
                w.spares.setdefault(demand.consignor, []).append(cid)
        self._submit(ev.node, filled)

    def on_stock_available(self, ev: Event) -> None:
        w = self.world
        pending = w.waiting_fills.get(ev.node, [])
        if not pending:
            return
        w.waiting_fills[ev.node] = []
        filled = []
        for task in pending:
            cid = self._fill_one(task)  # re-queues itself when stock is still short
            if cid is None:
                continue
            if task.spare:
                w.spares.setdefault(ev.node, []).append(cid)
            else:
                w.demand_filled.setdefault(task.demand_id, []).append(cid)
                filled.append(cid)
        self._submit(ev.node, filled)

    def on_containers_arrived(self, ev: Event) -> None:
        w = self.world
        emptied = []
        for cid in ev.subjects:
            c = w.containers[cid]
            contract = w.contract_of.get(cid)
            if contract is None:
                self.ctx.emit(ev.node, self.layer, "deliver.failed", (cid,), {"reason": "missing_contract"})
                continue
            try:
                delivered, container = empty_container(c, contract)
            except LayerError as exc:
                self.ctx.emit(ev.node, self.layer, "deliver.failed", (cid,), {"reason": exc.code})
                continue
            self.ctx.emit(
                ev.node,
                self.layer,
                "deliver",
                (cid,),
                {
                    "demand": w.container_demand.get(cid, ""),
                    "contract": contract.contract_id,
                    "product": delivered.product_code,
                    "quantity": delivered.quantity,
                },
            )
            self.ctx.emit(ev.node, self.layer, "empty", (cid,), {"tare": container.cls.tare_weight})
            emptied.append(cid)
        if emptied:
            self.ctx.send(ev.node, self.layer, ev.node, LAYER_CONTAINER, "empty.return", subjects=emptied)

    def on_recovery_signal(self, ev: Event) -> None:
        w = self.world
        action = ev.payload["action"]
        lost_cid = ev.payload["lost"]
        contract = w.contract_of.get(lost_cid)
        demand = w.demands.get(w.container_demand.get(lost_cid, ""))
        if contract is None or demand is None:
            self.ctx.emit(ev.node, self.layer, "recover.void", (lost_cid,), {"reason": "no_contract"})
            return
        if action == "resend":
            spare = ev.payload["spare"]
            stock = w.spares.get(ev.node, [])
            if spare in stock:
                stock.remove(spare)
                w.container_kind[spare] = "recovery"
                w.recovery_link[spare] = lost_cid
                self.ctx.emit(ev.node, self.layer, "recover.resend", (spare,), {"replaces": lost_cid})
                self._submit(ev.node, [spare])
            else:
                self.ctx.emit(ev.node, self.layer, "recover.void", (lost_cid,), {"reason": "spare_gone"})
        elif action == "reorder":
            task = FillTask(
                demand_id=demand.demand_id,
                product=demand.product,
                consignor=demand.consignor,
                consignee=demand.consignee,
                deadline=contract.deadline,
                priority=contract.priority,
                payment_total=0.0,
                milestones=(),
                recovery_of=lost_cid,
            )
            execute_at = self.now_plus(self.ctx.params.reorder_delay)
            self.ctx.kernel_send(ev.node, self.layer, "timer.refill", payload={"task": task}, delay=self.ctx.params.reorder_delay)
            self.ctx.emit(ev.node, self.layer, "recover.reorder_scheduled", (lost_cid,), {"execute_at": execute_at})

    def now_plus(self, delta: int) -> int:
        return self.ctx.now + delta

    def on_timer_refill(self, ev: Event) -> None:
        task: FillTask = ev.payload["task"]
        cid = self._fill_one(task)
        if cid is not None:
            self.world.demand_filled.setdefault(task.demand_id, []).append(cid)
            self._submit(ev.node, [cid])


class ContainerMachine(LayerMachine):
    """Layer 6: integrity, sets, depots, empties, orphans."""

    layer = LAYER_CONTAINER

    def _nearest_depot(self, node: str) -> str | None:
        w = self.world
        candidates = sorted(n for n, a in w.graph.nodes.items() if a.is_depot)
        if node in candidates:
            return node
        best = None
        for target in candidates:
            try:
                route = self.ctx.best_route(node, target)
            except NoPathError:
                continue
            key = (self.ctx.route_cost_of(route), target)
            if best is None or key < best:
                best = key
        return best[1] if best else None

    def _divert_damaged(self, node: str, cid: str) -> None:
        w = self.world
        target = self._nearest_depot(node)
        if target is None or target == node:
            w.depot_damaged.setdefault(node, []).append(cid)
            self.ctx.emit(node, self.layer, "damaged.parked", (cid,), {"node": node})
            return
        self._request_transfer(node, "damaged_return", target, [cid])

    def _request_transfer(self, node: str, kind: str, dst: str, cids: list[str]) -> None:
        self.ctx.send(
            node,
            self.layer,
            node,
            LAYER_ORDER,
            "transfer.request",
            payload={"kind": kind, "dst": dst},
            subjects=cids,
            note={"kind": kind, "dst": dst},
        )

    def _buffer_for_sets(self, node: str, kind: str, cids: list[str]) -> None:
        w = self.world
        w.pending_sets.setdefault(node, {}).setdefault(kind, []).extend(cids)
        if node not in w.flush_scheduled:
            w.flush_scheduled.add(node)
            self.ctx.kernel_send(node, self.layer, "flush.sets")

    def on_containers_submit(self, ev: Event) -> None:
        w = self.world
        kind = ev.payload.get("kind", "demand")
        intact = []
        for cid in ev.subjects:
            c = w.containers[cid]
            report = inspect_container(c)
            if not report.passed:
                self.ctx.emit(ev.node, self.layer, "inspect.fail", (cid,), {"codes": report.codes()})
                self.ctx.send(
                    ev.node,
                    self.layer,
                    ev.node,
                    LAYER_ORDER,
                    "damage.signal",
                    payload={"container": cid, "order": w.order_of.get(cid)},
                    subjects=(cid,),
                )
                self._divert_damaged(ev.node, cid)
            else:
                intact.append(cid)
        if intact:
            self._buffer_for_sets(ev.node, kind, intact)

    def on_flush_sets(self, ev: Event) -> None:
        w = self.world
        w.flush_scheduled.discard(ev.node)
        buffered = w.pending_sets.pop(ev.node, {})
        for kind in sorted(buffered):
            cids = [cid for cid in buffered[kind] if not w.containers[cid].orphaned and cid not in w.lost]
            if not cids:
                continue
            sets = group_into_sets(
                [w.containers[cid] for cid in cids],
                id_factory=lambda: w.new_id("SET"),
            )
            for cset in sets:
                w.sets[cset.set_id] = cset
                self.ctx.emit(
                    ev.node,
                    self.layer,
                    "set.created",
                    cset.container_ids,
                    {"set": cset.set_id, "origin": cset.origin, "destination": cset.destination},
                )
            self.ctx.send(
                ev.node,
                self.layer,
                ev.node,
                LAYER_ORDER,
                "sets.submit",
                payload={"set_ids": [s.set_id for s in sets], "kind": kind},
                subjects=[cid for s in sets for cid in s.container_ids],
                note={"kind": kind},
            )

    def on_order_arrived(self, ev: Event) -> None:
        w = self.world
        order_id = ev.payload["order"]
        damaged = []
        intact = []
        for cid in ev.subjects:
            report = inspect_container(w.containers[cid])
            if report.passed:
                intact.append(cid)
            else:
                damaged.append(cid)
        for cid in damaged:
            self.ctx.emit(ev.node, self.layer, "inspect.fail", (cid,), {"codes": ["damaged"], "order": order_id})
            self.ctx.send(
                ev.node,
                self.layer,
                ev.node,
                LAYER_ORDER,
                "damage.signal",
                payload={"container": cid, "order": order_id},
                subjects=(cid,),
            )
            self._divert_damaged(ev.node, cid)
        self.ctx.send(
            ev.node,
            self.layer,
            ev.node,
            LAYER_ORDER,
            "inspection.done",
            payload={"order": order_id, "damaged": len(damaged)},
            subjects=ev.subjects,
        )
        if intact:
            self.ctx.send(
                ev.node,
                self.layer,
                ev.node,
                LAYER_PRODUCT,
                "containers.arrived",
                payload={"order": order_id},
                subjects=intact,
            )

    def on_empty_return(self, ev: Event) -> None:
        w = self.world
        for cid in ev.subjects:
            w.store_empty(ev.node, cid)
            self.ctx.emit(ev.node, self.layer, "depot.stored", (cid,), {"class": w.containers[cid].cls.class_id})
        if w.waiting_fills.get(ev.node):
            self.ctx.send(ev.node, self.layer, ev.node, LAYER_PRODUCT, "stock.available")

    def on_orphan_signal(self, ev: Event) -> None:
        w = self.world
        for cid in ev.subjects:
            c = w.containers[cid]
            disposition = handle_orphan(c, ev.node, w.graph, self.ctx.params.weights, w.disposal_nodes)
            if disposition.action == "hold":
                if ev.node in w.disposal_nodes:
                    w.disposed.add(cid)
                    self.ctx.emit(ev.node, self.layer, "orphan.disposed", (cid,), {"node": ev.node})
                else:
                    self.ctx.emit(ev.node, self.layer, "orphan.held", (cid,), {"node": ev.node, "reason": "no_route"})
            else:
                self._request_transfer(ev.node, "disposal", disposition.target, [cid])

    def on_transfer_arrived(self, ev: Event) -> None:
        w = self.world
        kind = ev.payload["kind"]
        for cid in ev.subjects:
            c = w.containers[cid]
            if kind == "reposition":
                if c.integrity == "intact":
                    w.store_empty(ev.node, cid)
                    self.ctx.emit(ev.node, self.layer, "depot.stored", (cid,), {"class": c.cls.class_id})
                else:
                    w.depot_damaged.setdefault(ev.node, []).append(cid)
                    self.ctx.emit(ev.node, self.layer, "damaged.parked", (cid,), {"node": ev.node})
            elif kind == "disposal":
                w.disposed.add(cid)
                self.ctx.emit(ev.node, self.layer, "orphan.disposed", (cid,), {"node": ev.node})
            else:  # damaged_return
                w.depot_damaged.setdefault(ev.node, []).append(cid)
                self.ctx.emit(ev.node, self.layer, "damaged.parked", (cid,), {"node": ev.node})
        if kind == "reposition" and w.waiting_fills.get(ev.node):
            self.ctx.send(ev.node, self.layer, ev.node, LAYER_PRODUCT, "stock.available")

    def on_fault_damage(self, ev: Event) -> None:
        w = self.world
        cid = ev.payload["container"]
        c = w.containers.get(cid)
        if c is None or cid in w.lost:
            self.ctx.emit(ev.node, self.layer, "fault.skipped", (), {"fault": "container_damage", "container": cid})
            return
        c.integrity = "damaged"
        self.ctx.emit(ev.node, self.layer, "container.damaged", (cid,), {})
        if c.contents is None:
            # A damaged empty is pulled from usable stock on the spot and
            # parked for testing; it is never deleted from the census.
            stock = w.depot_stock.get(c.location, {}).get(c.cls.class_id, [])
            if cid in stock:
                stock.remove(cid)
                w.depot_damaged.setdefault(c.location, []).append(cid)
                self.ctx.emit(c.location, self.layer, "damaged.parked", (cid,), {"node": c.location})

    def on_reposition_request(self, ev: Event) -> None:
        w = self.world
        cls = ev.payload["class"]
        count = ev.payload["count"]
        receiver = ev.payload["receiver"]
        got = []
        for _ in range(count):
            cid = w.withdraw_empty(ev.node, cls)
            if cid is None:
                break
            got.append(cid)
        if not got:
            self.ctx.emit(ev.node, self.layer, "reposition.void", (), {"class": cls, "receiver": receiver})
            return
        self._request_transfer(ev.node, "reposition", receiver, got)

    def on_recovery_signal(self, ev: Event) -> None:
        # Pass-through on the consignor's ascent toward the product layer.
        self.ctx.send(
            ev.node,
            self.layer,
            ev.node,
            LAYER_PRODUCT,
            "recovery.signal",
            payload=dict(ev.payload),
            subjects=ev.subjects,
        )


class OrderMachine(LayerMachine):
    """Layer 5: dispatch notes, order building, feasibility, transactions."""

    layer = LAYER_ORDER

    def _contracts_of(self, order: Order):
        return [self.world.contract_of[n.container_id] for n in order.notes if n.container_id in self.world.contract_of]

    def on_sets_submit(self, ev: Event) -> None:
        w = self.world
        kind = ev.payload.get("kind", "demand")
        sets = [w.sets[sid] for sid in ev.payload["set_ids"]]
        constraints = OrderConstraints(
            deadline_window=self.ctx.params.deadline_window,
            graph=w.graph,
            suborder_of=w.suborder,
        )
        orders, withheld = build_orders(
            sets,
            w.containers,
            constraints,
            id_factory=lambda: w.new_id("ORD"),
            note_factory=lambda: w.new_id("NOTE"),
            now=self.ctx.now,
        )
        for cid, reason in withheld:
            w.withheld[cid] = reason
            self.ctx.emit(ev.node, self.layer, "order.withheld", (cid,), {"reason": reason})
        submitted = []
        for order in orders:
            order.kind = kind
            w.orders[order.order_id] = order
            for note in order.notes:
                w.order_of[note.container_id] = order.order_id
                self.ctx.emit(
                    ev.node,
                    self.layer,
                    "note.issued",
                    (note.container_id,),
                    {"note": note.note_id, "order": order.order_id, "deadline": note.deadline,
                     "priority": note.priority, "dangerous": note.dangerous},
                )
            self.ctx.emit(
                ev.node,
                self.layer,
                "order.created",
                order.container_ids,
                {"order": order.order_id, "kind": order.kind, "deadline": order.deadline,
                 "origin": order.origin, "destination": order.destination},
            )
            submitted.append(order)
        if submitted:
            self.ctx.send(
                ev.node,
                self.layer,
                ev.node,
                LAYER_TRANSPORT,
                "orders.submit",
                payload={"order_ids": [o.order_id for o in submitted]},
                subjects=[cid for o in submitted for cid in o.container_ids],
            )

    def on_transfer_request(self, ev: Event) -> None:
        w = self.world
        kind = ev.payload["kind"]
        dst = ev.payload["dst"]
        deadline = self.ctx.transfer_deadline()
        notes = [
            DispatchNote(
                note_id=w.new_id("NOTE"),
                container_id=cid,
                consignor=ev.node,
                consignee=dst,
                deadline=deadline,
                priority=9,
                dangerous=False,
                issued_at=self.ctx.now,
            )
            for cid in ev.subjects
        ]
        order = Order(
            order_id=w.new_id("ORD"),
            notes=notes,
            origin=ev.node,
            destination=dst,
            kind=kind,
        )
        w.orders[order.order_id] = order
        for cid in order.container_ids:
            w.order_of[cid] = order.order_id
        self.ctx.emit(
            ev.node,
            self.layer,
            "order.created",
            order.container_ids,
            {"order": order.order_id, "kind": kind, "deadline": deadline,
             "origin": ev.node, "destination": dst},
        )
        self.ctx.send(
            ev.node,
            self.layer,
            ev.node,
            LAYER_TRANSPORT,
            "orders.submit",
            payload={"order_ids": [order.order_id]},
            subjects=order.container_ids,
        )

    def _complete_order(self, order: Order, node: str) -> None:
        """Run once when every member is terminal; releases held containers."""
        w = self.world
        if order.released or not order.notes:
            return
        if not order.is_complete():
            return
        order.released = True
        late = self.ctx.now > order.deadline
        self.ctx.emit(
            node,
            self.layer,
            "order.completed",
            tuple(sorted(order.arrived)),
            {"order": order.order_id, "kind": order.kind, "late": late, "deadline": order.deadline},
        )
        arrived = sorted(order.arrived)
        if not arrived:
            return
        if node == order.destination:
            self._release(order, node)
        else:
            # The arrived members sit at the consignee; completion was
            # detected elsewhere (a loss at the origin). The release notice
            # travels outside the stack, like any carriage-document update.
            self.ctx.kernel_send(order.destination, self.layer, "notice.order_release", payload={"order": order.order_id})

    def _release(self, order: Order, node: str) -> None:
        arrived = sorted(order.arrived)
        if order.kind in ("reposition", "disposal", "damaged_return"):
            self.ctx.send(
                node,
                self.layer,
                node,
                LAYER_CONTAINER,
                "transfer.arrived",
                payload={"kind": order.kind},
                subjects=arrived,
            )
        else:
            self.ctx.send(
                node,
                self.layer,
                node,
                LAYER_CONTAINER,
                "order.arrived",
                payload={"order": order.order_id},
                subjects=arrived,
            )

    def on_notice_order_release(self, ev: Event) -> None:
        order = self.world.orders[ev.payload["order"]]
        if order.arrived:
            self._release(order, ev.node)

    def on_track_signal(self, ev: Event) -> None:
        w = self.world
        what = ev.payload["what"]
        order = w.orders[ev.payload["order"]]
        if what == "departed":
            if not order.departed:
                order.departed = True
                tx = settle_transaction(order, "departed", self._contracts_of(order))
                self.ctx.emit(
                    ev.node,
                    self.layer,
                    "transaction.paid",
                    (),
                    {"order": order.order_id, "paid": tx.paid, "status": tx.status},
                )
        elif what == "located":
            self.ctx.emit(ev.node, self.layer, "order.located", ev.subjects, {"order": order.order_id, "at": ev.node})
        elif what == "arrived":
            order.arrived.update(ev.subjects)
            self.ctx.emit(ev.node, self.layer, "order.arrival", ev.subjects, {"order": order.order_id})
            self._complete_order(order, ev.node)
        elif what == "exception":
            cause = ev.payload.get("cause", "")
            if cause == "lost":
                cid = ev.payload["container"]
                order.lost.add(cid)
                tx = settle_transaction(order, "lost", self._contracts_of(order))
                self.ctx.emit(
                    ev.node,
                    self.layer,
                    "transaction.failed",
                    (cid,),
                    {"order": order.order_id, "cause": "lost", "paid": tx.paid},
                )
                self._complete_order(order, ev.node)
            else:
                self.ctx.emit(ev.node, self.layer, "order.exception", ev.subjects, {"order": order.order_id, "cause": cause})

    def on_damage_signal(self, ev: Event) -> None:
        w = self.world
        cid = ev.payload["container"]
        order_id = ev.payload.get("order")
        if not order_id or order_id not in w.orders:
            self.ctx.emit(ev.node, self.layer, "damage.unmanaged", (cid,), {})
            return
        order = w.orders[order_id]
        order.damaged.add(cid)
        tx = settle_transaction(order, "damaged", self._contracts_of(order))
        self.ctx.emit(
            ev.node,
            self.layer,
            "transaction.failed",
            (cid,),
            {"order": order.order_id, "cause": "damaged", "paid": tx.paid},
        )
        if order.kind in ("demand", "recovery"):
            contract = w.contract_of.get(cid)
            if contract is not None:
                self.ctx.kernel_send(
                    contract.consignor,
                    self.layer,
                    "notice.recovery",
                    payload={"container": cid, "order": order.order_id},
                )
        self._complete_order(order, ev.node)

    def on_inspection_done(self, ev: Event) -> None:
        w = self.world
        order = w.orders[ev.payload["order"]]
        if order.kind not in ("demand", "recovery"):
            return
        tx = order.transaction
        if ev.payload.get("damaged", 0) == 0 and not order.damaged and not order.lost and tx.status != "failed":
            tx = settle_transaction(order, "delivered", self._contracts_of(order))
            self.ctx.emit(
                ev.node,
                self.layer,
                "transaction.settled",
                (),
                {"order": order.order_id, "paid": tx.paid},
            )

    def on_notice_recovery(self, ev: Event) -> None:
        cid = ev.payload["container"]
        self.ctx.send(
            ev.node,
            self.layer,
            ev.node,
            LAYER_TRANSPORT,
            "recovery.request",
            payload={"container": cid, "order": ev.payload.get("order")},
            subjects=(cid,),
        )

    def on_recovery_signal(self, ev: Event) -> None:
        # Relay of the transport layer's recovery decision up the stack.
        self.ctx.send(
            ev.node,
            self.layer,
            ev.node,
            LAYER_CONTAINER,
            "recovery.signal",
            payload=dict(ev.payload),
            subjects=ev.subjects,
        )

    def on_fault_orphan(self, ev: Event) -> None:
        w = self.world
        cid = ev.payload["container"]
        c = w.containers.get(cid)
        valid = (
            c is not None
            and cid not in w.lost
            and not c.orphaned
            and c.contents is not None
            and c.location in w.graph.nodes
        )
        if not valid:
            self.ctx.emit(ev.node, self.layer, "fault.skipped", (), {"fault": "orphan", "container": cid})
            return
        # Pull the container out of any pending groupings before it loses
        # its identity; physical flows no longer carry it.
        oid = w.order_of.pop(cid, None)
        if oid:
            order = w.orders[oid]
            order.drop_container(cid)
            order.arrived.discard(cid)
            if not order.notes:
                self.ctx.emit(ev.node, self.layer, "order.cancelled", (), {"order": oid, "reason": "orphaned"})
                order.released = True
        lid = w.load_of.pop(cid, None)
        if lid:
            load = w.loads[lid]
            load.removed.add(cid)
            load.arrived.discard(cid)
        bid = w.block_of.pop(cid, None)
        recheck_node = None
        if bid:
            block = w.blocks[bid]
            block.removed.add(cid)
            hop = block.current_hop()
            if hop is not None:
                recheck_node = hop.edge.dst
        for works in w.link_waiting.values():
            for work in works:
                if cid in work.container_ids:
                    work.container_ids.remove(cid)
        for stock in w.spares.values():
            if cid in stock:
                stock.remove(cid)
        w.withheld.pop(cid, None)
        c.consignor = None
        c.consignee = None
        c.contract = None
        c.orphaned = True
        w.orphans_injected += 1
        self.ctx.emit(ev.node, self.layer, "orphan.detected", (cid,), {"node": c.location})
        self.ctx.send(ev.node, self.layer, ev.node, LAYER_CONTAINER, "orphan.signal", subjects=(cid,))
        if recheck_node is not None:
            self.ctx.kernel_send(recheck_node, LAYER_LINK, "hop.recheck", payload={"block": bid}, priority=LAYER_LINK)


class TransportMachine(LayerMachine):
    """Layer 4: loads, end-to-end tracking, deadlines, loss recovery."""

    layer = LAYER_TRANSPORT

    def on_orders_submit(self, ev: Event) -> None:
        w = self.world
        orders = [w.orders[oid] for oid in ev.payload["order_ids"]]
        loads = build_loads(
            orders,
            w.containers,
            self.ctx.params.max_load_size,
            graph=w.graph,
            id_factory=lambda: w.new_id("LOAD"),
        )
        admitted = []
        for load in loads:
            w.loads[load.load_id] = load
            for cid in load.container_ids:
                w.load_of[cid] = load.load_id
            w.ledger.register(load.load_id, load.deadline)
            self.ctx.emit(
                ev.node,
                self.layer,
                "load.created",
                tuple(load.container_ids),
                {"load": load.load_id, "orders": list(load.member_orders), "deadline": load.deadline,
                 "destination": load.destination, "kind": load.kind},
            )
            report = admit_destination(load, w.graph, w.containers)
            if not report.passed:
                self.ctx.emit(
                    ev.node,
                    self.layer,
                    "admit.reject",
                    tuple(load.container_ids),
                    {"load": load.load_id, "codes": report.codes()},
                )
                continue
            admitted.append(load)
        if admitted:
            self.ctx.send(
                ev.node,
                self.layer,
                ev.node,
                LAYER_NETWORK,
                "loads.submit",
                payload={"load_ids": [l.load_id for l in admitted]},
                subjects=[cid for l in admitted for cid in l.container_ids],
            )

    def _orders_in(self, load: Load) -> list[Order]:
        return [self.world.orders[oid] for oid in load.member_orders]

    def on_block_departed(self, ev: Event) -> None:
        w = self.world
        block = w.blocks[ev.payload["block"]]
        for lid in block.parent_loads:
            load = w.loads[lid]
            if load.status == "pending":
                track(load, "departed", self.ctx.now, w.ledger)
                self.ctx.emit(ev.node, self.layer, "load.departed", tuple(load.container_ids), {"load": lid})
                for order in self._orders_in(load):
                    if not order.departed:
                        self.ctx.send(
                            ev.node,
                            self.layer,
                            ev.node,
                            LAYER_ORDER,
                            "track.signal",
                            payload={"what": "departed", "order": order.order_id},
                            subjects=order.container_ids,
                        )

    def on_block_located(self, ev: Event) -> None:
        w = self.world
        block = w.blocks[ev.payload["block"]]
        for lid in block.parent_loads:
            load = w.loads[lid]
            if load.status in ("departed", "in_transit"):
                track(load, "hop_completed", self.ctx.now, w.ledger)
                self.ctx.emit(ev.node, self.layer, "load.located", (), {"load": lid, "at": ev.node})
                for order in self._orders_in(load):
                    members = [cid for cid in order.container_ids if cid in block.container_ids]
                    if members:
                        self.ctx.send(
                            ev.node,
                            self.layer,
                            ev.node,
                            LAYER_ORDER,
                            "track.signal",
                            payload={"what": "located", "order": order.order_id},
                            subjects=members,
                        )

    def on_block_arrived(self, ev: Event) -> None:
        w = self.world
        block = w.blocks[ev.payload["block"]]
        cids = block.members()
        per_load: dict[str, list[str]] = {}
        for cid in cids:
            lid = w.load_of.get(cid)
            if lid:
                per_load.setdefault(lid, []).append(cid)
        for lid in sorted(per_load):
            load = w.loads[lid]
            load.arrived.update(per_load[lid])
            if load.is_complete() and load.status != "arrived":
                entry = track(load, "arrived", self.ctx.now, w.ledger)
                self.ctx.emit(
                    ev.node,
                    self.layer,
                    "load.arrived",
                    tuple(sorted(load.arrived)),
                    {"load": lid, "deadline": entry.deadline, "late": entry.late, "kind": load.kind},
                )
        per_order: dict[str, list[str]] = {}
        for cid in cids:
            oid = w.order_of.get(cid)
            if oid:
                per_order.setdefault(oid, []).append(cid)
        for oid in sorted(per_order):
            self.ctx.send(
                ev.node,
                self.layer,
                ev.node,
                LAYER_ORDER,
                "track.signal",
                payload={"what": "arrived", "order": oid},
                subjects=sorted(per_order[oid]),
            )

    def on_block_exception(self, ev: Event) -> None:
        w = self.world
        block = w.blocks[ev.payload["block"]]
        cause = ev.payload.get("cause", "")
        for lid in block.parent_loads:
            self.ctx.emit(ev.node, self.layer, "load.exception", (), {"load": lid, "cause": cause})
            load = w.loads[lid]
            for order in self._orders_in(load):
                self.ctx.send(
                    ev.node,
                    self.layer,
                    ev.node,
                    LAYER_ORDER,
                    "track.signal",
                    payload={"what": "exception", "order": order.order_id, "cause": cause},
                    subjects=(),
                )

    def _recover(self, node: str, cid: str) -> None:
        """Shared recovery decision for lost and damaged consignments."""
        w = self.world
        c = w.containers[cid]
        contract = w.contract_of.get(cid)
        if contract is None:
            return
        try:
            reship = self.ctx.best_route(contract.consignor, contract.consignee)
            reship_cost = self.ctx.route_cost_of(reship)
        except NoPathError:
            reship_cost = 0.0
        inventory = [w.containers[sid] for sid in w.spares.get(contract.consignor, [])]
        action = recover_loss(c, inventory, reship_cost, self.ctx.params.loss_penalty)
        self.ctx.emit(
            node,
            self.layer,
            "recover.decision",
            (cid,),
            {"action": action.action, "extra_cost": action.extra_cost, "spare": action.spare_id or ""},
        )
        if action.action in ("resend", "reorder"):
            self.ctx.send(
                node,
                self.layer,
                node,
                LAYER_ORDER,
                "recovery.signal",
                payload={"action": action.action, "lost": cid, "spare": action.spare_id},
                subjects=(cid,),
            )

    def on_fault_loss(self, ev: Event) -> None:
        w = self.world
        cid = ev.payload["container"]
        c = w.containers.get(cid)
        lid = w.load_of.get(cid)
        valid = (
            c is not None
            and cid not in w.lost
            and not c.orphaned
            and lid is not None
            and cid not in w.loads[lid].arrived
        )
        if not valid:
            self.ctx.emit(ev.node, self.layer, "fault.skipped", (), {"fault": "container_loss", "container": cid})
            return
        load = w.loads[lid]
        sid = w.shipment_of.get(cid)
        if sid:
            shp = w.shipments[sid]
            if cid in shp.container_ids:
                shp.container_ids.remove(cid)
            w.shipment_of.pop(cid, None)
        for works in w.link_waiting.values():
            for work in works:
                if cid in work.container_ids:
                    work.container_ids.remove(cid)
        bid = w.block_of.pop(cid, None)
        recheck = None
        if bid:
            block = w.blocks[bid]
            block.removed.add(cid)
            hop = block.current_hop()
            if hop is not None and block.departed:
                recheck = hop.edge.dst
        load.removed.add(cid)
        c.location = "lost"
        w.lost.add(cid)
        self.ctx.emit(ev.node, self.layer, "container.lost", (cid,), {"load": lid})
        if not load.expected():
            load.status = "failed"
            self.ctx.emit(ev.node, self.layer, "load.failed", (), {"load": lid, "cause": "all_lost"})
        elif load.is_complete() and load.status != "arrived":
            entry = track(load, "arrived", self.ctx.now, w.ledger)
            self.ctx.emit(
                ev.node,
                self.layer,
                "load.arrived",
                tuple(sorted(load.arrived)),
                {"load": lid, "deadline": entry.deadline, "late": entry.late, "kind": load.kind},
            )
        oid = w.order_of.get(cid)
        if oid:
            self.ctx.send(
                ev.node,
                self.layer,
                ev.node,
                LAYER_ORDER,
                "track.signal",
                payload={"what": "exception", "order": oid, "cause": "lost", "container": cid},
                subjects=(cid,),
            )
        if load.kind in ("demand", "recovery"):
            self._recover(ev.node, cid)
        if recheck is not None:
            self.ctx.kernel_send(recheck, LAYER_LINK, "hop.recheck", payload={"block": bid}, priority=LAYER_LINK)

    def on_recovery_request(self, ev: Event) -> None:
        self._recover(ev.node, ev.payload["container"])


class NetworkMachine(LayerMachine):
    """Layer 3: blocks, routing, rerouting, disruption response."""

    layer = LAYER_NETWORK

    def _dispatch_hop(self, block: Block, node: str) -> None:
        hop = block.current_hop()
        if hop is None:
            return
        if hop.edge.src != node:
            raise SimulationBugError(f"{block.block_id}: dispatching hop from {hop.edge.src} while at {node}")
        self.ctx.send(
            node,
            self.layer,
            node,
            LAYER_LINK,
            "block.hop",
            payload={"block": block.block_id, "hop_index": block.progress},
            subjects=block.members(),
            note={"block": block.block_id, "hop_index": block.progress},
        )

    def _park(self, block: Block, node: str, cause: str) -> None:
        block.parked = True
        self.ctx.emit(node, self.layer, "block.parked", tuple(block.members()), {"block": block.block_id, "cause": cause})
        self.ctx.send(
            node,
            self.layer,
            node,
            LAYER_TRANSPORT,
            "block.exception",
            payload={"block": block.block_id, "cause": cause},
            subjects=block.members(),
        )

    def _route_details(self, block: Block) -> dict:
        route = block.route
        return {
            "block": block.block_id,
            "nodes": list(route.nodes()),
            "modes": [h.mode for h in route.hops],
            "time": route.total_time,
            "cost": route.total_cost,
            "risk": route.total_risk,
        }

    def on_loads_submit(self, ev: Event) -> None:
        w = self.world
        loads = [w.loads[lid] for lid in ev.payload["load_ids"]]
        blocks = build_blocks(loads, self.ctx.params.max_block_size, id_factory=lambda: w.new_id("BLK"))
        for block in blocks:
            w.blocks[block.block_id] = block
            w.block_deadline[block.block_id] = min(w.loads[lid].deadline for lid in block.parent_loads)
            for cid in block.container_ids:
                w.block_of[cid] = block.block_id
            self.ctx.emit(
                ev.node,
                self.layer,
                "block.created",
                tuple(block.container_ids),
                {"block": block.block_id, "loads": list(block.parent_loads), "destination": block.dst},
            )
            try:
                route_block(block, w.graph, self.ctx.params.weights, self.ctx.params.allow_expedite)
            except NoPathError:
                self._park(block, ev.node, "no_path")
                continue
            self.ctx.emit(ev.node, self.layer, "block.routed", tuple(block.members()), self._route_details(block))
            self._dispatch_hop(block, ev.node)

    def on_step_done(self, ev: Event) -> None:
        w = self.world
        block = w.blocks[ev.payload["block"]]
        hop = block.current_hop()
        if hop is None:
            return
        block.history.append((hop.edge.src, hop.edge.dst, hop.mode))
        block.progress += 1
        block.current_node = ev.node
        block.hop_arrived = set()
        members = block.members()
        if not members:
            self.ctx.emit(ev.node, self.layer, "block.cancelled", (), {"block": block.block_id})
            return
        self.ctx.emit(ev.node, self.layer, "block.progress", tuple(members), {"block": block.block_id, "at": ev.node})
        if block.progress >= len(block.route.hops):
            self.ctx.emit(ev.node, self.layer, "block.arrived", tuple(members), {"block": block.block_id})
            self.ctx.send(
                ev.node,
                self.layer,
                ev.node,
                LAYER_TRANSPORT,
                "block.arrived",
                payload={"block": block.block_id},
                subjects=members,
            )
            return
        self.ctx.send(
            ev.node,
            self.layer,
            ev.node,
            LAYER_TRANSPORT,
            "block.located",
            payload={"block": block.block_id},
            subjects=members,
        )
        if not remaining_route_open(block, w.graph):
            if reroute(block, w.graph, self.ctx.params.weights, self.ctx.params.allow_expedite):
                self.ctx.emit(ev.node, self.layer, "block.rerouted", tuple(members), self._route_details(block))
            else:
                self._park(block, ev.node, "no_path")
                return
        self._dispatch_hop(block, ev.node)

    def on_block_departed(self, ev: Event) -> None:
        w = self.world
        block = w.blocks[ev.payload["block"]]
        if not block.departed:
            block.departed = True
            self.ctx.send(
                ev.node,
                self.layer,
                ev.node,
                LAYER_TRANSPORT,
                "block.departed",
                payload={"block": block.block_id},
                subjects=block.members(),
            )

    def _hop_started(self, block: Block) -> bool:
        if block.hop_arrived:
            return True
        return any(
            s.parent_block == block.block_id and s.state == "moving"
            for s in self.world.shipments.values()
        )

    def on_step_blocked(self, ev: Event) -> None:
        w = self.world
        block = w.blocks[ev.payload["block"]]
        hop = block.current_hop()
        if hop is None:
            return
        edge = w.graph.edges.get((hop.edge.src, hop.edge.dst))
        if edge is not None and edge.open:
            return  # stale signal; the plan already changed
        if self._hop_started(block):
            # Part of the block already crossed or is crossing; the rest
            # must wait for the edge to reopen rather than split the block.
            self.ctx.emit(ev.node, self.layer, "block.waiting", tuple(block.members()),
                          {"block": block.block_id, "cause": "edge_closed_mid_hop"})
            return
        self.ctx.send(ev.node, self.layer, ev.node, LAYER_LINK, "hop.cancel",
                      payload={"block": block.block_id})
        block.hop_arrived = set()
        if reroute(block, w.graph, self.ctx.params.weights, self.ctx.params.allow_expedite):
            self.ctx.emit(ev.node, self.layer, "block.rerouted", tuple(block.members()), self._route_details(block))
            self._dispatch_hop(block, ev.node)
        else:
            self._park(block, ev.node, "no_path")

    def on_link_exception(self, ev: Event) -> None:
        block = self.world.blocks[ev.payload["block"]]
        self.ctx.send(
            ev.node,
            self.layer,
            ev.node,
            LAYER_TRANSPORT,
            "block.exception",
            payload={"block": block.block_id, "cause": "no_mean_available"},
            subjects=block.members(),
        )

    def on_topology_changed(self, ev: Event) -> None:
        w = self.world
        for bid in sorted(w.blocks):
            block = w.blocks[bid]
            if not block.parked or block.current_node != ev.node:
                continue
            if not block.members():
                continue
            if reroute(block, w.graph, self.ctx.params.weights, self.ctx.params.allow_expedite):
                self.ctx.emit(ev.node, self.layer, "block.rerouted", tuple(block.members()), self._route_details(block))
                self._dispatch_hop(block, ev.node)


class LinkMachine(LayerMachine):
    """Layer 2: shipments, mean allocation, handovers, fault handling."""

    layer = LAYER_LINK

    def _enqueue(self, node: str, block: Block, hop_index: int, cids: list[str]) -> None:
        w = self.world
        queue = w.link_waiting.setdefault(node, [])
        queue[:] = [work for work in queue if not (work.block_id == block.block_id and work.hop_index != hop_index)]
        for work in queue:
            if work.block_id == block.block_id and work.hop_index == hop_index:
                for cid in cids:
                    if cid not in work.container_ids:
                        work.container_ids.append(cid)
                return
        queue.append(LinkWork(block.block_id, hop_index, list(cids), w.block_deadline.get(block.block_id, 0)))

    def _attempt_dispatch(self, node: str) -> None:
        w = self.world
        queue = w.link_waiting.get(node, [])
        if not queue:
            return
        remaining: list[LinkWork] = []
        notify_blocked: list[LinkWork] = []
        for work in sorted(queue, key=lambda wk: (wk.deadline, wk.block_id, wk.hop_index)):
            block = w.blocks.get(work.block_id)
            if block is None or block.route is None or work.hop_index != block.progress:
                continue  # stale work from a superseded plan
            cids = [cid for cid in work.container_ids if cid in block.members()]
            if not cids:
                continue
            hop = block.route.hops[block.progress]
            edge = w.graph.edges.get((hop.edge.src, hop.edge.dst))
            if edge is None or not edge.open:
                # Keep the work queued: the edge may reopen, or the network
                # layer may reroute the block if nothing is in flight yet.
                remaining.append(work)
                if not work.notified_blocked:
                    work.notified_blocked = True
                    notify_blocked.append(work)
                continue
            work.notified_blocked = False
            means = [m for m in w.idle_carriers() if m.state == "idle" and m.location == node]
            shipments, leftover = build_shipments(
                block.block_id,
                cids,
                (hop.edge.src, hop.edge.dst, hop.mode),
                means,
                w.containers,
                id_factory=lambda: w.new_id("SHP"),
            )
            for shp in shipments:
                w.shipments[shp.shipment_id] = shp
                mean = w.means[shp.assigned_mean]
                mean.state = "busy"
                w.mean_shipment[mean.mean_id] = shp.shipment_id
                for cid in shp.container_ids:
                    w.shipment_of[cid] = shp.shipment_id
                self.ctx.emit(
                    node,
                    self.layer,
                    "shipment.created",
                    tuple(shp.container_ids),
                    {"shipment": shp.shipment_id, "mean": shp.assigned_mean, "block": block.block_id,
                     "operator": shp.operator},
                )
                prev_ops = sorted(
                    {w.custody_last[cid] for cid in shp.container_ids if cid in w.custody_last}
                )
                for prev in prev_ops:
                    if prev == shp.operator:
                        continue
                    affected = tuple(c for c in shp.container_ids if w.custody_last.get(c) == prev)
                    record = record_handover(shp, prev, shp.operator, node, self.ctx.now)
                    w.handovers.append(record)
                    self.ctx.emit(
                        node,
                        self.layer,
                        "handover",
                        affected,
                        {"from": prev, "to": shp.operator, "shipment": shp.shipment_id},
                    )
                self.ctx.send(
                    node,
                    self.layer,
                    node,
                    LAYER_HANDLING,
                    "shipment.dispatch",
                    payload={"shipment": shp.shipment_id},
                    subjects=shp.container_ids,
                )
            if leftover:
                work.container_ids = leftover
                remaining.append(work)
                self.ctx.emit(
                    node,
                    self.layer,
                    "shipment.waiting",
                    tuple(leftover),
                    {"block": block.block_id, "count": len(leftover), "reason": "no_mean_available"},
                )
        w.link_waiting[node] = remaining
        for work in notify_blocked:
            self.ctx.send(
                node,
                self.layer,
                node,
                LAYER_NETWORK,
                "step.blocked",
                payload={"block": work.block_id},
                subjects=list(work.container_ids),
            )

    def on_block_hop(self, ev: Event) -> None:
        block = self.world.blocks[ev.payload["block"]]
        self._enqueue(ev.node, block, ev.payload["hop_index"], list(ev.subjects))
        self._attempt_dispatch(ev.node)

    def on_hop_cancel(self, ev: Event) -> None:
        w = self.world
        bid = ev.payload["block"]
        for node, queue in w.link_waiting.items():
            w.link_waiting[node] = [work for work in queue if work.block_id != bid]

    def on_step_departed(self, ev: Event) -> None:
        w = self.world
        shp = w.shipments[ev.payload["shipment"]]
        block = w.blocks[shp.parent_block]
        if block.progress == 0 and not block.departed:
            self.ctx.send(
                ev.node,
                self.layer,
                ev.node,
                LAYER_NETWORK,
                "block.departed",
                payload={"block": block.block_id},
                subjects=block.members(),
            )

    def _check_hop_complete(self, node: str, block: Block) -> None:
        members = set(block.members())
        if members and members <= block.hop_arrived:
            self.ctx.send(
                node,
                self.layer,
                node,
                LAYER_NETWORK,
                "step.done",
                payload={"block": block.block_id},
                subjects=sorted(members),
            )

    def on_step_arrived(self, ev: Event) -> None:
        w = self.world
        shp = w.shipments[ev.payload["shipment"]]
        block = w.blocks[shp.parent_block]
        for cid in shp.container_ids:
            w.custody_last[cid] = shp.operator
            w.shipment_of.pop(cid, None)
        block.hop_arrived.update(shp.container_ids)
        self._check_hop_complete(ev.node, block)

    def on_hop_recheck(self, ev: Event) -> None:
        block = self.world.blocks.get(ev.payload["block"])
        if block is not None and block.current_hop() is not None:
            self._check_hop_complete(ev.node, block)

    def on_mean_idle(self, ev: Event) -> None:
        self._attempt_dispatch(ev.node)

    def on_mean_problem(self, ev: Event) -> None:
        w = self.world
        fault: MeanFault = ev.payload["fault"]
        sid = ev.payload.get("shipment")
        if sid is None:
            self.ctx.emit(ev.node, self.layer, "mean.out_of_service", (), {"mean": fault.mean_id})
            return
        shp = w.shipments[sid]
        means = [m for m in w.idle_carriers() if m.state == "idle" and m.location == ev.node]
        action = handle_mean_fault(shp, fault, means, w.containers)
        self.ctx.emit(
            ev.node,
            self.layer,
            "link.action",
            tuple(shp.container_ids),
            {"action": action.kind, "shipment": sid, "mean": fault.mean_id},
        )
        if action.kind == "delay":
            self.ctx.send(
                ev.node,
                self.layer,
                ev.node,
                LAYER_HANDLING,
                "shipment.adjust",
                payload={"shipment": sid, "extra": action.extra_minutes},
                subjects=shp.container_ids,
            )
            return
        # Breakdown: the step was aborted back to this node; rerun allocation.
        block = w.blocks[shp.parent_block]
        for cid in shp.container_ids:
            w.shipment_of.pop(cid, None)
        self._enqueue(ev.node, block, block.progress, list(shp.container_ids))
        self._attempt_dispatch(ev.node)
        still_waiting = any(
            work.block_id == block.block_id and work.container_ids
            for work in w.link_waiting.get(ev.node, [])
        )
        if action.kind == "escalate" and still_waiting:
            self.ctx.send(
                ev.node,
                self.layer,
                ev.node,
                LAYER_NETWORK,
                "link.exception",
                payload={"block": block.block_id},
                subjects=shp.container_ids,
            )

    def on_stow_reject(self, ev: Event) -> None:
        """Unstackable shipment: strip one fragile container and retry."""
        w = self.world
        shp = w.shipments[ev.payload["shipment"]]
        block = w.blocks[shp.parent_block]
        fragiles = sorted(
            (cid for cid in shp.container_ids
             if w.containers[cid].contents and w.containers[cid].contents.fragile),
            key=lambda cid: (w.containers[cid].gross_weight, cid),
        )
        if not fragiles:
            raise SimulationBugError(f"{shp.shipment_id}: unstackable without fragile members")
        strip = fragiles[0]
        shp.state = "faulted"
        for cid in shp.container_ids:
            w.shipment_of.pop(cid, None)
        keep = [cid for cid in shp.container_ids if cid != strip]
        self.ctx.emit(ev.node, self.layer, "stow.split", (strip,), {"shipment": shp.shipment_id})
        self._enqueue(ev.node, block, block.progress, [strip])
        if keep:
            new = Shipment(
                shipment_id=w.new_id("SHP"),
                parent_block=shp.parent_block,
                container_ids=keep,
                step=shp.step,
                assigned_mean=shp.assigned_mean,
                operator=shp.operator,
            )
            w.shipments[new.shipment_id] = new
            w.mean_shipment[shp.assigned_mean] = new.shipment_id
            for cid in keep:
                w.shipment_of[cid] = new.shipment_id
            self.ctx.emit(
                ev.node,
                self.layer,
                "shipment.created",
                tuple(keep),
                {"shipment": new.shipment_id, "mean": new.assigned_mean, "block": block.block_id,
                 "operator": new.operator},
            )
            self.ctx.send(
                ev.node,
                self.layer,
                ev.node,
                LAYER_HANDLING,
                "shipment.dispatch",
                payload={"shipment": new.shipment_id},
                subjects=keep,
            )
        else:
            w.means[shp.assigned_mean].state = "idle"
            w.mean_shipment.pop(shp.assigned_mean, None)
            self._attempt_dispatch(ev.node)

    def on_dispatch_reject(self, ev: Event) -> None:
        self._requeue_shipment(ev, "dispatch_reject")

    def on_dispatch_blocked(self, ev: Event) -> None:
        shp = self._requeue_shipment(ev, "edge_closed")
        if shp is not None:
            self.ctx.send(
                ev.node,
                self.layer,
                ev.node,
                LAYER_NETWORK,
                "step.blocked",
                payload={"block": shp.parent_block},
                subjects=shp.container_ids,
            )

    def _requeue_shipment(self, ev: Event, reason: str):
        w = self.world
        shp = w.shipments[ev.payload["shipment"]]
        block = w.blocks[shp.parent_block]
        shp.state = "faulted"
        for cid in shp.container_ids:
            w.shipment_of.pop(cid, None)
        self.ctx.emit(ev.node, self.layer, "shipment.requeued", tuple(shp.container_ids),
                      {"shipment": shp.shipment_id, "reason": reason})
        self._enqueue(ev.node, block, block.progress, list(shp.container_ids))
        return shp

    def on_topology_changed(self, ev: Event) -> None:
        # A closure may invalidate waiting work; a reopening may unblock it.
        self._attempt_dispatch(ev.node)


class HandlingMachine(LayerMachine):
    """Layer 1: mean scheduling, stowage, step execution, fault reporting."""

    layer = LAYER_HANDLING

    def on_shipment_dispatch(self, ev: Event) -> None:
        w = self.world
        shp = w.shipments[ev.payload["shipment"]]
        mean = w.means[shp.assigned_mean]
        src, dst, mode = shp.step
        block_members = set(w.blocks[shp.parent_block].members())
        shp.container_ids = [cid for cid in shp.container_ids if cid not in w.lost and cid in block_members]
        if not shp.container_ids:
            mean.state = "idle"
            w.mean_shipment.pop(mean.mean_id, None)
            shp.state = "faulted"
            return
        if mean.state != "busy" or mean.location != src:
            self.ctx.send(ev.node, self.layer, ev.node, LAYER_LINK, "dispatch.reject",
                          payload={"shipment": shp.shipment_id}, subjects=shp.container_ids)
            return
        accepted = schedule_on_mean(mean, [shp], w.containers)
        if not accepted:
            mean.state = "idle"
            w.mean_shipment.pop(mean.mean_id, None)
            self.ctx.send(ev.node, self.layer, ev.node, LAYER_LINK, "dispatch.reject",
                          payload={"shipment": shp.shipment_id}, subjects=shp.container_ids)
            return
        try:
            plan = plan_stowage(mean, shp.container_ids, w.containers, self.ctx.params.max_stack_height)
        except LayerError:
            mean.state = "idle"
            w.mean_shipment.pop(mean.mean_id, None)
            self.ctx.send(ev.node, self.layer, ev.node, LAYER_LINK, "stow.reject",
                          payload={"shipment": shp.shipment_id}, subjects=shp.container_ids)
            return
        edge = w.graph.edges.get((src, dst))
        if edge is None or not edge.open:
            mean.state = "idle"
            w.mean_shipment.pop(mean.mean_id, None)
            self.ctx.send(ev.node, self.layer, ev.node, LAYER_LINK, "dispatch.blocked",
                          payload={"shipment": shp.shipment_id}, subjects=shp.container_ids)
            return
        if mean.kind == "ship" and len(shp.container_ids) > 1:
            self.ctx.emit(ev.node, self.layer, "stow", tuple(shp.container_ids),
                          {"mean": mean.mean_id, "stacks": [list(s) for s in plan.stacks]})
        minutes = travel_minutes(edge, mode)
        base_cost = edge.cost("normal")
        premium = edge.cost(mode) - base_cost
        block = w.blocks[shp.parent_block]
        bucket = "reposition" if block.kind == "reposition" else "transport"
        weight = sum(w.containers[cid].gross_weight for cid in shp.container_ids)
        self.ctx.emit(
            ev.node,
            self.layer,
            "depart",
            tuple(shp.container_ids),
            {"mean": mean.mean_id, "shipment": shp.shipment_id, "block": shp.parent_block,
             "src": src, "dst": dst, "mode": mode, "minutes": minutes,
             "cost": base_cost, "premium": premium, "bucket": bucket, "weight": weight},
        )
        for cid in shp.container_ids:
            w.containers[cid].location = mean.mean_id
        mean.location = "in_transit"
        shp.state = "moving"
        event = self.ctx.send(
            src,
            self.layer,
            dst,
            self.layer,
            "mean.arrival",
            payload={"shipment": shp.shipment_id},
            subjects=shp.container_ids,
            note={"mean": mean.mean_id},
            delay=minutes,
            priority=LAYER_HANDLING,
        )
        w.arrival_events[shp.shipment_id] = event
        self.ctx.send(ev.node, self.layer, ev.node, LAYER_LINK, "step.departed",
                      payload={"shipment": shp.shipment_id}, subjects=shp.container_ids)

    def on_mean_arrival(self, ev: Event) -> None:
        w = self.world
        shp = w.shipments[ev.payload["shipment"]]
        mean = w.means[shp.assigned_mean]
        w.arrival_events.pop(shp.shipment_id, None)
        w.mean_shipment.pop(mean.mean_id, None)
        for cid in shp.container_ids:
            w.containers[cid].location = ev.node
        mean.location = ev.node
        mean.state = "idle"
        shp.state = "done"
        self.ctx.emit(
            ev.node,
            self.layer,
            "arrive",
            tuple(shp.container_ids),
            {"mean": mean.mean_id, "shipment": shp.shipment_id, "block": shp.parent_block,
             "src": shp.step[0]},
        )
        self.ctx.send(ev.node, self.layer, ev.node, LAYER_LINK, "step.arrived",
                      payload={"shipment": shp.shipment_id}, subjects=shp.container_ids)
        self.ctx.send(ev.node, self.layer, ev.node, LAYER_LINK, "mean.idle",
                      payload={"mean": mean.mean_id})
        self._consider_deadhead(mean)

    def _consider_deadhead(self, mean) -> None:
        if mean.location != mean.home_node:
            self.ctx.kernel_send(mean.location, self.layer, "deadhead.check",
                                 payload={"mean": mean.mean_id}, delay=DEADHEAD_GRACE,
                                 priority=LAYER_HANDLING)

    def _useful_here(self, mean, node: str) -> bool:
        w = self.world
        for work in w.link_waiting.get(node, ()):
            for cid in work.container_ids:
                if w.containers[cid].gross_weight <= mean.max_total_weight:
                    return True
        return False

    def on_deadhead_check(self, ev: Event) -> None:
        w = self.world
        mean = w.means[ev.payload["mean"]]
        if mean.state != "idle" or mean.location != ev.node or mean.location == mean.home_node:
            return
        if self._useful_here(mean, ev.node):
            self._consider_deadhead(mean)  # look again later
            return
        try:
            route = shortest_path_scalarized(
                w.graph, ev.node, mean.home_node, self.ctx.params.weights, False
            )
        except NoPathError:
            return
        hop = route.hops[0]
        minutes = travel_minutes(hop.edge, "normal")
        mean.state = "busy"
        mean.location = "in_transit"
        self.ctx.emit(ev.node, self.layer, "deadhead.depart", (),
                      {"mean": mean.mean_id, "src": hop.edge.src, "dst": hop.edge.dst, "minutes": minutes})
        event = self.ctx.send(
            hop.edge.src,
            self.layer,
            hop.edge.dst,
            self.layer,
            "deadhead.arrival",
            payload={"mean": mean.mean_id},
            note={"mean": mean.mean_id},
            delay=minutes,
            priority=LAYER_HANDLING,
        )
        w.deadhead_events[mean.mean_id] = (event, hop.edge.src)

    def on_deadhead_arrival(self, ev: Event) -> None:
        w = self.world
        mean = w.means[ev.payload["mean"]]
        w.deadhead_events.pop(mean.mean_id, None)
        mean.location = ev.node
        mean.state = "idle"
        self.ctx.emit(ev.node, self.layer, "deadhead.arrive", (), {"mean": mean.mean_id})
        self.ctx.send(ev.node, self.layer, ev.node, LAYER_LINK, "mean.idle",
                      payload={"mean": mean.mean_id})
        self._consider_deadhead(mean)

    def on_shipment_adjust(self, ev: Event) -> None:
        w = self.world
        sid = ev.payload["shipment"]
        extra = ev.payload["extra"]
        old = w.arrival_events.get(sid)
        if old is None or old.cancelled:
            self.ctx.emit(ev.node, self.layer, "fault.skipped", (), {"fault": "mean_delay", "shipment": sid})
            return
        self.ctx.kernel.cancel(old)
        new = self.ctx.kernel.schedule(
            time=old.time + extra,
            priority=LAYER_HANDLING,
            node=old.node,
            layer=old.layer,
            kind=old.kind,
            payload=dict(old.payload),
            src_node=old.src_node,
            src_layer=old.src_layer,
            subjects=old.subjects,
            note=dict(old.note),
        )
        w.arrival_events[sid] = new
        self.ctx.emit(ev.node, self.layer, "step.delayed", old.subjects,
                      {"shipment": sid, "extra": extra, "new_arrival": new.time})

    def on_fault_mean(self, ev: Event) -> None:
        w = self.world
        fault: MeanFault = ev.payload["fault"]
        mean = w.means[fault.mean_id]
        deadhead = w.deadhead_events.get(mean.mean_id)
        if deadhead is not None:
            event, origin = deadhead
            if fault.kind == "breakdown":
                self.ctx.kernel.cancel(event)
                w.deadhead_events.pop(mean.mean_id, None)
                mean.location = origin
                mean.state = "broken"
                self.ctx.emit(ev.node, self.layer, "mean.broken", (), {"mean": mean.mean_id})
            else:
                self.ctx.emit(ev.node, self.layer, "fault.skipped", (),
                              {"fault": "mean_delay", "mean": mean.mean_id})
            return
        sid = w.mean_shipment.get(mean.mean_id)
        shp = w.shipments.get(sid) if sid else None
        moving = shp is not None and shp.state == "moving"
        if fault.kind == "delay":
            if not moving:
                self.ctx.emit(ev.node, self.layer, "fault.skipped", (), {"fault": "mean_delay", "mean": mean.mean_id})
                return
            self.ctx.emit(ev.node, self.layer, "step.delay_reported", tuple(shp.container_ids),
                          {"mean": mean.mean_id, "shipment": sid})
            self.ctx.send(ev.node, self.layer, ev.node, LAYER_LINK, "mean.problem",
                          payload={"fault": fault, "shipment": sid}, subjects=shp.container_ids)
            return
        # Breakdown.
        if moving:
            pending = w.arrival_events.pop(sid, None)
            if pending is not None:
                self.ctx.kernel.cancel(pending)
            src = shp.step[0]
            for cid in shp.container_ids:
                w.containers[cid].location = src
            mean.location = src
            mean.state = "broken"
            shp.state = "faulted"
            w.mean_shipment.pop(mean.mean_id, None)
            self.ctx.emit(ev.node, self.layer, "step.aborted", tuple(shp.container_ids),
                          {"mean": mean.mean_id, "shipment": sid, "back_to": src})
            self.ctx.send(ev.node, self.layer, ev.node, LAYER_LINK, "mean.problem",
                          payload={"fault": fault, "shipment": sid}, subjects=shp.container_ids)
        else:
            mean.state = "broken"
            self.ctx.emit(ev.node, self.layer, "mean.broken", (), {"mean": mean.mean_id})
            self.ctx.send(ev.node, self.layer, ev.node, LAYER_LINK, "mean.problem",
                          payload={"fault": fault, "shipment": None})


def build_machines(ctx: SimContext) -> dict[int, LayerMachine]:
    machines = [
        HandlingMachine(ctx),
        LinkMachine(ctx),
        NetworkMachine(ctx),
        TransportMachine(ctx),
        OrderMachine(ctx),
        ContainerMachine(ctx),
        ProductMachine(ctx),
    ]
    return {m.layer: m for m in machines}
