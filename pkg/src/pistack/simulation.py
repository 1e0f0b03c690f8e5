"""Scenario execution: world construction, fault routing, the run loop.

The kernel plane owns everything that arrives from outside the stack:
demand releases, the fault plan, topology disruptions and the empty
repositioning sweep. Those events are delivered straight to the layer that
handles them; all in-stack traffic stays strictly adjacent.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from pistack.kernel import Event, FaultEntry, Kernel, PRIORITY_CONTROL, PRIORITY_FAULT, SimulationBugError
from pistack.layer_endpoint import reposition_empties
from pistack.layer_physical import MeanFault
from pistack.routing import apply_disruption
from pistack.scenario_io import MetricsReport, Scenario, parse_scenario, summarize
from pistack.stack import (
    LAYER_CONTAINER,
    LAYER_HANDLING,
    LAYER_LINK,
    LAYER_NETWORK,
    LAYER_ORDER,
    LAYER_PRODUCT,
    LAYER_TRANSPORT,
    SimContext,
    World,
    build_machines,
)


def materialize_containers(world: World, scenario: Scenario) -> None:
    """Create the physical container census from declared depot stock.

    Ids are deterministic functions of (node, class, index) so that fault
    plans and audits can name containers before the run starts.
    """
    from pistack.domain import PiContainer

    for depot in sorted(scenario.depots, key=lambda d: d.node_id):
        world.depot_levels[depot.node_id] = replace(depot)
        for class_id in sorted(depot.empty_stock):
            count = depot.empty_stock[class_id]
            bucket = world.depot_stock.setdefault(depot.node_id, {}).setdefault(class_id, [])
            for i in range(count):
                cid = f"C-{depot.node_id}-{class_id}-{i:03d}"
                world.containers[cid] = PiContainer(
                    container_id=cid,
                    cls=world.classes[class_id],
                    location=depot.node_id,
                )
                bucket.append(cid)
            bucket.sort()


class Simulation:
    """One run: a kernel, a world, seven machines and the kernel plane."""

    def __init__(self, scenario: Scenario, seed: int | None = None, horizon: int | None = None,
                 no_faults: bool = False):
        self.scenario = scenario
        params = scenario.params
        if seed is not None or horizon is not None:
            params = replace(
                params,
                seed=params.seed if seed is None else seed,
                horizon=params.horizon if horizon is None else horizon,
            )
        self.kernel = Kernel(seed=params.seed)
        self.world = World(
            graph=scenario.graph,
            base_graph=scenario.graph,
            classes=dict(scenario.classes),
            params=params,
            disposal_nodes=list(scenario.disposal_nodes),
        )
        materialize_containers(self.world, scenario)
        for mean in scenario.means:
            self.world.means[mean.mean_id] = replace(mean)
        self.ctx = SimContext(self.world, self.kernel)
        self.machines = build_machines(self.ctx)
        self.no_faults = no_faults
        self._schedule_inputs()

    def _schedule_inputs(self) -> None:
        for demand in self.scenario.demands:
            self.kernel.schedule(
                time=demand.release_time,
                priority=PRIORITY_CONTROL,
                node=demand.consignor,
                layer=LAYER_PRODUCT,
                kind="demand.release",
                payload={"demand": demand},
                note={"demand": demand.demand_id},
            )
        if not self.no_faults:
            for t, entry in self.scenario.faults.resolved_times(self.kernel.rng):
                self.kernel.schedule(
                    time=t,
                    priority=PRIORITY_FAULT,
                    node="",
                    layer=0,
                    kind="fault.dispatch",
                    payload={"entry": entry},
                    note={"fault": entry.kind},
                )
        if any(self.world.below_min(node) for node in sorted(self.world.depot_levels)):
            self.ctx.schedule_sweep()

    # ------------------------------------------------------------- kernel plane

    def _resolve_container(self, selector) -> str | None:
        if isinstance(selector, str):
            return selector if selector in self.world.containers else None
        filled = self.world.demand_filled.get(selector["demand"], [])
        index = selector["index"]
        if 0 <= index < len(filled):
            return filled[index]
        return None

    def _skip(self, entry: FaultEntry, reason: str) -> None:
        self.kernel.emit("", 0, "fault.skipped", (), {"fault": entry.kind, "reason": reason})

    def _dispatch_fault(self, entry: FaultEntry) -> None:
        w = self.world
        now = self.kernel.clock
        kind = entry.kind
        if kind in ("edge_close", "edge_reopen", "edge_cost_surge", "edge_delay_surge"):
            edge = tuple(entry.params["edge"])
            event = {"edge_close": "close", "edge_reopen": "reopen",
                     "edge_cost_surge": "cost_surge", "edge_delay_surge": "delay_surge"}[kind]
            w.graph = apply_disruption(w.graph, edge, event, entry.params.get("factor"))
            self.kernel.emit(
                "", 0, "edge.update", (),
                {"src": edge[0], "dst": edge[1], "event": event, "factor": entry.params.get("factor", 0)},
            )
            affected = set()
            for bid in sorted(w.blocks):
                block = w.blocks[bid]
                if block.parked and block.members():
                    affected.add(block.current_node)
            for node, queue in sorted(w.link_waiting.items()):
                if queue:
                    affected.add(node)
            for node in sorted(affected):
                self.ctx.kernel_send(node, LAYER_LINK, "topology.changed", priority=LAYER_LINK)
                self.ctx.kernel_send(node, LAYER_NETWORK, "topology.changed", priority=LAYER_NETWORK)
            return
        if kind in ("mean_breakdown", "mean_delay"):
            mean = w.means.get(entry.params["mean"])
            if mean is None or mean.state == "broken":
                self._skip(entry, "mean_unavailable")
                return
            if mean.location == "in_transit":
                sid = w.mean_shipment.get(mean.mean_id)
                if sid:
                    node = w.shipments[sid].step[0]
                elif mean.mean_id in w.deadhead_events:
                    node = w.deadhead_events[mean.mean_id][1]
                else:
                    node = mean.home_node
            else:
                node = mean.location
            fault = MeanFault(
                mean_id=mean.mean_id,
                kind="breakdown" if kind == "mean_breakdown" else "delay",
                at_time=now,
                extra_minutes=entry.params.get("extra_minutes", 0),
            )
            self.ctx.kernel_send(node, LAYER_HANDLING, "fault.mean",
                                 payload={"fault": fault}, priority=PRIORITY_FAULT)
            return
        cid = self._resolve_container(entry.params["container"])
        if cid is None:
            self._skip(entry, "unknown_container")
            return
        c = w.containers[cid]
        if kind == "container_damage":
            if cid in w.lost:
                self._skip(entry, "container_lost")
                return
            if c.location in w.graph.nodes:
                anchor = c.location
            else:
                sid = w.shipment_of.get(cid)
                anchor = w.shipments[sid].step[1] if sid else None
            if anchor is None:
                self._skip(entry, "container_unlocated")
                return
            self.ctx.kernel_send(anchor, LAYER_CONTAINER, "fault.damage",
                                 payload={"container": cid}, priority=PRIORITY_FAULT)
        elif kind == "container_loss":
            lid = w.load_of.get(cid)
            if lid is None or cid in w.lost:
                self._skip(entry, "not_in_transport")
                return
            origin = w.loads[lid].origin
            self.ctx.kernel_send(origin, LAYER_TRANSPORT, "fault.loss",
                                 payload={"container": cid}, priority=PRIORITY_FAULT)
        elif kind == "orphan":
            if c.location not in w.graph.nodes or cid in w.lost or c.orphaned or c.contents is None:
                self._skip(entry, "not_orphanable")
                return
            self.ctx.kernel_send(c.location, LAYER_ORDER, "fault.orphan",
                                 payload={"container": cid}, priority=PRIORITY_FAULT)

    def _run_sweep(self) -> None:
        w = self.world
        w.sweep_scheduled = False
        depots = w.depot_states()
        moves, shortages = reposition_empties(depots, w.graph, w.params.weights)
        self.kernel.emit("", 0, "reposition.plan", (),
                         {"moves": len(moves), "shortages": len(shortages)})
        for cls, node, unmet in shortages:
            self.kernel.emit("", 0, "shortage", (), {"class": cls, "node": node, "unmet": unmet})
        for move in moves:
            self.ctx.kernel_send(
                move.donor,
                LAYER_CONTAINER,
                "reposition.request",
                payload={"class": move.class_id, "count": move.count, "receiver": move.receiver},
                priority=LAYER_CONTAINER,
            )

    def _on_kernel_event(self, ev: Event) -> None:
        if ev.kind == "fault.dispatch":
            self._dispatch_fault(ev.payload["entry"])
        elif ev.kind == "reposition.sweep":
            self._run_sweep()
        else:
            raise SimulationBugError(f"kernel plane has no handler for {ev.kind!r}")

    def dispatch(self, ev: Event) -> None:
        if ev.layer == 0:
            self._on_kernel_event(ev)
        else:
            self.machines[ev.layer].handle(ev)

    def run(self):
        trace = self.kernel.run_until(self.world.params.horizon, self.dispatch)
        return SimulationResult(trace=trace, world=self.world, kernel=self.kernel)


@dataclass
class SimulationResult:
    trace: list
    world: World
    kernel: Kernel

    @property
    def ledger(self):
        return self.world.ledger

    def metrics(self) -> MetricsReport:
        return summarize(self.trace)


def run_scenario(scenario, seed: int | None = None, horizon: int | None = None,
                 no_faults: bool = False) -> SimulationResult:
    """Parse (if needed) and execute one scenario end to end."""
    if isinstance(scenario, (dict, str)):
        scenario = parse_scenario(scenario)
    sim = Simulation(scenario, seed=seed, horizon=horizon, no_faults=no_faults)
    return sim.run()
