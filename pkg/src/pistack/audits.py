"""Independent audit passes over a finished trace.

Each function rechecks one of the simulator's commitments from the trace
alone (plus the scenario, for the initial census and physical limits),
using none of the runtime bookkeeping. They are deliberately written as
replay scans so a bug in the machines cannot hide itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from pistack.kernel import TraceEvent
from pistack.scenario_io import Scenario

# Descent at the consignor: message kinds that must carry the container,
# in order, target layers 6 down to 1.
DESCENT_CHAIN = (
    ("msg.containers.submit", 6),
    ("msg.sets.submit", 5),
    ("msg.orders.submit", 4),
    ("msg.loads.submit", 3),
    ("msg.block.hop", 2),
    ("msg.shipment.dispatch", 1),
)

# Ascent at the consignee: layers 1 up to 7.
ASCENT_CHAIN = (
    ("msg.mean.arrival", 1),
    ("msg.step.arrived", 2),
    ("msg.step.done", 3),
    ("msg.block.arrived", 4),
    ("msg.track.signal", 5),
    ("msg.order.arrived", 6),
    ("msg.containers.arrived", 7),
)


@dataclass
class AuditResult:
    name: str
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def flag(self, message: str) -> None:
        self.violations.append(message)


def check_layering(trace: list[TraceEvent], scenario: Scenario | None = None) -> AuditResult:
    """No layer-skipping messages anywhere in the trace.

    Every delivery must come from the kernel plane, from an adjacent layer
    of the same node, or from the physical-handling layer of another node
    over an edge that exists (a mean actually drove there).
    """
    result = AuditResult("layering")
    for i, ev in enumerate(trace):
        if not ev.kind.startswith("msg."):
            continue
        src_node = ev.details.get("src_node", "")
        src_layer = ev.details.get("src_layer", 0)
        if src_layer == 0 or ev.layer == 0:
            continue
        if src_node == ev.node and abs(src_layer - ev.layer) == 1:
            continue
        if src_layer == 1 and ev.layer == 1 and src_node != ev.node:
            if scenario is not None and (src_node, ev.node) not in scenario.graph.edges:
                result.flag(f"event {i}: physical transfer over missing edge {src_node}->{ev.node}")
            continue
        result.flag(
            f"event {i} at t={ev.t}: {ev.kind} delivered to {ev.node}/{ev.layer} "
            f"from {src_node}/{src_layer}"
        )
    return result


def _chain_complete(events: list[TraceEvent], cid: str, node: str, chain) -> bool:
    stage = 0
    for ev in events:
        if stage >= len(chain):
            break
        kind, layer = chain[stage]
        if ev.node == node and ev.layer == layer and ev.kind == kind and cid in ev.subjects:
            stage += 1
    return stage >= len(chain)


def check_descent_ascent(trace: list[TraceEvent]) -> AuditResult:
    """Every delivered container shows a full 7->1 descent at its consignor
    and a full 1->7 ascent at its consignee."""
    result = AuditResult("descent_ascent")
    consignor_of: dict[str, str] = {}
    for ev in trace:
        if ev.kind == "fill" and ev.subjects:
            consignor_of[ev.subjects[0]] = ev.details.get("consignor", ev.node)
    for ev in trace:
        if ev.kind != "deliver":
            continue
        cid = ev.subjects[0]
        consignee = ev.node
        consignor = consignor_of.get(cid)
        if consignor is None:
            result.flag(f"{cid}: delivered without a fill record")
            continue
        if not any(e.kind == "fill" and e.layer == 7 and cid in e.subjects for e in trace):
            result.flag(f"{cid}: no layer-7 fill event")
        if not _chain_complete(trace, cid, consignor, DESCENT_CHAIN):
            result.flag(f"{cid}: incomplete 7->1 descent at consignor {consignor}")
        if not _chain_complete(trace, cid, consignee, ASCENT_CHAIN):
            result.flag(f"{cid}: incomplete 1->7 ascent at consignee {consignee}")
    return result


def initial_census(scenario: Scenario) -> dict[str, str]:
    """Container id -> starting node, reproducing the materialization rule."""
    census = {}
    for depot in sorted(scenario.depots, key=lambda d: d.node_id):
        for class_id in sorted(depot.empty_stock):
            for i in range(depot.empty_stock[class_id]):
                census[f"C-{depot.node_id}-{class_id}-{i:03d}"] = depot.node_id
    return census


def initial_classes(scenario: Scenario) -> dict[str, str]:
    classes = {}
    for depot in sorted(scenario.depots, key=lambda d: d.node_id):
        for class_id in sorted(depot.empty_stock):
            for i in range(depot.empty_stock[class_id]):
                classes[f"C-{depot.node_id}-{class_id}-{i:03d}"] = class_id
    return classes


def _bucket(location: str, scenario: Scenario) -> str:
    if location == "lost":
        return "lost"
    attrs = scenario.graph.nodes.get(location)
    if attrs is None:
        return "in_transit"  # riding a mean
    if attrs.kind == "disposal":
        return "at_disposal"
    if attrs.is_depot:
        return "in_depot"
    return "at_site"


def check_census(scenario: Scenario, trace: list[TraceEvent]) -> AuditResult:
    """Container conservation: every container has exactly one location at
    every timestamp, transitions are physically contiguous, and the bucket
    sums always equal the created count. Lost containers never move again."""
    result = AuditResult("census")
    loc = dict(initial_census(scenario))
    created = len(loc)

    def check_total(i: int) -> None:
        buckets = {"at_disposal": 0, "in_depot": 0, "in_transit": 0, "at_site": 0, "lost": 0}
        for where in loc.values():
            buckets[_bucket(where, scenario)] += 1
        if sum(buckets.values()) != created:
            result.flag(f"event {i}: census buckets sum {sum(buckets.values())} != created {created}")

    for i, ev in enumerate(trace):
        if ev.kind == "depart":
            src = ev.details["src"]
            mean = ev.details["mean"]
            for cid in ev.subjects:
                if loc.get(cid) == "lost":
                    result.flag(f"event {i}: lost container {cid} departed")
                elif loc.get(cid) != src:
                    result.flag(f"event {i}: {cid} departed {src} but was at {loc.get(cid)}")
                loc[cid] = mean
        elif ev.kind == "arrive":
            mean = ev.details["mean"]
            for cid in ev.subjects:
                if loc.get(cid) == "lost":
                    result.flag(f"event {i}: lost container {cid} arrived")
                elif loc.get(cid) != mean:
                    result.flag(f"event {i}: {cid} arrived off mean {mean} but was at {loc.get(cid)}")
                loc[cid] = ev.node
        elif ev.kind == "step.aborted":
            back = ev.details["back_to"]
            mean = ev.details["mean"]
            for cid in ev.subjects:
                if loc.get(cid) != mean:
                    result.flag(f"event {i}: {cid} aborted off mean {mean} but was at {loc.get(cid)}")
                loc[cid] = back
        elif ev.kind == "container.lost":
            for cid in ev.subjects:
                loc[cid] = "lost"
        else:
            continue
        check_total(i)
    return result


def check_capacity(scenario: Scenario, trace: list[TraceEvent]) -> AuditResult:
    """No executed step exceeds its mean's slot or weight limits."""
    result = AuditResult("capacity")
    classes = {c.class_id: c for c in scenario.classes.values()}
    weight = {cid: classes[cls].tare_weight for cid, cls in initial_classes(scenario).items()}
    caps = {m.mean_id: (m.container_capacity, m.max_total_weight) for m in scenario.means}
    for i, ev in enumerate(trace):
        if ev.kind == "fill":
            weight[ev.subjects[0]] = ev.details["gross_weight"]
        elif ev.kind == "empty":
            weight[ev.subjects[0]] = ev.details["tare"]
        elif ev.kind == "depart":
            mean = ev.details["mean"]
            cap, max_w = caps[mean]
            if len(ev.subjects) > cap:
                result.flag(f"event {i}: {mean} carries {len(ev.subjects)} > capacity {cap}")
            total = sum(weight[cid] for cid in ev.subjects)
            if total > max_w + 1e-9:
                result.flag(f"event {i}: {mean} carries {total} kg > limit {max_w}")
    return result


def check_stowage(scenario: Scenario, trace: list[TraceEvent]) -> AuditResult:
    """Executed stowage plans are weight-monotone with fragile on top."""
    result = AuditResult("stowage")
    classes = {c.class_id: c for c in scenario.classes.values()}
    weight = {cid: classes[cls].tare_weight for cid, cls in initial_classes(scenario).items()}
    fragile: dict[str, bool] = {}
    for i, ev in enumerate(trace):
        if ev.kind == "fill":
            weight[ev.subjects[0]] = ev.details["gross_weight"]
            fragile[ev.subjects[0]] = bool(ev.details.get("fragile"))
        elif ev.kind == "empty":
            weight[ev.subjects[0]] = ev.details["tare"]
            fragile[ev.subjects[0]] = False
        elif ev.kind == "stow":
            placed = []
            for stack in ev.details["stacks"]:
                for below, above in zip(stack, stack[1:]):
                    if weight[above] > weight[below] + 1e-9:
                        result.flag(f"event {i}: {above} stacked above lighter {below}")
                for pos, cid in enumerate(stack):
                    if fragile.get(cid) and pos != len(stack) - 1:
                        result.flag(f"event {i}: fragile {cid} buried in a stack")
                placed.extend(stack)
            if sorted(placed) != sorted(set(placed)):
                result.flag(f"event {i}: a container appears twice in the plan")
            if sorted(placed) != sorted(ev.subjects):
                result.flag(f"event {i}: plan does not place exactly the shipment")
    return result


def check_custody(scenario: Scenario, trace: list[TraceEvent]) -> AuditResult:
    """Operator custody is continuous: every operator change between legs
    has a matching handover record at the junction node."""
    result = AuditResult("custody")
    operator_of = {m.mean_id: m.operator for m in scenario.means}
    legs: dict[str, list[tuple[str, str, int, int]]] = {}  # cid -> (op, arrive node, dep t, arr t)
    open_leg: dict[str, tuple[str, int]] = {}
    handovers: list[tuple[str, str, str, str, int]] = []  # cid, from, to, node, t
    for ev in trace:
        if ev.kind == "depart":
            op = operator_of[ev.details["mean"]]
            for cid in ev.subjects:
                open_leg[cid] = (op, ev.t)
        elif ev.kind == "arrive":
            for cid in ev.subjects:
                if cid in open_leg:
                    op, t0 = open_leg.pop(cid)
                    legs.setdefault(cid, []).append((op, ev.node, t0, ev.t))
        elif ev.kind == "step.aborted":
            for cid in ev.subjects:
                open_leg.pop(cid, None)
        elif ev.kind == "handover":
            for cid in ev.subjects:
                handovers.append((cid, ev.details["from"], ev.details["to"], ev.node, ev.t))
    for cid in sorted(legs):
        seq = legs[cid]
        for (op1, node1, _d1, a1), (op2, _node2, d2, _a2) in zip(seq, seq[1:]):
            if op1 == op2:
                continue
            ok = any(
                h[0] == cid and h[1] == op1 and h[2] == op2 and h[3] == node1 and a1 <= h[4] <= d2
                for h in handovers
            )
            if not ok:
                result.flag(f"{cid}: operator change {op1}->{op2} at {node1} without a handover record")
    return result


def deadline_scan(trace: list[TraceEvent]) -> dict[str, bool]:
    """Independent late-flag computation for every arrived load."""
    deadline: dict[str, int] = {}
    late: dict[str, bool] = {}
    for ev in trace:
        if ev.kind == "load.created":
            deadline[ev.details["load"]] = ev.details["deadline"]
        elif ev.kind == "load.arrived":
            lid = ev.details["load"]
            late[lid] = ev.t > deadline[lid]
    return late


def check_contents_locality(trace: list[TraceEvent]) -> AuditResult:
    """Containerization and de-containerization only ever happen at layer 7."""
    result = AuditResult("contents_locality")
    for i, ev in enumerate(trace):
        if ev.kind in ("fill", "empty", "deliver") and ev.layer != 7:
            result.flag(f"event {i}: {ev.kind} at layer {ev.layer}")
    return result


def check_perishable_placement(trace: list[TraceEvent]) -> AuditResult:
    """A perishable batch only ever rides in a refrigerated container."""
    result = AuditResult("perishable_placement")
    for i, ev in enumerate(trace):
        if ev.kind == "fill" and ev.details.get("perishable") and ev.details.get("class") != "reefer":
            result.flag(f"event {i}: perishable goods in a {ev.details.get('class')} container")
    return result


def check_goods_conservation(trace: list[TraceEvent]) -> AuditResult:
    """Delivered quantity equals filled quantity for untouched consignments."""
    result = AuditResult("goods_conservation")
    filled: dict[str, int] = {}
    touched: set[str] = set()
    for ev in trace:
        if ev.kind == "fill":
            filled[ev.subjects[0]] = ev.details["quantity"]
        elif ev.kind in ("container.lost", "container.damaged"):
            touched.update(ev.subjects)
        elif ev.kind == "deliver":
            cid = ev.subjects[0]
            if cid in touched:
                continue
            if ev.details["quantity"] != filled.get(cid):
                result.flag(f"{cid}: delivered {ev.details['quantity']} != filled {filled.get(cid)}")
    return result


def check_admit_guard(trace: list[TraceEvent]) -> AuditResult:
    """The transport-layer destination guard never fires in a correct run."""
    result = AuditResult("admit_guard")
    for i, ev in enumerate(trace):
        if ev.kind == "admit.reject":
            result.flag(f"event {i}: destination guard fired for load {ev.details.get('load')}")
    return result


def run_standard_audits(scenario: Scenario, trace: list[TraceEvent]) -> dict[str, AuditResult]:
    """The full audit battery, keyed by audit name."""
    audits = [
        check_layering(trace, scenario),
        check_descent_ascent(trace),
        check_census(scenario, trace),
        check_capacity(scenario, trace),
        check_stowage(scenario, trace),
        check_custody(scenario, trace),
        check_contents_locality(trace),
        check_perishable_placement(trace),
        check_goods_conservation(trace),
        check_admit_guard(trace),
    ]
    return {a.name: a for a in audits}
