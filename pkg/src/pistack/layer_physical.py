"""Bottom layers of the stack: link (2) and physical handling (1).

Link splits blocks into shipments, allocates a mean per shipment, records
operator handovers and decides what to do about mean faults. Physical
handling guards per-mean limits, plans stowage and executes the actual
point-to-point steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from pistack.domain import CARRIER_KINDS, CheckReport, PiContainer, PiMean
from pistack.layer_endpoint import LayerError


@dataclass
class Shipment:
    """Containers assigned to one mean for one point-to-point step."""

    shipment_id: str
    parent_block: str
    container_ids: list[str]
    step: tuple[str, str, str]  # (from node, to node, mode)
    assigned_mean: str
    operator: str
    state: str = "allocated"  # allocated | moving | done | faulted

    def __post_init__(self) -> None:
        if not self.container_ids:
            raise ValueError("a shipment cannot be empty")


@dataclass(frozen=True)
class HandoverRecord:
    shipment_id: str
    from_operator: str
    to_operator: str
    at_node: str
    time: int


@dataclass(frozen=True)
class MeanFault:
    mean_id: str
    kind: str  # breakdown | delay
    at_time: int
    extra_minutes: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("breakdown", "delay"):
            raise ValueError(f"unknown mean fault kind {self.kind!r}")
        if self.kind == "delay" and self.extra_minutes <= 0:
            raise ValueError("delay faults need extra_minutes > 0")


@dataclass(frozen=True)
class LinkAction:
    """Link-layer decision in response to a mean fault."""

    kind: str  # delay | reallocate | escalate
    shipment_id: str
    new_mean: str | None = None
    extra_minutes: int = 0


@dataclass(frozen=True)
class StowagePlan:
    """Bottom-to-top container stacks on one mean."""

    mean_id: str
    stacks: tuple[tuple[str, ...], ...]


def gross_weight_of(cids: list[str], containers: dict[str, PiContainer]) -> float:
    return sum(containers[cid].gross_weight for cid in cids)


def eligible_means(means: list[PiMean], at_node: str) -> list[PiMean]:
    """Idle long-distance carriers at a node, in ascending id order."""
    return sorted(
        (m for m in means if m.kind in CARRIER_KINDS and m.state == "idle" and m.location == at_node),
        key=lambda m: m.mean_id,
    )


def build_shipments(
    block_id: str,
    container_ids: list[str],
    step: tuple[str, str, str],
    available_means: list[PiMean],
    containers: dict[str, PiContainer],
    id_factory: Callable[[], str] | None = None,
) -> tuple[list[Shipment], list[str]]:
    """Split a block's hop into shipments, one idle mean each.

    First-fit-decreasing by gross weight; means are tried in ascending id.
    Containers that fit no mean are returned to wait — never dropped.
    """
    counter = [0]

    def default_id() -> str:
        counter[0] += 1
        return f"SHP-{counter[0]:04d}"

    make_id = id_factory or default_id
    means = eligible_means(available_means, step[0])
    ordered = sorted(container_ids, key=lambda cid: (-containers[cid].gross_weight, cid))

    bins: list[dict] = []  # {"mean": PiMean, "cids": [...], "weight": float}
    used_means: set[str] = set()
    leftover: list[str] = []
    for cid in ordered:
        w = containers[cid].gross_weight
        placed = False
        for b in bins:
            mean = b["mean"]
            if len(b["cids"]) + 1 <= mean.container_capacity and b["weight"] + w <= mean.max_total_weight:
                b["cids"].append(cid)
                b["weight"] += w
                placed = True
                break
        if placed:
            continue
        for mean in means:
            if mean.mean_id in used_means:
                continue
            if mean.container_capacity >= 1 and w <= mean.max_total_weight:
                bins.append({"mean": mean, "cids": [cid], "weight": w})
                used_means.add(mean.mean_id)
                placed = True
                break
        if not placed:
            leftover.append(cid)

    shipments = [
        Shipment(
            shipment_id=make_id(),
            parent_block=block_id,
            container_ids=sorted(b["cids"]),
            step=step,
            assigned_mean=b["mean"].mean_id,
            operator=b["mean"].operator,
        )
        for b in bins
    ]
    return shipments, sorted(leftover)


def record_handover(
    shipment: Shipment,
    from_operator: str,
    to_operator: str,
    at_node: str,
    time: int,
) -> HandoverRecord:
    """Write the custody transfer between two operators at one node."""
    if from_operator == to_operator:
        raise LayerError("same_operator", "a handover needs two distinct operators")
    if shipment.step[0] != at_node:
        raise LayerError("not_at_node", f"{shipment.shipment_id} is not at {at_node}")
    return HandoverRecord(shipment.shipment_id, from_operator, to_operator, at_node, time)


def handle_mean_fault(
    shipment: Shipment,
    fault: MeanFault,
    available_means: list[PiMean],
    containers: dict[str, PiContainer],
) -> LinkAction:
    """Link-layer response: absorb a delay, reallocate, or escalate.

    Physical handling only reports problems upward; the corrective choice
    is made here.
    """
    if fault.mean_id != shipment.assigned_mean:
        raise ValueError("fault does not target this shipment's mean")
    if fault.kind == "delay":
        return LinkAction("delay", shipment.shipment_id, extra_minutes=fault.extra_minutes)
    weight = gross_weight_of(shipment.container_ids, containers)
    for mean in eligible_means(available_means, shipment.step[0]):
        if mean.mean_id == fault.mean_id:
            continue
        if len(shipment.container_ids) <= mean.container_capacity and weight <= mean.max_total_weight:
            return LinkAction("reallocate", shipment.shipment_id, new_mean=mean.mean_id)
    return LinkAction("escalate", shipment.shipment_id)


def schedule_on_mean(
    mean: PiMean,
    candidate_shipments: list[Shipment],
    containers: dict[str, PiContainer],
) -> list[Shipment]:
    """Accept shipments in arrival order while both mean limits hold."""
    accepted: list[Shipment] = []
    count = 0
    weight = 0.0
    for shp in candidate_shipments:
        n = len(shp.container_ids)
        w = gross_weight_of(shp.container_ids, containers)
        if count + n <= mean.container_capacity and weight + w <= mean.max_total_weight:
            accepted.append(shp)
            count += n
            weight += w
    return accepted


def plan_stowage(
    mean: PiMean,
    container_ids: list[str],
    containers: dict[str, PiContainer],
    max_stack_height: int = 4,
) -> StowagePlan:
    """Vertical placement on a mean: heavy below, fragile on top.

    Ships stack up to `max_stack_height`; every other mean kind carries a
    single layer. Containers are placed in descending gross weight, which
    makes weight monotonicity automatic; a fragile container caps its
    stack. Raises `unstackable` when no placement can satisfy both rules.
    """
    if max_stack_height < 1:
        raise ValueError("max_stack_height must be >= 1")
    if not container_ids:
        return StowagePlan(mean.mean_id, ())
    if mean.kind != "ship" or max_stack_height == 1:
        return StowagePlan(mean.mean_id, tuple((cid,) for cid in sorted(container_ids)))

    n = len(container_ids)
    stack_count = math.ceil(n / max_stack_height)
    fragiles = sum(
        1 for cid in container_ids if containers[cid].contents and containers[cid].contents.fragile
    )
    if fragiles > stack_count:
        raise LayerError("unstackable", f"{fragiles} fragile containers but only {stack_count} stacks")

    def sort_key(cid: str):
        c = containers[cid]
        fragile = bool(c.contents and c.contents.fragile)
        # At equal weight a rigid container goes first: a fragile one caps
        # its stack, so deferring it keeps equal-weight plans feasible.
        return (-c.gross_weight, fragile, cid)

    ordered = sorted(container_ids, key=sort_key)
    stacks: list[list[str]] = [[] for _ in range(stack_count)]
    capped = [False] * stack_count
    remaining = n
    remaining_fragile = fragiles
    for cid in ordered:
        c = containers[cid]
        fragile = bool(c.contents and c.contents.fragile)
        open_slots = [i for i in range(stack_count) if not capped[i] and len(stacks[i]) < max_stack_height]
        if fragile:
            # Cap the fullest open stack whose loss of headroom still
            # leaves room for everything not yet placed.
            placed = False
            for i in sorted(open_slots, key=lambda i: (-len(stacks[i]), i)):
                cap_after = sum(
                    max_stack_height - len(stacks[j])
                    for j in range(stack_count)
                    if not capped[j] and j != i
                )
                open_after = sum(1 for j in range(stack_count) if not capped[j]) - 1
                if cap_after >= remaining - 1 and open_after >= remaining_fragile - 1:
                    stacks[i].append(cid)
                    capped[i] = True
                    placed = True
                    break
            if not placed:
                raise LayerError("unstackable", "fragile placement exhausts stack capacity")
            remaining_fragile -= 1
        else:
            if not open_slots:
                raise LayerError("unstackable", "no open stack left for a rigid container")
            i = min(open_slots, key=lambda i: (len(stacks[i]), i))
            stacks[i].append(cid)
        remaining -= 1
    return StowagePlan(mean.mean_id, tuple(tuple(s) for s in stacks if s))


def check_stowage(plan: StowagePlan, containers: dict[str, PiContainer]) -> CheckReport:
    """Independent validity check for an executed plan."""
    report = CheckReport()
    seen: set[str] = set()
    for stack in plan.stacks:
        for below, above in zip(stack, stack[1:]):
            if containers[above].gross_weight > containers[below].gross_weight:
                report.add("weight_inversion", f"{above} above heavier-limit {below}")
        for pos, cid in enumerate(stack):
            c = containers[cid]
            if c.contents and c.contents.fragile and pos != len(stack) - 1:
                report.add("fragile_buried", f"{cid} is fragile but not topmost")
        for cid in stack:
            if cid in seen:
                report.add("duplicate_placement", f"{cid} placed twice")
            seen.add(cid)
    return report
