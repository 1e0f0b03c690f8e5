"""Scenario ingestion, trace persistence and metric summarization.

Scenarios are single JSON documents parsed in strict mode: any unknown key
is an error, every referenced id must resolve, and parameters must sit in
their documented ranges. Traces are JSON Lines with a fixed field order so
identical runs serialize to identical bytes. The metrics report is computed
from the trace alone, which is why `report` on a saved trace reproduces the
run-time report exactly.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from pistack.domain import (
    CheckReport,
    ContainerClass,
    DEFAULT_CLASSES,
    PiMean,
    Product,
    required_class_id,
)
from pistack.kernel import FaultEntry, FaultPlan, TraceEvent
from pistack.layer_endpoint import DepotState
from pistack.routing import (
    CriteriaWeights,
    EdgeAttrs,
    LogisticsGraph,
    NoPathError,
    NodeAttrs,
    shortest_path_scalarized,
)

SCHEMA_VERSION = 1

FAULT_KINDS = (
    "mean_breakdown",
    "mean_delay",
    "container_damage",
    "container_loss",
    "orphan",
    "edge_close",
    "edge_reopen",
    "edge_cost_surge",
    "edge_delay_surge",
)


class ScenarioError(Exception):
    """Scenario rejection; `code` names the failure class."""

    code = "parse_error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ParseError(ScenarioError):
    code = "parse_error"


class UnresolvedReferenceError(ScenarioError):
    code = "unresolved_reference"


class InvalidParamError(ScenarioError):
    code = "invalid_param"


class MulticastError(ScenarioError):
    """Multi-consignee addressing: physically impossible, always rejected."""

    code = "multicast_unsupported"


class TruncatedTraceError(Exception):
    code = "truncated_trace"


@dataclass(frozen=True)
class DemandSpec:
    """One shipping demand: fill N containers with a product batch."""

    demand_id: str
    product: Product
    consignor: str
    consignee: str
    deadline: int
    priority: int = 5
    containers: int = 1
    release_time: int = 0
    sub_order_boundaries: tuple[int, ...] = ()
    payment_total: float = 0.0
    milestones: tuple[tuple[str, float], ...] = ()
    spares: int = 0


@dataclass(frozen=True)
class Params:
    weights: CriteriaWeights = field(default_factory=CriteriaWeights)
    max_load_size: int = 20
    max_block_size: int = 10
    deadline_window: int = 1440
    reorder_delay: int = 2880
    loss_penalty: float = 10.0
    max_stack_height: int = 4
    allow_expedite: bool = False
    horizon: int = 10080
    seed: int = 0
    disposal_node: str | None = None
    pareto_node_bound: int = 12


@dataclass
class Scenario:
    graph: LogisticsGraph
    classes: dict[str, ContainerClass]
    means: list[PiMean]
    depots: list[DepotState]
    demands: list[DemandSpec]
    faults: FaultPlan
    params: Params
    disposal_nodes: list[str] = field(default_factory=list)


def _strict(obj: dict, allowed: Iterable[str], where: str) -> None:
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ParseError(f"{where}: unknown keys {unknown}")


def _need(obj: dict, key: str, where: str) -> Any:
    if key not in obj:
        raise ParseError(f"{where}: missing required key {key!r}")
    return obj[key]


def _as_int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidParamError(f"{where}: expected an integer, got {value!r}")
    return value


def _as_num(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidParamError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _as_str(value: Any, where: str) -> str:
    if not isinstance(value, str) or not value:
        raise InvalidParamError(f"{where}: expected a non-empty string, got {value!r}")
    return value


def _as_bool(value: Any, where: str) -> bool:
    if not isinstance(value, bool):
        raise InvalidParamError(f"{where}: expected a boolean, got {value!r}")
    return value


def _single_consignee(demand: dict, where: str) -> str:
    if "consignees" in demand:
        raise MulticastError(f"{where}: multi-consignee addressing is not supported (unicast only)")
    value = _need(demand, "consignee", where)
    if isinstance(value, (list, tuple, dict)):
        raise MulticastError(f"{where}: consignee must be a single node id (unicast only)")
    return _as_str(value, f"{where}.consignee")


def parse_scenario(document: dict | str) -> Scenario:
    """Parse and structurally validate a scenario document.

    Accepts a parsed dict or raw JSON text. Strict mode: unknown keys,
    unresolved references and out-of-range parameters are all rejected.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ParseError("scenario document must be a JSON object")
    _strict(
        document,
        ("schema_version", "graph", "classes", "means", "depots", "demands", "faults", "params"),
        "scenario",
    )
    version = _need(document, "schema_version", "scenario")
    if version != SCHEMA_VERSION:
        raise InvalidParamError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")

    graph = _parse_graph(_need(document, "graph", "scenario"))
    classes = _parse_classes(document.get("classes", {}))
    means = _parse_means(document.get("means", []), graph)
    depots = _parse_depots(document.get("depots", []), graph, classes)
    demands = _parse_demands(document.get("demands", []), graph)
    faults = _parse_faults(document.get("faults", []), graph, means, demands)
    params, disposal_nodes = _parse_params(document.get("params", {}), graph)
    return Scenario(graph, classes, means, depots, demands, faults, params, disposal_nodes)


def _parse_graph(doc: Any) -> LogisticsGraph:
    if not isinstance(doc, dict):
        raise ParseError("graph must be an object")
    _strict(doc, ("nodes", "edges"), "graph")
    nodes = []
    for i, nd in enumerate(doc.get("nodes", [])):
        where = f"graph.nodes[{i}]"
        if not isinstance(nd, dict):
            raise ParseError(f"{where}: node must be an object")
        _strict(nd, ("id", "kind", "accepts_dangerous", "reefer_plugs", "is_container_depot"), where)
        try:
            nodes.append(
                NodeAttrs(
                    node_id=_as_str(_need(nd, "id", where), f"{where}.id"),
                    kind=_as_str(nd.get("kind", "hub"), f"{where}.kind"),
                    accepts_dangerous=_as_bool(nd.get("accepts_dangerous", True), f"{where}.accepts_dangerous"),
                    reefer_plugs=_as_int(nd.get("reefer_plugs", 0), f"{where}.reefer_plugs"),
                    is_container_depot=_as_bool(nd.get("is_container_depot", False), f"{where}.is_container_depot"),
                )
            )
        except ValueError as exc:
            raise InvalidParamError(f"{where}: {exc}") from exc
    node_ids = {n.node_id for n in nodes}
    edges = []
    for i, ed in enumerate(doc.get("edges", [])):
        where = f"graph.edges[{i}]"
        if not isinstance(ed, dict):
            raise ParseError(f"{where}: edge must be an object")
        _strict(
            ed,
            ("from", "to", "base_time", "base_cost", "risk", "expedite_time_factor", "expedite_cost_factor", "open"),
            where,
        )
        src = _as_str(_need(ed, "from", where), f"{where}.from")
        dst = _as_str(_need(ed, "to", where), f"{where}.to")
        for ref in (src, dst):
            if ref not in node_ids:
                raise UnresolvedReferenceError(f"{where}: unknown node {ref!r}")
        try:
            edges.append(
                EdgeAttrs(
                    src=src,
                    dst=dst,
                    base_time=_as_int(_need(ed, "base_time", where), f"{where}.base_time"),
                    base_cost=_as_num(_need(ed, "base_cost", where), f"{where}.base_cost"),
                    risk=_as_num(ed.get("risk", 0.0), f"{where}.risk"),
                    expedite_time_factor=_as_num(ed.get("expedite_time_factor", 1.0), f"{where}.expedite_time_factor"),
                    expedite_cost_factor=_as_num(ed.get("expedite_cost_factor", 1.0), f"{where}.expedite_cost_factor"),
                    open=_as_bool(ed.get("open", True), f"{where}.open"),
                )
            )
        except ValueError as exc:
            raise InvalidParamError(f"{where}: {exc}") from exc
    try:
        return LogisticsGraph.build(nodes, edges)
    except ValueError as exc:
        raise InvalidParamError(f"graph: {exc}") from exc


def _parse_classes(doc: Any) -> dict[str, ContainerClass]:
    if not isinstance(doc, dict):
        raise ParseError("classes must be an object keyed by class id")
    classes = dict(DEFAULT_CLASSES)
    for class_id, spec in doc.items():
        where = f"classes.{class_id}"
        if not isinstance(spec, dict):
            raise ParseError(f"{where}: class spec must be an object")
        _strict(spec, ("internal_volume", "max_payload", "tare_weight"), where)
        base = DEFAULT_CLASSES.get(class_id)
        if base is None:
            raise InvalidParamError(f"{where}: unknown container class")
        try:
            classes[class_id] = ContainerClass(
                class_id=class_id,
                internal_volume=_as_num(spec.get("internal_volume", base.internal_volume), where),
                max_payload=_as_num(spec.get("max_payload", base.max_payload), where),
                tare_weight=_as_num(spec.get("tare_weight", base.tare_weight), where),
            )
        except ValueError as exc:
            raise InvalidParamError(f"{where}: {exc}") from exc
    return classes


def _parse_means(doc: Any, graph: LogisticsGraph) -> list[PiMean]:
    if not isinstance(doc, list):
        raise ParseError("means must be a list")
    means = []
    seen = set()
    for i, md in enumerate(doc):
        where = f"means[{i}]"
        if not isinstance(md, dict):
            raise ParseError(f"{where}: mean must be an object")
        _strict(md, ("id", "kind", "capacity", "max_weight", "speed", "home", "operator"), where)
        mean_id = _as_str(_need(md, "id", where), f"{where}.id")
        if mean_id in seen:
            raise InvalidParamError(f"{where}: duplicate mean id {mean_id!r}")
        seen.add(mean_id)
        home = _as_str(_need(md, "home", where), f"{where}.home")
        if home not in graph.nodes:
            raise UnresolvedReferenceError(f"{where}: unknown home node {home!r}")
        try:
            means.append(
                PiMean(
                    mean_id=mean_id,
                    kind=_as_str(_need(md, "kind", where), f"{where}.kind"),
                    container_capacity=_as_int(_need(md, "capacity", where), f"{where}.capacity"),
                    max_total_weight=_as_num(_need(md, "max_weight", where), f"{where}.max_weight"),
                    speed=_as_num(md.get("speed", 1.0), f"{where}.speed"),
                    home_node=home,
                    operator=_as_str(md.get("operator", "public-carrier"), f"{where}.operator"),
                )
            )
        except ValueError as exc:
            raise InvalidParamError(f"{where}: {exc}") from exc
    return means


def _parse_depots(doc: Any, graph: LogisticsGraph, classes: dict[str, ContainerClass]) -> list[DepotState]:
    if not isinstance(doc, list):
        raise ParseError("depots must be a list")
    depots = []
    seen = set()
    for i, dd in enumerate(doc):
        where = f"depots[{i}]"
        if not isinstance(dd, dict):
            raise ParseError(f"{where}: depot must be an object")
        _strict(dd, ("node", "stock", "min", "max"), where)
        node = _as_str(_need(dd, "node", where), f"{where}.node")
        if node not in graph.nodes:
            raise UnresolvedReferenceError(f"{where}: unknown node {node!r}")
        if node in seen:
            raise InvalidParamError(f"{where}: duplicate depot for node {node!r}")
        seen.add(node)

        def class_map(raw: Any, label: str) -> dict[str, int]:
            if not isinstance(raw, dict):
                raise ParseError(f"{where}.{label}: expected an object")
            out = {}
            for cls, count in raw.items():
                if cls not in classes:
                    raise UnresolvedReferenceError(f"{where}.{label}: unknown container class {cls!r}")
                out[cls] = _as_int(count, f"{where}.{label}.{cls}")
            return out

        try:
            depots.append(
                DepotState(
                    node_id=node,
                    empty_stock=class_map(dd.get("stock", {}), "stock"),
                    min_level=class_map(dd.get("min", {}), "min"),
                    max_level=class_map(dd.get("max", {}), "max"),
                )
            )
        except ValueError as exc:
            raise InvalidParamError(f"{where}: {exc}") from exc
    return depots


def _parse_demands(doc: Any, graph: LogisticsGraph) -> list[DemandSpec]:
    if not isinstance(doc, list):
        raise ParseError("demands must be a list")
    demands = []
    seen = set()
    for i, dd in enumerate(doc):
        where = f"demands[{i}]"
        if not isinstance(dd, dict):
            raise ParseError(f"{where}: demand must be an object")
        consignee = _single_consignee(dd, where)
        _strict(
            dd,
            (
                "id",
                "product",
                "consignor",
                "consignee",
                "deadline",
                "priority",
                "containers",
                "release_time",
                "sub_order_boundaries",
                "payment",
                "spares",
            ),
            where,
        )
        demand_id = _as_str(dd.get("id", f"D{i + 1}"), f"{where}.id")
        if demand_id in seen:
            raise InvalidParamError(f"{where}: duplicate demand id {demand_id!r}")
        seen.add(demand_id)
        consignor = _as_str(_need(dd, "consignor", where), f"{where}.consignor")
        for ref in (consignor, consignee):
            if ref not in graph.nodes:
                raise UnresolvedReferenceError(f"{where}: unknown node {ref!r}")
        if consignor == consignee:
            raise InvalidParamError(f"{where}: consignor and consignee must differ")

        pd = _need(dd, "product", where)
        if not isinstance(pd, dict):
            raise ParseError(f"{where}.product: expected an object")
        _strict(
            pd,
            ("code", "description", "quantity", "unit_weight", "unit_volume", "perishable", "fragile", "dangerous"),
            f"{where}.product",
        )
        pw = f"{where}.product"
        try:
            product = Product(
                product_code=_as_str(_need(pd, "code", pw), f"{pw}.code"),
                description=str(pd.get("description", "")),
                quantity=_as_int(_need(pd, "quantity", pw), f"{pw}.quantity"),
                unit_weight=_as_num(_need(pd, "unit_weight", pw), f"{pw}.unit_weight"),
                unit_volume=_as_num(_need(pd, "unit_volume", pw), f"{pw}.unit_volume"),
                perishable=_as_bool(pd.get("perishable", False), f"{pw}.perishable"),
                fragile=_as_bool(pd.get("fragile", False), f"{pw}.fragile"),
                dangerous=_as_bool(pd.get("dangerous", False), f"{pw}.dangerous"),
            )
        except ValueError as exc:
            raise InvalidParamError(f"{where}.product: {exc}") from exc

        payment = dd.get("payment", {})
        if not isinstance(payment, dict):
            raise ParseError(f"{where}.payment: expected an object")
        _strict(payment, ("total", "milestones"), f"{where}.payment")
        total = _as_num(payment.get("total", 0.0), f"{where}.payment.total")
        milestones = []
        for j, ms in enumerate(payment.get("milestones", [])):
            if not isinstance(ms, (list, tuple)) or len(ms) != 2:
                raise ParseError(f"{where}.payment.milestones[{j}]: expected [milestone, amount]")
            name = _as_str(ms[0], f"{where}.payment.milestones[{j}]")
            if name not in ("departed", "arrived"):
                raise InvalidParamError(f"{where}.payment.milestones[{j}]: unknown milestone {name!r}")
            milestones.append((name, _as_num(ms[1], f"{where}.payment.milestones[{j}]")))
        if total < sum(a for _, a in milestones):
            raise InvalidParamError(f"{where}.payment: total below the sum of milestones")

        deadline = _as_int(_need(dd, "deadline", where), f"{where}.deadline")
        release = _as_int(dd.get("release_time", 0), f"{where}.release_time")
        containers = _as_int(dd.get("containers", 1), f"{where}.containers")
        spares = _as_int(dd.get("spares", 0), f"{where}.spares")
        boundaries = dd.get("sub_order_boundaries", [])
        if not isinstance(boundaries, list):
            raise ParseError(f"{where}.sub_order_boundaries: expected a list")
        bounds = tuple(_as_int(b, f"{where}.sub_order_boundaries") for b in boundaries)
        if deadline <= 0:
            raise InvalidParamError(f"{where}: deadline must be > 0")
        if release < 0 or containers < 1 or spares < 0:
            raise InvalidParamError(f"{where}: release_time/containers/spares out of range")
        if any(b < 1 or b >= containers for b in bounds) or list(bounds) != sorted(set(bounds)):
            raise InvalidParamError(f"{where}: sub_order_boundaries must be sorted unique splits within 1..containers-1")
        demands.append(
            DemandSpec(
                demand_id=demand_id,
                product=product,
                consignor=consignor,
                consignee=consignee,
                deadline=deadline,
                priority=_as_int(dd.get("priority", 5), f"{where}.priority"),
                containers=containers,
                release_time=release,
                sub_order_boundaries=bounds,
                payment_total=total,
                milestones=tuple(milestones),
                spares=spares,
            )
        )
    return demands


def _parse_faults(doc: Any, graph: LogisticsGraph, means: list[PiMean], demands: list[DemandSpec]) -> FaultPlan:
    if not isinstance(doc, list):
        raise ParseError("faults must be a list")
    mean_ids = {m.mean_id for m in means}
    demand_ids = {d.demand_id for d in demands}
    entries = []
    for i, fd in enumerate(doc):
        where = f"faults[{i}]"
        if not isinstance(fd, dict):
            raise ParseError(f"{where}: fault must be an object")
        kind = _as_str(_need(fd, "kind", where), f"{where}.kind")
        if kind not in FAULT_KINDS:
            raise InvalidParamError(f"{where}: unknown fault kind {kind!r}")
        allowed = {"kind", "time", "time_range"}
        params: dict[str, Any] = {}
        if kind in ("mean_breakdown", "mean_delay"):
            allowed |= {"mean", "extra_minutes"}
            mean = _as_str(_need(fd, "mean", where), f"{where}.mean")
            if mean not in mean_ids:
                raise UnresolvedReferenceError(f"{where}: unknown mean {mean!r}")
            params["mean"] = mean
            if kind == "mean_delay":
                params["extra_minutes"] = _as_int(_need(fd, "extra_minutes", where), f"{where}.extra_minutes")
                if params["extra_minutes"] <= 0:
                    raise InvalidParamError(f"{where}: extra_minutes must be > 0")
        elif kind in ("container_damage", "container_loss", "orphan"):
            allowed |= {"container"}
            sel = _need(fd, "container", where)
            if isinstance(sel, dict):
                _strict(sel, ("demand", "index"), f"{where}.container")
                demand = _as_str(_need(sel, "demand", f"{where}.container"), f"{where}.container.demand")
                if demand not in demand_ids:
                    raise UnresolvedReferenceError(f"{where}: unknown demand {demand!r}")
                params["container"] = {"demand": demand, "index": _as_int(sel.get("index", 0), f"{where}.container.index")}
            else:
                params["container"] = _as_str(sel, f"{where}.container")
        else:  # edge disruptions
            allowed |= {"edge", "factor"}
            edge = _need(fd, "edge", where)
            if not isinstance(edge, (list, tuple)) or len(edge) != 2:
                raise ParseError(f"{where}.edge: expected [from, to]")
            src, dst = _as_str(edge[0], f"{where}.edge"), _as_str(edge[1], f"{where}.edge")
            if (src, dst) not in graph.edges:
                raise UnresolvedReferenceError(f"{where}: unknown edge {src}->{dst}")
            params["edge"] = (src, dst)
            if kind in ("edge_cost_surge", "edge_delay_surge"):
                params["factor"] = _as_num(_need(fd, "factor", where), f"{where}.factor")
                if params["factor"] <= 0:
                    raise InvalidParamError(f"{where}: factor must be > 0")
        _strict(fd, allowed, where)
        time = fd.get("time")
        time_range = fd.get("time_range")
        if time is not None:
            time = _as_int(time, f"{where}.time")
        if time_range is not None:
            if not isinstance(time_range, (list, tuple)) or len(time_range) != 2:
                raise ParseError(f"{where}.time_range: expected [lo, hi]")
            time_range = (_as_int(time_range[0], f"{where}.time_range"), _as_int(time_range[1], f"{where}.time_range"))
        try:
            entries.append(FaultEntry(kind=kind, time=time, time_range=time_range, params=params))
        except ValueError as exc:
            raise InvalidParamError(f"{where}: {exc}") from exc
    return FaultPlan(entries)


_PARAM_KEYS = (
    "weights",
    "max_load_size",
    "max_block_size",
    "deadline_window",
    "reorder_delay",
    "loss_penalty",
    "max_stack_height",
    "allow_expedite",
    "horizon",
    "seed",
    "disposal_node",
    "pareto_node_bound",
)


def _parse_params(doc: Any, graph: LogisticsGraph) -> tuple[Params, list[str]]:
    if not isinstance(doc, dict):
        raise ParseError("params must be an object")
    _strict(doc, _PARAM_KEYS, "params")
    wd = doc.get("weights", {})
    if not isinstance(wd, dict):
        raise ParseError("params.weights must be an object")
    _strict(wd, ("time", "cost", "risk"), "params.weights")
    try:
        weights = CriteriaWeights(
            w_time=_as_num(wd.get("time", 1.0), "params.weights.time"),
            w_cost=_as_num(wd.get("cost", 1.0), "params.weights.cost"),
            w_risk=_as_num(wd.get("risk", 1.0), "params.weights.risk"),
        )
    except ValueError as exc:
        raise InvalidParamError(f"params.weights: {exc}") from exc

    def pos_int(key: str, default: int, minimum: int = 1) -> int:
        value = _as_int(doc.get(key, default), f"params.{key}")
        if value < minimum:
            raise InvalidParamError(f"params.{key}: must be >= {minimum}, got {value}")
        return value

    disposal_param = doc.get("disposal_node")
    if disposal_param is not None:
        disposal_param = _as_str(disposal_param, "params.disposal_node")
        if disposal_param not in graph.nodes:
            raise UnresolvedReferenceError(f"params.disposal_node: unknown node {disposal_param!r}")
    kind_disposals = sorted(n for n, attrs in graph.nodes.items() if attrs.kind == "disposal")
    if disposal_param is None and len(kind_disposals) != 1:
        raise InvalidParamError(
            f"exactly one disposal node required (found {len(kind_disposals)}) unless params.disposal_node is set"
        )
    disposal_nodes = sorted(set(kind_disposals) | ({disposal_param} if disposal_param else set()))

    loss_penalty = _as_num(doc.get("loss_penalty", 10.0), "params.loss_penalty")
    if loss_penalty <= 0:
        raise InvalidParamError("params.loss_penalty: must be > 0")
    params = Params(
        weights=weights,
        max_load_size=pos_int("max_load_size", 20),
        max_block_size=pos_int("max_block_size", 10),
        deadline_window=pos_int("deadline_window", 1440),
        reorder_delay=pos_int("reorder_delay", 2880),
        loss_penalty=loss_penalty,
        max_stack_height=pos_int("max_stack_height", 4),
        allow_expedite=_as_bool(doc.get("allow_expedite", False), "params.allow_expedite"),
        horizon=pos_int("horizon", 10080, minimum=0),
        seed=_as_int(doc.get("seed", 0), "params.seed"),
        disposal_node=disposal_param or (kind_disposals[0] if kind_disposals else None),
        pareto_node_bound=pos_int("pareto_node_bound", 12),
    )
    return params, disposal_nodes


def validate_scenario(s: Scenario) -> CheckReport:
    """Cross-checks beyond syntax; findings carry info/warn/error severity."""
    report = CheckReport()
    stock_total: dict[str, int] = {}
    stock_at: dict[str, dict[str, int]] = {}
    for depot in s.depots:
        stock_at[depot.node_id] = dict(depot.empty_stock)
        for cls, count in depot.empty_stock.items():
            stock_total[cls] = stock_total.get(cls, 0) + count

    for demand in s.demands:
        cls_id = required_class_id(demand.product)
        if cls_id is None:
            report.add(
                "unsupported_product",
                f"{demand.demand_id}: a product cannot be both perishable and dangerous",
            )
            continue
        compat_cls = s.classes[cls_id]
        if demand.product.total_volume > compat_cls.internal_volume or demand.product.total_weight > compat_cls.max_payload:
            report.add("unfittable", f"{demand.demand_id}: batch does not fit a {cls_id} container")
        try:
            shortest_path_scalarized(s.graph, demand.consignor, demand.consignee, s.params.weights)
        except NoPathError:
            report.add("unreachable", f"{demand.demand_id}: {demand.consignee} unreachable from {demand.consignor}")
        needed = demand.containers + demand.spares
        local = stock_at.get(demand.consignor, {}).get(cls_id, 0)
        if cls_id == "reefer" and local < needed:
            report.add(
                "reefer_shortage",
                f"{demand.demand_id}: needs {needed} reefers at {demand.consignor}, stock {local}",
                severity="warn",
            )
        elif local < needed:
            report.add(
                "stock_shortage",
                f"{demand.demand_id}: needs {needed} {cls_id} empties at {demand.consignor}, stock {local}",
                severity="warn",
            )
        if demand.product.dangerous and not s.graph.nodes[demand.consignee].accepts_dangerous:
            report.add(
                "dangerous_destination",
                f"{demand.demand_id}: {demand.consignee} does not accept dangerous goods (order layer will withhold)",
                severity="warn",
            )
        if demand.product.perishable and s.graph.nodes[demand.consignee].reefer_plugs < 1:
            report.add(
                "no_reefer_plugs",
                f"{demand.demand_id}: {demand.consignee} has no reefer plugs (order layer will withhold)",
                severity="warn",
            )
    if not s.means:
        report.add("no_means", "scenario declares no transport means", severity="warn")
    return report


def trace_record(event: TraceEvent) -> dict[str, Any]:
    """Fixed-field-order JSON object for one trace event."""
    return {
        "t": event.t,
        "node": event.node,
        "layer": event.layer,
        "kind": event.kind,
        "subjects": list(event.subjects),
        "details": {k: event.details[k] for k in sorted(event.details)},
    }


def emit_trace(trace: list[TraceEvent], destination) -> None:
    """Write the trace as JSON Lines; identical traces → identical bytes."""
    own = isinstance(destination, (str, Path))
    fh = open(destination, "w", encoding="utf-8") if own else destination
    try:
        for event in trace:
            fh.write(json.dumps(trace_record(event), separators=(",", ":")))
            fh.write("\n")
    finally:
        if own:
            fh.close()


def trace_to_text(trace: list[TraceEvent]) -> str:
    buf = io.StringIO()
    emit_trace(trace, buf)
    return buf.getvalue()


def parse_trace(source) -> list[TraceEvent]:
    """Read a JSONL trace back; partial or garbled lines raise truncated_trace."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TruncatedTraceError(f"truncated_trace: line {lineno}: {exc}") from exc
        missing = {"t", "node", "layer", "kind", "subjects", "details"} - set(obj)
        if missing:
            raise TruncatedTraceError(f"truncated_trace: line {lineno}: missing {sorted(missing)}")
        events.append(
            TraceEvent(
                t=obj["t"],
                node=obj["node"],
                layer=obj["layer"],
                kind=obj["kind"],
                subjects=tuple(obj["subjects"]),
                details=obj["details"],
            )
        )
    return events


@dataclass
class MetricsReport:
    """Per-run aggregates, every number recomputable from the trace alone."""

    orders_total: int = 0
    orders_delivered: int = 0
    orders_failed: int = 0
    orders_late: int = 0
    orders_in_flight: int = 0
    mean_end_to_end: float = 0.0
    max_end_to_end: int = 0
    cost_transport: float = 0.0
    cost_expedite: float = 0.0
    cost_loss: float = 0.0
    cost_reposition: float = 0.0
    utilization: dict[str, float] = field(default_factory=dict)
    reposition_moves: int = 0
    orphans_disposed: int = 0
    deadline_misses: list[str] = field(default_factory=list)
    shortages: list[dict[str, Any]] = field(default_factory=list)
    waiting_fills: int = 0
    containers_delivered: int = 0
    containers_lost: int = 0
    containers_damaged: int = 0
    final_clock: int = 0

    @property
    def cost_total(self) -> float:
        return self.cost_transport + self.cost_expedite + self.cost_loss + self.cost_reposition

    def utilization_of(self, mean_id: str) -> float:
        return self.utilization.get(mean_id, 0.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "orders": {
                "total": self.orders_total,
                "delivered": self.orders_delivered,
                "failed": self.orders_failed,
                "late": self.orders_late,
                "in_flight": self.orders_in_flight,
            },
            "times": {"mean_end_to_end": self.mean_end_to_end, "max_end_to_end": self.max_end_to_end},
            "cost": {
                "transport": self.cost_transport,
                "expedite": self.cost_expedite,
                "loss": self.cost_loss,
                "reposition": self.cost_reposition,
                "total": self.cost_total,
            },
            "utilization": {k: self.utilization[k] for k in sorted(self.utilization)},
            "reposition_moves": self.reposition_moves,
            "orphans_disposed": self.orphans_disposed,
            "deadline_misses": sorted(self.deadline_misses),
            "shortages": self.shortages,
            "waiting_fills": self.waiting_fills,
            "containers": {
                "delivered": self.containers_delivered,
                "lost": self.containers_lost,
                "damaged": self.containers_damaged,
            },
            "final_clock": self.final_clock,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def table(self) -> str:
        d = self.to_dict()
        lines = [
            "metric                     value",
            "-------------------------  -----",
            f"orders total               {d['orders']['total']}",
            f"orders delivered           {d['orders']['delivered']}",
            f"orders failed              {d['orders']['failed']}",
            f"orders late                {d['orders']['late']}",
            f"orders in flight           {d['orders']['in_flight']}",
            f"mean end-to-end (min)      {d['times']['mean_end_to_end']:.1f}",
            f"max end-to-end (min)       {d['times']['max_end_to_end']}",
            f"cost transport             {d['cost']['transport']:.2f}",
            f"cost expedite              {d['cost']['expedite']:.2f}",
            f"cost loss recovery         {d['cost']['loss']:.2f}",
            f"cost repositioning         {d['cost']['reposition']:.2f}",
            f"cost total                 {d['cost']['total']:.2f}",
            f"reposition moves           {d['reposition_moves']}",
            f"orphans disposed           {d['orphans_disposed']}",
            f"deadline misses            {len(d['deadline_misses'])}",
            f"containers delivered       {d['containers']['delivered']}",
            f"containers lost            {d['containers']['lost']}",
            f"containers damaged         {d['containers']['damaged']}",
            f"final clock (min)          {d['final_clock']}",
        ]
        return "\n".join(lines)


def summarize(trace: list[TraceEvent]) -> MetricsReport:
    """Single-pass aggregation over a trace.

    Orders of kind demand/recovery feed the order metrics; internal
    transfer orders (repositioning, disposal, damaged returns) are counted
    through their own metrics instead.
    """
    report = MetricsReport()
    order_kind: dict[str, str] = {}
    order_created: dict[str, int] = {}
    order_done: dict[str, str] = {}
    durations: list[int] = []
    load_deadline: dict[str, int] = {}
    load_arrival: dict[str, tuple[int, bool]] = {}
    load_kind: dict[str, str] = {}
    depart_at: dict[str, int] = {}
    busy: dict[str, int] = {}

    for ev in trace:
        report.final_clock = max(report.final_clock, ev.t)
        kind = ev.kind
        d = ev.details
        if kind == "order.created":
            oid = d["order"]
            order_kind[oid] = d.get("kind", "demand")
            order_created[oid] = ev.t
            if order_kind[oid] in ("demand", "recovery"):
                report.orders_total += 1
        elif kind == "order.completed":
            oid = d["order"]
            if order_kind.get(oid) in ("demand", "recovery"):
                durations.append(ev.t - order_created.get(oid, 0))
                if d.get("late"):
                    report.orders_late += 1
        elif kind == "transaction.settled":
            order_done[d["order"]] = "delivered"
        elif kind == "transaction.failed":
            order_done.setdefault(d["order"], "failed")
        elif kind == "load.created":
            load_deadline[d["load"]] = d["deadline"]
            load_kind[d["load"]] = d.get("kind", "demand")
        elif kind == "load.arrived":
            load_arrival[d["load"]] = (ev.t, bool(d.get("late")))
        elif kind == "depart":
            mean = d["mean"]
            depart_at[mean] = ev.t
            bucket = d.get("bucket", "transport")
            if bucket == "reposition":
                report.cost_reposition += d.get("cost", 0.0)
                report.reposition_moves += 1
            else:
                report.cost_transport += d.get("cost", 0.0)
            report.cost_expedite += d.get("premium", 0.0)
        elif kind in ("arrive", "step.aborted"):
            mean = d["mean"]
            if mean in depart_at:
                busy[mean] = busy.get(mean, 0) + (ev.t - depart_at.pop(mean))
        elif kind == "recover.decision":
            report.cost_loss += d.get("extra_cost", 0.0)
        elif kind == "orphan.disposed":
            report.orphans_disposed += 1
        elif kind == "shortage":
            report.shortages.append({k: d[k] for k in sorted(d)})
        elif kind == "fill.waiting":
            report.waiting_fills += 1
        elif kind == "deliver":
            report.containers_delivered += 1
        elif kind == "container.lost":
            report.containers_lost += 1
        elif kind == "inspect.fail":
            report.containers_damaged += 1

    for oid, outcome in order_done.items():
        if order_kind.get(oid) not in ("demand", "recovery"):
            continue
        if outcome == "delivered":
            report.orders_delivered += 1
        else:
            report.orders_failed += 1
    report.orders_in_flight = report.orders_total - report.orders_delivered - report.orders_failed
    if durations:
        report.mean_end_to_end = sum(durations) / len(durations)
        report.max_end_to_end = max(durations)
    now = report.final_clock
    misses = []
    for load_id, deadline in load_deadline.items():
        if load_kind.get(load_id) not in ("demand", "recovery"):
            continue
        if load_id in load_arrival:
            if load_arrival[load_id][1]:
                misses.append(load_id)
        elif now > deadline:
            misses.append(load_id)
    report.deadline_misses = sorted(misses)
    if now > 0:
        report.utilization = {m: busy.get(m, 0) / now for m in sorted(busy)}
    return report
