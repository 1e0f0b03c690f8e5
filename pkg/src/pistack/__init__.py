"""pistack: a deterministic simulator of a seven-layer logistics stack.

Every node of a logistics network runs the same seven-layer protocol stack
(product, container, order, transport, network, link, physical handling).
Goods travel in containers, containers travel on physical means, and every
state transition is written to a replayable trace that independent audit
passes can check.
"""

from pistack.domain import (
    CheckReport,
    Contract,
    ContainerClass,
    PiContainer,
    PiMean,
    Product,
    check_compatibility,
    validate_container,
)
from pistack.routing import (
    CriteriaWeights,
    EdgeAttrs,
    LogisticsGraph,
    NodeAttrs,
    NoPathError,
    Route,
    apply_disruption,
    pareto_paths,
    route_cost,
    shortest_path_scalarized,
)
from pistack.scenario_io import (
    MetricsReport,
    Scenario,
    emit_trace,
    parse_scenario,
    parse_trace,
    summarize,
    validate_scenario,
)
from pistack.simulation import SimulationResult, run_scenario

__all__ = [
    "CheckReport",
    "Contract",
    "ContainerClass",
    "CriteriaWeights",
    "EdgeAttrs",
    "LogisticsGraph",
    "MetricsReport",
    "NoPathError",
    "NodeAttrs",
    "PiContainer",
    "PiMean",
    "Product",
    "Route",
    "Scenario",
    "SimulationResult",
    "apply_disruption",
    "check_compatibility",
    "emit_trace",
    "pareto_paths",
    "parse_scenario",
    "parse_trace",
    "route_cost",
    "run_scenario",
    "shortest_path_scalarized",
    "summarize",
    "validate_container",
    "validate_scenario",
]

__version__ = "0.1.0"
