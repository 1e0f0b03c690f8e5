#!/usr/bin/env python3
"""A first run: two nodes, one truck, one demand.

Watch a demand descend the seven layers at the consignor, ride a mean
across the single edge, and ascend the stack at the consignee. Every line
of the trace below is one timestamped state transition or inter-layer
message.
"""

from pistack.scenario_io import summarize
from pistack.scenarios import minimal_scenario
from pistack.simulation import run_scenario

LAYER_NAMES = {
    0: "kernel", 1: "handling", 2: "link", 3: "network",
    4: "transport", 5: "order", 6: "container", 7: "product",
}


def main() -> None:
    result = run_scenario(minimal_scenario())

    print("=== trace ===")
    for ev in result.trace:
        subjects = ",".join(ev.subjects) if ev.subjects else "-"
        print(f"t={ev.t:5d}  {ev.node or '·':>2}  L{ev.layer} {LAYER_NAMES[ev.layer]:>9}  "
              f"{ev.kind:28s} {subjects}")

    print("\n=== report ===")
    metrics = summarize(result.trace)
    print(metrics.table())


if __name__ == "__main__":
    main()
