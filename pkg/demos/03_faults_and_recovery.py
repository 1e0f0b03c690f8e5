#!/usr/bin/env python3
"""Losing goods is never free.

The same scenario runs twice: once with its fault plan (one container
falls off mid-route) and once with --no-faults semantics. When the
consignor holds a matching filled spare the recovery resends it;
otherwise the product is reordered after a delay. Either way the faulted
run costs strictly more.
"""

from pistack.scenario_io import summarize
from pistack.scenarios import loss_pair_scenario, orphan_scenario
from pistack.simulation import run_scenario


def run_pair(with_spare: bool) -> None:
    label = "spare on hand" if with_spare else "no spare"
    doc = loss_pair_scenario(2026 if with_spare else 2027, with_spare=with_spare)
    faulted = run_scenario(doc)
    baseline = run_scenario(doc, no_faults=True)

    decision = next(ev for ev in faulted.trace if ev.kind == "recover.decision")
    lost = next(ev for ev in faulted.trace if ev.kind == "container.lost")
    print(f"--- {label} ---")
    print(f"t={lost.t}: container {lost.subjects[0]} lost in transit")
    print(f"t={decision.t}: recovery decides {decision.details['action']!r}, "
          f"extra cost {decision.details['extra_cost']:.1f}")
    cost_f = summarize(faulted.trace).cost_total
    cost_b = summarize(baseline.trace).cost_total
    print(f"total cost: faulted {cost_f:.1f} vs baseline {cost_b:.1f} "
          f"(penalty of reality: {cost_f - cost_b:+.1f})")
    print()


def run_orphan() -> None:
    print("--- orphaned container ---")
    result = run_scenario(orphan_scenario())
    for ev in result.trace:
        if ev.kind in ("orphan.detected", "orphan.disposed", "order.cancelled"):
            print(f"t={ev.t:5d} {ev.node}: {ev.kind} {list(ev.subjects)} {ev.details}")
    print(f"injected {result.world.orphans_injected}, "
          f"resting at disposal: {sorted(result.world.disposed)}")
    print("orphans are physically disposed of, never deleted from the census")


def main() -> None:
    run_pair(with_spare=True)
    run_pair(with_spare=False)
    run_orphan()


if __name__ == "__main__":
    main()
