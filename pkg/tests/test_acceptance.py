"""Acceptance criteria, one test per criterion.

Each test prints a single PASS line once its assertions hold, so running
with `pytest -s tests/test_acceptance.py` (or `-v`) gives a one-line
verdict per criterion. The scenario battery is built and run once per
session and shared by the trace-level criteria.
"""

import random
import time

import pytest

from pistack.audits import (
    check_capacity,
    check_census,
    check_descent_ascent,
    check_layering,
    check_perishable_placement,
    check_stowage,
    deadline_scan,
)
from pistack.routing import CriteriaWeights, pareto_paths, shortest_path_scalarized, hop_score
from pistack.routing_oracle import best_route_bruteforce, pareto_front_bruteforce
from pistack.routing import NoPathError
from pistack.scenario_io import (
    MulticastError,
    parse_scenario,
    summarize,
    trace_to_text,
    validate_scenario,
)
from pistack.scenarios import (
    acceptance_suite,
    loss_pair_scenario,
    minimal_scenario,
    synthetic_scenario,
)
from pistack.simulation import run_scenario
from util import random_graph


@pytest.fixture(scope="module")
def suite_runs():
    """name -> (scenario, trace, result, wall seconds) for the whole battery."""
    runs = {}
    for name, doc in acceptance_suite():
        scenario = parse_scenario(doc)
        started = time.perf_counter()
        result = run_scenario(scenario)
        elapsed = time.perf_counter() - started
        runs[name] = (scenario, result.trace, result, elapsed)
    return runs


def test_criterion_01_layering_conformance(suite_runs):
    assert len(suite_runs) >= 20
    sizes = {len(s.graph.nodes) for s, _, _, _ in suite_runs.values()}
    assert min(sizes) <= 2 and max(sizes) >= 12
    deliveries = 0
    for name, (scenario, trace, _res, elapsed) in suite_runs.items():
        assert elapsed < 10.0, f"{name} took {elapsed:.1f}s"
        layering = check_layering(trace, scenario)
        assert layering.passed, (name, layering.violations[:3])
        chains = check_descent_ascent(trace)
        assert chains.passed, (name, chains.violations[:3])
        deliveries += sum(1 for ev in trace if ev.kind == "deliver")
    assert deliveries > 0
    print(f"\nACCEPTANCE 1 layering-conformance: PASS "
          f"({len(suite_runs)} scenarios, {deliveries} audited deliveries)")


def test_criterion_02_container_conservation(suite_runs):
    events = 0
    for name, (scenario, trace, _res, _t) in suite_runs.items():
        census = check_census(scenario, trace)
        assert census.passed, (name, census.violations[:3])
        events += len(trace)
    print(f"\nACCEPTANCE 2 container-conservation: PASS ({events} events replayed)")


def test_criterion_03_routing_oracle_equivalence():
    rng = random.Random(20260810)
    started = time.perf_counter()
    graphs = scalar_checks = pareto_checks = 0
    while graphs < 500:
        g = random_graph(rng, rng.randint(2, 8), edge_prob=rng.choice((0.25, 0.4, 0.6)))
        names = sorted(g.nodes)
        src, dst = names[0], names[-1]
        weights = CriteriaWeights(float(rng.randint(0, 5)), float(rng.randint(0, 5)),
                                  float(rng.randint(1, 5)))
        expedite = rng.random() < 0.5
        graphs += 1
        try:
            _oracle_route, oracle_score = best_route_bruteforce(g, src, dst, weights, expedite)
        except NoPathError:
            with pytest.raises(NoPathError):
                shortest_path_scalarized(g, src, dst, weights, expedite)
            continue
        route = shortest_path_scalarized(g, src, dst, weights, expedite)
        got = 0.0
        for hop in route.hops:
            got += hop_score(hop.edge, hop.mode, weights)
        assert got == oracle_score, f"graph {graphs}: {got!r} != {oracle_score!r}"
        scalar_checks += 1

        expected_front = pareto_front_bruteforce(g, src, dst)
        front = pareto_paths(g, src, dst, max_paths=10_000)
        key = lambda r: (r.nodes(), r.total_time, r.total_cost, r.total_risk)
        assert sorted(map(key, front)) == sorted(map(key, expected_front)), f"graph {graphs}"
        pareto_checks += 1
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0, f"oracle battery took {elapsed:.1f}s"
    print(f"\nACCEPTANCE 3 routing-oracle-equivalence: PASS "
          f"({graphs} graphs, {scalar_checks} scalar + {pareto_checks} pareto checks, {elapsed:.1f}s)")


def test_criterion_04_deadline_ledger_exactness(suite_runs):
    loads_checked = 0
    for name, (_scenario, trace, result, _t) in suite_runs.items():
        scanned = deadline_scan(trace)
        ledger_flags = {
            lid: entry.late
            for lid, entry in result.ledger.entries.items()
            if entry.arrival is not None
        }
        assert ledger_flags == scanned, name
        loads_checked += len(scanned)
    print(f"\nACCEPTANCE 4 deadline-ledger-exactness: PASS ({loads_checked} arrived loads)")


def test_criterion_05_loss_economics():
    pairs = 0
    for seed in range(10):
        with_spare = seed % 2 == 0
        doc = loss_pair_scenario(700 + seed, with_spare=with_spare)
        faulted = run_scenario(doc)
        baseline = run_scenario(doc, no_faults=True)
        decisions = [ev for ev in faulted.trace if ev.kind == "recover.decision"]
        assert decisions, f"seed {seed}: loss never fired"
        action = decisions[0].details["action"]
        assert action == ("resend" if with_spare else "reorder"), (seed, action)
        cost_f = summarize(faulted.trace).cost_total
        cost_b = summarize(baseline.trace).cost_total
        assert cost_f > cost_b, (seed, cost_f, cost_b)
        pairs += 1
    assert pairs >= 10
    print(f"\nACCEPTANCE 5 loss-economics: PASS ({pairs} paired runs)")


def test_criterion_06_capacity_and_stowage_safety(suite_runs):
    steps = 0
    for name, (scenario, trace, _res, _t) in suite_runs.items():
        capacity = check_capacity(scenario, trace)
        assert capacity.passed, (name, capacity.violations[:3])
        stowage = check_stowage(scenario, trace)
        assert stowage.passed, (name, stowage.violations[:3])
        steps += sum(1 for ev in trace if ev.kind == "depart")
    print(f"\nACCEPTANCE 6 capacity-stowage-safety: PASS ({steps} executed steps)")


MULTICAST_FIXTURES = [
    {"consignee": ["B", "B"]},
    {"consignee": ["B", "A"]},
    {"consignee": ["B", "A", "B"]},
    {"consignees": ["B", "A"]},
    {"consignees": ["B"]},
]


def test_criterion_07_unicast_enforcement():
    rejected = 0
    for patch in MULTICAST_FIXTURES:
        doc = minimal_scenario()
        demand = doc["demands"][0]
        if "consignee" in patch:
            demand["consignee"] = patch["consignee"]
        else:
            demand["consignees"] = patch["consignees"]
        with pytest.raises(MulticastError) as err:
            parse_scenario(doc)
        assert err.value.code == "multicast_unsupported"
        rejected += 1
    assert rejected == 5
    print(f"\nACCEPTANCE 7 unicast-enforcement: PASS ({rejected}/5 fixtures rejected)")


def test_criterion_08_determinism():
    from pistack.scenarios import standard_fault_plan

    hashes_checked = 0
    for i in range(5):
        doc = synthetic_scenario(800 + i, n_nodes=4 + i, n_demands=3 + i, spares=1)
        doc["faults"] = standard_fault_plan(doc, 900 + i)
        texts = {trace_to_text(run_scenario(doc, seed=3).trace) for _ in range(3)}
        assert len(texts) == 1, f"scenario {i} not replay-stable"
        hashes_checked += 1
    print(f"\nACCEPTANCE 8 determinism: PASS ({hashes_checked} scenarios x 3 runs)")


def test_criterion_09_reefer_scarcity(suite_runs):
    scenario, trace, _res, _t = suite_runs["reefer-shortage"]
    report = validate_scenario(scenario)
    assert "reefer_shortage" in report.codes()
    waiting = [ev for ev in trace
               if ev.kind == "fill.waiting" and ev.details["reason"] == "reefer_shortage"]
    assert waiting, "shortage never surfaced as waiting work"
    for name, (_s, tr, _r, _t2) in suite_runs.items():
        placement = check_perishable_placement(tr)
        assert placement.passed, (name, placement.violations[:3])
    print("\nACCEPTANCE 9 reefer-scarcity: PASS "
          f"({len(waiting)} waiting fills, placement clean across suite)")


def test_criterion_10_dangerous_goods_gate(suite_runs):
    scenario, trace, _res, _t = suite_runs["dangerous-gate"]
    withheld = [ev for ev in trace if ev.kind == "order.withheld"]
    assert withheld and all(ev.details["reason"] == "infeasible_destination" for ev in withheld)
    guard_firings = 0
    for name, (_s, tr, _r, _t2) in suite_runs.items():
        guard_firings += sum(1 for ev in tr if ev.kind == "admit.reject")
    assert guard_firings == 0
    print(f"\nACCEPTANCE 10 dangerous-goods-gate: PASS "
          f"({len(withheld)} withheld containers, guard silent across suite)")
