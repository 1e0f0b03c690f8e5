import random

import pytest

from pistack.layer_endpoint import DispatchNote, LayerError, Order
from pistack.layer_transit import (
    Block,
    DeadlineLedger,
    Load,
    admit_destination,
    build_blocks,
    build_loads,
    check_deadlines,
    recover_loss,
    remaining_route_open,
    reroute,
    route_block,
    track,
)
from pistack.routing import CriteriaWeights, NoPathError, apply_disruption, shortest_path_scalarized
from util import graph_from_edges, make_container, make_product

UNIT = CriteriaWeights(1, 1, 1)


def make_order(oid, cids, deadline=1000, origin="A", destination="C", kind="demand"):
    notes = [
        DispatchNote(
            note_id=f"N-{oid}-{i}", container_id=cid, consignor=origin, consignee=destination,
            deadline=deadline, priority=5, dangerous=False, issued_at=0,
        )
        for i, cid in enumerate(cids)
    ]
    return Order(order_id=oid, notes=notes, origin=origin, destination=destination, kind=kind)


def containers_for(orders, class_id="standard"):
    out = {}
    for order in orders:
        for note in order.notes:
            c = make_container(cid=note.container_id, class_id=class_id, location=order.origin)
            c.contents = make_product()
            out[note.container_id] = c
    return out


GRAPH = graph_from_edges([("A", "C", 1, 1)], reefer_plugs=4)


def test_build_loads_combines_whole_orders():
    orders = [make_order(f"O{i}", [f"C{i}{j}" for j in range(2)]) for i in range(3)]
    loads = build_loads(orders, containers_for(orders), max_load_size=10, graph=GRAPH)
    assert len(loads) == 1
    assert len(loads[0].container_ids) == 6


def test_build_loads_first_fit_by_deadline():
    orders = [
        make_order("O1", [f"A{j}" for j in range(4)], deadline=100),
        make_order("O2", [f"B{j}" for j in range(4)], deadline=200),
        make_order("O3", [f"D{j}" for j in range(4)], deadline=300),
    ]
    loads = build_loads(orders, containers_for(orders), max_load_size=8, graph=GRAPH)
    assert [len(l.container_ids) for l in loads] == [8, 4]
    assert loads[0].member_orders == ["O1", "O2"]  # earliest deadlines packed first
    assert loads[0].deadline == 100


def test_build_loads_empty_input():
    assert build_loads([], {}, max_load_size=5) == []


def test_build_loads_splits_oversized_order():
    orders = [make_order("O1", [f"C{j}" for j in range(7)])]
    loads = build_loads(orders, containers_for(orders), max_load_size=3, graph=GRAPH)
    assert sorted(len(l.container_ids) for l in loads) == [1, 3, 3]
    seen = [cid for l in loads for cid in l.container_ids]
    assert sorted(seen) == sorted(f"C{j}" for j in range(7))


def test_build_loads_respects_reefer_plugs():
    orders = [make_order(f"O{i}", [f"C{i}{j}" for j in range(2)]) for i in range(3)]
    cmap = containers_for(orders, class_id="reefer")
    for c in cmap.values():
        c.contents = make_product(perishable=True)
    loads = build_loads(orders, cmap, max_load_size=10, graph=GRAPH)
    assert all(len(l.container_ids) <= 4 for l in loads)  # 4 plugs at C


def test_admit_destination_pass_and_reefer_fail():
    orders = [make_order("O1", ["C1", "C2", "C3"])]
    cmap = containers_for(orders)
    [load] = build_loads(orders, cmap, max_load_size=10, graph=GRAPH)
    assert admit_destination(load, GRAPH, cmap).passed

    reefer_graph = graph_from_edges([("A", "C", 1, 1)], reefer_plugs=2)
    cmap2 = containers_for(orders, class_id="reefer")
    for c in cmap2.values():
        c.contents = make_product(perishable=True)
    load2 = Load(load_id="L2", member_orders=["O1"], container_ids=["C1", "C2", "C3"],
                 origin="A", destination="C", deadline=100)
    report = admit_destination(load2, reefer_graph, cmap2)
    assert "insufficient_reefer_plugs" in report.codes()


def test_admit_counts_only_loaded_reefers():
    # Empty refrigerated boxes draw no plug power.
    load = Load(load_id="L1", member_orders=["O1"], container_ids=["C1", "C2", "C3"],
                origin="A", destination="C", deadline=100)
    cmap = {cid: make_container(cid=cid, class_id="reefer") for cid in load.container_ids}
    graph = graph_from_edges([("A", "C", 1, 1)], reefer_plugs=0)
    assert admit_destination(load, graph, cmap).passed


def test_track_lifecycle_and_ledger():
    ledger = DeadlineLedger()
    load = Load(load_id="L1", member_orders=["O1"], container_ids=["C1"],
                origin="A", destination="C", deadline=200)
    ledger.register(load.load_id, load.deadline)
    track(load, "departed", 10, ledger)
    assert load.status == "departed"
    track(load, "hop_completed", 50, ledger)
    assert load.status == "in_transit"
    entry = track(load, "arrived", 100, ledger)
    assert load.status == "arrived"
    assert entry.late is False
    assert check_deadlines(ledger, now=300) == []


def test_track_late_arrival_flagged():
    ledger = DeadlineLedger()
    load = Load(load_id="L1", member_orders=["O1"], container_ids=["C1"],
                origin="A", destination="C", deadline=200)
    ledger.register(load.load_id, load.deadline)
    track(load, "departed", 10, ledger)
    entry = track(load, "arrived", 250, ledger)
    assert entry.late is True
    assert check_deadlines(ledger, now=260) == ["L1"]


def test_track_out_of_order_aborts():
    ledger = DeadlineLedger()
    load = Load(load_id="L1", member_orders=["O1"], container_ids=["C1"],
                origin="A", destination="C", deadline=200)
    ledger.register(load.load_id, load.deadline)
    with pytest.raises(LayerError) as err:
        track(load, "arrived", 100, ledger)
    assert err.value.code == "out_of_order_event"


def test_check_deadlines_pending_overdue():
    ledger = DeadlineLedger()
    ledger.register("L1", 100)
    assert check_deadlines(ledger, now=50) == []
    assert check_deadlines(ledger, now=150) == ["L1"]


def lost_container():
    c = make_container(cid="LOSTC", location="A")
    from pistack.layer_endpoint import fill_container

    fill_container(make_product(quantity=7), c, "A", "C", 1000, 5, "K-LOST")
    return c


def spare_like(cid, quantity=7):
    c = make_container(cid=cid, location="A")
    from pistack.layer_endpoint import fill_container

    fill_container(make_product(quantity=quantity, unit_weight=10.0, unit_volume=0.1),
                   c, "A", "C", 1000, 5, f"K-{cid}")
    return c


def test_recover_resend_when_matching_spare():
    action = recover_loss(lost_container(), [spare_like("SP1")], reship_cost=12.0, loss_penalty=10.0)
    assert action.action == "resend"
    assert action.spare_id == "SP1"
    assert action.extra_cost == 22.0


def test_recover_reorder_without_matching_spare():
    action = recover_loss(lost_container(), [spare_like("SP1", quantity=99)], reship_cost=0.0, loss_penalty=10.0)
    assert action.action == "reorder"
    assert action.extra_cost == 10.0  # strictly positive even on a free route


def test_recover_unrecoverable():
    action = recover_loss(lost_container(), [], 5.0, 10.0, consignor_exists=False)
    assert action.action == "unrecoverable"


def test_build_blocks_single():
    loads = [Load(load_id="L1", member_orders=["O1"], container_ids=[f"C{i}" for i in range(6)],
                  origin="A", destination="C", deadline=100)]
    blocks = build_blocks(loads, max_block_size=10)
    assert len(blocks) == 1
    assert blocks[0].parent_loads == ["L1"]


def test_build_blocks_chunks_across_loads():
    loads = [
        Load(load_id="L1", member_orders=["O1"], container_ids=[f"A{i}" for i in range(6)],
             origin="A", destination="C", deadline=100),
        Load(load_id="L2", member_orders=["O2"], container_ids=[f"B{i}" for i in range(6)],
             origin="A", destination="C", deadline=200),
    ]
    blocks = build_blocks(loads, max_block_size=10)
    assert [len(b.container_ids) for b in blocks] == [10, 2]
    assert blocks[0].parent_loads == ["L1", "L2"]


def test_build_blocks_partition_property():
    rng = random.Random(5)
    for _ in range(40):
        loads = []
        for i in range(rng.randint(1, 6)):
            n = rng.randint(1, 7)
            loads.append(
                Load(load_id=f"L{i}", member_orders=[f"O{i}"],
                     container_ids=[f"C{i}-{j}" for j in range(n)],
                     origin=rng.choice("AB"), destination=rng.choice("CD"),
                     deadline=rng.randint(1, 500))
            )
        blocks = build_blocks(loads, max_block_size=rng.randint(1, 8))
        got = sorted(cid for b in blocks for cid in b.container_ids)
        want = sorted(cid for l in loads for cid in l.container_ids)
        assert got == want  # no loss, no duplication


ROUTE_GRAPH = graph_from_edges(
    [("A", "B", 1, 1), ("B", "C", 1, 1), ("A", "D", 3, 3), ("D", "C", 3, 3), ("B", "D", 1, 1)]
)


def make_block(cids=("C1",), src="A", dst="C"):
    return Block(block_id="B1", parent_loads=["L1"], container_ids=list(cids), src=src, dst=dst)


def test_route_block_delegates_to_router():
    block = make_block()
    route_block(block, ROUTE_GRAPH, UNIT)
    direct = shortest_path_scalarized(ROUTE_GRAPH, "A", "C", UNIT)
    assert block.route.nodes() == direct.nodes()
    assert block.progress == 0
    block.route.check()


def test_route_block_unreachable():
    g = graph_from_edges([("A", "B", 1, 1)], nodes=["C"])
    block = make_block()
    with pytest.raises(NoPathError):
        route_block(block, g, UNIT)


def test_reroute_avoids_closed_remaining_hop():
    block = make_block()
    route_block(block, ROUTE_GRAPH, UNIT)
    assert block.route.nodes() == ("A", "B", "C")
    block.current_node = "B"
    block.progress = 1
    closed = apply_disruption(ROUTE_GRAPH, ("B", "C"), "close")
    assert not remaining_route_open(block, closed)
    assert reroute(block, closed, UNIT)
    assert block.route.nodes() == ("B", "D", "C")


def test_closure_of_completed_hop_changes_nothing():
    block = make_block()
    route_block(block, ROUTE_GRAPH, UNIT)
    block.current_node = "B"
    block.progress = 1
    closed = apply_disruption(ROUTE_GRAPH, ("A", "B"), "close")
    assert remaining_route_open(block, closed)  # only the traversed hop closed


def test_isolation_parks_block():
    block = make_block()
    route_block(block, ROUTE_GRAPH, UNIT)
    block.current_node = "B"
    block.progress = 1
    isolated = apply_disruption(
        apply_disruption(ROUTE_GRAPH, ("B", "C"), "close"), ("B", "D"), "close"
    )
    assert reroute(block, isolated, UNIT) is False
    assert block.parked
