
import pytest
from hypothesis import given, strategies as st

from pistack.domain import Contract
from pistack.layer_endpoint import (
    ContainerSet,
    DepotState,
    LayerError,
    Order,
    OrderConstraints,
    build_orders,
    empty_container,
    fill_container,
    group_into_sets,
    handle_orphan,
    inspect_container,
    reposition_empties,
    settle_transaction,
)
from pistack.routing import CriteriaWeights
from util import graph_from_edges, make_container, make_product

UNIT = CriteriaWeights(1, 1, 1)


def filled_container(cid="C1", location="A", consignee="C", deadline=100, **product_flags):
    c = make_container(cid=cid, location=location)
    fill_container(
        make_product(**product_flags),
        c,
        consignor=location,
        consignee=consignee,
        deadline=deadline,
        priority=5,
        contract_id=f"K-{cid}",
        payment_total=100.0,
        intermediate_payments=(("departed", 30.0),),
    )
    return c


def test_fill_sets_contract_and_parties():
    c = make_container()
    filled, contract = fill_container(
        make_product(quantity=10, unit_weight=500.0, unit_volume=1.0),
        c, "A", "B", deadline=100, priority=3, contract_id="K1",
    )
    assert filled.contents.quantity == 10
    assert contract.quantity == 10
    assert (filled.consignor, filled.consignee) == ("A", "B")
    assert filled.contract is contract


def test_fill_perishable_into_standard_rejected():
    c = make_container()
    with pytest.raises(LayerError) as err:
        fill_container(make_product(perishable=True), c, "A", "B", 100, 5, "K1")
    assert err.value.code == "incompatible"
    assert "needs_reefer" in str(err.value)
    assert c.contents is None  # nothing half-done


def test_fill_already_filled_rejected():
    c = filled_container()
    with pytest.raises(LayerError) as err:
        fill_container(make_product(), c, "A", "B", 100, 5, "K2")
    assert err.value.code == "not_empty"


def test_empty_delivers_full_quantity():
    c = filled_container()
    contract = c.contract
    delivered, empty = empty_container(c, contract)
    assert delivered.quantity == 10
    assert empty.contents is None and empty.contract is None


def test_empty_damaged_refused():
    c = filled_container()
    c.integrity = "damaged"
    with pytest.raises(LayerError) as err:
        empty_container(c, c.contract)
    assert err.value.code == "damaged_goods"


def test_empty_wrong_contract_refused():
    c = filled_container()
    wrong = Contract(
        contract_id="K-other", consignor="A", consignee="C", product_code="P1",
        quantity=10, deadline=100, priority=5, payment_total=0.0,
    )
    with pytest.raises(LayerError) as err:
        empty_container(c, wrong)
    assert err.value.code == "contract_mismatch"


def test_inspect():
    c = filled_container()
    assert inspect_container(c).passed
    c.integrity = "damaged"
    assert "damaged" in inspect_container(c).codes()


def test_group_same_pair_single_set():
    cs = [filled_container(cid=f"C{i}", consignee="C") for i in range(3)]
    sets = group_into_sets(cs)
    assert len(sets) == 1
    assert len(sets[0].container_ids) == 3


def test_group_splits_by_destination():
    cs = [
        filled_container(cid="C1", consignee="C"),
        filled_container(cid="C2", consignee="C"),
        filled_container(cid="C3", consignee="D"),
    ]
    sets = group_into_sets(cs)
    assert len(sets) == 2
    assert {s.destination for s in sets} == {"C", "D"}


@given(st.permutations(list(range(6))))
def test_group_permutation_invariant(perm):
    base = [
        filled_container(cid=f"C{i}", consignee="C" if i % 2 else "D", deadline=100 + 10 * i)
        for i in range(6)
    ]
    shuffled = [base[i] for i in perm]
    key = lambda sets: sorted((s.origin, s.destination, s.container_ids) for s in sets)
    assert key(group_into_sets(base)) == key(group_into_sets(shuffled))


def test_group_rejects_unfit_members():
    c = make_container()  # empty
    with pytest.raises(ValueError):
        group_into_sets([c])


DISPOSAL_GRAPH = graph_from_edges(
    [("B", "Z", 2, 2), ("B", "Y", 9, 9), ("Y", "B", 1, 1), ("Z", "B", 1, 1)]
)


def test_orphan_routed_to_cheapest_disposal():
    c = filled_container(location="B")
    d = handle_orphan(c, "B", DISPOSAL_GRAPH, UNIT, ["Z", "Y"])
    assert d.action == "transfer"
    assert d.target == "Z"


def test_orphan_already_at_disposal_holds():
    c = filled_container(location="Z")
    d = handle_orphan(c, "Z", DISPOSAL_GRAPH, UNIT, ["Z"])
    assert d.action == "hold"
    assert d.target == "Z"


def test_orphan_unreachable_disposal_holds():
    g = graph_from_edges([("A", "B", 1, 1)], nodes=["Z"])
    c = filled_container(location="B")
    assert handle_orphan(c, "B", g, UNIT, ["Z"]).action == "hold"


REPOSITION_GRAPH = graph_from_edges(
    [("Y", "X", 1, 1), ("W", "X", 5, 5), ("X", "Y", 1, 1), ("X", "W", 5, 5)]
)


def test_reposition_balanced_depots_no_moves():
    depots = [
        DepotState("X", {"reefer": 3}, {"reefer": 1}, {"reefer": 5}),
        DepotState("Y", {"reefer": 4}, {"reefer": 1}, {"reefer": 5}),
    ]
    moves, shortages = reposition_empties(depots, REPOSITION_GRAPH, UNIT)
    assert moves == [] and shortages == []


def test_reposition_threshold_rule():
    depots = [
        DepotState("X", {"reefer": 0}, {"reefer": 2}, {"reefer": 2}),
        DepotState("Y", {"reefer": 10}, {"reefer": 1}, {"reefer": 5}),
    ]
    moves, shortages = reposition_empties(depots, REPOSITION_GRAPH, UNIT)
    assert len(moves) == 1
    move = moves[0]
    assert (move.donor, move.receiver, move.class_id) == ("Y", "X", "reefer")
    assert move.count >= 2
    assert shortages == []


def test_reposition_prefers_cheaper_donor():
    depots = [
        DepotState("X", {"standard": 0}, {"standard": 2}, {"standard": 3}),
        DepotState("Y", {"standard": 9}, {"standard": 1}, {"standard": 4}),
        DepotState("W", {"standard": 9}, {"standard": 1}, {"standard": 4}),
    ]
    moves, _ = reposition_empties(depots, REPOSITION_GRAPH, UNIT)
    assert moves[0].donor == "Y"  # route Y->X is cheaper than W->X


def test_reposition_donor_never_below_min():
    depots = [
        DepotState("X", {"standard": 0}, {"standard": 8}, {"standard": 20}),
        DepotState("Y", {"standard": 6}, {"standard": 4}, {"standard": 5}),
    ]
    moves, shortages = reposition_empties(depots, REPOSITION_GRAPH, UNIT)
    assert sum(m.count for m in moves) == 2  # only stock - min leaves Y
    assert shortages and shortages[0][2] == 18


ORDER_GRAPH = graph_from_edges(
    [("A", "C", 1, 1)],
    nodes=["A", "C"],
    reefer_plugs=3,
)


def make_set(containers):
    return ContainerSet(
        set_id="S1",
        container_ids=tuple(c.container_id for c in containers),
        origin="A",
        destination="C",
    )


def test_build_orders_single():
    cs = [filled_container(cid=f"C{i}", deadline=1000) for i in range(3)]
    orders, withheld = build_orders(
        [make_set(cs)], {c.container_id: c for c in cs}, OrderConstraints(graph=ORDER_GRAPH)
    )
    assert withheld == []
    assert len(orders) == 1
    assert len(orders[0].notes) == 3
    assert orders[0].transaction.status == "open"


def test_build_orders_deadline_window_split():
    day = 1440
    cs = [
        filled_container(cid="C1", deadline=1 * day),
        filled_container(cid="C2", deadline=5 * day),
    ]
    orders, _ = build_orders(
        [make_set(cs)], {c.container_id: c for c in cs},
        OrderConstraints(deadline_window=day, graph=ORDER_GRAPH),
    )
    assert len(orders) == 2


def test_build_orders_suborder_boundaries():
    cs = [filled_container(cid=f"C{i}", deadline=1000) for i in range(4)]
    suborders = {"C0": 0, "C1": 0, "C2": 1, "C3": 1}
    orders, _ = build_orders(
        [make_set(cs)], {c.container_id: c for c in cs},
        OrderConstraints(graph=ORDER_GRAPH, suborder_of=suborders),
    )
    assert sorted(len(o.notes) for o in orders) == [2, 2]


def test_build_orders_withholds_dangerous():
    g = graph_from_edges([("A", "C", 1, 1)], accepts_dangerous=False)
    c = make_container(cid="C1", class_id="hazmat")
    fill_container(make_product(dangerous=True), c, "A", "C", 1000, 5, "K1")
    orders, withheld = build_orders(
        [make_set([c])], {"C1": c}, OrderConstraints(graph=g)
    )
    assert orders == []
    assert withheld == [("C1", "infeasible_destination")]


def test_build_orders_reefer_plug_cap_splits():
    cs = []
    for i in range(5):
        c = make_container(cid=f"C{i}", class_id="reefer")
        fill_container(make_product(perishable=True), c, "A", "C", 1000, 5, f"K{i}")
        cs.append(c)
    orders, withheld = build_orders(
        [make_set(cs)], {c.container_id: c for c in cs}, OrderConstraints(graph=ORDER_GRAPH)
    )
    assert withheld == []
    assert all(len(o.notes) <= 3 for o in orders)  # destination has 3 plugs
    assert sum(len(o.notes) for o in orders) == 5


def test_settle_transaction_lifecycle():
    cs = [filled_container(cid="C1")]
    orders, _ = build_orders(
        [make_set(cs)], {c.container_id: c for c in cs}, OrderConstraints(graph=ORDER_GRAPH)
    )
    [order] = orders
    contracts = [c.contract for c in cs]
    tx = settle_transaction(order, "departed", contracts)
    assert tx.paid == 30.0 and tx.status == "departed"
    tx = settle_transaction(order, "delivered", contracts)
    assert tx.paid == 100.0 and tx.status == "settled"
    with pytest.raises(LayerError) as err:
        settle_transaction(order, "delivered", contracts)
    assert err.value.code == "double_settlement"


def test_settle_lost_after_departed_freezes_payment():
    cs = [filled_container(cid="C1")]
    orders, _ = build_orders(
        [make_set(cs)], {c.container_id: c for c in cs}, OrderConstraints(graph=ORDER_GRAPH)
    )
    [order] = orders
    contracts = [c.contract for c in cs]
    settle_transaction(order, "departed", contracts)
    tx = settle_transaction(order, "lost", contracts)
    assert tx.status == "failed" and tx.paid == 30.0
    tx = settle_transaction(order, "delivered", contracts)  # failed orders never settle
    assert tx.status == "failed" and tx.paid == 30.0
