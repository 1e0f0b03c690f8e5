import hashlib
import io
import json

import pytest

from pistack.kernel import TraceEvent
from pistack.scenario_io import (
    InvalidParamError,
    MulticastError,
    ParseError,
    TruncatedTraceError,
    UnresolvedReferenceError,
    parse_scenario,
    parse_trace,
    summarize,
    trace_to_text,
    validate_scenario,
)
from pistack.scenarios import minimal_scenario, reefer_shortage_scenario, synthetic_scenario


def test_minimal_scenario_parses_with_defaults():
    s = parse_scenario(minimal_scenario())
    assert s.params.max_load_size == 20
    assert s.params.deadline_window == 1440
    assert s.params.disposal_node == "A"
    assert s.disposal_nodes == ["A"]
    assert len(s.means) == 1
    assert s.demands[0].containers == 2
    assert s.classes["standard"].internal_volume == 33.0


def test_unknown_node_reference_named():
    doc = minimal_scenario()
    doc["demands"][0]["consignee"] = "Q"
    with pytest.raises(UnresolvedReferenceError) as err:
        parse_scenario(doc)
    assert "Q" in str(err.value)


def test_negative_base_time_invalid():
    doc = minimal_scenario()
    doc["graph"]["edges"][0]["base_time"] = -5
    with pytest.raises(InvalidParamError):
        parse_scenario(doc)


def test_unknown_keys_rejected_strict():
    doc = minimal_scenario()
    doc["grpah"] = {}
    with pytest.raises(ParseError):
        parse_scenario(doc)
    doc = minimal_scenario()
    doc["demands"][0]["broadcast"] = True
    with pytest.raises(ParseError):
        parse_scenario(doc)


MULTICAST_FIXTURES = [
    {"consignee": ["B", "B"]},
    {"consignee": ["B", "A"]},
    {"consignee": ["B", "A", "B"]},
    {"consignees": ["B", "A"]},
    {"consignees": ["B"]},
]


@pytest.mark.parametrize("patch", MULTICAST_FIXTURES)
def test_multicast_demands_rejected_by_name(patch):
    doc = minimal_scenario()
    demand = doc["demands"][0]
    demand.pop("consignee", None)
    if "consignee" in patch:
        demand["consignee"] = patch["consignee"]
    else:
        demand["consignee"] = "B"
        demand["consignees"] = patch["consignees"]
    with pytest.raises(MulticastError) as err:
        parse_scenario(doc)
    assert err.value.code == "multicast_unsupported"


def test_same_endpoint_demand_rejected():
    doc = minimal_scenario()
    doc["demands"][0]["consignee"] = "A"
    with pytest.raises(InvalidParamError):
        parse_scenario(doc)


def test_disposal_node_rule():
    doc = minimal_scenario()
    del doc["params"]["disposal_node"]
    with pytest.raises(InvalidParamError):
        parse_scenario(doc)
    doc["graph"]["nodes"].append({"id": "Z", "kind": "disposal"})
    doc["graph"]["edges"].append({"from": "A", "to": "Z", "base_time": 10, "base_cost": 1})
    s = parse_scenario(doc)
    assert s.disposal_nodes == ["Z"]


def test_duplicate_edge_rejected():
    doc = minimal_scenario()
    doc["graph"]["edges"].append({"from": "A", "to": "B", "base_time": 10, "base_cost": 1})
    with pytest.raises(InvalidParamError):
        parse_scenario(doc)


def test_fault_references_checked():
    doc = minimal_scenario()
    doc["faults"] = [{"kind": "mean_breakdown", "time": 5, "mean": "NOPE"}]
    with pytest.raises(UnresolvedReferenceError):
        parse_scenario(doc)
    doc["faults"] = [{"kind": "edge_close", "time": 5, "edge": ["A", "Q"]}]
    with pytest.raises(UnresolvedReferenceError):
        parse_scenario(doc)


def test_validate_clean_scenario():
    s = parse_scenario(synthetic_scenario(5, n_nodes=5, n_demands=3))
    report = validate_scenario(s)
    assert report.passed, [f.code for f in report.findings]


def test_validate_reefer_shortage_warns():
    s = parse_scenario(reefer_shortage_scenario())
    report = validate_scenario(s)
    assert report.passed  # warnings only
    assert "reefer_shortage" in report.codes()


def test_validate_unreachable_consignee_errors():
    doc = minimal_scenario()
    doc["graph"]["nodes"].append({"id": "X", "kind": "consignee_site"})
    doc["demands"][0]["consignee"] = "X"
    report = validate_scenario(parse_scenario(doc))
    assert not report.passed
    assert "unreachable" in report.codes()


def test_validate_dangerous_destination_warns():
    doc = minimal_scenario()
    doc["graph"]["nodes"][1]["accepts_dangerous"] = False
    doc["demands"][0]["product"]["dangerous"] = True
    report = validate_scenario(parse_scenario(doc))
    assert report.passed
    assert "dangerous_destination" in report.codes()


def test_validate_perishable_and_dangerous_errors():
    doc = minimal_scenario()
    doc["demands"][0]["product"]["dangerous"] = True
    doc["demands"][0]["product"]["perishable"] = True
    report = validate_scenario(parse_scenario(doc))
    assert "unsupported_product" in report.codes()
    assert not report.passed


SAMPLE_TRACE = [
    TraceEvent(0, "A", 7, "fill", ("C1",), {"demand": "D1", "quantity": 3}),
    TraceEvent(5, "A", 1, "depart", ("C1",), {"mean": "M1", "src": "A", "dst": "B",
                                              "cost": 4.0, "premium": 0.0, "bucket": "transport"}),
    TraceEvent(9, "B", 1, "arrive", ("C1",), {"mean": "M1", "src": "A"}),
]


def test_trace_round_trip_identity():
    text = trace_to_text(SAMPLE_TRACE)
    back = parse_trace(io.StringIO(text))
    assert back == SAMPLE_TRACE


def test_trace_bytes_reproducible():
    a = trace_to_text(SAMPLE_TRACE).encode()
    b = trace_to_text(list(SAMPLE_TRACE)).encode()
    assert hashlib.sha256(a).hexdigest() == hashlib.sha256(b).hexdigest()


def test_empty_trace_serializes_empty():
    assert trace_to_text([]) == ""


def test_trace_field_order_fixed():
    line = trace_to_text(SAMPLE_TRACE).splitlines()[0]
    assert list(json.loads(line).keys()) == ["t", "node", "layer", "kind", "subjects", "details"]


def test_truncated_trace_detected(tmp_path):
    path = tmp_path / "trace.jsonl"
    text = trace_to_text(SAMPLE_TRACE)
    path.write_text(text[: len(text) - 14])
    with pytest.raises(TruncatedTraceError):
        parse_trace(path)


def test_summarize_counts_and_unused_mean():
    trace = [
        TraceEvent(0, "A", 5, "order.created", ("C1",),
                   {"order": "O1", "kind": "demand", "deadline": 400, "origin": "A", "destination": "B"}),
        TraceEvent(0, "A", 4, "load.created", ("C1",), {"load": "L1", "deadline": 400, "kind": "demand",
                                                        "orders": ["O1"], "destination": "B"}),
        TraceEvent(10, "A", 1, "depart", ("C1",), {"mean": "M1", "src": "A", "dst": "B",
                                                   "cost": 7.0, "premium": 1.5, "bucket": "transport"}),
        TraceEvent(300, "B", 1, "arrive", ("C1",), {"mean": "M1", "src": "A"}),
        TraceEvent(300, "B", 4, "load.arrived", ("C1",), {"load": "L1", "deadline": 400, "late": False,
                                                          "kind": "demand"}),
        TraceEvent(300, "B", 5, "order.completed", ("C1",), {"order": "O1", "kind": "demand",
                                                             "late": False, "deadline": 400}),
        TraceEvent(300, "B", 5, "transaction.settled", (), {"order": "O1", "paid": 100.0}),
        TraceEvent(300, "B", 7, "deliver", ("C1",), {"demand": "D1", "quantity": 3,
                                                     "contract": "K1", "product": "P1"}),
    ]
    m = summarize(trace)
    assert m.orders_total == 1
    assert m.orders_delivered == 1
    assert m.orders_late == 0
    assert m.deadline_misses == []
    assert m.cost_transport == 7.0
    assert m.cost_expedite == 1.5
    assert m.cost_total == 8.5
    assert m.containers_delivered == 1
    assert m.mean_end_to_end == 300.0
    assert m.utilization["M1"] == pytest.approx(290 / 300)
    assert m.utilization_of("M-unused") == 0.0


def test_summarize_empty_trace_zeroed():
    m = summarize([])
    assert m.orders_total == 0
    assert m.cost_total == 0.0
    assert m.final_clock == 0
    assert m.to_dict()["orders"]["delivered"] == 0
