import pytest

from pistack.domain import (
    DEFAULT_CLASSES,
    CheckReport,
    Contract,
    PiContainer,
    PiMean,
    Product,
    check_compatibility,
    required_class_id,
    validate_container,
)
from util import make_container, make_product


def test_volume_fit_passes():
    product = make_product(quantity=10, unit_volume=1.0)
    report = check_compatibility(product, DEFAULT_CLASSES["standard"])
    assert report.passed
    assert report.codes() == []


def test_perishable_needs_reefer():
    product = make_product(perishable=True)
    report = check_compatibility(product, DEFAULT_CLASSES["standard"])
    assert not report.passed
    assert "needs_reefer" in report.codes()
    assert check_compatibility(product, DEFAULT_CLASSES["reefer"]).passed


def test_over_weight_detected():
    product = make_product(quantity=10, unit_weight=3000.0)
    report = check_compatibility(product, DEFAULT_CLASSES["standard"])
    assert "over_weight" in report.codes()


def test_dangerous_needs_hazmat():
    product = make_product(dangerous=True)
    assert "needs_hazmat" in check_compatibility(product, DEFAULT_CLASSES["standard"]).codes()
    assert check_compatibility(product, DEFAULT_CLASSES["hazmat"]).passed


def test_empty_container_valid_without_contract():
    c = make_container()
    assert validate_container(c).passed


def test_filled_container_requires_contract():
    c = make_container(contents=make_product())
    report = validate_container(c)
    assert not report.passed
    assert "missing_contract" in report.codes()


def test_two_consignees_rejected_at_construction():
    with pytest.raises(ValueError):
        PiContainer(
            container_id="C1",
            cls=DEFAULT_CLASSES["standard"],
            consignee=["B", "C"],  # unicast only
        )


def test_orphan_exempt_from_contract_rule():
    c = make_container(contents=make_product(), orphaned=True)
    assert validate_container(c).passed


def test_contract_party_mismatch_flagged():
    contract = Contract(
        contract_id="K1", consignor="A", consignee="B", product_code="P1",
        quantity=10, deadline=100, priority=5, payment_total=0.0,
    )
    c = make_container(contents=make_product(), consignor="A", consignee="X", contract=contract)
    assert "contract_parties" in validate_container(c).codes()


def test_contract_total_covers_milestones():
    with pytest.raises(ValueError):
        Contract(
            contract_id="K1", consignor="A", consignee="B", product_code="P1",
            quantity=1, deadline=10, priority=1, payment_total=10.0,
            intermediate_payments=(("departed", 30.0),),
        )


def test_product_invariants():
    with pytest.raises(ValueError):
        make_product(quantity=0)
    with pytest.raises(ValueError):
        make_product(unit_weight=0.0)
    with pytest.raises(ValueError):
        make_product(unit_volume=-1.0)


def test_mean_invariants():
    with pytest.raises(ValueError):
        PiMean(mean_id="M", kind="truck", container_capacity=0, max_total_weight=1.0, speed=1.0, home_node="A")
    m = PiMean(mean_id="M", kind="ship", container_capacity=4, max_total_weight=1e5, speed=2.0, home_node="A")
    assert m.location == "A"


def test_required_class_id():
    assert required_class_id(make_product()) == "standard"
    assert required_class_id(make_product(perishable=True)) == "reefer"
    assert required_class_id(make_product(dangerous=True)) == "hazmat"
    assert required_class_id(make_product(perishable=True, dangerous=True)) is None


def test_gross_weight():
    c = make_container(contents=make_product(quantity=10, unit_weight=100.0))
    assert c.gross_weight == DEFAULT_CLASSES["standard"].tare_weight + 1000.0


def test_report_severities():
    report = CheckReport()
    report.add("warn_code", severity="warn")
    assert report.passed
    report.add("boom")
    assert not report.passed
