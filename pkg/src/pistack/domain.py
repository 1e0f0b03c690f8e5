"""Physical object and contract types shared by every layer of the stack.

Pure value types plus validators. Nothing here mutates shared state; all
mutation happens inside the single-threaded simulation kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

CONTAINER_CLASS_IDS = ("standard", "reefer", "hazmat")
MEAN_KINDS = ("ship", "truck", "train", "crane", "conveyor")
MEAN_STATES = ("idle", "busy", "broken")
INTEGRITY_STATES = ("intact", "damaged")

# Long-distance conveyances; cranes and conveyors only handle containers
# within a node and never traverse an edge.
CARRIER_KINDS = ("ship", "truck", "train")

PAYMENT_MILESTONES = ("departed", "arrived")


@dataclass(frozen=True)
class Finding:
    """One reason code produced by a check, with a severity level."""

    code: str
    message: str = ""
    severity: str = "error"  # info | warn | error


@dataclass
class CheckReport:
    """Outcome of a validation check: a pass/fail flag derived from findings.

    A report never raises; callers inspect `passed` and the reason codes.
    """

    findings: list[Finding] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not any(f.severity == "error" for f in self.findings)

    def codes(self) -> list[str]:
        return [f.code for f in self.findings]

    def add(self, code: str, message: str = "", severity: str = "error") -> None:
        self.findings.append(Finding(code, message, severity))

    def __bool__(self) -> bool:
        return self.passed


@dataclass(frozen=True)
class Product:
    """A batch of one product: what goes inside a single container."""

    product_code: str
    description: str
    quantity: int
    unit_weight: float  # kg per unit
    unit_volume: float  # m^3 per unit
    perishable: bool = False
    fragile: bool = False
    dangerous: bool = False

    def __post_init__(self) -> None:
        if self.quantity < 1:
            raise ValueError(f"product quantity must be >= 1, got {self.quantity}")
        if self.unit_weight <= 0:
            raise ValueError("unit_weight must be positive")
        if self.unit_volume <= 0:
            raise ValueError("unit_volume must be positive")

    @property
    def total_weight(self) -> float:
        return self.quantity * self.unit_weight

    @property
    def total_volume(self) -> float:
        return self.quantity * self.unit_volume


@dataclass(frozen=True)
class ContainerClass:
    """Physical characteristics of one container class."""

    class_id: str  # standard | reefer | hazmat
    internal_volume: float  # m^3
    max_payload: float  # kg
    tare_weight: float  # kg

    def __post_init__(self) -> None:
        if self.class_id not in CONTAINER_CLASS_IDS:
            raise ValueError(f"unknown container class {self.class_id!r}")
        if self.internal_volume <= 0 or self.max_payload <= 0 or self.tare_weight <= 0:
            raise ValueError("container class dimensions must be positive")


# Typical deep-sea box figures; scenarios may override per class.
DEFAULT_CLASSES = {
    "standard": ContainerClass("standard", internal_volume=33.0, max_payload=28000.0, tare_weight=2300.0),
    "reefer": ContainerClass("reefer", internal_volume=28.0, max_payload=26000.0, tare_weight=3000.0),
    "hazmat": ContainerClass("hazmat", internal_volume=30.0, max_payload=27000.0, tare_weight=2500.0),
}


@dataclass(frozen=True)
class Contract:
    """Carriage contract attached to one filled container."""

    contract_id: str
    consignor: str
    consignee: str
    product_code: str
    quantity: int
    deadline: int  # minutes from run start
    priority: int  # lower = more urgent
    payment_total: float
    intermediate_payments: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        if self.deadline <= 0:
            raise ValueError("contract deadline must be > 0")
        for milestone, _amount in self.intermediate_payments:
            if milestone not in PAYMENT_MILESTONES:
                raise ValueError(f"unknown payment milestone {milestone!r}")
        if self.payment_total < sum(a for _, a in self.intermediate_payments):
            raise ValueError("payment_total below the sum of intermediate payments")


@dataclass
class PiContainer:
    """The physical transport envelope every layer below the top manipulates.

    `location` is a node id, a mean id (while riding), or "lost". An
    orphaned container has lost its consignor/consignee identity and its
    contract papers; it is exempt from the filled-implies-contract rule
    until disposed of.
    """

    container_id: str
    cls: ContainerClass
    contents: Product | None = None
    consignor: str | None = None
    consignee: str | None = None
    contract: Contract | None = None
    integrity: str = "intact"
    location: str = ""
    orphaned: bool = False

    def __post_init__(self) -> None:
        # Unicast only: a consignee is one node id, never a collection.
        for who in (self.consignor, self.consignee):
            if who is not None and not isinstance(who, str):
                raise ValueError("consignor/consignee must be a single node id")
        if self.integrity not in INTEGRITY_STATES:
            raise ValueError(f"unknown integrity state {self.integrity!r}")

    @property
    def gross_weight(self) -> float:
        payload = self.contents.total_weight if self.contents else 0.0
        return self.cls.tare_weight + payload

    @property
    def filled(self) -> bool:
        return self.contents is not None


@dataclass
class PiMean:
    """A physical mover or handler of containers (ship, truck, crane...)."""

    mean_id: str
    kind: str
    container_capacity: int  # one-slot containers
    max_total_weight: float  # kg
    speed: float  # only relevant to local handling durations
    home_node: str
    operator: str = "public-carrier"
    state: str = "idle"
    location: str = ""

    def __post_init__(self) -> None:
        if self.kind not in MEAN_KINDS:
            raise ValueError(f"unknown mean kind {self.kind!r}")
        if self.container_capacity < 1:
            raise ValueError("container_capacity must be >= 1")
        if self.max_total_weight <= 0:
            raise ValueError("max_total_weight must be positive")
        if self.speed <= 0:
            raise ValueError("speed must be positive")
        if self.state not in MEAN_STATES:
            raise ValueError(f"unknown mean state {self.state!r}")
        if not self.location:
            self.location = self.home_node


def required_class_id(product: Product) -> str | None:
    """Container class a product must ride in, or None if no class fits."""
    if product.perishable and product.dangerous:
        return None  # no class is both refrigerated and hazmat-rated
    if product.perishable:
        return "reefer"
    if product.dangerous:
        return "hazmat"
    return "standard"


def check_compatibility(product: Product, cls: ContainerClass) -> CheckReport:
    """Can this product batch legally ride in a container of this class?"""
    report = CheckReport()
    if product.total_volume > cls.internal_volume:
        report.add("over_volume", f"{product.total_volume} m3 > {cls.internal_volume} m3")
    if product.total_weight > cls.max_payload:
        report.add("over_weight", f"{product.total_weight} kg > {cls.max_payload} kg payload")
    if product.perishable and cls.class_id != "reefer":
        report.add("needs_reefer", "perishable goods require a refrigerated container")
    if product.dangerous and cls.class_id != "hazmat":
        report.add("needs_hazmat", "dangerous goods require a hazmat-rated container")
    return report


def validate_container(c: PiContainer) -> CheckReport:
    """Check every container invariant; one reason code per violation."""
    report = CheckReport()
    if c.contents is not None:
        if c.contract is None and not c.orphaned:
            report.add("missing_contract", f"{c.container_id} is filled but has no contract")
        if c.contents.total_weight > c.cls.max_payload:
            report.add("over_weight", f"{c.container_id} exceeds class payload")
        if c.contents.total_volume > c.cls.internal_volume:
            report.add("over_volume", f"{c.container_id} exceeds class volume")
        if c.contract is not None:
            if c.contract.consignor != c.consignor or c.contract.consignee != c.consignee:
                report.add("contract_parties", f"{c.container_id} contract parties mismatch")
    return report
