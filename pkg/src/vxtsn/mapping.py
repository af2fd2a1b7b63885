"""Translation tables between TSN and 5G QoS identifiers.

Chain applied to every frame crossing the 5G system::

    {VLAN ID, PCP} -> VNI          (10 * vlan + pcp)
    PCP            -> DSCP         (default 8 * pcp, overridable)
    DSCP           -> QFI          (packet detection rules, exact match)
    QFI            -> 5QI          (priority level, packet delay budget)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

from .errors import (
    ConfigError,
    UnboundQfiError,
    UnclassifiedPacketError,
    UnmappedDscpError,
    UnmappedVniError,
)

NUM_VLANS = 4096
NUM_PCPS = 8
MAX_MAPPED_VNI = 10 * (NUM_VLANS - 1) + (NUM_PCPS - 1)  # 40957


class TsnTuple(NamedTuple):
    vlan_id: int
    pcp: int


def _check_tuple(vlan_id: int, pcp: int) -> None:
    if not 0 <= vlan_id < NUM_VLANS:
        raise ValueError(f"vlan_id must be in 0..4095, got {vlan_id}")
    if not 0 <= pcp < NUM_PCPS:
        raise ValueError(f"pcp must be in 0..7, got {pcp}")


def vni_from_tuple(t: TsnTuple) -> int:
    """VNI whose decimal digits are the VLAN ID followed by the PCP digit."""
    vlan_id, pcp = t
    _check_tuple(vlan_id, pcp)
    return 10 * vlan_id + pcp


def tuple_from_vni(vni: int) -> TsnTuple:
    vlan_id, pcp = divmod(vni, 10)
    if vni < 0 or pcp >= NUM_PCPS or vlan_id >= NUM_VLANS:
        raise UnmappedVniError(f"VNI {vni} does not encode a {{VLAN ID, PCP}} tuple")
    return TsnTuple(vlan_id, pcp)


class PriorityClass(enum.Enum):
    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"


def priority_class_of_pcp(pcp: int) -> PriorityClass:
    if not 0 <= pcp < NUM_PCPS:
        raise ValueError(f"pcp must be in 0..7, got {pcp}")
    if pcp >= 4:
        return PriorityClass.HIGH
    if pcp >= 2:
        return PriorityClass.MEDIUM
    return PriorityClass.LOW


@dataclass(frozen=True)
class DscpTable:
    """PCP -> DSCP marking table.  ``entries[pcp]`` is the DSCP for that PCP."""

    entries: tuple = tuple(8 * p for p in range(NUM_PCPS))

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        if len(entries) != NUM_PCPS:
            raise ConfigError(f"pcp_to_dscp needs 8 entries, got {len(entries)}")
        bad = [d for d in entries if not 0 <= d <= 63]
        if bad:
            raise ConfigError(f"pcp_to_dscp values must be in 0..63, got {bad}")
        if len(set(entries)) != NUM_PCPS:
            raise ConfigError("pcp_to_dscp must map each PCP to a distinct DSCP")

    @property
    def is_default(self) -> bool:
        return self.entries == DEFAULT_DSCP_TABLE.entries

    def dscp_from_pcp(self, pcp: int) -> int:
        if not 0 <= pcp < NUM_PCPS:
            raise ValueError(f"pcp must be in 0..7, got {pcp}")
        return self.entries[pcp]

    def pcp_from_dscp(self, dscp: int) -> int:
        if not 0 <= dscp <= 63:
            raise ValueError(f"dscp must be in 0..63, got {dscp}")
        if self.is_default:
            return dscp // 8
        try:
            return self.entries.index(dscp)
        except ValueError:
            raise UnmappedDscpError(f"no PCP is marked with DSCP {dscp}") from None


DEFAULT_DSCP_TABLE = DscpTable()


def dscp_from_pcp(pcp: int, table: DscpTable = DEFAULT_DSCP_TABLE) -> int:
    return table.dscp_from_pcp(pcp)


def pcp_from_dscp(dscp: int, table: DscpTable = DEFAULT_DSCP_TABLE) -> int:
    return table.pcp_from_dscp(dscp)


@dataclass(frozen=True)
class PdrRule:
    """Packet filter.  ``match_dscp=None`` is the match-any default rule."""

    match_dscp: Optional[int]
    qfi: int
    precedence: int = 0

    @property
    def is_default(self) -> bool:
        return self.match_dscp is None


class PdrRuleSet:
    """Ordered packet detection rules keyed on the outer DSCP."""

    def __init__(self, rules: Iterable[PdrRule] = ()):
        self.rules = tuple(sorted(rules, key=lambda r: (r.precedence, r.is_default)))
        errors = []
        self._by_dscp = {}
        defaults = []
        for r in self.rules:
            if r.qfi < 1:
                errors.append(f"rule {r}: qfi must be >= 1")
            if r.is_default:
                defaults.append(r)
                continue
            if not 0 <= r.match_dscp <= 63:
                errors.append(f"rule {r}: dscp must be in 0..63")
            if r.match_dscp in self._by_dscp:
                errors.append(f"duplicate PDR rule for DSCP {r.match_dscp}")
            self._by_dscp[r.match_dscp] = r
        if len(defaults) > 1:
            errors.append("at most one default (match-any) PDR rule is allowed")
        if defaults and any(r.precedence > defaults[0].precedence for r in self._by_dscp.values()):
            errors.append("the default PDR rule must have the lowest precedence")
        if errors:
            raise ConfigError(errors)
        self.default = defaults[0] if defaults else None

    def __iter__(self):
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)

    def __repr__(self):
        return f"PdrRuleSet({list(self.rules)!r})"

    @property
    def qfis(self) -> set:
        return {r.qfi for r in self.rules}

    def classify(self, dscp: int) -> int:
        rule = self._by_dscp.get(dscp, self.default)
        if rule is None:
            raise UnclassifiedPacketError(f"no packet detection rule matches DSCP {dscp}")
        return rule.qfi


def classify_qfi(dscp: int, rules: PdrRuleSet) -> int:
    return rules.classify(dscp)


def one_to_one_rules(qfi_for_pcp: Mapping[int, int], table: DscpTable = DEFAULT_DSCP_TABLE) -> PdrRuleSet:
    """One filter per PCP; every PCP must get its own QFI."""
    qfis = list(qfi_for_pcp.values())
    if len(set(qfis)) != len(qfis):
        raise ConfigError("one-to-one mapping needs a distinct QFI per PCP")
    return PdrRuleSet(
        PdrRule(table.dscp_from_pcp(pcp), qfi, precedence=10 * (NUM_PCPS - pcp))
        for pcp, qfi in sorted(qfi_for_pcp.items())
    )


def many_to_one_rules(pcps: Sequence[int], qfi: int, table: DscpTable = DEFAULT_DSCP_TABLE) -> PdrRuleSet:
    """Aggregate several PCPs into one QoS flow (loses 5G-side differentiation)."""
    return PdrRuleSet(PdrRule(table.dscp_from_pcp(p), qfi, precedence=10 * (NUM_PCPS - p)) for p in pcps)


@dataclass(frozen=True)
class FiveQiDescriptor:
    five_qi: int
    default_priority_level: int
    packet_delay_budget_ms: float

    def __post_init__(self):
        if self.default_priority_level <= 0:
            raise ValueError("default priority level must be > 0")
        if self.packet_delay_budget_ms <= 0:
            raise ValueError("packet delay budget must be > 0")

    @property
    def packet_delay_budget_ns(self) -> int:
        return round(self.packet_delay_budget_ms * 1_000_000)


# Standardized 5QIs listed for industrial traffic types (TS 23.501 Table 5.7.4-1 subset).
STANDARD_5QI = {
    d.five_qi: d
    for d in (
        FiveQiDescriptor(69, 5, 60),
        FiveQiDescriptor(65, 7, 75),
        FiveQiDescriptor(67, 15, 100),
        FiveQiDescriptor(86, 18, 5),
        FiveQiDescriptor(82, 19, 10),
        FiveQiDescriptor(87, 25, 5),
        FiveQiDescriptor(88, 25, 10),
        FiveQiDescriptor(89, 25, 15),
        FiveQiDescriptor(90, 25, 20),
        FiveQiDescriptor(3, 30, 50),
        FiveQiDescriptor(71, 56, 150),
        FiveQiDescriptor(80, 68, 10),
        FiveQiDescriptor(7, 70, 100),
        FiveQiDescriptor(9, 90, 300),
    )
}

# First-choice 5QI per PCP.  PCP 3, 5 and 6 are left to explicit configuration:
# 6 and 5 (isochronous / cyclic synchronous) have no standardized 5QI, and PCP 5
# is shared with cyclic asynchronous traffic whose 5QI depends on the deployment.
SUGGESTED_5QI_FOR_PCP = {7: 69, 4: 87, 2: 80, 1: 7, 0: 9}


@dataclass(frozen=True)
class QosFlowBinding:
    qfi: int
    descriptor: FiveQiDescriptor


def lookup_5qi(qfi: int, bindings: Mapping[int, QosFlowBinding]) -> FiveQiDescriptor:
    try:
        return bindings[qfi].descriptor
    except KeyError:
        raise UnboundQfiError(f"QFI {qfi} is not bound to a 5QI") from None


@dataclass(frozen=True)
class MappingConfig:
    dscp_table: DscpTable
    rules: PdrRuleSet
    bindings: Mapping[int, QosFlowBinding]

    def classify(self, pcp: int) -> int:
        return self.rules.classify(self.dscp_table.dscp_from_pcp(pcp))

    def descriptor(self, qfi: int) -> FiveQiDescriptor:
        return lookup_5qi(qfi, self.bindings)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "MappingConfig":
        """Build from the ``mapping`` section of a scenario (or a mapping file).

        Raises ConfigError carrying every problem found.
        """
        errors = []
        table = DEFAULT_DSCP_TABLE
        raw = doc.get("pcp_to_dscp")
        if raw is not None:
            if isinstance(raw, Mapping):
                raw = [raw.get(p, raw.get(str(p))) for p in range(NUM_PCPS)]
            try:
                table = DscpTable(tuple(raw))
            except (ConfigError, TypeError) as exc:
                errors.append(f"mapping.pcp_to_dscp: {exc}")

        rules = PdrRuleSet()
        raw_rules = []
        for i, r in enumerate(doc.get("pdr_rules", [])):
            dscp = None if r.get("default") else r.get("dscp")
            if dscp is None and not r.get("default"):
                errors.append(f"mapping.pdr_rules[{i}]: needs 'dscp' or 'default: true'")
                continue
            raw_rules.append(PdrRule(dscp, r["qfi"], r.get("precedence", 0)))
        try:
            rules = PdrRuleSet(raw_rules)
        except ConfigError as exc:
            errors.extend(f"mapping.pdr_rules: {e}" for e in exc.errors)

        bindings = {}
        seen = set()
        for i, q in enumerate(doc.get("qos_flows", [])):
            where = f"mapping.qos_flows[{i}]"
            qfi, fqi = q["qfi"], q["five_qi"]
            if qfi in seen:
                errors.append(f"{where}: QFI {qfi} bound twice")
                continue
            seen.add(qfi)
            if "priority_level" in q or "pdb_ms" in q:
                try:
                    desc = FiveQiDescriptor(fqi, q["priority_level"], q["pdb_ms"])
                except (KeyError, ValueError) as exc:
                    errors.append(f"{where}: non-standard 5QI needs positive priority_level and pdb_ms ({exc})")
                    continue
            elif fqi in STANDARD_5QI:
                desc = STANDARD_5QI[fqi]
            else:
                errors.append(f"{where}: 5QI {fqi} is not in the standard table; give priority_level and pdb_ms")
                continue
            bindings[qfi] = QosFlowBinding(qfi, desc)

        for qfi in sorted(rules.qfis - seen):
            errors.append(f"mapping.pdr_rules: QFI {qfi} has no qos_flows binding")
        if errors:
            raise ConfigError(errors)
        return cls(table, rules, bindings)

    def to_dict(self) -> dict:
        out = {"pcp_to_dscp": list(self.dscp_table.entries), "pdr_rules": [], "qos_flows": []}
        for r in self.rules:
            entry = {"qfi": r.qfi, "precedence": r.precedence}
            if r.is_default:
                entry["default"] = True
            else:
                entry["dscp"] = r.match_dscp
            out["pdr_rules"].append(entry)
        for qfi in sorted(self.bindings):
            d = self.bindings[qfi].descriptor
            out["qos_flows"].append(
                {
                    "qfi": qfi,
                    "five_qi": d.five_qi,
                    "priority_level": d.default_priority_level,
                    "pdb_ms": d.packet_delay_budget_ms,
                }
            )
        return out


MAPPING_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "pcp_to_dscp": {
            "oneOf": [
                {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 0, "maximum": 63},
                    "minItems": 8,
                    "maxItems": 8,
                },
                {
                    "type": "object",
                    "patternProperties": {"^[0-7]$": {"type": "integer", "minimum": 0, "maximum": 63}},
                    "additionalProperties": False,
                },
            ]
        },
        "pdr_rules": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["qfi"],
                "properties": {
                    "dscp": {"type": "integer", "minimum": 0, "maximum": 63},
                    "default": {"type": "boolean"},
                    "qfi": {"type": "integer", "minimum": 1, "maximum": 63},
                    "precedence": {"type": "integer", "minimum": 0},
                },
            },
        },
        "qos_flows": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["qfi", "five_qi"],
                "properties": {
                    "qfi": {"type": "integer", "minimum": 1, "maximum": 63},
                    "five_qi": {"type": "integer", "minimum": 1, "maximum": 255},
                    "priority_level": {"type": "integer", "minimum": 1},
                    "pdb_ms": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
    },
}
