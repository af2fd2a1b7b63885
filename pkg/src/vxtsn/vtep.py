"""VxLAN tunnel end point: classify, encapsulate, forward, learn, decapsulate."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from ipaddress import IPv4Address, IPv4Network
from typing import Dict, Iterator, Mapping, Optional, Tuple

from .errors import ConfigError, NoRouteError, TagMismatchError
from .frames import EthernetFrame, MacAddress, VlanTag, VxlanPacket, as_ipv4
from .mapping import DEFAULT_DSCP_TABLE, DscpTable, TsnTuple, tuple_from_vni, vni_from_tuple

MULTICAST_NET = IPv4Network("224.0.0.0/4")
DEFAULT_MAX_AGE_NS = 300 * 1_000_000_000


class TagPolicy(str, enum.Enum):
    RETAIN = "retain"
    STRIP_AND_REINSERT = "strip-and-reinsert"


@dataclass(frozen=True)
class VtepConfig:
    vtep_ip: IPv4Address
    tag_policy: TagPolicy = TagPolicy.RETAIN
    groups: Mapping[int, IPv4Address] = field(default_factory=dict)
    default_vlan: int = 1
    dscp_table: DscpTable = DEFAULT_DSCP_TABLE
    max_age_ns: int = DEFAULT_MAX_AGE_NS

    def __post_init__(self):
        object.__setattr__(self, "vtep_ip", IPv4Address(self.vtep_ip))
        object.__setattr__(self, "tag_policy", TagPolicy(self.tag_policy))
        object.__setattr__(self, "groups", {int(v): IPv4Address(g) for v, g in self.groups.items()})
        errors = []
        if self.vtep_ip in MULTICAST_NET or self.vtep_ip.is_unspecified:
            errors.append(f"VTEP address {self.vtep_ip} is not unicast")
        for vni, group in self.groups.items():
            if group not in MULTICAST_NET:
                errors.append(f"group {group} for VNI {vni} is not in 224.0.0.0/4")
        if not 0 <= self.default_vlan <= 4095:
            errors.append(f"default_vlan {self.default_vlan} out of range")
        if self.max_age_ns <= 0:
            errors.append("max_age must be positive")
        if errors:
            raise ConfigError(errors)


@dataclass
class ForwardingEntry:
    vni: int
    mac: MacAddress
    remote_vtep_ip: IPv4Address
    learned: bool = False
    last_seen: int = 0


@dataclass(frozen=True)
class EgressDecision:
    kind: str  # "unicast" | "multicast"
    ip: IPv4Address

    @property
    def is_multicast(self) -> bool:
        return self.kind == "multicast"


class ForwardingTable:
    """Per-VNI MAC -> remote VTEP map plus a per-VNI default (all-zeros MAC) entry."""

    def __init__(self, groups: Optional[Mapping[int, IPv4Address]] = None):
        self._entries: Dict[Tuple[int, MacAddress], ForwardingEntry] = {}
        self._defaults: Dict[int, IPv4Address] = {}
        for vni, group in (groups or {}).items():
            self.set_default(vni, group)

    @classmethod
    def from_config(cls, cfg: VtepConfig) -> "ForwardingTable":
        return cls(cfg.groups)

    def set_default(self, vni: int, group) -> None:
        self._defaults[vni] = IPv4Address(group)

    def default_for(self, vni: int) -> Optional[IPv4Address]:
        return self._defaults.get(vni)

    def add_static(self, vni: int, mac, remote_ip) -> ForwardingEntry:
        mac = MacAddress.parse(mac)
        if mac.is_multicast or mac.is_zero:
            raise ConfigError(f"static entry MAC {mac} must be a non-zero unicast address")
        entry = ForwardingEntry(vni, mac, IPv4Address(remote_ip), learned=False)
        self._entries[(vni, mac)] = entry
        return entry

    def lookup(self, vni: int, mac: MacAddress) -> Optional[ForwardingEntry]:
        return self._entries.get((vni, mac))

    def resolve(self, vni: int, dst: MacAddress) -> EgressDecision:
        if not dst.is_multicast:
            entry = self._entries.get((vni, dst))
            if entry is not None:
                return EgressDecision("unicast", entry.remote_vtep_ip)
        group = self._defaults.get(vni)
        if group is None:
            raise NoRouteError(f"VNI {vni}: {dst} is unknown and no multicast group is configured")
        return EgressDecision("multicast", group)

    def learn(self, vni: int, src_mac: MacAddress, outer_src_ip, now: int) -> None:
        if src_mac.is_multicast or src_mac.is_zero:
            return
        key = (vni, src_mac)
        entry = self._entries.get(key)
        if entry is not None and not entry.learned:
            return  # static entries win over learning
        if entry is None:
            self._entries[key] = ForwardingEntry(vni, src_mac, as_ipv4(outer_src_ip), True, now)
        else:
            entry.remote_vtep_ip = as_ipv4(outer_src_ip)
            entry.last_seen = now

    def age_out(self, now: int, max_age: int) -> int:
        if max_age <= 0:
            raise ValueError("max_age must be positive")
        stale = [k for k, e in self._entries.items() if e.learned and now - e.last_seen > max_age]
        for k in stale:
            del self._entries[k]
        return len(stale)

    def __len__(self):
        return len(self._entries)

    def __iter__(self) -> Iterator[ForwardingEntry]:
        return iter(sorted(self._entries.values(), key=lambda e: (e.vni, e.mac.octets)))

    def rows(self):
        """(VNI, MAC, remote IP, learned) rows, default entries included."""
        rows = [(vni, "00:00:00:00:00:00", str(g), False) for vni, g in self._defaults.items()]
        rows += [(e.vni, str(e.mac), str(e.remote_vtep_ip), e.learned) for e in self._entries.values()]
        return sorted(rows)

    def format(self) -> str:
        lines = [f"{'VNI':>6}  {'MAC':17}  {'REMOTE IP':15}  LEARNED"]
        for vni, mac, ip, learned in self.rows():
            lines.append(f"{vni:>6}  {mac:17}  {ip:15}  {'yes' if learned else 'no'}")
        return "\n".join(lines)


def tuple_of(frame: EthernetFrame, cfg: VtepConfig) -> TsnTuple:
    if frame.tag is None:
        return TsnTuple(cfg.default_vlan, 0)
    return TsnTuple(frame.tag.vlan_id, frame.tag.pcp)


def ingress(
    frame: EthernetFrame,
    cfg: VtepConfig,
    table: ForwardingTable,
    *,
    identification: int = 0,
) -> Tuple[VxlanPacket, EgressDecision]:
    """Encapsulate a frame arriving from the TSN side and pick its tunnel destination."""
    tsn = tuple_of(frame, cfg)
    vni = vni_from_tuple(tsn)
    decision = table.resolve(vni, frame.dst)
    inner = frame
    if cfg.tag_policy is TagPolicy.STRIP_AND_REINSERT and frame.tag is not None:
        inner = frame.with_tag(None)
    pkt = VxlanPacket.build(
        cfg.vtep_ip,
        decision.ip,
        vni,
        inner,
        dscp=cfg.dscp_table.dscp_from_pcp(tsn.pcp),
        identification=identification & 0xFFFF,
    )
    return pkt, decision


def learn(table: ForwardingTable, vni: int, src_mac: MacAddress, outer_src_ip, now: int = 0) -> None:
    table.learn(vni, src_mac, outer_src_ip, now)


def age_out(table: ForwardingTable, now: int, max_age: int) -> int:
    return table.age_out(now, max_age)


def egress(pkt: VxlanPacket, cfg: VtepConfig, table: ForwardingTable, now: int = 0) -> EthernetFrame:
    """Decapsulate, learn the sender, and restore the 802.1Q tag from the VNI if absent."""
    vni = pkt.vxlan.vni
    tsn = tuple_from_vni(vni)
    frame = pkt.inner
    if frame.tag is not None and (frame.tag.vlan_id, frame.tag.pcp) != tsn:
        raise TagMismatchError(
            f"inner tag {{vlan {frame.tag.vlan_id}, pcp {frame.tag.pcp}}} disagrees with VNI {vni}"
        )
    table.learn(vni, frame.src, pkt.outer_ip.src_ip, now)
    if frame.tag is None:
        frame = frame.with_tag(VlanTag(tsn.vlan_id, tsn.pcp))
    return frame


class Vtep:
    """A configured VTEP instance: config, forwarding table and IP ident counter.

    Single writer; callers serialize access per instance.
    """

    def __init__(self, cfg: VtepConfig, table: Optional[ForwardingTable] = None):
        self.cfg = cfg
        self.table = table if table is not None else ForwardingTable.from_config(cfg)
        self._ident = 0

    @property
    def ip(self) -> IPv4Address:
        return self.cfg.vtep_ip

    def ingress(self, frame: EthernetFrame) -> Tuple[VxlanPacket, EgressDecision]:
        result = ingress(frame, self.cfg, self.table, identification=self._ident)
        self._ident = (self._ident + 1) & 0xFFFF
        return result

    def egress(self, pkt: VxlanPacket, now: int = 0) -> EthernetFrame:
        return egress(pkt, self.cfg, self.table, now)

    def age_out(self, now: int) -> int:
        return self.table.age_out(now, self.cfg.max_age_ns)
