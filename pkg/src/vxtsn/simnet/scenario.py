"""Scenario files: schema, loading, and validation that reports every fault.

A scenario is a YAML (or JSON) document::

    schema_version: 1
    name: ...
    duration_ms: 60000
    seed: 1
    mapping:   {pcp_to_dscp, pdr_rules, qos_flows}
    fiveg:     {downlink, uplink, drbs, queue_capacity}
    vteps:     [{name, ip, side, tag_policy, default_vlan, max_age_s, task_delays_ns, static_entries}]
    multicast_groups: [{vni, group, members}]
    sites:     [{name, vtep, bridge_rate_bps, hosts: [{name, mac, vlans}]}]
    flows:     [{name, src, dst_mac, vlan, pcp, payload_kind, periodic|rate, ...}]
    capture_points: {A: upf.ingress, ...}

See README.md for the field reference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from ipaddress import IPv4Address
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import jsonschema
import yaml

from ..errors import ConfigError, MappingError, UnclassifiedPacketError
from ..fiveg import LinkModel, map_qfi_to_drb, one_drb_per_qfi
from ..frames import DEFAULT_MTU, MacAddress
from ..mapping import DEFAULT_DSCP_TABLE, MAPPING_SCHEMA, MappingConfig, vni_from_tuple
from ..vtep import MULTICAST_NET, TagPolicy, VtepConfig
from .traffic import MIN_PAYLOAD, FlowSpec

SCHEMA_VERSION = 1

# Modelled VTEP processing constants (mean per-task latency of a software VTEP).
DEFAULT_TASK_DELAYS_NS = {"task1": 3113, "task2": 7619, "task3": 75375}

VTEP_TAPS = ("ingress", "redirected", "encapsulated", "tunnel_rx", "decapsulated")
FIVEG_TAPS = ("classified", "radio_tx")
FRAME_TAPS = ("ingress", "redirected", "decapsulated")

_MAC = {"type": "string", "pattern": "^([0-9A-Fa-f]{2}[:-]){5}[0-9A-Fa-f]{2}$"}
_IPV4 = {"type": "string", "format": "ipv4", "pattern": r"^\d{1,3}(\.\d{1,3}){3}$"}
_NAME = {"type": "string", "minLength": 1, "pattern": r"^[A-Za-z0-9_\-]+$"}
_LINK = {
    "type": "object",
    "additionalProperties": False,
    "required": ["capacity_bps"],
    "properties": {
        "capacity_bps": {"type": "number", "exclusiveMinimum": 0},
        "base_latency_ms": {"type": "number", "minimum": 0},
        "jitter_ms": {
            "type": "array",
            "items": {"type": "number", "minimum": 0},
            "minItems": 2,
            "maxItems": 2,
        },
    },
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "name", "duration_ms", "mapping", "fiveg", "vteps", "sites", "flows"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": _NAME,
        "description": {"type": "string"},
        "duration_ms": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "aging_interval_ms": {"type": "number", "exclusiveMinimum": 0},
        "mapping": MAPPING_SCHEMA,
        "fiveg": {
            "type": "object",
            "additionalProperties": False,
            "required": ["downlink"],
            "properties": {
                "downlink": _LINK,
                "uplink": _LINK,
                "queue_capacity": {"type": ["integer", "null"], "minimum": 1},
                "drbs": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["id", "qfis"],
                        "properties": {
                            "id": {"type": "integer", "minimum": 1},
                            "qfis": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                        },
                    },
                },
            },
        },
        "vteps": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "ip", "side"],
                "properties": {
                    "name": _NAME,
                    "ip": _IPV4,
                    "side": {"enum": ["core", "ue"]},
                    "tag_policy": {"enum": [p.value for p in TagPolicy]},
                    "default_vlan": {"type": "integer", "minimum": 0, "maximum": 4095},
                    "max_age_s": {"type": "number", "exclusiveMinimum": 0},
                    "task_delays_ns": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {k: {"type": "integer", "minimum": 0} for k in DEFAULT_TASK_DELAYS_NS},
                    },
                    "static_entries": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["mac", "remote_ip"],
                            "properties": {
                                "vni": {"type": "integer", "minimum": 0},
                                "vlan": {"type": "integer", "minimum": 0, "maximum": 4095},
                                "pcp": {"type": "integer", "minimum": 0, "maximum": 7},
                                "mac": _MAC,
                                "remote_ip": _IPV4,
                            },
                        },
                    },
                },
            },
        },
        "multicast_groups": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["group", "members"],
                "properties": {
                    "vni": {"type": "integer", "minimum": 0},
                    "vlan": {"type": "integer", "minimum": 0, "maximum": 4095},
                    "pcp": {"type": "integer", "minimum": 0, "maximum": 7},
                    "group": _IPV4,
                    "members": {"type": "array", "items": _NAME, "minItems": 1},
                },
            },
        },
        "sites": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "vtep", "hosts"],
                "properties": {
                    "name": _NAME,
                    "vtep": _NAME,
                    "bridge_rate_bps": {"type": "number", "exclusiveMinimum": 0},
                    "hosts": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["name", "mac", "vlans"],
                            "properties": {
                                "name": _NAME,
                                "mac": _MAC,
                                "vlans": {
                                    "type": "array",
                                    "items": {"type": "integer", "minimum": 0, "maximum": 4095},
                                },
                            },
                        },
                    },
                },
            },
        },
        "flows": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "src", "dst_mac", "vlan", "pcp"],
                "oneOf": [{"required": ["periodic"]}, {"required": ["rate"]}],
                "properties": {
                    "name": _NAME,
                    "src": _NAME,
                    "dst_mac": _MAC,
                    "vlan": {"type": "integer", "minimum": 0, "maximum": 4095},
                    "pcp": {"type": "integer", "minimum": 0, "maximum": 7},
                    "payload_kind": {"enum": ["ptp", "rtc1", "udp-bytes"]},
                    "periodic": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["period_ms", "payload_size"],
                        "properties": {
                            "period_ms": {"type": "number", "exclusiveMinimum": 0},
                            "payload_size": {"type": "integer", "minimum": MIN_PAYLOAD, "maximum": DEFAULT_MTU},
                            "burst": {"type": "integer", "minimum": 1},
                        },
                    },
                    "rate": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["bits_per_s", "payload_size"],
                        "properties": {
                            "bits_per_s": {"type": "integer", "minimum": 1},
                            "payload_size": {"type": "integer", "minimum": MIN_PAYLOAD, "maximum": DEFAULT_MTU},
                        },
                    },
                    "start_ms": {"type": "number", "minimum": 0},
                    "count": {"type": "integer", "minimum": 0},
                    "expect_sinks": {"type": "array", "items": _NAME},
                    "expect_qfi": {"type": "integer", "minimum": 1},
                },
            },
        },
        "capture_points": {
            "type": "object",
            "patternProperties": {"^[A-Za-z0-9_]+$": {"type": "string"}},
            "additionalProperties": False,
        },
    },
}


@dataclass(frozen=True)
class HostSpec:
    name: str
    mac: MacAddress
    vlans: frozenset
    site: str


@dataclass(frozen=True)
class SiteSpec:
    name: str
    vtep: str
    bridge_rate_bps: float
    hosts: Tuple[HostSpec, ...]


@dataclass(frozen=True)
class VtepSpec:
    name: str
    side: str
    config: VtepConfig
    static_entries: Tuple[tuple, ...]  # (vni, mac, remote_ip)
    task_delays_ns: Mapping[str, int]


@dataclass(frozen=True)
class GroupSpec:
    vni: int
    group: IPv4Address
    members: Tuple[str, ...]


@dataclass(frozen=True)
class FiveGSpec:
    downlink: LinkModel
    uplink: LinkModel
    drbs: Mapping[int, Tuple[int, ...]]
    queue_capacity: Optional[int] = None


@dataclass(frozen=True)
class Scenario:
    name: str
    duration_ns: int
    seed: int
    mapping: MappingConfig
    fiveg: FiveGSpec
    vteps: Mapping[str, VtepSpec]
    sites: Mapping[str, SiteSpec]
    groups: Tuple[GroupSpec, ...]
    flows: Tuple[FlowSpec, ...]
    capture_points: Mapping[str, str] = field(default_factory=dict)
    aging_interval_ns: int = 1_000_000_000
    description: str = ""

    @property
    def hosts(self) -> Dict[str, HostSpec]:
        return {h.name: h for s in self.sites.values() for h in s.hosts}

    def site_of_vtep(self, vtep: str) -> Optional[SiteSpec]:
        for s in self.sites.values():
            if s.vtep == vtep:
                return s
        return None

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)

    def with_downlink(self, **changes) -> "Scenario":
        return replace(self, fiveg=replace(self.fiveg, downlink=replace(self.fiveg.downlink, **changes)))

    def with_duration_ms(self, ms: float) -> "Scenario":
        return replace(self, duration_ns=_ms(ms))

    def flow_qfi(self, flow: FlowSpec) -> int:
        return self.mapping.classify(flow.pcp)


def _ms(value) -> int:
    return round(value * 1_000_000)


def _fmt_path(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def schema_errors(doc) -> list:
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA, format_checker=jsonschema.FormatChecker())
    errors = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        errors.append(f"{_fmt_path(err.absolute_path)}: {err.message}")
    return errors


def _vni_of(entry: Mapping, where: str, errors: list) -> Optional[int]:
    if "vni" in entry:
        return entry["vni"]
    if "vlan" in entry and "pcp" in entry:
        return vni_from_tuple((entry["vlan"], entry["pcp"]))
    errors.append(f"{where}: needs 'vni' or both 'vlan' and 'pcp'")
    return None


def build_scenario(doc: Mapping) -> Scenario:
    """Validate a parsed document and build the Scenario.  Raises ConfigError with all faults."""
    if not isinstance(doc, Mapping):
        raise ConfigError("scenario document must be a mapping")
    errors = schema_errors(doc)
    if errors:
        raise ConfigError(errors)

    mapping = None
    try:
        mapping = MappingConfig.from_dict(doc["mapping"])
    except ConfigError as exc:
        errors.extend(exc.errors)

    fg = doc["fiveg"]

    def link(d) -> Optional[LinkModel]:
        jitter = d.get("jitter_ms")
        try:
            return LinkModel(
                d["capacity_bps"],
                _ms(d.get("base_latency_ms", 0)),
                (_ms(jitter[0]), _ms(jitter[1])) if jitter else None,
            )
        except ConfigError as exc:
            errors.extend(f"fiveg: {e}" for e in exc.errors)
            return None

    downlink = link(fg["downlink"])
    uplink = link(fg.get("uplink", fg["downlink"]))
    drbs = {d["id"]: tuple(d["qfis"]) for d in fg.get("drbs", [])}
    if len(drbs) != len(fg.get("drbs", [])):
        errors.append("fiveg.drbs: duplicate DRB id")
    if mapping is not None:
        try:
            map_qfi_to_drb(mapping.bindings, drbs or one_drb_per_qfi(mapping.bindings))
        except ConfigError as exc:
            errors.extend(f"fiveg.drbs: {e}" for e in exc.errors)

    # multicast groups, keyed by VTEP name
    group_specs = []
    groups_by_vtep: Dict[str, Dict[int, str]] = {}
    vtep_names = [v["name"] for v in doc["vteps"]]
    seen_vni = set()
    for i, g in enumerate(doc.get("multicast_groups", [])):
        where = f"multicast_groups[{i}]"
        vni = _vni_of(g, where, errors)
        if vni is None:
            continue
        if vni in seen_vni:
            errors.append(f"{where}: VNI {vni} already has a group")
        seen_vni.add(vni)
        if IPv4Address(g["group"]) not in MULTICAST_NET:
            errors.append(f"{where}.group: {g['group']} is not an IPv4 multicast address")
        for m in g["members"]:
            if m not in vtep_names:
                errors.append(f"{where}.members: unknown VTEP {m!r}")
            groups_by_vtep.setdefault(m, {})[vni] = g["group"]
        group_specs.append(GroupSpec(vni, IPv4Address(g["group"]), tuple(g["members"])))

    vteps = {}
    ips = {}
    for i, v in enumerate(doc["vteps"]):
        where = f"vteps[{i}]"
        if v["name"] in vteps:
            errors.append(f"{where}.name: duplicate VTEP {v['name']!r}")
        if v["ip"] in ips:
            errors.append(f"{where}.ip: {v['ip']} already used by VTEP {ips[v['ip']]!r}")
        ips[v["ip"]] = v["name"]
        try:
            cfg = VtepConfig(
                IPv4Address(v["ip"]),
                TagPolicy(v.get("tag_policy", TagPolicy.RETAIN.value)),
                groups_by_vtep.get(v["name"], {}),
                v.get("default_vlan", 1),
                mapping.dscp_table if mapping else DEFAULT_DSCP_TABLE,
                round(v.get("max_age_s", 300) * 1_000_000_000),
            )
        except ConfigError as exc:
            errors.extend(f"{where}: {e}" for e in exc.errors)
            continue
        statics = []
        for j, e in enumerate(v.get("static_entries", [])):
            vni = _vni_of(e, f"{where}.static_entries[{j}]", errors)
            mac = MacAddress.parse(e["mac"])
            if mac.is_multicast or mac.is_zero:
                errors.append(f"{where}.static_entries[{j}].mac: {mac} must be non-zero unicast")
            if vni is not None:
                statics.append((vni, mac, IPv4Address(e["remote_ip"])))
        delays = dict(DEFAULT_TASK_DELAYS_NS)
        delays.update(v.get("task_delays_ns", {}))
        vteps[v["name"]] = VtepSpec(v["name"], v["side"], cfg, tuple(statics), delays)
    for name, spec in vteps.items():
        for vni, mac, ip in spec.static_entries:
            if str(ip) not in ips:
                errors.append(f"vteps.{name}.static_entries: remote_ip {ip} is not a configured VTEP")
    if downlink and uplink and not any(v["side"] == "core" for v in doc["vteps"]):
        errors.append("vteps: at least one VTEP must sit on the core (UPF) side")

    sites = {}
    host_names: Dict[str, str] = {}
    macs: Dict[bytes, str] = {}
    served = {}
    for i, s in enumerate(doc["sites"]):
        where = f"sites[{i}]"
        if s["name"] in sites:
            errors.append(f"{where}.name: duplicate site {s['name']!r}")
        if s["vtep"] not in vtep_names:
            errors.append(f"{where}.vtep: unknown VTEP {s['vtep']!r}")
        elif s["vtep"] in served:
            errors.append(f"{where}.vtep: VTEP {s['vtep']!r} already serves site {served[s['vtep']]!r}")
        served.setdefault(s["vtep"], s["name"])
        hosts = []
        for j, h in enumerate(s["hosts"]):
            mac = MacAddress.parse(h["mac"])
            if h["name"] in host_names:
                errors.append(f"{where}.hosts[{j}].name: duplicate host {h['name']!r}")
            if mac.is_multicast or mac.is_zero:
                errors.append(f"{where}.hosts[{j}].mac: host MAC {mac} must be non-zero unicast")
            if mac.octets in macs:
                errors.append(f"{where}.hosts[{j}].mac: {mac} already used by host {macs[mac.octets]!r}")
            host_names[h["name"]] = s["name"]
            macs[mac.octets] = h["name"]
            hosts.append(HostSpec(h["name"], mac, frozenset(h["vlans"]), s["name"]))
        sites[s["name"]] = SiteSpec(s["name"], s["vtep"], s.get("bridge_rate_bps", 1e9), tuple(hosts))
    all_hosts = {h.name: h for s in sites.values() for h in s.hosts}

    flows = []
    flow_names = set()
    qfi_by_tuple: Dict[tuple, Tuple[int, str]] = {}
    for i, f in enumerate(doc["flows"]):
        where = f"flows[{i}]"
        if f["name"] in flow_names:
            errors.append(f"{where}.name: duplicate flow {f['name']!r}")
        flow_names.add(f["name"])
        host = all_hosts.get(f["src"])
        if host is None:
            errors.append(f"{where}.src: unknown host {f['src']!r}")
        elif f["vlan"] not in host.vlans:
            errors.append(f"{where}.vlan: source host {host.name!r} is not a member of VLAN {f['vlan']}")
        for sink in f.get("expect_sinks", []):
            if sink not in all_hosts:
                errors.append(f"{where}.expect_sinks: unknown host {sink!r}")
        if mapping is not None:
            try:
                qfi = mapping.classify(f["pcp"])
            except (UnclassifiedPacketError, MappingError):
                errors.append(
                    f"{where}: PCP {f['pcp']} (DSCP {mapping.dscp_table.dscp_from_pcp(f['pcp'])}) "
                    "matches no PDR rule"
                )
                qfi = None
            if "expect_qfi" in f and qfi is not None and f["expect_qfi"] != qfi:
                errors.append(f"{where}.expect_qfi: flow classifies to QFI {qfi}, expected {f['expect_qfi']}")
        key = (f["vlan"], f["pcp"])
        if "expect_qfi" in f:
            prev = qfi_by_tuple.get(key)
            if prev is not None and prev[0] != f["expect_qfi"]:
                errors.append(
                    f"{where}: conflict for {{VLAN {key[0]}, PCP {key[1]}}}: flow {prev[1]!r} expects "
                    f"QFI {prev[0]}, flow {f['name']!r} expects QFI {f['expect_qfi']}"
                )
            qfi_by_tuple.setdefault(key, (f["expect_qfi"], f["name"]))
        spec = f.get("periodic") or f["rate"]
        flows.append(
            FlowSpec(
                name=f["name"],
                src=f["src"],
                dst_mac=MacAddress.parse(f["dst_mac"]),
                vlan_id=f["vlan"],
                pcp=f["pcp"],
                payload_size=spec["payload_size"],
                payload_kind=f.get("payload_kind", "udp-bytes"),
                period_ns=_ms(spec["period_ms"]) if "periodic" in f else None,
                rate_bps=spec["bits_per_s"] if "rate" in f else None,
                burst=spec.get("burst", 1),
                start_ns=_ms(f.get("start_ms", 0)),
                count=f.get("count"),
                expect_sinks=tuple(f["expect_sinks"]) if "expect_sinks" in f else None,
                expect_qfi=f.get("expect_qfi"),
                index=i,
            )
        )
        if "periodic" in f and _ms(spec["period_ms"]) <= 0:
            errors.append(f"{where}.periodic.period_ms: rounds to zero nanoseconds")

    for label, tap in doc.get("capture_points", {}).items():
        err = tap_error(tap, vtep_names)
        if err:
            errors.append(f"capture_points.{label}: {err}")

    if errors:
        raise ConfigError(errors)
    return Scenario(
        name=doc["name"],
        duration_ns=_ms(doc["duration_ms"]),
        seed=doc.get("seed", 0),
        mapping=mapping,
        fiveg=FiveGSpec(downlink, uplink, drbs or one_drb_per_qfi(mapping.bindings), fg.get("queue_capacity")),
        vteps=vteps,
        sites=sites,
        groups=tuple(group_specs),
        flows=tuple(flows),
        capture_points=dict(doc.get("capture_points", {})),
        aging_interval_ns=_ms(doc.get("aging_interval_ms", 1000)),
        description=doc.get("description", ""),
    )


def tap_error(tap: str, vtep_names) -> Optional[str]:
    parts = tap.split(".")
    if parts[0] == "fiveg":
        if len(parts) != 3 or parts[1] not in ("dl", "ul") or parts[2] not in FIVEG_TAPS:
            return f"5G tap must be fiveg.<dl|ul>.<{'|'.join(FIVEG_TAPS)}>, got {tap!r}"
        return None
    if len(parts) != 2 or parts[0] not in vtep_names or parts[1] not in VTEP_TAPS:
        return f"tap must be <vtep>.<{'|'.join(VTEP_TAPS)}> or a 5G tap, got {tap!r}"
    return None


def bundled_scenarios() -> list:
    root = resources.files("vxtsn") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def read_document(source) -> dict:
    """Parse a scenario from a path, or from a bundled scenario name."""
    path = Path(source)
    if not path.exists() and str(source) in bundled_scenarios():
        text = (resources.files("vxtsn") / "scenarios" / f"{source}.yaml").read_text()
    else:
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"{source}: cannot read scenario file ({exc.strerror or exc})") from None
    try:
        if path.suffix == ".json":
            return json.loads(text)
        return yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{source}: parse error: {exc}") from None


def load_scenario(source) -> Scenario:
    return build_scenario(read_document(source))
