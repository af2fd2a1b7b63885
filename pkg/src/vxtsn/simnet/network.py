"""Assembles a scenario into sites, bridges, VTEPs and the 5G segment, and runs it.

Traffic is generated over ``[0, duration]``; the run then keeps processing
events until every in-flight packet has been delivered or dropped.
"""

from __future__ import annotations

import gc
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional

from ..errors import FrameError, MappingError, NoRouteError, TagMismatchError
from ..fiveg import UserPlane
from ..frames import VXLAN_OVERHEAD, decode_vxlan, encode_frame, encode_vxlan
from ..vtep import Vtep
from .bridge import TsnBridgePort
from .capture import LINKTYPE_ETHERNET, LINKTYPE_RAW, CapturePoint
from .engine import EventQueue
from .scenario import FRAME_TAPS, Scenario
from .stats import multicast_fanout
from .traffic import FlowSpec


class PacketMeta:
    """Simulation bookkeeping that travels alongside the bytes of one generated frame."""

    __slots__ = ("flow", "seq", "generated_ns", "payload", "enqueue_ns", "qfi")

    def __init__(self, flow: FlowSpec, seq: int, generated_ns: int, payload: bytes):
        self.flow = flow
        self.seq = seq
        self.generated_ns = generated_ns
        self.payload = payload
        self.enqueue_ns = None
        self.qfi = None


class Delivery(NamedTuple):
    flow: str
    seq: int
    sink: str
    vlan_id: int
    qfi: Optional[int]
    generated_ns: int
    enqueue_ns: Optional[int]
    delivery_ns: int
    intact: bool

    @property
    def e2e_ns(self) -> int:
        return self.delivery_ns - self.generated_ns


class Assertion(NamedTuple):
    name: str
    passed: bool
    detail: str


@dataclass
class SimulationReport:
    scenario: Scenario
    seed: int
    end_ns: int
    generated: Counter
    deliveries: List[Delivery]
    captures: Dict[str, CapturePoint]
    drops: Counter
    decisions: Counter  # (vtep, flow, "unicast"|"multicast") -> count
    qos: Dict[str, Dict[int, dict]]
    forwarding_tables: Dict[str, list]
    qfi_seen: Dict[str, set]
    events_processed: int
    assertions: List[Assertion] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def flow(self, name: str) -> FlowSpec:
        for f in self.scenario.flows:
            if f.name == name:
                return f
        raise KeyError(name)

    def deliveries_of(self, flow: str, sink: Optional[str] = None) -> List[Delivery]:
        return [d for d in self.deliveries if d.flow == flow and (sink is None or d.sink == sink)]

    def e2e_delays_ns(self, flow: str, sink: Optional[str] = None) -> List[int]:
        return [d.e2e_ns for d in self.deliveries_of(flow, sink)]

    def qfi_deliveries(self, qfi: int) -> List[tuple]:
        return [(d.enqueue_ns, d.delivery_ns) for d in self.deliveries if d.qfi == qfi]


class Network:
    def __init__(self, scenario: Scenario):
        sc = self.scenario = scenario
        self.q = EventQueue()
        self.vteps: Dict[str, Vtep] = {}
        self.side: Dict[str, str] = {}
        self.delays: Dict[str, tuple] = {}
        for name, spec in sc.vteps.items():
            vtep = Vtep(spec.config)
            for vni, mac, ip in spec.static_entries:
                vtep.table.add_static(vni, mac, ip)
            self.vteps[name] = vtep
            self.side[name] = spec.side
            d = spec.task_delays_ns
            self.delays[name] = (d["task1"], d["task2"], d["task3"])
        self.ip_to_vtep = {v.ip: name for name, v in self.vteps.items()}
        self.group_members = {g.group: g.members for g in sc.groups}
        self.site_of_vtep = {s.vtep: s for s in sc.sites.values()}
        self.bridges = {name: TsnBridgePort(s.bridge_rate_bps) for name, s in sc.sites.items()}
        hosts = sc.hosts
        self.host_site = {h.name: h.site for h in hosts.values()}
        self.host_mac = {h.name: h.mac for h in hosts.values()}

        m, fg = sc.mapping, sc.fiveg
        self.planes = {
            direction: UserPlane(
                m.rules,
                m.bindings,
                fg.drbs,
                fg.downlink if direction == "dl" else fg.uplink,
                seed=f"{sc.seed}:{direction}",
                queue_capacity=fg.queue_capacity,
            )
            for direction in ("dl", "ul")
        }
        self.plane_busy = {"dl": False, "ul": False}

        self.captures: Dict[str, CapturePoint] = {}
        self.taps: Dict[str, List[CapturePoint]] = {}
        for label, tap in sorted(sc.capture_points.items()):
            kind = tap.rsplit(".", 1)[1]
            if tap.startswith("fiveg."):
                direction = "downlink" if tap.split(".")[1] == "dl" else "uplink"
            else:
                direction = "rx" if kind in ("ingress", "tunnel_rx") else "tx"
            linktype = LINKTYPE_ETHERNET if (kind in FRAME_TAPS and not tap.startswith("fiveg.")) else LINKTYPE_RAW
            point = CapturePoint(label, tap, linktype, direction)
            self.captures[label] = point
            self.taps.setdefault(tap, []).append(point)

        self.generated: Counter = Counter()
        self.deliveries: List[Delivery] = []
        self.drops: Counter = Counter()
        self.decisions: Counter = Counter()
        self.qfi_seen: Dict[str, set] = {f.name: set() for f in sc.flows}
        self.overhead_violations = 0
        self.self_fanout = 0

    # -- capture -----------------------------------------------------------

    def _cap(self, tap: str, t: int, raw: bytes) -> None:
        points = self.taps.get(tap)
        if points:
            for p in points:
                p.record(t, raw)

    def _tapped(self, tap: str) -> bool:
        return tap in self.taps

    # -- traffic sources ---------------------------------------------------

    def _start_flow(self, flow: FlowSpec) -> None:
        times = flow.emission_times(self.scenario.duration_ns)
        first = next(times, None)
        if first is not None:
            self.q.schedule(first, self._generate, flow, times, 0)

    def _generate(self, flow: FlowSpec, times, seq: int) -> None:
        now = self.q.now
        host_site = self.host_site[flow.src]
        frame = flow.frame(self.host_mac[flow.src], seq)
        raw = encode_frame(frame)
        meta = PacketMeta(flow, seq, now, frame.payload)
        self.generated[flow.name] += 1
        bridge = self.bridges[host_site]
        bridge.enqueue(flow.pcp, (frame, raw, meta))
        self._kick_bridge(host_site)
        nxt = next(times, None)
        if nxt is not None:
            self.q.schedule(nxt, self._generate, flow, times, seq + 1)

    def _kick_bridge(self, site: str) -> None:
        bridge = self.bridges[site]
        if bridge.busy:
            return
        head = bridge.dequeue()
        if head is None:
            return
        _, item = head
        bridge.busy = True
        self.q.schedule(self.q.now + bridge.tx_duration_ns(len(item[1])), self._bridge_done, site, item)

    def _bridge_done(self, site: str, item) -> None:
        self.bridges[site].busy = False
        self._vtep_from_site(self.scenario.sites[site].vtep, item)
        self._kick_bridge(site)

    # -- VTEP ingress (TSN side -> tunnel) ---------------------------------

    def _vtep_from_site(self, name: str, item) -> None:
        frame, raw, meta = item
        t = self.q.now
        self._cap(name + ".ingress", t, raw)
        try:
            pkt, decision = self.vteps[name].ingress(frame)
        except NoRouteError:
            self.drops["no_route"] += 1
            return
        self.decisions[(name, meta.flow.name, decision.kind)] += 1
        d1, d2, _ = self.delays[name]
        if self._tapped(name + ".redirected"):
            self._cap(name + ".redirected", t + d1, raw)
        pkt_raw = encode_vxlan(pkt)
        if len(pkt_raw) - pkt.inner.wire_length != VXLAN_OVERHEAD:
            self.overhead_violations += 1
        self._cap(name + ".encapsulated", t + d1 + d2, pkt_raw)
        if decision.is_multicast:
            targets = tuple(m for m in self.group_members.get(decision.ip, ()) if m != name)
        else:
            target = self.ip_to_vtep.get(decision.ip)
            if target is None:
                self.drops["unknown_vtep_ip"] += 1
                return
            targets = (target,)
        self.q.schedule(t + d1 + d2, self._tunnel_send, name, pkt_raw, targets, meta)

    def _tunnel_send(self, src: str, raw: bytes, targets: tuple, meta: PacketMeta) -> None:
        if self.side[src] == "ue":
            self._enqueue("ul", raw, targets, meta)
            return
        for x in targets:
            if self.side[x] == "core":
                self._vtep_from_tunnel(x, raw, meta)
        ue_targets = tuple(x for x in targets if self.side[x] == "ue")
        if ue_targets:
            self._enqueue("dl", raw, ue_targets, meta)

    # -- 5G segment --------------------------------------------------------

    def _enqueue(self, direction: str, raw: bytes, targets: tuple, meta: PacketMeta) -> None:
        now = self.q.now
        qfi = self.planes[direction].classify_and_enqueue(raw, now, item=(raw, targets, meta))
        if qfi is None:
            return
        self._cap(f"fiveg.{direction}.classified", now, raw)
        if meta.enqueue_ns is None:
            meta.enqueue_ns = now
            meta.qfi = qfi
        self.qfi_seen[meta.flow.name].add(qfi)
        self._kick_plane(direction)

    def _kick_plane(self, direction: str) -> None:
        if self.plane_busy[direction]:
            return
        tx = self.planes[direction].schedule_step(self.q.now)
        if tx is None:
            return
        self.plane_busy[direction] = True
        self._cap(f"fiveg.{direction}.radio_tx", tx.start_ns, tx.item[0])
        self.q.schedule(tx.end_ns, self._tx_end, direction)
        self.q.schedule(tx.delivery_ns, self._radio_deliver, direction, tx.item)

    def _tx_end(self, direction: str) -> None:
        self.plane_busy[direction] = False
        self._kick_plane(direction)

    def _radio_deliver(self, direction: str, item) -> None:
        raw, targets, meta = item
        if direction == "dl":
            for x in targets:
                self._vtep_from_tunnel(x, raw, meta)
            return
        for x in targets:
            if self.side[x] == "core":
                self._vtep_from_tunnel(x, raw, meta)
        ue_targets = tuple(x for x in targets if self.side[x] == "ue")
        if ue_targets:
            self._enqueue("dl", raw, ue_targets, meta)

    # -- VTEP egress (tunnel -> TSN side) ----------------------------------

    def _vtep_from_tunnel(self, name: str, raw: bytes, meta: PacketMeta) -> None:
        t = self.q.now
        vtep = self.vteps[name]
        self._cap(name + ".tunnel_rx", t, raw)
        try:
            pkt = decode_vxlan(raw)
        except FrameError:
            self.drops["decode_error"] += 1
            return
        if pkt.outer_ip.src_ip == vtep.ip:
            self.self_fanout += 1
            self.drops["own_fanout_copy"] += 1
            return
        try:
            frame = vtep.egress(pkt, t)
        except TagMismatchError:
            self.drops["tag_mismatch"] += 1
            return
        except MappingError:
            self.drops["unmapped_vni"] += 1
            return
        t3 = t + self.delays[name][2]
        if self._tapped(name + ".decapsulated"):
            self._cap(name + ".decapsulated", t3, encode_frame(frame))
        site = self.site_of_vtep.get(name)
        if site is None:
            self.drops["no_site"] += 1
            return
        vlan = frame.tag.vlan_id
        dst = frame.dst.octets
        group = frame.dst.is_multicast
        intact = frame.payload == meta.payload
        accepted = False
        for host in site.hosts:
            if vlan in host.vlans and (group or host.mac.octets == dst):
                self.deliveries.append(
                    Delivery(
                        meta.flow.name, meta.seq, host.name, vlan, meta.qfi,
                        meta.generated_ns, meta.enqueue_ns, t3, intact,
                    )
                )
                accepted = True
        if not accepted:
            self.drops["no_local_receiver"] += 1

    # -- housekeeping ------------------------------------------------------

    def _age(self) -> None:
        now = self.q.now
        for v in self.vteps.values():
            v.age_out(now)
        nxt = now + self.scenario.aging_interval_ns
        if nxt <= self.scenario.duration_ns:
            self.q.schedule(nxt, self._age)

    def run(self) -> SimulationReport:
        for flow in self.scenario.flows:
            self._start_flow(flow)
        if self.scenario.aging_interval_ns <= self.scenario.duration_ns:
            self.q.schedule(self.scenario.aging_interval_ns, self._age)
        # The loop allocates millions of short-lived, acyclic objects; refcounting frees
        # them, and collector passes over the growing delivery/capture lists are pure cost.
        was_enabled = gc.isenabled()
        gc.disable()
        try:
            self.q.run(float("inf"))
        finally:
            if was_enabled:
                gc.enable()
        report = SimulationReport(
            scenario=self.scenario,
            seed=self.scenario.seed,
            end_ns=self.q.now,
            generated=self.generated,
            deliveries=self.deliveries,
            captures=self.captures,
            drops=self.drops + sum((p.drops for p in self.planes.values()), Counter()),
            decisions=self.decisions,
            qos={
                d: {
                    qfi: {
                        "enqueued": f.enqueued,
                        "dequeued": f.dequeued,
                        "dropped": f.dropped,
                        "backlog": f.backlog,
                    }
                    for qfi, f in p.flows.items()
                }
                for d, p in self.planes.items()
            },
            forwarding_tables={n: v.table.rows() for n, v in sorted(self.vteps.items())},
            qfi_seen=self.qfi_seen,
            events_processed=self.q.processed,
        )
        report.assertions = self._assertions(report)
        return report

    def _assertions(self, report: SimulationReport) -> List[Assertion]:
        out = []
        sc = self.scenario
        hosts = sc.hosts

        fanout = multicast_fanout(report)
        bad = fanout.misdelivered
        out.append(Assertion("delivery_sets", not bad, "; ".join(bad[:5]) + (" ..." if len(bad) > 5 else "")))

        bad = [
            f"{f.name}: saw QFIs {sorted(report.qfi_seen[f.name])}, expected {f.expect_qfi}"
            for f in sc.flows
            if f.expect_qfi is not None and report.qfi_seen[f.name] - {f.expect_qfi}
        ]
        out.append(Assertion("qfi_assignment", not bad, "; ".join(bad)))

        broken = sum(1 for d in report.deliveries if not d.intact)
        out.append(Assertion("payload_integrity", broken == 0, f"{broken} corrupted deliveries"))

        leaked = sum(1 for d in report.deliveries if d.vlan_id not in hosts[d.sink].vlans)
        out.append(Assertion("vlan_containment", leaked == 0, f"{leaked} cross-VLAN deliveries"))

        out.append(
            Assertion("vxlan_overhead_36", self.overhead_violations == 0, f"{self.overhead_violations} violations")
        )
        out.append(Assertion("no_self_fanout", self.self_fanout == 0, f"{self.self_fanout} own copies received"))

        bad = []
        for direction, flows in report.qos.items():
            for qfi, c in flows.items():
                if c["enqueued"] != c["dequeued"] + c["dropped"] + c["backlog"]:
                    bad.append(f"{direction} QFI {qfi}: {c}")
        out.append(Assertion("qos_conservation", not bad, "; ".join(bad)))

        bad = [
            label
            for label, p in report.captures.items()
            if any(a > b for a, b in zip(p.timestamps, p.timestamps[1:]))
        ]
        out.append(Assertion("capture_monotonic", not bad, ", ".join(bad)))
        return out


def run(scenario: Scenario) -> SimulationReport:
    return Network(scenario).run()
