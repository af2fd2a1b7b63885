"""Simulated 5G user plane: PDR classification, QoS flows, DRBs, strict-priority link."""

from __future__ import annotations

import math
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Union

from .errors import ConfigError, UnclassifiedPacketError
from .frames import VxlanPacket, peek_dscp
from .mapping import FiveQiDescriptor, PdrRuleSet, QosFlowBinding


class QueuedPacket(NamedTuple):
    item: Any
    size: int
    enqueue_ns: int
    seq: int


@dataclass
class QosFlowState:
    qfi: int
    descriptor: FiveQiDescriptor
    capacity: Optional[int] = None
    queue: Deque[QueuedPacket] = field(default_factory=deque)
    enqueued: int = 0
    dequeued: int = 0
    dropped: int = 0

    def push(self, entry: QueuedPacket) -> bool:
        """Count an arrival; tail-drop it when the queue is at capacity."""
        self.enqueued += 1
        if self.capacity is not None and len(self.queue) >= self.capacity:
            self.dropped += 1
            return False
        self.queue.append(entry)
        return True

    def pop(self) -> QueuedPacket:
        self.dequeued += 1
        return self.queue.popleft()

    @property
    def backlog(self) -> int:
        return len(self.queue)


@dataclass(frozen=True)
class DrbState:
    drb_id: int
    member_qfis: tuple
    priority: int


def _descriptor(b: Union[QosFlowBinding, FiveQiDescriptor]) -> FiveQiDescriptor:
    return b.descriptor if isinstance(b, QosFlowBinding) else b


def map_qfi_to_drb(
    bindings: Mapping[int, Union[QosFlowBinding, FiveQiDescriptor]],
    drb_config: Mapping[int, Iterable[int]],
) -> List[DrbState]:
    """Group QoS flows into DRBs.  A DRB's priority is the best (lowest) of its members'."""
    errors = []
    owner: Dict[int, int] = {}
    drbs = []
    for drb_id, qfis in sorted(drb_config.items()):
        qfis = tuple(qfis)
        if not qfis:
            errors.append(f"DRB {drb_id} has no QoS flows")
            continue
        for qfi in qfis:
            if qfi in owner:
                errors.append(f"QFI {qfi} is mapped to DRB {owner[qfi]} and DRB {drb_id}")
            elif qfi not in bindings:
                errors.append(f"DRB {drb_id} references unbound QFI {qfi}")
            owner.setdefault(qfi, drb_id)
        known = [_descriptor(bindings[q]).default_priority_level for q in qfis if q in bindings]
        if known:
            drbs.append(DrbState(drb_id, qfis, min(known)))
    for qfi in sorted(set(bindings) - set(owner)):
        errors.append(f"QFI {qfi} is not mapped to any DRB")
    if errors:
        raise ConfigError(errors)
    return sorted(drbs, key=lambda d: (d.priority, d.drb_id))


def one_drb_per_qfi(bindings: Mapping[int, Any]) -> Dict[int, List[int]]:
    return {qfi: [qfi] for qfi in bindings}


@dataclass(frozen=True)
class LinkModel:
    capacity_bps: float
    base_latency_ns: int = 0
    jitter_ns: Optional[tuple] = None  # (lo, hi), uniform, inclusive

    def __post_init__(self):
        if self.capacity_bps <= 0:
            raise ConfigError("link capacity must be positive")
        if self.base_latency_ns < 0:
            raise ConfigError("link base latency must be >= 0")
        if self.jitter_ns is not None:
            lo, hi = self.jitter_ns
            if not 0 <= lo <= hi:
                raise ConfigError("jitter bounds must satisfy 0 <= lo <= hi")

    def tx_duration_ns(self, size_bytes: int) -> int:
        bits_ns = size_bytes * 8 * 1_000_000_000
        if float(self.capacity_bps).is_integer():
            return -(-bits_ns // int(self.capacity_bps))
        return math.ceil(bits_ns / self.capacity_bps)


class LinkState:
    """Mutable side of a link: jitter RNG and in-order delivery horizon."""

    def __init__(self, model: LinkModel, seed: Union[int, str] = 0):
        self.model = model
        self.rng = random.Random(seed)
        self.busy_until = 0
        self.last_delivery = 0

    def jitter(self) -> int:
        if self.model.jitter_ns is None:
            return 0
        lo, hi = self.model.jitter_ns
        return self.rng.randint(lo, hi)


@dataclass(frozen=True)
class Transmission:
    item: Any
    qfi: int
    drb_id: int
    size: int
    enqueue_ns: int
    start_ns: int
    end_ns: int
    delivery_ns: int


def upf_ingress(
    pkt: Union[bytes, VxlanPacket],
    rules: PdrRuleSet,
    flows: Mapping[int, QosFlowState],
    now: int,
    *,
    item: Any = None,
    seq: int = 0,
) -> int:
    """Classify on the outer DSCP and enqueue.  Returns the QFI.

    Raises UnclassifiedPacketError when no rule matches; the caller counts the drop.
    """
    if isinstance(pkt, VxlanPacket):
        dscp, size = pkt.outer_ip.dscp, pkt.wire_length
    else:
        dscp, size = peek_dscp(pkt), len(pkt)
    qfi = rules.classify(dscp)
    flows[qfi].push(QueuedPacket(pkt if item is None else item, size, now, seq))
    return qfi


def schedule_step(
    drbs: Sequence[DrbState],
    flows: Mapping[int, QosFlowState],
    link: LinkState,
    now: int,
) -> Optional[Transmission]:
    """Start the next transmission on an idle link (strict priority, non-preemptive).

    ``drbs`` must be ordered best priority first (as map_qfi_to_drb returns them).
    """
    for drb in drbs:
        best = None
        for qfi in drb.member_qfis:
            q = flows[qfi].queue
            if q and (best is None or (q[0].enqueue_ns, q[0].seq) < (best[1].enqueue_ns, best[1].seq)):
                best = (qfi, q[0])
        if best is None:
            continue
        qfi = best[0]
        entry = flows[qfi].pop()
        model = link.model
        end = now + model.tx_duration_ns(entry.size)
        delivery = max(end + model.base_latency_ns + link.jitter(), link.last_delivery)
        link.busy_until = end
        link.last_delivery = delivery
        return Transmission(entry.item, qfi, drb.drb_id, entry.size, entry.enqueue_ns, now, end, delivery)
    return None


class UserPlane:
    """One direction of the 5G segment: classifier, QoS flow queues, DRBs and a link."""

    def __init__(
        self,
        rules: PdrRuleSet,
        bindings: Mapping[int, QosFlowBinding],
        drb_config: Optional[Mapping[int, Iterable[int]]],
        link: LinkModel,
        *,
        seed: Union[int, str] = 0,
        queue_capacity: Optional[int] = None,
    ):
        self.rules = rules
        self.flows = {
            qfi: QosFlowState(qfi, _descriptor(b), capacity=queue_capacity) for qfi, b in sorted(bindings.items())
        }
        self.drbs = map_qfi_to_drb(bindings, drb_config or one_drb_per_qfi(bindings))
        self.link = LinkState(link, seed)
        self.drops: Counter = Counter()
        self._seq = 0

    def classify_and_enqueue(self, pkt: bytes, now: int, item: Any = None) -> Optional[int]:
        """Returns the QFI, or None when the packet was dropped (reason in ``drops``)."""
        try:
            qfi = self.rules.classify(peek_dscp(pkt))
        except UnclassifiedPacketError:
            self.drops["unclassified"] += 1
            return None
        seq = self._seq
        self._seq += 1
        if not self.flows[qfi].push(QueuedPacket(pkt if item is None else item, len(pkt), now, seq)):
            self.drops["queue_full"] += 1
            return None
        return qfi

    def is_idle(self, now: int) -> bool:
        return self.link.busy_until <= now

    def schedule_step(self, now: int) -> Optional[Transmission]:
        return schedule_step(self.drbs, self.flows, self.link, now)

    def backlog(self) -> int:
        return sum(f.backlog for f in self.flows.values())


@dataclass(frozen=True)
class PdbResult:
    within_budget_fraction: float
    delay_samples_ns: tuple
    budget_ns: int

    @property
    def count(self) -> int:
        return len(self.delay_samples_ns)


def pdb_evaluate(
    flow: Union[QosFlowState, FiveQiDescriptor],
    deliveries: Iterable[tuple],
) -> PdbResult:
    """Fraction of ``(enqueue_ns, delivery_ns)`` pairs whose delay fits the flow's PDB."""
    desc = flow.descriptor if isinstance(flow, QosFlowState) else flow
    budget = desc.packet_delay_budget_ns
    samples = tuple(d - e for e, d in deliveries)
    if not samples:
        return PdbResult(math.nan, samples, budget)
    within = sum(1 for s in samples if s <= budget)
    return PdbResult(within / len(samples), samples, budget)
