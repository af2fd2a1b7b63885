"""Traffic generators and payload templates for industrial flows."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional, Tuple

from ..frames import ETH_TYPE_IPV4, ETH_TYPE_PROFINET, ETH_TYPE_PTP, EthernetFrame, MacAddress, VlanTag

# Every generated payload ends with this trailer so traces can be matched per frame.
TRAILER = struct.Struct("!HHI")  # magic, flow index, sequence number
TRAILER_MAGIC = 0x5453
MIN_PAYLOAD = TRAILER.size

ETHERTYPES = {"ptp": ETH_TYPE_PTP, "rtc1": ETH_TYPE_PROFINET, "udp-bytes": ETH_TYPE_IPV4}


def _template(kind: str, size: int) -> bytes:
    """Opaque but recognisable payload body; protocol fields are not interpreted."""
    if kind == "ptp":
        # messageType Sync (0x0), versionPTP 2, messageLength, rest zero.
        head = bytes([0x00, 0x02]) + size.to_bytes(2, "big")
    elif kind == "rtc1":
        # FrameID in the RT_CLASS_1 range, cycle counter placeholder.
        head = bytes([0x80, 0x00])
    else:
        head = b""
    body = head + bytes((i * 7 + 3) & 0xFF for i in range(max(0, size - len(head))))
    return body[:size]


@dataclass(frozen=True)
class FlowSpec:
    name: str
    src: str  # host name
    dst_mac: MacAddress
    vlan_id: int
    pcp: int
    payload_size: int
    payload_kind: str = "udp-bytes"
    period_ns: Optional[int] = None
    rate_bps: Optional[int] = None
    burst: int = 1
    start_ns: int = 0
    count: Optional[int] = None
    expect_sinks: Optional[Tuple[str, ...]] = None
    expect_qfi: Optional[int] = None
    index: int = 0
    _body: bytes = field(default=b"", repr=False, compare=False)

    def __post_init__(self):
        if not self._body:
            object.__setattr__(self, "_body", _template(self.payload_kind, self.payload_size - TRAILER.size))

    @property
    def ethertype(self) -> int:
        return ETHERTYPES[self.payload_kind]

    @cached_property
    def tag(self) -> VlanTag:
        return VlanTag(self.vlan_id, self.pcp)

    @property
    def frame_size(self) -> int:
        return 18 + self.payload_size

    def emission_times(self, duration_ns: int) -> Iterator[int]:
        """Generation instants in [start, duration], bursts repeated per instant."""
        i = 0
        emitted = 0
        while self.count is None or emitted < self.count:
            if self.period_ns is not None:
                t = self.start_ns + i * self.period_ns
            else:
                # Integer arithmetic: no drift from accumulating a float spacing.
                t = self.start_ns + (i * self.frame_size * 8 * 1_000_000_000) // self.rate_bps
            if t > duration_ns:
                return
            for _ in range(self.burst if self.period_ns is not None else 1):
                if self.count is not None and emitted >= self.count:
                    return
                yield t
                emitted += 1
            i += 1

    def payload(self, seq: int) -> bytes:
        return self._body + TRAILER.pack(TRAILER_MAGIC, self.index, seq & 0xFFFFFFFF)

    def frame(self, src_mac: MacAddress, seq: int) -> EthernetFrame:
        return EthernetFrame(self.dst_mac, src_mac, self.ethertype, self.payload(seq), self.tag)


def trailer_of(payload: bytes) -> Optional[Tuple[int, int]]:
    """(flow index, seq) from a generated payload, or None for foreign frames."""
    if len(payload) < TRAILER.size:
        return None
    magic, flow, seq = TRAILER.unpack_from(payload, len(payload) - TRAILER.size)
    if magic != TRAILER_MAGIC:
        return None
    return flow, seq
