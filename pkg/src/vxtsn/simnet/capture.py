"""Capture points and classic pcap I/O (nanosecond variant)."""

from __future__ import annotations

import struct
from typing import List, NamedTuple, Tuple

PCAP_MAGIC_NS = 0xA1B23C4D
PCAP_MAGIC_US = 0xA1B2C3D4
LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101  # raw IPv4/IPv6, no link header
SNAPLEN = 65535

_GLOBAL = struct.Struct("<IHHiIII")
_RECORD = struct.Struct("<IIII")


class CaptureEvent(NamedTuple):
    timestamp_ns: int
    raw: bytes
    direction: str


class CapturePoint:
    """A tap with a fixed direction.  Events are kept as parallel lists; ``events`` materialises them."""

    def __init__(self, label: str, tap: str, linktype: int, direction: str):
        self.label = label
        self.tap = tap
        self.linktype = linktype
        self.direction = direction
        self._times: List[int] = []
        self._raws: List[bytes] = []

    def record(self, timestamp_ns: int, raw: bytes) -> None:
        self._times.append(timestamp_ns)
        self._raws.append(raw)

    def __len__(self):
        return len(self._times)

    @property
    def events(self) -> List[CaptureEvent]:
        d = self.direction
        return [CaptureEvent(t, r, d) for t, r in zip(self._times, self._raws)]

    @property
    def timestamps(self) -> List[int]:
        return list(self._times)

    def write_pcap(self, path) -> None:
        write_pcap(path, zip(self._times, self._raws), self.linktype)


def write_pcap(path, records, linktype: int = LINKTYPE_ETHERNET) -> None:
    with open(path, "wb") as fh:
        fh.write(_GLOBAL.pack(PCAP_MAGIC_NS, 2, 4, 0, 0, SNAPLEN, linktype))
        for ts, raw in records:
            sec, nsec = divmod(ts, 1_000_000_000)
            fh.write(_RECORD.pack(sec, nsec, len(raw), len(raw)))
            fh.write(raw)


def read_pcap(path) -> Tuple[int, List[Tuple[int, bytes]]]:
    """Returns (linktype, [(timestamp_ns, bytes)]).  Reads both byte orders and resolutions."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _GLOBAL.size:
        raise ValueError(f"{path}: not a pcap file (too short)")
    magic_le = struct.unpack_from("<I", data)[0]
    magic_be = struct.unpack_from(">I", data)[0]
    if magic_le in (PCAP_MAGIC_NS, PCAP_MAGIC_US):
        endian, magic = "<", magic_le
    elif magic_be in (PCAP_MAGIC_NS, PCAP_MAGIC_US):
        endian, magic = ">", magic_be
    else:
        raise ValueError(f"{path}: unknown pcap magic 0x{magic_le:08x}")
    scale = 1 if magic == PCAP_MAGIC_NS else 1000
    linktype = struct.unpack_from(endian + "I", data, 20)[0]
    rec = struct.Struct(endian + "IIII")
    out = []
    off = _GLOBAL.size
    while off < len(data):
        if off + rec.size > len(data):
            raise ValueError(f"{path}: truncated record header at offset {off}")
        sec, frac, incl, _orig = rec.unpack_from(data, off)
        off += rec.size
        if off + incl > len(data):
            raise ValueError(f"{path}: truncated record body at offset {off}")
        out.append((sec * 1_000_000_000 + frac * scale, data[off:off + incl]))
        off += incl
    return linktype, out
