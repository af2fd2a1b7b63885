"""Wire codecs for 802.1Q Ethernet frames and VxLAN-in-UDP-in-IPv4 packets.

Layouts follow IEEE 802.1Q (TPID 0x8100 + 16-bit TCI) and RFC 7348 (8-byte
VxLAN header carried in UDP port 4789).  Frames are handled without preamble,
FCS or padding: what is encoded is exactly what is decoded.
"""

from __future__ import annotations

import struct
import zlib
from functools import lru_cache
from dataclasses import dataclass, field, replace
from ipaddress import IPv4Address
from typing import Optional, Union

from .errors import ChecksumError, FrameError, NotVxlanError, OversizeError, TruncatedError

ETH_TYPE_IPV4 = 0x0800
ETH_TYPE_VLAN = 0x8100
ETH_TYPE_PROFINET = 0x8892
ETH_TYPE_PTP = 0x88F7

IP_PROTO_UDP = 17
VXLAN_PORT = 4789
VXLAN_FLAG_I = 0x08

ETH_HEADER_LEN = 14
VLAN_TAG_LEN = 4
IPV4_HEADER_LEN = 20
UDP_HEADER_LEN = 8
VXLAN_HEADER_LEN = 8
VXLAN_OVERHEAD = IPV4_HEADER_LEN + UDP_HEADER_LEN + VXLAN_HEADER_LEN  # 36

DEFAULT_MTU = 1500
MAX_VNI = (1 << 24) - 1
EPHEMERAL_PORT_BASE = 49152

_ETH = struct.Struct("!6s6sH")
_TAG = struct.Struct("!HH")
_IPV4 = struct.Struct("!BBHHHBBH4s4s")
_UDP = struct.Struct("!HHHH")
_VXLAN = struct.Struct("!B3sI")


@dataclass(frozen=True)
class MacAddress:
    octets: bytes

    def __post_init__(self):
        if not isinstance(self.octets, bytes) or len(self.octets) != 6:
            raise ValueError(f"MAC address needs 6 octets, got {self.octets!r}")

    @classmethod
    def parse(cls, value: Union[str, bytes, "MacAddress"]) -> "MacAddress":
        if isinstance(value, MacAddress):
            return value
        if isinstance(value, (bytes, bytearray)):
            return cls(bytes(value))
        parts = value.replace("-", ":").split(":")
        if len(parts) != 6:
            raise ValueError(f"not a MAC address: {value!r}")
        try:
            return cls(bytes(int(p, 16) for p in parts))
        except ValueError:
            raise ValueError(f"not a MAC address: {value!r}") from None

    @property
    def is_multicast(self) -> bool:
        return bool(self.octets[0] & 0x01)

    @property
    def is_broadcast(self) -> bool:
        return self.octets == b"\xff" * 6

    @property
    def is_unicast(self) -> bool:
        return not self.is_multicast

    @property
    def is_zero(self) -> bool:
        return self.octets == bytes(6)

    def __str__(self):
        return ":".join(f"{b:02x}" for b in self.octets)


BROADCAST_MAC = MacAddress(b"\xff" * 6)
ZERO_MAC = MacAddress(bytes(6))


@dataclass(frozen=True)
class VlanTag:
    vlan_id: int
    pcp: int
    dei: bool = False

    def __post_init__(self):
        if not 0 <= self.pcp <= 7:
            raise ValueError(f"pcp must be in 0..7, got {self.pcp}")
        if not 0 <= self.vlan_id <= 4095:
            raise ValueError(f"vlan_id must be in 0..4095, got {self.vlan_id}")

    @property
    def tci(self) -> int:
        return (self.pcp << 13) | (int(self.dei) << 12) | self.vlan_id

    @classmethod
    def from_tci(cls, tci: int) -> "VlanTag":
        return cls(vlan_id=tci & 0x0FFF, pcp=tci >> 13, dei=bool(tci & 0x1000))


@dataclass(frozen=True)
class EthernetFrame:
    dst: MacAddress
    src: MacAddress
    ethertype: int
    payload: bytes = b""
    tag: Optional[VlanTag] = None

    @property
    def wire_length(self) -> int:
        return ETH_HEADER_LEN + (VLAN_TAG_LEN if self.tag else 0) + len(self.payload)

    def with_tag(self, tag: Optional[VlanTag]) -> "EthernetFrame":
        return replace(self, tag=tag)


# Decoders see few distinct MACs and TCIs; instances are immutable, so share them.
@lru_cache(maxsize=4096)
def _mac(raw: bytes) -> MacAddress:
    return MacAddress(raw)


@lru_cache(maxsize=8192)
def _tag(tci: int) -> VlanTag:
    return VlanTag.from_tci(tci)


def encode_frame(frame: EthernetFrame, mtu: int = DEFAULT_MTU) -> bytes:
    if len(frame.payload) > mtu:
        raise OversizeError(f"payload of {len(frame.payload)} bytes exceeds MTU {mtu}")
    if frame.tag is None:
        return _ETH.pack(frame.dst.octets, frame.src.octets, frame.ethertype) + frame.payload
    return (
        _ETH.pack(frame.dst.octets, frame.src.octets, ETH_TYPE_VLAN)
        + _TAG.pack(frame.tag.tci, frame.ethertype)
        + frame.payload
    )


def decode_frame(buf: bytes) -> EthernetFrame:
    """Parse an L2 frame.  A TPID other than 0x8100 means "untagged"."""
    if len(buf) < ETH_HEADER_LEN:
        raise TruncatedError(f"frame of {len(buf)} bytes is shorter than an Ethernet header")
    dst, src, ethertype = _ETH.unpack_from(buf)
    if ethertype != ETH_TYPE_VLAN:
        return EthernetFrame(_mac(dst), _mac(src), ethertype, bytes(buf[ETH_HEADER_LEN:]))
    if len(buf) < ETH_HEADER_LEN + VLAN_TAG_LEN:
        raise TruncatedError("802.1Q tag truncated")
    tci, inner_type = _TAG.unpack_from(buf, ETH_HEADER_LEN)
    return EthernetFrame(_mac(dst), _mac(src), inner_type, bytes(buf[ETH_HEADER_LEN + VLAN_TAG_LEN:]), _tag(tci))


_HEADER_WORDS = struct.Struct("!10H")


def internet_checksum(data: bytes) -> int:
    """RFC 1071 one's-complement sum, returned complemented."""
    if len(data) == IPV4_HEADER_LEN:
        total = sum(_HEADER_WORDS.unpack(data))
    else:
        if len(data) % 2:
            data = data + b"\x00"
        total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


@dataclass(frozen=True)
class Ipv4Header:
    src_ip: IPv4Address
    dst_ip: IPv4Address
    dscp: int = 0
    ecn: int = 0
    ttl: int = 64
    protocol: int = IP_PROTO_UDP
    identification: int = 0
    dont_fragment: bool = True
    total_length: int = 0
    header_checksum: int = 0

    def __post_init__(self):
        if not 0 <= self.dscp <= 63:
            raise ValueError(f"dscp must be in 0..63, got {self.dscp}")
        if not 0 <= self.ecn <= 3:
            raise ValueError(f"ecn must be in 0..3, got {self.ecn}")

    @property
    def tos(self) -> int:
        return (self.dscp << 2) | self.ecn

    def pack(self, checksum: int) -> bytes:
        return _IPV4.pack(
            0x45,
            self.tos,
            self.total_length,
            self.identification,
            0x4000 if self.dont_fragment else 0,
            self.ttl,
            self.protocol,
            checksum,
            _packed(self.src_ip),
            _packed(self.dst_ip),
        )

    def computed_checksum(self) -> int:
        return internet_checksum(self.pack(0))


@dataclass(frozen=True)
class UdpHeader:
    src_port: int
    dst_port: int = VXLAN_PORT
    length: int = 0
    checksum: int = 0


@dataclass(frozen=True)
class VxlanHeader:
    vni: int
    flags: int = VXLAN_FLAG_I

    def __post_init__(self):
        if not 0 <= self.vni <= MAX_VNI:
            raise ValueError(f"VNI must fit in 24 bits, got {self.vni}")


def as_ipv4(value) -> IPv4Address:
    """IPv4Address passthrough; the constructor would re-parse an existing instance via str()."""
    return value if isinstance(value, IPv4Address) else IPv4Address(value)


@lru_cache(maxsize=4096)
def _packed(addr: IPv4Address) -> bytes:
    return addr.packed


@lru_cache(maxsize=4096)
def _ip_from_packed(raw: bytes) -> IPv4Address:
    return IPv4Address(raw)


@lru_cache(maxsize=4096)
def flow_entropy_port(src: MacAddress, dst: MacAddress, vni: int) -> int:
    """Stable outer UDP source port for an inner flow, in 49152..65535.

    crc32 rather than ``hash()`` so the value survives interpreter restarts.
    """
    digest = zlib.crc32(src.octets + dst.octets + vni.to_bytes(3, "big"))
    return EPHEMERAL_PORT_BASE + digest % (65536 - EPHEMERAL_PORT_BASE)


@dataclass(frozen=True)
class VxlanPacket:
    outer_ip: Ipv4Header
    outer_udp: UdpHeader
    vxlan: VxlanHeader
    inner: EthernetFrame = field(repr=False)
    # outer headers as built by build(); dropped by replace(), which forces re-validation
    _wire_header: bytes = field(default=b"", init=False, repr=False, compare=False)

    @classmethod
    def build(
        cls,
        src_ip,
        dst_ip,
        vni: int,
        inner: EthernetFrame,
        dscp: int = 0,
        *,
        src_port: Optional[int] = None,
        ttl: int = 64,
        identification: int = 0,
    ) -> "VxlanPacket":
        """Assemble a packet with lengths and IPv4 checksum filled in."""
        inner_len = inner.wire_length
        if src_port is None:
            src_port = flow_entropy_port(inner.src, inner.dst, vni)
        src_ip, dst_ip = as_ipv4(src_ip), as_ipv4(dst_ip)
        total = VXLAN_OVERHEAD + inner_len
        if not 0 <= dscp <= 63:
            raise ValueError(f"dscp must be in 0..63, got {dscp}")
        draft = _IPV4.pack(0x45, dscp << 2, total, identification, 0x4000, ttl, IP_PROTO_UDP, 0,
                           _packed(src_ip), _packed(dst_ip))
        csum = internet_checksum(draft)
        ip = Ipv4Header(
            src_ip,
            dst_ip,
            dscp=dscp,
            ttl=ttl,
            identification=identification,
            total_length=total,
            header_checksum=csum,
        )
        udp = UdpHeader(src_port, VXLAN_PORT, UDP_HEADER_LEN + VXLAN_HEADER_LEN + inner_len, 0)
        pkt = cls(ip, udp, VxlanHeader(vni), inner)
        wire = (
            draft[:10] + csum.to_bytes(2, "big") + draft[12:]
            + _UDP.pack(src_port, VXLAN_PORT, udp.length, 0)
            + _VXLAN.pack(VXLAN_FLAG_I, b"\x00\x00\x00", vni << 8)
        )
        object.__setattr__(pkt, "_wire_header", wire)
        return pkt

    @property
    def wire_length(self) -> int:
        return VXLAN_OVERHEAD + self.inner.wire_length


def _udp_checksum(ip: Ipv4Header, segment: bytes) -> int:
    pseudo = _packed(ip.src_ip) + _packed(ip.dst_ip) + struct.pack("!BBH", 0, IP_PROTO_UDP, len(segment))
    csum = internet_checksum(pseudo + segment)
    return csum or 0xFFFF


def encode_vxlan(pkt: VxlanPacket) -> bytes:
    """Serialize ``pkt``.  Length and checksum fields must already be consistent."""
    inner = encode_frame(pkt.inner)
    if pkt._wire_header:
        return pkt._wire_header + inner
    ip, udp, vx = pkt.outer_ip, pkt.outer_udp, pkt.vxlan
    if ip.protocol != IP_PROTO_UDP:
        raise FrameError(f"outer IP protocol must be UDP, got {ip.protocol}")
    if ip.total_length != VXLAN_OVERHEAD + len(inner):
        raise FrameError(f"IPv4 total_length {ip.total_length} != {VXLAN_OVERHEAD + len(inner)}")
    if udp.length != UDP_HEADER_LEN + VXLAN_HEADER_LEN + len(inner):
        raise FrameError(f"UDP length {udp.length} inconsistent with payload")
    header = ip.pack(ip.header_checksum)
    if internet_checksum(header) != 0:
        raise ChecksumError("IPv4 header checksum does not match header contents")
    if udp.dst_port != VXLAN_PORT:
        raise NotVxlanError(f"UDP destination port {udp.dst_port} is not {VXLAN_PORT}")
    vx_bytes = _VXLAN.pack(vx.flags, b"\x00\x00\x00", vx.vni << 8)
    body = vx_bytes + inner
    if udp.checksum:
        expected = _udp_checksum(ip, _UDP.pack(udp.src_port, udp.dst_port, udp.length, 0) + body)
        if udp.checksum != expected:
            raise ChecksumError("UDP checksum does not match datagram")
    return header + _UDP.pack(udp.src_port, udp.dst_port, udp.length, udp.checksum) + body


def decode_vxlan(buf: bytes) -> VxlanPacket:
    if len(buf) < VXLAN_OVERHEAD + ETH_HEADER_LEN:
        raise TruncatedError(f"{len(buf)} bytes is too short for a VxLAN packet")
    (ver_ihl, tos, total_length, ident, frag, ttl, proto, csum, src, dst) = _IPV4.unpack_from(buf)
    if ver_ihl != 0x45:
        raise FrameError(f"only IPv4 without options is supported (version/IHL byte 0x{ver_ihl:02x})")
    total = sum(_HEADER_WORDS.unpack_from(buf))
    total = (total & 0xFFFF) + (total >> 16)
    if (total & 0xFFFF) + (total >> 16) != 0xFFFF:  # valid header sums to all ones
        raise ChecksumError("bad IPv4 header checksum")
    if frag & 0x3FFF:
        raise FrameError("fragmented outer packets are not supported")
    if frag & 0x8000:
        raise FrameError("reserved IPv4 flag bit set")
    if total_length != len(buf):
        raise TruncatedError(f"IPv4 total_length {total_length} but buffer holds {len(buf)} bytes")
    if proto != IP_PROTO_UDP:
        raise NotVxlanError(f"outer protocol {proto} is not UDP")
    sport, dport, ulen, ucsum = _UDP.unpack_from(buf, IPV4_HEADER_LEN)
    if dport != VXLAN_PORT:
        raise NotVxlanError(f"UDP destination port {dport} is not {VXLAN_PORT}")
    if ulen != total_length - IPV4_HEADER_LEN:
        raise FrameError(f"UDP length {ulen} inconsistent with IPv4 length")
    ip = Ipv4Header(
        _ip_from_packed(src),
        _ip_from_packed(dst),
        dscp=tos >> 2,
        ecn=tos & 0x3,
        ttl=ttl,
        protocol=proto,
        identification=ident,
        dont_fragment=bool(frag & 0x4000),
        total_length=total_length,
        header_checksum=csum,
    )
    if ucsum:
        seg = bytes(buf[IPV4_HEADER_LEN:])
        if _udp_checksum(ip, seg[:6] + b"\x00\x00" + seg[8:]) != ucsum:
            raise ChecksumError("bad UDP checksum")
    off = IPV4_HEADER_LEN + UDP_HEADER_LEN
    flags, reserved1, vni_word = _VXLAN.unpack_from(buf, off)
    if flags != VXLAN_FLAG_I or reserved1 != b"\x00\x00\x00" or vni_word & 0xFF:
        raise FrameError("VxLAN header flags/reserved bits violate RFC 7348")
    inner = decode_frame(bytes(buf[off + VXLAN_HEADER_LEN:]))
    return VxlanPacket(ip, UdpHeader(sport, dport, ulen, ucsum), VxlanHeader(vni_word >> 8, flags), inner)


def peek_dscp(buf: bytes) -> int:
    """DSCP of an encoded IPv4 packet, read without a full decode."""
    if len(buf) < IPV4_HEADER_LEN:
        raise TruncatedError("buffer too short for an IPv4 header")
    return buf[1] >> 2


def peek_vni(buf: bytes) -> int:
    off = IPV4_HEADER_LEN + UDP_HEADER_LEN + 4
    if len(buf) < off + 4:
        raise TruncatedError("buffer too short for a VxLAN header")
    return int.from_bytes(buf[off:off + 3], "big")
