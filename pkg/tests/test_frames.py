import struct
from dataclasses import replace
from ipaddress import IPv4Address

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from vxtsn.errors import ChecksumError, FrameError, NotVxlanError, OversizeError, TruncatedError
from vxtsn.frames import (
    ETH_TYPE_IPV4,
    ETH_TYPE_PROFINET,
    VXLAN_OVERHEAD,
    EthernetFrame,
    MacAddress,
    UdpHeader,
    VlanTag,
    VxlanHeader,
    VxlanPacket,
    decode_frame,
    decode_vxlan,
    encode_frame,
    encode_vxlan,
    flow_entropy_port,
    internet_checksum,
    peek_dscp,
    peek_vni,
)

PLC = MacAddress.parse("30:00:00:00:00:01")
ACT = MacAddress.parse("10:00:00:00:00:01")

macs = st.binary(min_size=6, max_size=6).map(MacAddress)
tags = st.builds(VlanTag, st.integers(0, 4095), st.integers(0, 7), st.booleans())
frames = st.builds(
    EthernetFrame,
    macs,
    macs,
    st.integers(0x0600, 0xFFFF).filter(lambda t: t != 0x8100),
    st.binary(max_size=1500),
    st.none() | tags,
)


def walkthrough_frame():
    return EthernetFrame(ACT, PLC, ETH_TYPE_PROFINET, bytes(range(40)), VlanTag(100, 5))


def test_tci_fixture_for_vlan100_pcp5():
    raw = encode_frame(walkthrough_frame())
    assert raw[12:16] == bytes.fromhex("8100a064")
    assert VlanTag(100, 5).tci == 0xA064


def test_tagged_frame_matches_golden(fixture_hex):
    assert encode_frame(walkthrough_frame()) == fixture_hex("walkthrough_frame.hex")


def test_vxlan_packet_matches_golden(fixture_hex):
    pkt = VxlanPacket.build("192.168.1.100", "192.168.1.1", 1005, walkthrough_frame(), dscp=40)
    assert encode_vxlan(pkt) == fixture_hex("walkthrough_vxlan.hex")
    back = decode_vxlan(fixture_hex("walkthrough_vxlan.hex"))
    assert back == pkt


def test_untagged_60_byte_frame_roundtrip():
    raw = oracle.untagged_frame("ff:ff:ff:ff:ff:ff", "02:00:00:00:00:01", 0x0800, bytes(46))
    assert len(raw) == 60
    f = decode_frame(raw)
    assert f.tag is None and f.ethertype == ETH_TYPE_IPV4 and len(f.payload) == 46
    assert encode_frame(f) == raw


def test_truncated_frame():
    with pytest.raises(TruncatedError):
        decode_frame(bytes(13))
    with pytest.raises(TruncatedError):
        decode_frame(bytes(12) + b"\x81\x00\xa0")


def test_oversize_payload():
    f = EthernetFrame(ACT, PLC, ETH_TYPE_IPV4, bytes(1501))
    with pytest.raises(OversizeError):
        encode_frame(f)
    assert len(encode_frame(f, mtu=9000)) == 1515


def test_non_8100_tpid_is_untagged():
    raw = oracle.untagged_frame("10:00:00:00:00:01", "30:00:00:00:00:01", 0x88A8, b"\xa0\x64\x08\x00")
    assert decode_frame(raw).tag is None


def test_wrong_udp_port_is_not_vxlan():
    raw = bytearray(encode_vxlan(VxlanPacket.build("10.0.0.1", "10.0.0.2", 1005, walkthrough_frame(), 40)))
    raw[22:24] = (4788).to_bytes(2, "big")
    with pytest.raises(NotVxlanError):
        decode_vxlan(bytes(raw))
    pkt = VxlanPacket.build("10.0.0.1", "10.0.0.2", 1005, walkthrough_frame(), 40)
    bad = VxlanPacket(pkt.outer_ip, UdpHeader(pkt.outer_udp.src_port, 4788, pkt.outer_udp.length), pkt.vxlan, pkt.inner)
    with pytest.raises(NotVxlanError):
        encode_vxlan(bad)


def test_corrupted_ip_checksum():
    raw = bytearray(encode_vxlan(VxlanPacket.build("10.0.0.1", "10.0.0.2", 7, walkthrough_frame(), 8)))
    raw[8] ^= 0x01  # TTL
    with pytest.raises(ChecksumError):
        decode_vxlan(bytes(raw))


def test_nonzero_udp_checksum_is_verified():
    raw = bytearray(oracle.vxlan_packet("10.0.0.1", "10.0.0.2", 1005, 40, encode_frame(walkthrough_frame())))
    pseudo = bytes(raw[12:20]) + b"\x00\x11" + (len(raw) - 20).to_bytes(2, "big")
    csum = oracle.ones_complement(pseudo + bytes(raw[20:])) or 0xFFFF
    raw[26:28] = csum.to_bytes(2, "big")
    assert decode_vxlan(bytes(raw)).outer_udp.checksum == csum
    raw[-1] ^= 0xFF
    with pytest.raises(ChecksumError):
        decode_vxlan(bytes(raw))


def test_vxlan_flags_and_truncation():
    raw = bytearray(encode_vxlan(VxlanPacket.build("10.0.0.1", "10.0.0.2", 1005, walkthrough_frame(), 40)))
    flagged = bytearray(raw)
    flagged[28] = 0x00
    with pytest.raises(FrameError):
        decode_vxlan(bytes(flagged))
    with pytest.raises(TruncatedError):
        decode_vxlan(bytes(raw[:-1]))
    with pytest.raises(TruncatedError):
        decode_vxlan(bytes(raw[:40]))


def test_peek_helpers():
    raw = encode_vxlan(VxlanPacket.build("10.0.0.1", "10.0.0.2", 40957, walkthrough_frame(), 56))
    assert peek_dscp(raw) == 56
    assert peek_vni(raw) == 40957


def test_internet_checksum_known_vector():
    # Classic example header; the checksum field (0xb861) makes the sum verify to zero.
    hdr = bytes.fromhex("450000730000400040110000c0a80001c0a800c7")
    assert internet_checksum(hdr) == 0xB861
    assert internet_checksum(hdr[:10] + b"\xb8\x61" + hdr[12:]) == 0


def test_entropy_port_is_stable_and_ephemeral():
    p = flow_entropy_port(PLC, ACT, 1005)
    assert p == flow_entropy_port(PLC, ACT, 1005)
    assert 49152 <= p <= 65535


def test_mac_parse_and_classes():
    assert str(MacAddress.parse("01-1B-19-00-00-00")) == "01:1b:19:00:00:00"
    assert MacAddress.parse("01:1b:19:00:00:00").is_multicast
    assert MacAddress.parse("ff:ff:ff:ff:ff:ff").is_broadcast
    with pytest.raises(ValueError):
        MacAddress.parse("01:02:03")


@settings(max_examples=300, deadline=None)
@given(frames)
def test_frame_roundtrip(frame):
    assert decode_frame(encode_frame(frame)) == frame


@settings(max_examples=300, deadline=None)
@given(frames)
def test_frame_encoding_matches_oracle(frame):
    dst, src = str(frame.dst), str(frame.src)
    if frame.tag is None:
        want = oracle.untagged_frame(dst, src, frame.ethertype, frame.payload)
    else:
        want = oracle.tagged_frame(
            dst, src, frame.tag.vlan_id, frame.tag.pcp, frame.ethertype, frame.payload, int(frame.tag.dei)
        )
    assert encode_frame(frame) == want


@settings(max_examples=300, deadline=None)
@given(
    frames,
    st.integers(0, 2**32 - 1).map(IPv4Address),
    st.integers(0, 2**32 - 1).map(IPv4Address),
    st.integers(0, 2**24 - 1),
    st.integers(0, 63),
    st.integers(0, 0xFFFF),
)
def test_vxlan_roundtrip_and_overhead(frame, src, dst, vni, dscp, ident):
    pkt = VxlanPacket.build(src, dst, vni, frame, dscp, identification=ident)
    raw = encode_vxlan(pkt)
    assert len(raw) - len(encode_frame(frame)) == VXLAN_OVERHEAD == 36
    assert decode_vxlan(raw) == pkt
    assert encode_vxlan(decode_vxlan(raw)) == raw  # validating path agrees with build()'s
    assert raw == oracle.vxlan_packet(str(src), str(dst), vni, dscp, encode_frame(frame), ident=ident)


def test_replaced_packet_is_reencoded():
    pkt = VxlanPacket.build("10.0.0.1", "10.0.0.2", 1005, walkthrough_frame(), 40)
    moved = replace(pkt, vxlan=VxlanHeader(1007))
    assert peek_vni(encode_vxlan(moved)) == 1007
    with pytest.raises(ChecksumError):
        encode_vxlan(replace(pkt, outer_ip=replace(pkt.outer_ip, dscp=46)))


def test_overhead_constant_is_sum_of_headers():
    assert VXLAN_OVERHEAD == struct.calcsize("!BBHHHBBH4s4s") + 8 + 8
