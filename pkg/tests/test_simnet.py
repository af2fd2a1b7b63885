import copy
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vxtsn.errors import ConfigError
from vxtsn.frames import MacAddress, decode_frame, decode_vxlan
from vxtsn.simnet import build_scenario, bundled_scenarios, load_scenario, run
from vxtsn.simnet.bridge import TsnBridgePort
from vxtsn.simnet.capture import LINKTYPE_ETHERNET, LINKTYPE_RAW, read_pcap, write_pcap
from vxtsn.simnet.engine import EventQueue, SimulationError
from vxtsn.simnet.report import summarize, write_outputs
from vxtsn.simnet.scenario import read_document
from vxtsn.simnet.stats import (
    DelayStats,
    ccdf,
    ccdf_at,
    dominates,
    match_delays,
    measure_task_delays,
    multicast_fanout,
)
from vxtsn.simnet.capture import CaptureEvent
from vxtsn.simnet.traffic import FlowSpec, trailer_of

MS = 1_000_000


def _testbed_doc():
    return copy.deepcopy(read_document("testbed"))


@pytest.fixture(scope="module")
def short_testbed():
    return run(load_scenario("testbed").with_duration_ms(2000))


# -- traffic ---------------------------------------------------------------


def flow(**kw):
    base = dict(name="f", src="h", dst_mac=MacAddress(bytes(6)), vlan_id=100, pcp=5, payload_size=64)
    base.update(kw)
    return FlowSpec(**base)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10**9), st.integers(0, 2000), st.floats(0, 1, exclude_max=True))
def test_periodic_count_formula(period, n, frac):
    duration = n * period + int(frac * period)
    assert sum(1 for _ in flow(period_ns=period).emission_times(duration)) == duration // period + 1 == n + 1


def test_periodic_burst_and_count():
    f = flow(period_ns=25 * MS, burst=5)
    times = list(f.emission_times(60_000 * MS))
    assert len(times) == 5 * (60_000 // 25 + 1)
    assert times[:6] == [0] * 5 + [25 * MS]
    assert list(flow(period_ns=MS, count=3).emission_times(10 * MS)) == [0, MS, 2 * MS]


def test_rate_spacing():
    f = flow(rate_bps=1_000_000, payload_size=1000)
    times = list(f.emission_times(1000 * MS))
    gap = f.frame_size * 8 * 1000  # ns per frame at 1 Mbps
    assert times[1] - times[0] == gap == 8_144_000
    assert len(times) == 1000 * MS // gap + 1
    assert all(abs((b - a) - gap) <= 1 for a, b in zip(times, times[1:]))


def test_payload_trailer():
    f = flow(period_ns=MS, payload_kind="ptp", payload_size=44, index=3)
    p = f.payload(17)
    assert len(p) == 44 and trailer_of(p) == (3, 17)
    assert trailer_of(b"\x00" * 8) is None
    assert f.frame(MacAddress(b"\x02" * 6), 0).ethertype == 0x88F7


# -- stats -----------------------------------------------------------------


def test_ccdf_examples():
    assert ccdf([1, 2, 3]) == [(1, 2 / 3), (2, 1 / 3), (3, 0.0)]
    assert ccdf([4, 4, 4]) == [(4, 0.0)]
    with pytest.raises(ValueError):
        ccdf([])


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=200))
def test_ccdf_properties(xs):
    pts = ccdf(xs)
    ps = [p for _, p in pts]
    assert ps == sorted(ps, reverse=True) and ps[-1] == 0.0
    for d, p in pts:
        assert p == sum(1 for x in xs if x > d) / len(xs)
    assert ccdf_at(pts, min(xs) - 1) == 1.0


def test_dominance():
    assert dominates(ccdf([1, 2, 3]), ccdf([2, 3, 4]))
    assert not dominates(ccdf([2, 3, 4]), ccdf([1, 2, 3]))


@given(st.lists(st.integers(0, 30), min_size=1, max_size=40), st.lists(st.integers(0, 30), min_size=1, max_size=40))
def test_dominance_matches_pointwise_definition(a, b):
    fa, fb = ccdf(a), ccdf(b)
    grid = set(a) | set(b)
    assert dominates(fa, fb) == all(ccdf_at(fa, x) <= ccdf_at(fb, x) for x in grid)


def test_delay_stats():
    s = DelayStats.from_ns([1000, 2000, 3000])
    assert (s.mean, s.std_dev, s.count) == (2.0, 1.0, 3)
    assert s.p2_5 <= s.p97_5
    assert s.as_dict()["mean_us"] == 2.0
    with pytest.raises(ValueError):
        DelayStats.from_ns([])


def _ev(t, flow_idx, seq):
    return CaptureEvent(t, b"\x00" * 20 + bytes([0x54, 0x53]) + flow_idx.to_bytes(2, "big") + seq.to_bytes(4, "big"), "rx")


def test_task_delay_matching():
    td = match_delays([_ev(0, 0, 1), _ev(10, 0, 2)], [_ev(3000, 0, 1)])
    assert td.samples_ns == (3000,) and td.stats.mean == 3.0 and td.lost == 1


# -- engine, bridge, pcap --------------------------------------------------


def test_engine_orders_by_time_then_insertion():
    q, seen = EventQueue(), []
    for t, tag in [(5, "a"), (1, "b"), (5, "c"), (1, "d")]:
        q.schedule(t, seen.append, tag)
    q.run(4)
    assert seen == ["b", "d"] and q.now == 1
    q.run(float("inf"))
    assert seen == ["b", "d", "a", "c"]
    with pytest.raises(SimulationError):
        q.schedule(0, seen.append, "late")


@given(st.lists(st.tuples(st.booleans(), st.integers(0, 7)), max_size=100))
def test_bridge_strict_priority(ops):
    port, pending = TsnBridgePort(1e9), []
    for is_enqueue, pcp in ops:
        if is_enqueue:
            port.enqueue(pcp, len(pending))
            pending.append(pcp)
        else:
            got = port.dequeue()
            if not pending:
                assert got is None
                continue
            assert got[0] == max(pending)
            pending.remove(got[0])


def test_pcap_roundtrip(tmp_path):
    recs = [(0, b"\x01" * 60), (1_500_000_123, b"\x02" * 64)]
    write_pcap(tmp_path / "a.pcap", recs, LINKTYPE_RAW)
    raw = (tmp_path / "a.pcap").read_bytes()
    assert raw[:4] == bytes.fromhex("4d3cb2a1")
    assert read_pcap(tmp_path / "a.pcap") == (LINKTYPE_RAW, recs)
    (tmp_path / "b.pcap").write_bytes(raw[:-3])
    with pytest.raises(ValueError):
        read_pcap(tmp_path / "b.pcap")


# -- scenarios -------------------------------------------------------------


def test_bundled_scenarios_validate():
    names = bundled_scenarios()
    assert {"testbed", "testbed_congested", "walkthrough", "learning_convergence"} <= set(names)
    for n in names:
        load_scenario(n)


def test_testbed_shape():
    sc = load_scenario("testbed")
    assert sum(1 for v in sc.vteps.values() if v.side == "ue") == 2
    by = {f.name: f for f in sc.flows}
    assert {f.vlan_id for f in sc.flows} == {100}
    assert (by["HP"].pcp, by["HP"].period_ns, by["HP"].payload_kind) == (7, 125 * MS, "ptp")
    assert by["HP"].dst_mac.is_multicast
    assert (by["HMP"].pcp, by["HMP"].period_ns, by["HMP"].burst, by["HMP"].payload_kind) == (5, 25 * MS, 5, "rtc1")
    assert (by["LMP"].pcp, by["LMP"].rate_bps) == (2, 1_000_000)
    assert (by["LP"].pcp, by["LP"].rate_bps) == (0, 9_000_000)


def test_validation_reports_every_fault():
    doc = _testbed_doc()
    doc["flows"][0]["src"] = "nobody"
    doc["flows"][1]["expect_sinks"] = ["ghost"]
    doc["sites"][1]["vtep"] = "nowhere"
    doc["capture_points"]["Z"] = "upf.bogus"
    doc["flows"][2]["expect_qfi"] = 4
    with pytest.raises(ConfigError) as exc:
        build_scenario(doc)
    errs = exc.value.errors
    for needle in ("unknown host 'nobody'", "unknown host 'ghost'", "unknown VTEP 'nowhere'", "capture_points.Z",
                   "flows[2].expect_qfi"):
        assert any(needle in e for e in errs), needle


def test_schema_error_names_field():
    doc = _testbed_doc()
    doc["flows"][0]["pcp"] = 9
    doc["fiveg"]["downlink"]["capacity_bps"] = -1
    with pytest.raises(ConfigError) as exc:
        build_scenario(doc)
    assert any(e.startswith("flows[0].pcp:") for e in exc.value.errors)
    assert any(e.startswith("fiveg.downlink.capacity_bps:") for e in exc.value.errors)


def test_conflicting_expected_qfi():
    doc = _testbed_doc()
    dup = copy.deepcopy(doc["flows"][1])
    dup["name"] = "HMP2"
    dup["expect_qfi"] = 2
    doc["flows"].append(dup)
    with pytest.raises(ConfigError) as exc:
        build_scenario(doc)
    assert any("conflict for {VLAN 100, PCP 5}" in e for e in exc.value.errors)


def test_unclassifiable_flow_rejected():
    doc = _testbed_doc()
    doc["flows"][3]["pcp"] = 3
    doc["flows"][3].pop("expect_qfi")
    with pytest.raises(ConfigError) as exc:
        build_scenario(doc)
    assert any("PCP 3 (DSCP 24) matches no PDR rule" in e for e in exc.value.errors)


def test_empty_flow_list():
    doc = _testbed_doc()
    doc["flows"] = []
    r = run(build_scenario(doc))
    assert r.deliveries == [] and r.passed
    assert summarize(r)["flows"] == {}


def test_fanout(short_testbed):
    fan = multicast_fanout(short_testbed)
    assert fan.ok
    assert set(fan.delivered["HP"]) == {"ue1_dev", "ue2_dev"}
    assert set(fan.delivered["HMP"]) == {"ue1_dev"} and set(fan.delivered["LP"]) == {"ue1_dev"}
    assert set(fan.delivered["LMP"]) == {"ue2_dev"}


def test_testbed_assertions_and_integrity(short_testbed):
    r = short_testbed
    assert r.passed, [a for a in r.assertions if not a.passed]
    assert all(d.intact for d in r.deliveries)
    assert {f: sorted(q) for f, q in r.qfi_seen.items()} == {"HP": [4], "HMP": [3], "LMP": [2], "LP": [1]}


def test_task_delays_are_the_modelled_constants(short_testbed):
    td = measure_task_delays(short_testbed)
    assert td["task1"].stats.mean == pytest.approx(3.113)
    assert td["task2"].stats.mean == pytest.approx(7.619)
    assert td["task3"].stats.mean == pytest.approx(75.375)
    assert all(t.lost == 0 for t in td.values())


def test_captures_decode_and_are_monotone(short_testbed):
    caps = short_testbed.captures
    for p in caps.values():
        ts = p.timestamps
        assert ts == sorted(ts)
    assert caps["A"].linktype == LINKTYPE_ETHERNET and caps["C"].linktype == LINKTYPE_RAW
    e = caps["C"].events[0]
    pkt = decode_vxlan(e.raw)
    assert decode_frame(caps["A"].events[0].raw) == pkt.inner
    assert {ev.direction for ev in caps["A"].events} == {"rx"}


def test_broadcast_containment():
    r = run(load_scenario("production_lines").with_duration_ms(200))
    assert r.passed
    hosts = r.scenario.hosts
    for d in r.deliveries:
        assert d.vlan_id in hosts[d.sink].vlans
    assert {d.sink for d in r.deliveries_of("bcast200")} == {"l1_dev200", "ln_dev200"}


def test_learning_scenario_decisions():
    r = run(load_scenario("learning_convergence"))
    assert r.passed
    assert r.decisions[("upf", "first", "multicast")] == 1
    assert r.decisions[("upf", "follow", "unicast")] == 20
    assert r.decisions[("upf", "follow", "multicast")] == 0
    assert r.drops["no_local_receiver"] == 1  # ue2's copy of the flooded first frame


def test_seed_changes_jitter_only_when_enabled(tmp_path):
    sc = load_scenario("testbed").with_duration_ms(500)
    a, b = run(sc), run(sc.with_seed(99))
    assert [d.delivery_ns for d in a.deliveries] != [d.delivery_ns for d in b.deliveries]
    flat = sc.with_downlink(jitter_ns=None)
    c, d = run(flat), run(flat.with_seed(99))
    assert [x.delivery_ns for x in c.deliveries] == [x.delivery_ns for x in d.deliveries]


def test_outputs_are_deterministic(tmp_path):
    sc = load_scenario("testbed").with_duration_ms(1000)
    wa = write_outputs(run(sc), tmp_path / "a")
    wb = write_outputs(run(sc), tmp_path / "b")
    assert sorted(wa) == sorted(wb)
    for name in wa:
        assert wa[name].read_bytes() == wb[name].read_bytes(), name
    assert {"hp.csv", "hmp.csv", "lmp.csv", "lp.csv", "ccdf_hp.txt", "capture_A.pcap", "summary.json"} <= set(wa)
    summary = json.loads(wa["summary.json"].read_text())
    assert summary["passed"] and summary["flows"]["HP"]["pdb_within_fraction"] == 1.0


def test_pcap_reparse_matches_capture(tmp_path, short_testbed):
    for label, point in short_testbed.captures.items():
        point.write_pcap(tmp_path / f"{label}.pcap")
        linktype, recs = read_pcap(tmp_path / f"{label}.pcap")
        assert linktype == point.linktype
        assert recs == [(e.timestamp_ns, e.raw) for e in point.events]
