"""Report rendering and file export.  Every output is a pure function of the report."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Dict, List

from ..fiveg import pdb_evaluate
from ..mapping import vni_from_tuple
from .network import SimulationReport
from .stats import DelayStats, ccdf, measure_task_delays

CSV_COLUMNS = ("flow", "seq", "sink", "qfi", "generated_ns", "enqueue_ns", "delivery_ns")


def flow_rows(scenario) -> List[dict]:
    """One row per flow: tuple -> VNI -> group -> DSCP -> QFI -> 5QI -> PDB."""
    groups = {g.vni: str(g.group) for g in scenario.groups}
    m = scenario.mapping
    rows = []
    for f in scenario.flows:
        vni = vni_from_tuple((f.vlan_id, f.pcp))
        qfi = m.classify(f.pcp)
        desc = m.descriptor(qfi)
        rows.append(
            {
                "flow": f.name,
                "vlan": f.vlan_id,
                "pcp": f.pcp,
                "vni": vni,
                "group": groups.get(vni, "-"),
                "dscp": m.dscp_table.dscp_from_pcp(f.pcp),
                "qfi": qfi,
                "five_qi": desc.five_qi,
                "priority": desc.default_priority_level,
                "pdb_ms": desc.packet_delay_budget_ms,
            }
        )
    return rows


def format_flow_table(rows: List[dict], with_group: bool = True) -> str:
    cols = ["flow", "vlan", "pcp", "vni"] + (["group"] if with_group else []) + ["dscp", "qfi", "five_qi"]
    cols += ["priority", "pdb_ms"] if with_group else []
    heads = {"five_qi": "5QI", "pdb_ms": "PDB ms", "priority": "PRIO"}
    table = [[heads.get(c, c.upper()) for c in cols]] + [[str(r[c]) for c in cols] for r in rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(cols))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in table)


def describe_flow_chain(row: dict) -> str:
    return (
        f"VLAN {row['vlan']}, PCP {row['pcp']} -> VNI {row['vni']} -> group {row['group']} -> "
        f"DSCP {row['dscp']} -> QFI {row['qfi']} -> 5QI {row['five_qi']} "
        f"(priority {row['priority']}, PDB {row['pdb_ms']} ms)"
    )


def _num(x: float):
    return None if math.isnan(x) else round(x, 4)


def summarize(report: SimulationReport) -> dict:
    sc = report.scenario
    flows = {}
    for f in sc.flows:
        delays = report.e2e_delays_ns(f.name)
        entry = {
            "generated": report.generated[f.name],
            "delivered": len(delays),
            "qfis": sorted(report.qfi_seen[f.name]),
            "e2e": DelayStats.from_ns(delays).as_dict() if delays else None,
        }
        if f.name in {d.flow for d in report.deliveries}:
            qfi = sc.mapping.classify(f.pcp)
            pairs = [(d.enqueue_ns, d.delivery_ns) for d in report.deliveries_of(f.name) if d.enqueue_ns is not None]
            res = pdb_evaluate(sc.mapping.descriptor(qfi), pairs)
            entry["pdb_within_fraction"] = _num(res.within_budget_fraction)
        flows[f.name] = entry
    tasks = {}
    for name, td in measure_task_delays(report).items():
        tasks[name] = {"stats": td.stats.as_dict() if td.stats else None, "lost": td.lost}
    return {
        "scenario": sc.name,
        "seed": report.seed,
        "duration_ns": sc.duration_ns,
        "end_ns": report.end_ns,
        "events_processed": report.events_processed,
        "passed": report.passed,
        "assertions": [{"name": a.name, "passed": a.passed, "detail": a.detail} for a in report.assertions],
        "flow_table": flow_rows(sc),
        "flows": flows,
        "task_delays": tasks,
        "drops": dict(sorted(report.drops.items())),
        "decisions": [
            {"vtep": v, "flow": f, "kind": k, "count": n} for (v, f, k), n in sorted(report.decisions.items())
        ],
        "qos": {d: {str(q): c for q, c in sorted(v.items())} for d, v in sorted(report.qos.items())},
        "forwarding_tables": {
            n: [{"vni": r[0], "mac": r[1], "remote_ip": r[2], "learned": r[3]} for r in rows]
            for n, rows in report.forwarding_tables.items()
        },
        "captures": {label: len(p) for label, p in sorted(report.captures.items())},
    }


def render_text(summary: dict) -> str:
    out = io.StringIO()
    w = out.write
    w(f"scenario {summary['scenario']}  seed {summary['seed']}  end {summary['end_ns']} ns  "
      f"events {summary['events_processed']}\n\n")
    w(format_flow_table(summary["flow_table"], with_group=False) + "\n\n")
    w("flows:\n")
    for name, f in summary["flows"].items():
        e2e = f["e2e"]
        line = f"  {name}: generated {f['generated']}, delivered {f['delivered']}, QFIs {f['qfis']}"
        if e2e:
            line += (f", e2e mean {e2e['mean_us']:.4f} us, std {e2e['std_dev_us']:.4f} us, "
                     f"95% [{e2e['p2_5_us']:.4f} {e2e['p97_5_us']:.4f}] us")
        if f.get("pdb_within_fraction") is not None:
            line += f", within PDB {f['pdb_within_fraction']:.4f}"
        w(line + "\n")
    if summary["task_delays"]:
        w("\nVTEP task delays:\n")
        for name, t in summary["task_delays"].items():
            s = t["stats"]
            if s:
                w(f"  {name}: mean {s['mean_us']:.4f} us, std {s['std_dev_us']:.4f} us, "
                  f"95% [{s['p2_5_us']:.4f} {s['p97_5_us']:.4f}] us, n={s['count']}, lost {t['lost']}\n")
            else:
                w(f"  {name}: no samples, lost {t['lost']}\n")
    w("\ndrops:\n")
    for reason, n in summary["drops"].items():
        w(f"  {reason}: {n}\n")
    if not summary["drops"]:
        w("  none\n")
    w("\nassertions:\n")
    for a in summary["assertions"]:
        w(f"  [{'PASS' if a['passed'] else 'FAIL'}] {a['name']}" + (f": {a['detail']}" if not a["passed"] else "") + "\n")
    w(f"\nresult: {'PASS' if summary['passed'] else 'FAIL'}\n")
    return out.getvalue()


def write_flow_csv(report: SimulationReport, flow: str, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for d in report.deliveries_of(flow):
            wr.writerow([d.flow, d.seq, d.sink, d.qfi, d.generated_ns, d.enqueue_ns, d.delivery_ns])


def read_delay_csv(path) -> List[int]:
    """End-to-end delays (ns) from a per-flow CSV written by :func:`write_flow_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and not {"generated_ns", "delivery_ns"} <= set(rows[0]):
        raise ValueError(f"{path}: expected generated_ns and delivery_ns columns")
    return [int(r["delivery_ns"]) - int(r["generated_ns"]) for r in rows]


def format_ccdf(points) -> str:
    lines = ["# delay_us P(X>delay)"]
    lines += [f"{d / 1000:.4f} {p:.6f}" for d, p in points]
    return "\n".join(lines) + "\n"


def write_outputs(report: SimulationReport, out_dir) -> Dict[str, Path]:
    """Write summary, per-flow CSVs, CCDF files and pcaps.  Returns label -> path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    summary = summarize(report)
    p = out / "summary.json"
    p.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written["summary.json"] = p
    p = out / "summary.txt"
    p.write_text(render_text(summary))
    written["summary.txt"] = p
    for f in report.scenario.flows:
        p = out / f"{f.name.lower()}.csv"
        write_flow_csv(report, f.name, p)
        written[p.name] = p
        delays = report.e2e_delays_ns(f.name)
        if delays:
            p = out / f"ccdf_{f.name.lower()}.txt"
            p.write_text(format_ccdf(ccdf(delays)))
            written[p.name] = p
    for label, point in sorted(report.captures.items()):
        p = out / f"capture_{label}.pcap"
        point.write_pcap(p)
        written[p.name] = p
    return written
