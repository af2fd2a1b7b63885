"""Command-line entry point: ``vxtsn {run,validate,tables,ccdf,version}``.

Exit codes: 0 success, 1 configuration or I/O error, 2 usage error,
3 the run finished but at least one scenario assertion failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter

import jsonschema

from . import __version__
from .errors import ConfigError
from .mapping import MAPPING_SCHEMA, MappingConfig
from .simnet.network import run as run_scenario
from .simnet.report import (
    describe_flow_chain,
    flow_rows,
    format_ccdf,
    format_flow_table,
    read_delay_csv,
    render_text,
    summarize,
    write_outputs,
)
from .simnet.scenario import bundled_scenarios, build_scenario, read_document
from .simnet.stats import ccdf
from .vtep import ForwardingTable

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_ASSERT = 0, 1, 2, 3

_MAPPING_KEYS = {"pcp_to_dscp", "pdr_rules", "qos_flows"}


def _emit(args, text: str, data) -> None:
    if args.format == "json":
        print(json.dumps(data, indent=2, sort_keys=True))
    else:
        print(text)


def _errors(exc: ConfigError) -> None:
    for e in exc.errors:
        print(f"error: {e}", file=sys.stderr)


def _scenario_arg(args) -> str:
    source = args.scenario or args.scenario_pos
    if source is None:
        raise ConfigError("no scenario given (use --scenario PATH or a bundled name: "
                          + ", ".join(bundled_scenarios()) + ")")
    return source


def _load(args):
    doc = read_document(_scenario_arg(args))
    sc = build_scenario(doc)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    return sc


def _static_tables(sc) -> dict:
    out = {}
    for name, spec in sc.vteps.items():
        t = ForwardingTable.from_config(spec.config)
        for vni, mac, ip in spec.static_entries:
            t.add_static(vni, mac, ip)
        out[name] = t
    return out


def _validate_mapping(doc) -> MappingConfig:
    validator = jsonschema.Draft202012Validator(MAPPING_SCHEMA)
    errs = [
        f"{'.'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}"
        for e in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    ]
    if errs:
        raise ConfigError(errs)
    return MappingConfig.from_dict(doc)


def cmd_validate(args) -> int:
    doc = read_document(_scenario_arg(args))
    if isinstance(doc, dict) and doc and set(doc) <= _MAPPING_KEYS:
        m = _validate_mapping(doc)
        _emit(args, "mapping OK\n" + json.dumps(m.to_dict(), indent=2), {"ok": True, "mapping": m.to_dict()})
        return EXIT_OK
    sc = build_scenario(doc)
    sides = Counter(v.side for v in sc.vteps.values())
    rows = flow_rows(sc)
    data = {
        "ok": True,
        "scenario": sc.name,
        "vteps": len(sc.vteps),
        "ues": sides["ue"],
        "core_vteps": sides["core"],
        "sites": len(sc.sites),
        "hosts": len(sc.hosts),
        "flows": len(sc.flows),
        "multicast_groups": len(sc.groups),
        "vni_table": [{"flow": r["flow"], "vlan": r["vlan"], "pcp": r["pcp"], "vni": r["vni"]} for r in rows],
    }
    text = (
        f"{sc.name}: OK\n"
        f"  {len(sc.vteps)} VTEPs ({sides['ue']} UEs, {sides['core']} core), {len(sc.sites)} sites, "
        f"{len(sc.hosts)} hosts, {len(sc.flows)} flows, {len(sc.groups)} multicast groups\n"
        "  VNI table:\n" + "\n".join(f"    VLAN {r['vlan']:>4}  PCP {r['pcp']}  -> VNI {r['vni']}  ({r['flow']})"
                                     for r in rows)
    )
    _emit(args, text, data)
    return EXIT_OK


def cmd_tables(args) -> int:
    sc = _load(args)
    rows = flow_rows(sc)
    tables = _static_tables(sc)
    if args.format == "json":
        _emit(args, "", {
            "flows": rows,
            "forwarding_tables": {
                n: [{"vni": r[0], "mac": r[1], "remote_ip": r[2], "learned": r[3]} for r in t.rows()]
                for n, t in sorted(tables.items())
            },
        })
        return EXIT_OK
    lines = [format_flow_table(rows), ""]
    lines += [describe_flow_chain(r) for r in rows]
    for name, t in sorted(tables.items()):
        lines += ["", f"forwarding table of {name} ({sc.vteps[name].config.vtep_ip}):", t.format()]
    print("\n".join(lines))
    return EXIT_OK


def cmd_run(args) -> int:
    sc = _load(args)
    report = run_scenario(sc)
    summary = summarize(report)
    if args.out:
        try:
            write_outputs(report, args.out)
        except OSError as exc:
            print(f"error: cannot write outputs to {args.out}: {exc.strerror or exc}", file=sys.stderr)
            return EXIT_ERROR
    if args.format == "json":
        _emit(args, "", summary)
    else:
        print(render_text(summary), end="")
    return EXIT_OK if report.passed else EXIT_ASSERT


def cmd_ccdf(args) -> int:
    try:
        delays = read_delay_csv(args.csv)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"{args.csv}: {exc}") from None
    if not delays:
        raise ConfigError(f"{args.csv}: no delay samples")
    pts = ccdf(delays)
    _emit(args, format_ccdf(pts).rstrip("\n"), [{"delay_us": round(d / 1000, 4), "p": p} for d, p in pts])
    return EXIT_OK


def cmd_version(args) -> int:
    print(__version__)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "json"), default="text")

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("scenario_pos", nargs="?", metavar="SCENARIO", help="scenario path or bundled name")
    scen.add_argument("--scenario", help="scenario path or bundled name")
    scen.add_argument("--seed", type=int, help="override the scenario seed")

    p = argparse.ArgumentParser(prog="vxtsn", description="TSN over 5G via VxLAN: tables, validation, simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", parents=[common, scen], help="run a scenario and export reports")
    s.add_argument("--out", help="output directory (created if absent)")
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("validate", parents=[common, scen], help="check a scenario or mapping file")
    s.set_defaults(fn=cmd_validate)

    s = sub.add_parser("tables", parents=[common, scen], help="print flow and forwarding tables")
    s.set_defaults(fn=cmd_tables)

    s = sub.add_parser("ccdf", parents=[common], help="CCDF of the delays in a per-flow CSV")
    s.add_argument("csv")
    s.set_defaults(fn=cmd_ccdf)

    s = sub.add_parser("version", help="print the package version")
    s.set_defaults(fn=cmd_version, format="text")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except ConfigError as exc:
        _errors(exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
