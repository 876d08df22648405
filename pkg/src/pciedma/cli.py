"""Command-line front end.

Subcommands:

  mwr-sweep   run endpoint-to-host write runs over a range of transfer
              sizes and report the measured speed per point
  mrd-sweep   run host-to-endpoint read runs over a range of payload
              sizes and report the measured speed per point
  theory      print the closed-form link and stream models
  trace       run one transfer with full event tracing
  regmap      print the register map

Reports go to stdout (or --out) as CSV or JSON; --plot additionally
renders a figure next to the delimited output.  Repeat invocations with
the same arguments produce byte-identical reports and traces.

Exit codes: 0 success, 1 usage or configuration error, 2 simulated
deadlock, 3 data-integrity mismatch.
"""

from __future__ import annotations

import argparse
import io
import json
import sys

from . import perf
from .errors import (
    DeadlockDetected,
    IndivisibleDataSize,
    InvalidConfig,
    IoFailure,
    PayloadOutOfRange,
    UsageError,
)
from .regfile import regmap_table
from .sim import SimConfig, System
from .host import RX_BUFFER_BASE, TX_BUFFER_BASE
from .trace import TRACE_FORMATS, TraceEvent, emit_trace

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DEADLOCK = 2
EXIT_INTEGRITY = 3

DEFAULT_MWR_SIZES = [2 ** k for k in range(6, 21)]     # 64 B .. 1 MB
DEFAULT_MRD_PAYLOADS = [2 ** k for k in range(2, 11)]  # 4 .. 1024 DW
DEFAULT_THEORY_PAYLOADS = [2 ** k for k in range(0, 11)]

_MWR_COLUMNS = ("size_bytes", "payload_dw", "count", "cycles", "v_gbps")
_MRD_COLUMNS = ("payload_dw", "size_bytes", "count", "cycles", "v_gbps")
_THEORY_COLUMNS = ("payload_dw", "payload_bytes", "link_mbps",
                   "stream_eff", "v_gbps")
_FAULTS = ("none", "suppress-ack", "corrupt")


class _Parser(argparse.ArgumentParser):
    """argparse reports usage problems through the package error type."""

    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        values = [int(part, 0) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}")
    if not values:
        raise UsageError("the list cannot be empty")
    return values


def _check_payload(payload_dw: int) -> None:
    if not 1 <= payload_dw <= 1024:
        raise PayloadOutOfRange(
            f"payload of {payload_dw} DWORDs is outside 1..1024")


def _count_for(size_bytes: int, payload_dw: int) -> int:
    tlp_bytes = 4 * payload_dw
    if size_bytes < tlp_bytes or size_bytes % tlp_bytes:
        raise IndivisibleDataSize(
            f"transfer of {size_bytes} bytes does not divide into "
            f"{tlp_bytes}-byte payloads")
    return size_bytes // tlp_bytes


def _sized_config(size_bytes: int, **kwargs) -> SimConfig:
    """Default config, with the buffers grown to fit oversized transfers."""
    buffer_bytes = max(SimConfig.buffer_bytes, size_bytes)
    return SimConfig(buffer_bytes=buffer_bytes,
                     tx_buffer_base=max(TX_BUFFER_BASE,
                                        RX_BUFFER_BASE + buffer_bytes),
                     **kwargs)


def _sim_kwargs(args) -> dict:
    kwargs = {"lanes": args.lanes,
              "cpl_latency_cycles": args.cpl_latency,
              "isr_latency_cycles": args.isr_latency,
              "pattern_seed": args.seed}
    probe = SimConfig(**kwargs)
    probe.validate()
    for note in probe.conformance_notes():
        print(f"note: {note}", file=sys.stderr)
    return kwargs


def build_parser() -> _Parser:
    parser = _Parser(prog="pciedma",
                     description="transaction-level DMA engine simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_report_args(p):
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="report format (default csv)")
        p.add_argument("--out", default="-",
                       help="report file, '-' for stdout (default)")
        p.add_argument("--plot", metavar="PNG",
                       help="also render the report as a figure")

    def add_sim_args(p):
        p.add_argument("--lanes", type=int, default=SimConfig.lanes,
                       help="configured lane count; cycle counts are "
                            "measured behind the link and do not change")
        p.add_argument("--cpl-latency", type=int, metavar="CYCLES",
                       default=SimConfig.cpl_latency_cycles,
                       help="read-request to completion delay")
        p.add_argument("--isr-latency", type=int, metavar="CYCLES",
                       default=SimConfig.isr_latency_cycles,
                       help="interrupt to service-routine delay")
        p.add_argument("--seed", type=int, default=SimConfig.pattern_seed,
                       help="data pattern seed (default 0)")

    def add_run_args(p):
        add_sim_args(p)
        p.add_argument("--engine", choices=("fast", "cycle"), default="fast",
                       help="run loop selection (results are identical)")
        p.add_argument("--trace", metavar="FILE",
                       help="write the event trace of every run to FILE")
        p.add_argument("--trace-format", choices=TRACE_FORMATS,
                       default="text", help="trace encoding (default text)")

    p = sub.add_parser("mwr-sweep",
                       help="measure write speed over transfer sizes")
    p.add_argument("--sizes", type=_int_list,
                   default=DEFAULT_MWR_SIZES, metavar="BYTES,...",
                   help="transfer sizes in bytes (default 64..1048576)")
    p.add_argument("--payload-dw", type=int, default=4,
                   help="payload DWORDs per packet (default 4)")
    add_report_args(p)
    add_run_args(p)
    p.set_defaults(func=_cmd_mwr_sweep)

    p = sub.add_parser("mrd-sweep",
                       help="measure read speed over payload sizes")
    p.add_argument("--payloads", type=_int_list,
                   default=DEFAULT_MRD_PAYLOADS, metavar="DW,...",
                   help="payload sizes in DWORDs (default 4..1024)")
    p.add_argument("--size-bytes", type=int, default=65536,
                   help="bytes per run (default 65536)")
    add_report_args(p)
    add_run_args(p)
    p.set_defaults(func=_cmd_mrd_sweep)

    p = sub.add_parser("theory", help="print the closed-form models")
    p.add_argument("--payloads", type=_int_list,
                   default=DEFAULT_THEORY_PAYLOADS, metavar="DW,...",
                   help="payload sizes in DWORDs (default 1..1024)")
    p.add_argument("--overhead-bytes", type=int, default=20,
                   help="per-packet wire overhead (default 20)")
    p.add_argument("--lanes", type=int, default=8,
                   help="link width (default 8)")
    add_report_args(p)
    p.set_defaults(func=_cmd_theory)

    p = sub.add_parser("trace", help="trace one transfer cycle by cycle")
    add_sim_args(p)
    p.add_argument("--mode", choices=("mwr", "mrd"), required=True)
    p.add_argument("--payload-dw", type=int, default=4)
    p.add_argument("--count", type=int, default=4,
                   help="packets per run (default 4)")
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--fault", choices=_FAULTS, default="none",
                   help="inject a fault: suppress-ack stalls the interrupt "
                            "handshake, corrupt flips one payload byte")
    p.add_argument("--format", choices=TRACE_FORMATS, default="text")
    p.add_argument("--out", default="-")
    p.set_defaults(func=_cmd_trace)

    p = sub.add_parser("regmap", help="print the register map")
    p.set_defaults(func=_cmd_regmap)

    return parser


# --- output helpers ---

def _round_sig(value: float) -> float:
    return float(perf.format_sig(value))

def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}")


def _write_bytes(path: str, data: bytes) -> None:
    if path == "-":
        sys.stdout.write(data.decode("utf-8"))
        return
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}")


def _render_cell(value) -> str:
    if isinstance(value, float):
        return perf.format_sig(value)
    return str(value)


def _emit_report(rows: list[dict], columns: tuple[str, ...],
                 fmt: str, out: str) -> None:
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(",".join(columns) + "\n")
        for row in rows:
            buf.write(",".join(_render_cell(row[c]) for c in columns) + "\n")
        _write_text(out, buf.getvalue())
    else:
        payload = {"rows": [{c: row[c] for c in columns} for row in rows]}
        _write_text(out, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _run_marker(kind: str, **detail) -> TraceEvent:
    return TraceEvent(cycle=0, source="host", kind="run",
                      detail={"mode": kind, **detail})


# --- subcommand bodies ---

def _cmd_mwr_sweep(args) -> int:
    _check_payload(args.payload_dw)
    sim_kwargs = _sim_kwargs(args)
    rows = []
    events: list[TraceEvent] = []
    for size in sorted(set(args.sizes)):
        count = _count_for(size, args.payload_dw)
        cfg = _sized_config(size, engine=args.engine,
                            trace=args.trace is not None, **sim_kwargs)
        system = System(cfg)
        result = system.run_mwr(args.payload_dw, count)
        if args.trace is not None:
            events.append(_run_marker("mwr", size_bytes=size,
                                      payload_dw=args.payload_dw, count=count))
            events.extend(system.trace)
        if result.mismatches:
            print(f"integrity mismatch: {result.mismatches} DWORDs at "
                  f"size {size}", file=sys.stderr)
            return EXIT_INTEGRITY
        rows.append({"size_bytes": size, "payload_dw": args.payload_dw,
                     "count": count, "cycles": result.mwr_perf,
                     "v_gbps": _round_sig(result.v_mwr_gbps)})
    _emit_report(rows, _MWR_COLUMNS, args.format, args.out)
    if args.trace is not None:
        _write_bytes(args.trace, emit_trace(events, args.trace_format))
    if args.plot:
        from . import plotting
        plotting.render_mwr_sweep(rows, args.plot)
    return EXIT_OK


def _cmd_mrd_sweep(args) -> int:
    sim_kwargs = _sim_kwargs(args)
    rows = []
    events: list[TraceEvent] = []
    for payload_dw in sorted(set(args.payloads)):
        _check_payload(payload_dw)
        count = _count_for(args.size_bytes, payload_dw)
        cfg = _sized_config(args.size_bytes, engine=args.engine,
                            trace=args.trace is not None, **sim_kwargs)
        system = System(cfg)
        result = system.run_mrd(payload_dw, count)
        if args.trace is not None:
            events.append(_run_marker("mrd", size_bytes=args.size_bytes,
                                      payload_dw=payload_dw, count=count))
            events.extend(system.trace)
        if result.mismatches:
            print(f"integrity mismatch: {result.mismatches} DWORDs at "
                  f"payload {payload_dw}", file=sys.stderr)
            return EXIT_INTEGRITY
        rows.append({"payload_dw": payload_dw, "size_bytes": args.size_bytes,
                     "count": count, "cycles": result.mrd_perf,
                     "v_gbps": _round_sig(result.v_mrd_gbps)})
    _emit_report(rows, _MRD_COLUMNS, args.format, args.out)
    if args.trace is not None:
        _write_bytes(args.trace, emit_trace(events, args.trace_format))
    if args.plot:
        from . import plotting
        plotting.render_mrd_sweep(rows, args.plot)
    return EXIT_OK


def _cmd_theory(args) -> int:
    for payload_dw in args.payloads:
        _check_payload(payload_dw)
    if args.lanes < 1 or args.overhead_bytes < 0:
        raise UsageError("lanes must be >= 1 and overhead-bytes >= 0")
    raw = perf.theory_rows(sorted(set(args.payloads)),
                           overhead_bytes=args.overhead_bytes,
                           lanes=args.lanes)
    rows = [{"payload_dw": r["payload_dw"],
             "payload_bytes": r["payload_bytes"],
             "link_mbps": _round_sig(r["link_mbps"]),
             "stream_eff": _round_sig(r["stream_eff"]),
             "v_gbps": _round_sig(r["v_gbps"])} for r in raw]
    _emit_report(rows, _THEORY_COLUMNS, args.format, args.out)
    if args.plot:
        from . import plotting
        plotting.render_theory(rows, args.plot)
    return EXIT_OK


def _cmd_trace(args) -> int:
    _check_payload(args.payload_dw)
    if args.count < 1 or args.rounds < 1:
        raise UsageError("count and rounds must be at least 1")
    size = 4 * args.payload_dw * args.count
    cfg = _sized_config(size, trace=True, **_sim_kwargs(args))
    system = System(cfg)
    if args.fault == "suppress-ack":
        system.host.suppress_ack = True
    if args.mode == "mwr":
        if args.fault == "corrupt":
            # verify against a shifted seed: every received DWORD mismatches
            system.host.expect_seed ^= 1
        result = system.run_mwr(args.payload_dw, args.count,
                                rounds=args.rounds)
    else:
        system.host.program_mrd(system.config.tx_buffer_base,
                                args.payload_dw, args.count)
        if args.fault == "corrupt":
            base = system.config.tx_buffer_base
            raw = system.host.memory.load(base, 4)
            system.host.memory.store(base, bytes([raw[0] ^ 0xFF]) + raw[1:])
        system.run_until_idle()
        for _ in range(args.rounds - 1):
            system.host.restart_mrd()
            system.run_until_idle()
        result = system.result()
    _write_bytes(args.out, emit_trace(system.trace, args.format))
    if result.mismatches:
        print(f"integrity mismatch: {result.mismatches} DWORDs",
              file=sys.stderr)
        return EXIT_INTEGRITY
    return EXIT_OK


def _cmd_regmap(args) -> int:
    sys.stdout.write(regmap_table())
    return EXIT_OK


# --- entry points ---

def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:      # --help and friends
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, InvalidConfig) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DeadlockDetected as exc:
        print(f"deadlock: {exc}", file=sys.stderr)
        return EXIT_DEADLOCK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
