"""System assembly and the cycle loop.

One simulated cycle is one 8 ns clock of the 128-bit datapath.  Each cycle
runs three phases in a fixed order:

  1. host phase: the ISR timer is checked (and the ISR runs to completion
     inside this phase, its register writes landing immediately), then at
     most one due completion is released toward the endpoint, oldest first,
     and only if the endpoint can accept it;
  2. endpoint phase: both engine FSMs advance one cycle, consuming the
     completion released in phase 1 and producing at most one outgoing TLP;
  3. link phase: the outgoing TLP is delivered to the host.  Delivery is
     same-cycle; the request-to-completion latency is modeled entirely by
     the host's completion delay.

Two run loops produce identical results.  The per-cycle loop executes the
phases literally and is used whenever tracing is on, a stall hook is
installed, both DMA directions are active at once, or the configuration
asks for it.  The fast loop advances the write stream in closed form at
TLP boundaries, drains whole completions atomically, and jumps over
latency gaps; every counter, seed, and register it touches ends up exactly
as the per-cycle loop would leave it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import regfile as rf
from .endpoint import Endpoint, RxState, TxState, _RX_NAMES, _TX_NAMES
from .errors import DeadlockDetected, Halted, InvalidConfig
from .host import BUFFER_BYTES, Host, RX_BUFFER_BASE, TX_BUFFER_BASE
from .tlp import (
    CompletionWithData,
    MemRead32,
    MemWrite32,
    MsiMessage,
    OverheadConfig,
    Tlp,
)
from .trace import TraceEvent

_LANE_COUNTS = (1, 2, 4, 8, 16, 32)
_ENGINES = ("fast", "cycle")
_TLP_NAMES = {MemWrite32: "mwr32", MemRead32: "mrd32",
              CompletionWithData: "cpld", MsiMessage: "msi"}


@dataclass
class SimConfig:
    """Knobs for one system instance.  Defaults mirror the hardware."""

    lanes: int = 8
    generation: str = "gen1"
    clock_period_ns: float = 8.0
    beat_bytes: int = 16
    cpl_latency_cycles: int = 64
    isr_latency_cycles: int = 32
    overhead: OverheadConfig = field(default_factory=OverheadConfig)
    max_cycles: int = 200_000_000
    trace: bool = False
    pattern_seed: int = 0
    rx_buffer_base: int = RX_BUFFER_BASE
    tx_buffer_base: int = TX_BUFFER_BASE
    buffer_bytes: int = BUFFER_BYTES
    split_completions: bool = False
    engine: str = "fast"

    def validate(self) -> None:
        if self.lanes not in _LANE_COUNTS:
            raise InvalidConfig(f"lanes must be one of {_LANE_COUNTS}")
        if self.generation != "gen1":
            raise InvalidConfig("only generation 'gen1' is modeled")
        if self.clock_period_ns <= 0:
            raise InvalidConfig("clock_period_ns must be positive")
        if self.beat_bytes <= 0 or self.beat_bytes % 4:
            raise InvalidConfig("beat_bytes must be a positive multiple of 4")
        if self.cpl_latency_cycles < 0 or self.isr_latency_cycles < 0:
            raise InvalidConfig("latencies cannot be negative")
        if self.max_cycles < 1:
            raise InvalidConfig("max_cycles must be at least 1")
        if self.buffer_bytes < 4 or self.buffer_bytes % 4:
            raise InvalidConfig("buffer_bytes must be a positive multiple of 4")
        if self.engine not in _ENGINES:
            raise InvalidConfig(f"engine must be one of {_ENGINES}")
        lo, hi = sorted((self.rx_buffer_base, self.tx_buffer_base))
        if lo + self.buffer_bytes > hi:
            raise InvalidConfig(
                f"{self.buffer_bytes}-byte buffers overlap: bases are "
                f"{hi - lo} bytes apart")

    def conformance_notes(self) -> list[str]:
        """Deviations from the modeled hardware, worth surfacing in reports."""
        notes = []
        if self.lanes != 8:
            notes.append(f"lanes={self.lanes}: datapath timing is calibrated "
                         "for the x8 link; cycle counts do not rescale")
        if self.beat_bytes != 16:
            notes.append(f"beat_bytes={self.beat_bytes}: the reference "
                         "datapath moves 16 bytes per clock")
        if self.clock_period_ns != 8.0:
            notes.append(f"clock_period_ns={self.clock_period_ns}: the "
                         "reference user clock runs at 8 ns")
        return notes


@dataclass
class RunResult:
    """Final counters of one run (or one batch of rounds)."""

    total_cycles: int
    mwr_perf: int
    mrd_perf: int
    bytes_written: int
    bytes_read: int
    v_mwr_gbps: float
    v_mrd_gbps: float
    mwr_interrupts: int
    mrd_interrupts: int
    mismatches: int

    def to_json_dict(self) -> dict:
        return {
            "total_cycles": self.total_cycles,
            "mwr_perf": self.mwr_perf,
            "mrd_perf": self.mrd_perf,
            "bytes_written": self.bytes_written,
            "bytes_read": self.bytes_read,
            "v_mwr_gbps": self.v_mwr_gbps,
            "v_mrd_gbps": self.v_mrd_gbps,
            "interrupts": {"mwr": self.mwr_interrupts,
                           "mrd": self.mrd_interrupts},
            "mismatches": self.mismatches,
        }


class System:
    """A register file, an endpoint, and a host on a zero-latency link."""

    def __init__(self, config: SimConfig | None = None):
        self.config = config or SimConfig()
        self.config.validate()
        cfg = self.config
        self.clock = 0
        self.trace: list[TraceEvent] = []
        sink = self._sink if cfg.trace else None
        self.regs = rf.RegisterFile(sink=sink)
        self.endpoint = Endpoint(self.regs, pattern_seed=cfg.pattern_seed,
                                 dw_per_beat=cfg.beat_bytes // 4, sink=sink)
        self.host = Host(self.regs,
                         cpl_latency_cycles=cfg.cpl_latency_cycles,
                         isr_latency_cycles=cfg.isr_latency_cycles,
                         rx_buffer_base=cfg.rx_buffer_base,
                         tx_buffer_base=cfg.tx_buffer_base,
                         buffer_bytes=cfg.buffer_bytes,
                         expect_seed=cfg.pattern_seed,
                         split_completions=cfg.split_completions,
                         sink=sink)

    def _sink(self, source: str, kind: str, detail: dict) -> None:
        self.trace.append(TraceEvent(self.clock, source, kind, detail))

    # --- the three phases ---

    def step(self) -> None:
        """Advance exactly one cycle."""
        if self.clock >= self.config.max_cycles:
            raise Halted(f"cycle budget of {self.config.max_cycles} exhausted")
        cpl = self.host.tick_host(self.clock,
                                  rx_ready=self.endpoint.rx_can_accept())
        if self.host.servicing:
            self.host.service_interrupt()
        out, _ = self.endpoint.tick(self.clock, rx_in=cpl)
        if out is not None:
            self._deliver(out)
        self.clock += 1

    def _deliver(self, tlp: Tlp) -> None:
        if self.config.trace:
            self._sink("link", "beat",
                       {"detail": "deliver", "tlp": _TLP_NAMES[type(tlp)]})
        self.host.handle_tlp(tlp, self.clock)

    # --- quiescence and diagnostics ---

    def quiescent(self) -> bool:
        return (self.endpoint.idle() and self.host.quiet()
                and not self.regs.pending_edges())

    def _stuck_diagnosis(self) -> str:
        ep = self.endpoint
        edges = ",".join(sorted(k.name.lower() for k in self.regs.pending_edges()))
        return (f"no progress possible at cycle {self.clock}: "
                f"tx={_TX_NAMES[ep.tx_state]} rx={_RX_NAMES[ep.rx_state]} "
                f"msi_pending={ep.msi_pending} "
                f"outstanding_tags={len(ep._outstanding)} "
                f"pending_edges=[{edges}] host_quiet={self.host.quiet()}")

    def _tx_engaged(self) -> bool:
        ep = self.endpoint
        return (ep.tx_state is not TxState.IDLE or ep.tx_streaming()
                or ep._tx_msi_due
                or self.regs.edge_pending(rf.EdgeKind.MWR_START))

    def _rx_engaged(self) -> bool:
        ep = self.endpoint
        return (ep.rx_state is not RxState.IDLE or ep._rx_drain is not None
                or self.regs.edge_pending(rf.EdgeKind.MRD_START))

    # --- run loops ---

    def run_until_idle(self) -> None:
        """Advance until nothing in the system can make further progress."""
        if (self.config.trace or self.config.engine == "cycle"
                or self.endpoint.tx_stall is not None):
            self._run_cycle(downgraded=False)
        else:
            self._run_fast()

    def _skip_gap(self) -> bool:
        """Jump over cycles in which nothing can happen.  False = stuck."""
        ne = self.host.next_event_cycle()
        if ne is None:
            return False
        if ne > self.clock:
            self.clock = ne    # step() still enforces the cycle budget
        return True

    def _run_cycle(self, downgraded: bool) -> None:
        ep = self.endpoint
        while not self.quiescent():
            if not downgraded and not (self._tx_engaged() and self._rx_engaged()):
                # the concurrent pressure is over; the fast loop may resume
                if (not self.config.trace and self.config.engine == "fast"
                        and ep.tx_stall is None):
                    self._run_fast()
                    return
            if not ep.wants_tick() and not self._skip_gap():
                raise DeadlockDetected(self._stuck_diagnosis())
            self.step()

    def _run_fast(self) -> None:
        cfg = self.config
        ep = self.endpoint
        host = self.host
        while not self.quiescent():
            if self.clock >= cfg.max_cycles:
                raise Halted(f"cycle budget of {cfg.max_cycles} exhausted")
            if self._tx_engaged() and self._rx_engaged():
                # concurrent runs interleave on the shared port; step exactly
                self._run_cycle(downgraded=True)
                return
            cpl = host.tick_host(self.clock, rx_ready=ep.rx_can_accept())
            if host.servicing:
                host.service_interrupt()
            if cpl is not None:
                self.clock += ep.rx_drain_bulk(cpl, self.clock)
                continue
            if ep.tx_streaming():
                cost, blob = ep.tx_stream_bulk(self.clock, None)
                if cost:
                    if blob is not None:
                        host.bulk_store(blob[0], blob[1], self.clock)
                    self.clock += cost
                    continue
                # mid-TLP (first TLP after the start edge): single-step
            if ep.wants_tick():
                out, _ = ep.tick(self.clock, None)
                if out is not None:
                    self._deliver(out)
                self.clock += 1
                continue
            if not self._skip_gap():
                raise DeadlockDetected(self._stuck_diagnosis())

    # --- driver-level orchestration ---

    def run_mwr(self, len_dw: int, count: int, rounds: int = 1,
                address: int | None = None) -> RunResult:
        """Run `rounds` back-to-back write runs and return the counters."""
        addr = self.config.rx_buffer_base if address is None else address
        self.host.program_mwr(addr, len_dw, count)
        self.run_until_idle()
        for _ in range(rounds - 1):
            self.host.restart_mwr()
            self.run_until_idle()
        return self.result()

    def run_mrd(self, len_dw: int, count: int, rounds: int = 1,
                address: int | None = None) -> RunResult:
        """Run `rounds` back-to-back read runs and return the counters."""
        addr = self.config.tx_buffer_base if address is None else address
        self.host.program_mrd(addr, len_dw, count)
        self.run_until_idle()
        for _ in range(rounds - 1):
            self.host.restart_mrd()
            self.run_until_idle()
        return self.result()

    def result(self) -> RunResult:
        ep = self.endpoint
        stats = self.host.stats
        period = self.config.clock_period_ns
        mwr_perf = self.regs.read32(rf.REG_MWR_PERF)
        mrd_perf = self.regs.read32(rf.REG_MRD_PERF)
        v_mwr = v_mrd = 0.0
        if mwr_perf and self.host.last_mwr is not None:
            v_mwr = self.host.last_mwr.total_bytes / (period * mwr_perf)
        if mrd_perf and self.host.last_mrd is not None:
            v_mrd = self.host.last_mrd.total_bytes / (period * mrd_perf)
        return RunResult(
            total_cycles=self.clock,
            mwr_perf=mwr_perf,
            mrd_perf=mrd_perf,
            bytes_written=ep.mwr_bytes_sent,
            bytes_read=ep.mrd_bytes_read,
            v_mwr_gbps=v_mwr,
            v_mrd_gbps=v_mrd,
            mwr_interrupts=stats.mwr_interrupts,
            mrd_interrupts=stats.mrd_interrupts,
            mismatches=ep.rx_mismatches + stats.mismatches,
        )


def build_system(config: SimConfig | None = None) -> System:
    return System(config)
