"""DMA endpoint: the two bus-master FSMs, MSI flow, and the data pattern.

Beat accounting on the 128-bit / 125 MHz datapath (4 DWORDs per beat):

  * a write TLP costs 1 descriptor beat plus ceil(len_dw / 4) data beats,
    and consecutive write TLPs are separated by exactly one dummy beat
    (none after the last), so a run of N TLPs spans
    N * (1 + ceil(len_dw / 4)) + (N - 1) cycles;
  * a completion costs 1 header beat plus ceil(len_dw / 4) data beats on
    the receive side, and only those RX-valid cycles are counted.

The write counter runs from the cycle the start edge is consumed to the
final data beat.  The read counter increments only while completion beats
are draining.  Final values are published to MWR_PERF / MRD_PERF.

The interrupt message is emitted on the cycle after the final data beat
(the output port carries at most one TLP per cycle, so the message cannot
share the final beat's cycle); the engine enters its wait state on that
same cycle once the link has taken the message.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Sequence

import numpy as np

from . import regfile as rf
from .errors import DescriptorInvalid, MsiAlreadyPending, ProtocolViolation
from .tlp import (
    CompletionWithData,
    CplStatus,
    MemRead32,
    MemWrite32,
    MsiMessage,
    Tlp,
    mem_read32,
    mem_write32,
    unpack_dwords,
)
from .trace import TraceEvent

ENDPOINT_ID = 0x0100
TAG_COUNT = 32


class TxState(IntEnum):
    IDLE = 0
    LOAD_DESCRIPTOR = 1
    SEND_DATA = 2
    WAIT_INT_DONE = 3


class RxState(IntEnum):
    IDLE = 0
    ISSUE_MRD = 1
    WAIT_STOP = 2
    GEN_MSI = 3
    WAIT_INT_DONE = 4


_TX_NAMES = {TxState.IDLE: "idle", TxState.LOAD_DESCRIPTOR: "load_descriptor",
             TxState.SEND_DATA: "send_data", TxState.WAIT_INT_DONE: "wait_int_done"}
_RX_NAMES = {RxState.IDLE: "idle", RxState.ISSUE_MRD: "issue_mrd",
             RxState.WAIT_STOP: "wait_stop", RxState.GEN_MSI: "gen_msi",
             RxState.WAIT_INT_DONE: "wait_int_done"}


def generate_pattern(seed: int, offset_dw: int) -> int:
    """Deterministic payload DWORD for a destination offset."""
    return (seed ^ offset_dw) & 0xFFFFFFFF


def pattern_bytes(seed: int, base_offset_dw: int, n_dw: int) -> bytes:
    """Big-endian wire bytes of n_dw consecutive pattern DWORDs."""
    if n_dw <= 0:
        return b""
    arr = np.arange(base_offset_dw, base_offset_dw + n_dw, dtype=np.uint32)
    arr ^= np.uint32(seed & 0xFFFFFFFF)
    return arr.astype(">u4").tobytes()


def verify_pattern(seed: int, base_offset_dw: int,
                   payload: Sequence[int]) -> list[tuple[int, int, int]]:
    """Mismatches as (index, expected, actual); empty when data is intact."""
    out = []
    for i, actual in enumerate(payload):
        expected = generate_pattern(seed, base_offset_dw + i)
        if actual != expected:
            out.append((i, expected, actual))
    return out


@dataclass
class DmaDescriptor:
    """Latched run parameters plus progress."""

    address: int
    payload_len_dw: int
    count: int
    cursor: int = 0

    @property
    def write_pointer(self) -> int:
        return self.address + 4 * self.payload_len_dw * self.cursor


@dataclass
class _ReadContext:
    """Bookkeeping for one outstanding read request tag."""

    base_offset_dw: int       # pattern offset of the request's first DWORD
    remaining_bytes: int      # bytes still owed, across split completions
    received_dw: int = 0


class Endpoint:
    """Transaction-level model of the FPGA side of the link.

    tick() advances exactly one cycle and must be called after the cycle's
    host-phase register writes.  It returns at most one outgoing TLP (the
    output port carries one beat per cycle) plus the trace events the cycle
    produced.  The *_bulk methods are cycle-exact accelerations used by the
    untraced run loop; they touch the same state as tick().
    """

    def __init__(self, regs: rf.RegisterFile, *, pattern_seed: int = 0,
                 dw_per_beat: int = 4, sink=None):
        self.regs = regs
        self.dw_per_beat = dw_per_beat
        self.pattern_seed = pattern_seed & 0xFFFFFFFF
        self.rx_seed = pattern_seed & 0xFFFFFFFF
        self.sink = sink
        self.tx_stall: Callable[[int], bool] | None = None

        self.tx_state = TxState.IDLE
        self.rx_state = RxState.IDLE
        self.tx_desc: DmaDescriptor | None = None
        self.rx_desc: DmaDescriptor | None = None

        self.msi_pending = False
        self.msi_cause: str | None = None
        self.msi_vector = 0

        self.mwr_counter = 0
        self.mrd_counter = 0
        self.mwr_runs = 0
        self.mrd_runs = 0

        # TX stream position
        self._tx_phase: str | None = None      # desc | data | dummy
        self._tx_beat = 0
        self._tx_msi_due = False

        # RX position
        self._outstanding: dict[int, _ReadContext] = {}
        self._next_tag = 0
        self._rx_need_issue = False
        self._rx_drain: tuple[CompletionWithData, int, int] | None = None
        self._rx_msi_due = False
        self._mrd_started = False

        self.mwr_bytes_sent = 0
        self.mrd_bytes_read = 0
        self.rx_mismatches = 0

    # --- trace helpers ---

    def _emit(self, cycle: int, kind: str, detail: dict) -> None:
        if self.sink is not None:
            self.sink("endpoint", kind, detail)

    def _set_tx(self, cycle: int, new: TxState) -> None:
        if new is not self.tx_state:
            self._emit(cycle, "state-change",
                       {"fsm": "tx", "frm": _TX_NAMES[self.tx_state],
                        "to": _TX_NAMES[new]})
            self.tx_state = new

    def _set_rx(self, cycle: int, new: RxState) -> None:
        if new is not self.rx_state:
            self._emit(cycle, "state-change",
                       {"fsm": "rx", "frm": _RX_NAMES[self.rx_state],
                        "to": _RX_NAMES[new]})
            self.rx_state = new

    # --- interrupt flow ---

    def raise_msi(self, cause: str, cycle: int = 0) -> MsiMessage:
        """Latch an interrupt: set the cause bit, mark it pending.

        The caller puts the returned message on the link; the FSM moves to
        its wait state once the link has taken it (same cycle here, the
        link never back-pressures).
        """
        if self.msi_pending:
            raise MsiAlreadyPending(f"{self.msi_cause} interrupt still unacked")
        self.msi_pending = True
        self.msi_cause = cause
        bit = rf.INT_MWR_DONE if cause == "mwr" else rf.INT_MRD_DONE
        status = self.regs.read32(rf.REG_INT_STATUS, rf.Side.ENDPOINT)
        self.regs.write32(rf.REG_INT_STATUS, status | bit, rf.Side.ENDPOINT)
        self._emit(cycle, "msi", {"vector": self.msi_vector, "cause": cause})
        return MsiMessage(vector=self.msi_vector)

    def _ack_msi(self, cycle: int) -> None:
        bit = rf.INT_MWR_DONE if self.msi_cause == "mwr" else rf.INT_MRD_DONE
        status = self.regs.read32(rf.REG_INT_STATUS, rf.Side.ENDPOINT)
        self.regs.write32(rf.REG_INT_STATUS, status & ~bit, rf.Side.ENDPOINT)
        self.msi_pending = False
        self.msi_cause = None

    # --- descriptor latching ---

    def _latch_tx(self, cycle: int) -> None:
        addr = self.regs.read32(rf.REG_MWR_ADDR, rf.Side.ENDPOINT)
        length = self.regs.read32(rf.REG_MWR_LEN, rf.Side.ENDPOINT)
        count = self.regs.read32(rf.REG_MWR_COUNT, rf.Side.ENDPOINT)
        if count < 1 or not 1 <= length <= 1024:
            raise DescriptorInvalid(
                f"write run rejected: len_dw={length} count={count}")
        self.tx_desc = DmaDescriptor(addr, length, count)
        self.mwr_counter = 0
        self._tx_phase = "desc"
        self._tx_beat = 0
        self._emit(cycle, "counter", {"name": "mwr_perf", "action": "start",
                                      "value": 0})

    def _latch_rx(self, cycle: int) -> None:
        addr = self.regs.read32(rf.REG_MRD_ADDR, rf.Side.ENDPOINT)
        length = self.regs.read32(rf.REG_MRD_LEN, rf.Side.ENDPOINT)
        count = self.regs.read32(rf.REG_MRD_COUNT, rf.Side.ENDPOINT)
        if count < 1 or not 1 <= length <= 1024:
            raise DescriptorInvalid(
                f"read run rejected: len_dw={length} count={count}")
        self.rx_desc = DmaDescriptor(addr, length, count)
        self.mrd_counter = 0
        self._mrd_started = False
        self._rx_need_issue = True

    # --- TX beat machinery ---

    def _payload_beats(self, len_dw: int) -> int:
        return -(-len_dw // self.dw_per_beat)

    def _tx_build_tlp(self) -> MemWrite32:
        d = self.tx_desc
        base = d.cursor * d.payload_len_dw
        payload = tuple(generate_pattern(self.pattern_seed, base + j)
                        for j in range(d.payload_len_dw))
        return mem_write32(d.write_pointer, payload, requester_id=ENDPOINT_ID)

    def _tx_step_beat(self, cycle: int) -> Tlp | None:
        """Advance the write stream by one cycle; returns a finished TLP."""
        d = self.tx_desc
        pb = self._payload_beats(d.payload_len_dw)
        if self._tx_phase == "desc":
            self.mwr_counter += 1
            self._emit(cycle, "beat", {"detail": "desc", "dir": "tx",
                                       "tlp": d.cursor})
            self._tx_phase = "data"
            self._tx_beat = 0
            return None
        if self._tx_phase == "data":
            if self.tx_stall is not None and self.tx_stall(cycle):
                self.mwr_counter += 1
                self._emit(cycle, "beat", {"detail": "stall", "dir": "tx"})
                return None
            self.mwr_counter += 1
            self._tx_beat += 1
            detail = {"detail": "data", "dir": "tx", "tlp": d.cursor,
                      "beat": self._tx_beat - 1}
            if self._tx_beat == pb:
                tlp = self._tx_build_tlp()
                detail.update({"sent": "MWr32", "addr": f"{d.write_pointer:#010x}",
                               "len_dw": d.payload_len_dw})
                self._emit(cycle, "beat", detail)
                self.mwr_bytes_sent += 4 * d.payload_len_dw
                d.cursor += 1
                if d.cursor == d.count:
                    self._tx_phase = None
                    self._tx_msi_due = True
                    self.mwr_runs += 1
                    self.regs.write32(rf.REG_MWR_PERF, self.mwr_counter,
                                      rf.Side.ENDPOINT)
                    self._emit(cycle, "counter",
                               {"name": "mwr_perf", "action": "stop",
                                "value": self.mwr_counter})
                else:
                    self._tx_phase = "dummy"
                return tlp
            self._emit(cycle, "beat", detail)
            return None
        # dummy separator between write TLPs
        self.mwr_counter += 1
        self._emit(cycle, "beat", {"detail": "dummy", "dir": "tx"})
        self._tx_phase = "desc"
        return None

    # --- RX beat machinery ---

    def rx_can_accept(self) -> bool:
        """True when a new completion stream may start this cycle."""
        return self._rx_drain is None

    def _rx_begin(self, cpl: Tlp, cycle: int) -> None:
        if not isinstance(cpl, CompletionWithData):
            raise ProtocolViolation(f"endpoint cannot consume {type(cpl).__name__}")
        if self._rx_drain is not None:
            raise ProtocolViolation("completion arrived while one was draining")
        h = cpl.header
        if h.tag not in self._outstanding:
            raise ProtocolViolation(f"completion for unknown tag {h.tag}")
        if h.status is not CplStatus.SUCCESS:
            raise ProtocolViolation(f"completion status {h.status.name}")
        ctx = self._outstanding[h.tag]
        if 4 * h.length_dw > ctx.remaining_bytes:
            raise ProtocolViolation(
                f"tag {h.tag} over-delivers: {4 * h.length_dw} bytes, "
                f"{ctx.remaining_bytes} owed")
        # header beat lands on the arrival cycle
        if not self._mrd_started:
            self._mrd_started = True
            self._emit(cycle, "counter", {"name": "mrd_perf", "action": "start",
                                          "value": 0})
        self.mrd_counter += 1
        self._emit(cycle, "beat", {"detail": "cpl-hdr", "dir": "rx", "tag": h.tag})
        self._rx_drain = (cpl, self._payload_beats(h.length_dw), 0)

    def _rx_drain_beat(self, cycle: int) -> None:
        cpl, beats, done = self._rx_drain
        self.mrd_counter += 1
        done += 1
        detail = {"detail": "cpl-data", "dir": "rx", "tag": cpl.header.tag,
                  "beat": done - 1}
        if done < beats:
            self._emit(cycle, "beat", detail)
            self._rx_drain = (cpl, beats, done)
            return
        # final beat: verify and retire
        ctx = self._outstanding[cpl.header.tag]
        mismatches = verify_pattern(self.rx_seed,
                                    ctx.base_offset_dw + ctx.received_dw,
                                    cpl.payload)
        self.rx_mismatches += len(mismatches)
        n_dw = cpl.header.length_dw
        ctx.received_dw += n_dw
        ctx.remaining_bytes -= 4 * n_dw
        self.mrd_bytes_read += 4 * n_dw
        detail.update({"verified_dw": n_dw, "mismatches": len(mismatches)})
        self._emit(cycle, "beat", detail)
        self._rx_drain = None
        if ctx.remaining_bytes == 0:
            del self._outstanding[cpl.header.tag]
            d = self.rx_desc
            d.cursor += 1
            if d.cursor == d.count:
                self.mrd_runs += 1
                self.regs.write32(rf.REG_MRD_PERF, self.mrd_counter,
                                  rf.Side.ENDPOINT)
                self._emit(cycle, "counter",
                           {"name": "mrd_perf", "action": "stop",
                            "value": self.mrd_counter})
                self._rx_msi_due = True
                self._set_rx(cycle, RxState.GEN_MSI)
            else:
                self._rx_need_issue = True

    def _rx_issue(self, cycle: int) -> MemRead32:
        d = self.rx_desc
        tag = self._next_tag
        self._next_tag = (self._next_tag + 1) % TAG_COUNT
        addr = d.address + 4 * d.payload_len_dw * d.cursor
        self._outstanding[tag] = _ReadContext(
            base_offset_dw=d.cursor * d.payload_len_dw,
            remaining_bytes=4 * d.payload_len_dw)
        self._rx_need_issue = False
        self._emit(cycle, "beat", {"detail": "mrd-req", "dir": "tx", "tag": tag,
                                   "addr": f"{addr:#010x}",
                                   "len_dw": d.payload_len_dw})
        return mem_read32(addr, d.payload_len_dw, tag=tag,
                          requester_id=ENDPOINT_ID)

    # --- the cycle ---

    def tick(self, cycle: int, rx_in: Tlp | None = None
             ) -> tuple[Tlp | None, list[TraceEvent]]:
        """Advance one cycle; returns (outgoing TLP or None, trace events).

        Order inside the cycle: completion drain, write engine, read
        engine.  The write engine owns the output port when both want it.
        """
        events: list[TraceEvent] = []
        outer_sink = self.sink
        if outer_sink is not None:
            def both(source, kind, detail):
                events.append(TraceEvent(cycle, source, kind, detail))
                outer_sink(source, kind, detail)
            self.sink = both
        try:
            out = self._tick_inner(cycle, rx_in)
        finally:
            self.sink = outer_sink
        return out, events

    def _tick_inner(self, cycle: int, rx_in: Tlp | None) -> Tlp | None:
        out: Tlp | None = None
        rx0 = self.rx_state    # one read-FSM transition per cycle, from here

        # completion drain has its own direction; it never blocks TX
        drained = False
        if rx_in is not None:
            self._rx_begin(rx_in, cycle)
            drained = True
        elif self._rx_drain is not None:
            self._rx_drain_beat(cycle)
            drained = True

        # write engine
        if self.tx_state is TxState.IDLE:
            if self.regs.consume_edge(rf.EdgeKind.MWR_START):
                self._latch_tx(cycle)
                self._set_tx(cycle, TxState.LOAD_DESCRIPTOR)
                out = self._tx_step_beat(cycle)
        elif self.tx_state in (TxState.LOAD_DESCRIPTOR, TxState.SEND_DATA):
            if self.tx_state is TxState.LOAD_DESCRIPTOR:
                self._set_tx(cycle, TxState.SEND_DATA)
            if self._tx_msi_due:
                if not self.msi_pending:
                    out = self.raise_msi("mwr", cycle)
                    self._tx_msi_due = False
                    self._set_tx(cycle, TxState.WAIT_INT_DONE)
            else:
                out = self._tx_step_beat(cycle)
        elif self.tx_state is TxState.WAIT_INT_DONE:
            if (self.msi_pending and self.msi_cause == "mwr"
                    and self.regs.consume_edge(rf.EdgeKind.INT_ACK)):
                self._ack_msi(cycle)
                self._set_tx(cycle, TxState.IDLE)

        # read engine, acting on the entry-time state
        if rx0 is RxState.IDLE:
            if self.regs.consume_edge(rf.EdgeKind.MRD_START):
                self._latch_rx(cycle)
                self._set_rx(cycle, RxState.ISSUE_MRD)
                if out is None:
                    out = self._rx_issue(cycle)
        elif rx0 is RxState.ISSUE_MRD:
            if self._rx_need_issue and out is None and not drained:
                out = self._rx_issue(cycle)
        elif rx0 is RxState.GEN_MSI:
            if self._rx_msi_due and not self.msi_pending and out is None:
                out = self.raise_msi("mrd", cycle)
                self._rx_msi_due = False
                self._set_rx(cycle, RxState.WAIT_INT_DONE)
        elif rx0 is RxState.WAIT_INT_DONE:
            if (self.msi_pending and self.msi_cause == "mrd"
                    and self.regs.consume_edge(rf.EdgeKind.INT_ACK)):
                self._ack_msi(cycle)
                self._set_rx(cycle, RxState.WAIT_STOP)
        elif rx0 is RxState.WAIT_STOP:
            if self.regs.consume_edge(rf.EdgeKind.MRD_STOP):
                self.rx_seed = (self.rx_seed + 1) & 0xFFFFFFFF
                self.rx_desc = None
                self._set_rx(cycle, RxState.IDLE)

        return out

    # --- quiescence and scheduling queries for the run loop ---

    def idle(self) -> bool:
        return (self.tx_state is TxState.IDLE and self.rx_state is RxState.IDLE
                and not self.msi_pending and not self._outstanding
                and self._rx_drain is None and not self._tx_msi_due
                and not self._rx_msi_due)

    def tx_streaming(self) -> bool:
        return self._tx_phase is not None

    def wants_tick(self) -> bool:
        """True when the next cycle would make progress without host input."""
        if self._rx_drain is not None or self._tx_msi_due or self._rx_msi_due:
            return True
        if self._tx_phase is not None:
            return True
        if self._rx_need_issue:
            return True
        pending = self.regs.pending_edges()
        if not pending:
            return False
        if rf.EdgeKind.MWR_START in pending and self.tx_state is TxState.IDLE:
            return True
        if rf.EdgeKind.MRD_START in pending and self.rx_state is RxState.IDLE:
            return True
        if rf.EdgeKind.INT_ACK in pending and self.msi_pending:
            return True
        if (rf.EdgeKind.MRD_STOP in pending
                and self.rx_state is RxState.WAIT_STOP):
            return True
        return False

    # --- bulk accelerations (cycle-exact, used by untraced runs) ---

    def tx_stream_bulk(self, cycle: int, window: int | None
                       ) -> tuple[int, tuple[int, bytes] | None]:
        """Advance the write stream up to window cycles in one call.

        Returns (cycles consumed, (base address, wire bytes) for the TLPs
        finished in the window or None).  Falls back to zero-progress when
        less than one full TLP slot fits; the caller then single-steps.
        """
        assert self.tx_stall is None
        if self._tx_phase != "desc" or self.tx_desc is None:
            return 0, None
        d = self.tx_desc
        pb = self._payload_beats(d.payload_len_dw)
        remaining = d.count - d.cursor
        full_cost = remaining * (1 + pb) + (remaining - 1)
        if window is None or window >= full_cost:
            m, cost, last = remaining, full_cost, True
        else:
            m = min(window // (2 + pb), remaining)
            if m == remaining:
                cost, last = full_cost, True
            else:
                cost, last = m * (2 + pb), False
            if m == 0:
                return 0, None

        self._set_tx(cycle, TxState.SEND_DATA)
        base = d.write_pointer
        start_dw = d.cursor * d.payload_len_dw
        n_dw = m * d.payload_len_dw
        data = pattern_bytes(self.pattern_seed, start_dw, n_dw)
        d.cursor += m
        self.mwr_counter += cost
        self.mwr_bytes_sent += 4 * n_dw
        if last:
            self._tx_phase = None
            self._tx_msi_due = True
            self.mwr_runs += 1
            self.regs.write32(rf.REG_MWR_PERF, self.mwr_counter, rf.Side.ENDPOINT)
        return cost, (base, data)

    def rx_drain_bulk(self, cpl: Tlp, cycle: int) -> int:
        """Consume a whole completion stream; returns the cycles it spans."""
        self._rx_begin(cpl, cycle)
        beats = self._rx_drain[1]
        for _ in range(beats):
            self._rx_drain_beat(cycle)
        return 1 + beats
