"""Host-side model: buffers, programmed I/O, completions, and the ISR.

The driver owns two disjoint DMA buffers (receive for endpoint writes,
transmit for endpoint reads) plus a shadow area the ISR copies verified
data into.  Memory reads are answered with completions released after a
fixed latency, one stream per cycle and only while the endpoint can take
one.  An interrupt message arms the ISR, which runs after its own latency:

  * write-done: copy the written range to the shadow buffer, verify it
    against the expected pattern, then ack the interrupt;
  * read-done: refill the transmit buffer with the next pattern seed, ack
    the interrupt, then release the read engine with a stop command.

Programmed I/O register writes are direct calls with zero link cost; they
land in the host phase of the current cycle.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from . import regfile as rf
from .endpoint import pattern_bytes
from .errors import (
    AddressUnmapped,
    BadDescriptor,
    RangeOutsideBuffer,
    SpuriousInterrupt,
    UnexpectedTlpType,
)
from .tlp import (
    CompletionWithData,
    CplHeader,
    CplStatus,
    MemRead32,
    MemWrite32,
    MsiMessage,
    Tlp,
    pack_dwords,
    unpack_dwords,
)

HOST_ID = 0x0000
BUFFER_BYTES = 262144            # 2 Mbit per direction
RX_BUFFER_BASE = 0x80000000
TX_BUFFER_BASE = 0x80100000
SPLIT_BOUNDARY = 64              # read-completion split granularity


class IsrState(Enum):
    IDLE = "idle"
    SERVICING = "servicing"


@dataclass
class HostStats:
    mwr_interrupts: int = 0
    mrd_interrupts: int = 0
    bytes_stored: int = 0
    bytes_checked: int = 0
    bytes_completed: int = 0
    mismatches: int = 0
    acks: int = 0


@dataclass
class _Region:
    name: str
    base: int
    data: bytearray

    def contains(self, addr: int, n: int) -> bool:
        return self.base <= addr and addr + n <= self.base + len(self.data)


class HostMemory:
    """Named, disjoint, byte-addressable DMA regions."""

    def __init__(self):
        self._regions: list[_Region] = []

    def declare(self, name: str, base: int, size: int) -> None:
        for r in self._regions:
            if base < r.base + len(r.data) and r.base < base + size:
                raise BadDescriptor(f"region {name} overlaps {r.name}")
        self._regions.append(_Region(name, base, bytearray(size)))

    def region(self, name: str) -> _Region:
        for r in self._regions:
            if r.name == name:
                return r
        raise KeyError(name)

    def _locate(self, addr: int, n: int) -> _Region:
        for r in self._regions:
            if r.contains(addr, n):
                return r
        raise AddressUnmapped(f"[{addr:#010x}, +{n}) is outside every region")

    def store(self, addr: int, data: bytes) -> None:
        r = self._locate(addr, len(data))
        off = addr - r.base
        r.data[off:off + len(data)] = data

    def load(self, addr: int, n: int) -> bytes:
        r = self._locate(addr, n)
        off = addr - r.base
        return bytes(r.data[off:off + n])


@dataclass
class _ProgrammedRun:
    address: int
    payload_len_dw: int
    count: int

    @property
    def total_bytes(self) -> int:
        return 4 * self.payload_len_dw * self.count


class Host:
    """Driver model around the register file."""

    def __init__(self, regs: rf.RegisterFile, *,
                 cpl_latency_cycles: int = 64, isr_latency_cycles: int = 32,
                 rx_buffer_base: int = RX_BUFFER_BASE,
                 tx_buffer_base: int = TX_BUFFER_BASE,
                 buffer_bytes: int = BUFFER_BYTES,
                 expect_seed: int = 0, split_completions: bool = False,
                 sink=None):
        self.regs = regs
        self.cpl_latency = cpl_latency_cycles
        self.isr_latency = isr_latency_cycles
        self.split_completions = split_completions
        self.memory = HostMemory()
        self.rx_base = rx_buffer_base
        self.tx_base = tx_buffer_base
        self.buffer_bytes = buffer_bytes
        self.shadow = bytearray(buffer_bytes)
        self.expect_seed = expect_seed & 0xFFFFFFFF
        self.mrd_seed = expect_seed & 0xFFFFFFFF
        self.sink = sink

        self.isr_state = IsrState.IDLE
        self._isr_due: int | None = None
        self._pending_cpl: deque[tuple[int, CompletionWithData]] = deque()
        self.last_mwr: _ProgrammedRun | None = None
        self.last_mrd: _ProgrammedRun | None = None
        self.stats = HostStats()
        self.suppress_ack = False        # fault-injection hook
        self.attached = False
        self.attach()

    def attach(self) -> None:
        """One-shot lifecycle step: allocate buffers, install the ISR."""
        if self.attached:
            return
        self.memory.declare("rx_buffer", self.rx_base, self.buffer_bytes)
        self.memory.declare("tx_buffer", self.tx_base, self.buffer_bytes)
        self.attached = True

    def _emit(self, kind: str, detail: dict) -> None:
        if self.sink is not None:
            self.sink("host", kind, detail)

    # --- programmed I/O ---

    def _check_run(self, region_base: int, addr: int, len_dw: int,
                   count: int) -> _ProgrammedRun:
        if not 1 <= len_dw <= 1024 or count < 1:
            raise BadDescriptor(f"len_dw={len_dw} count={count}")
        if addr & 0x3:
            raise BadDescriptor(f"address {addr:#x} not DWORD aligned")
        run = _ProgrammedRun(addr, len_dw, count)
        if not (region_base <= addr
                and addr + run.total_bytes <= region_base + self.buffer_bytes):
            raise RangeOutsideBuffer(
                f"[{addr:#010x}, +{run.total_bytes}) outside the "
                f"{self.buffer_bytes}-byte buffer at {region_base:#010x}")
        return run

    def program_mwr(self, addr: int, len_dw: int, count: int) -> list[rf.WriteEffect]:
        """Write the descriptor registers and trigger a write run."""
        run = self._check_run(self.rx_base, addr, len_dw, count)
        self.last_mwr = run
        return [
            self.regs.write32(rf.REG_MWR_ADDR, addr),
            self.regs.write32(rf.REG_MWR_LEN, len_dw),
            self.regs.write32(rf.REG_MWR_COUNT, count),
            self.regs.write32(rf.REG_INIT, 1),
            self.regs.write32(rf.REG_MWR_START, 1),
        ]

    def program_mrd(self, addr: int, len_dw: int, count: int,
                    seed: int | None = None) -> list[rf.WriteEffect]:
        """Fill the transmit buffer with the pattern and trigger a read run."""
        run = self._check_run(self.tx_base, addr, len_dw, count)
        if seed is not None:
            self.mrd_seed = seed & 0xFFFFFFFF
        self.last_mrd = run
        self.memory.store(addr, pattern_bytes(self.mrd_seed, 0,
                                              len_dw * count))
        return [
            self.regs.write32(rf.REG_MRD_ADDR, addr),
            self.regs.write32(rf.REG_MRD_LEN, len_dw),
            self.regs.write32(rf.REG_MRD_COUNT, count),
            self.regs.write32(rf.REG_INIT, 1),
            self.regs.write32(rf.REG_MRD_START, 1),
        ]

    def restart_mwr(self) -> rf.WriteEffect:
        """Re-trigger the last write run without touching the descriptor."""
        return self.regs.write32(rf.REG_MWR_START, 1)

    def restart_mrd(self) -> rf.WriteEffect:
        """Re-trigger the last read run; the ISR already refilled the buffer."""
        return self.regs.write32(rf.REG_MRD_START, 1)

    # --- link-facing side ---

    def handle_tlp(self, tlp: Tlp, now: int) -> None:
        """Consume one TLP delivered from the endpoint this cycle."""
        if isinstance(tlp, MemWrite32):
            self.memory.store(tlp.header.address, pack_dwords(tlp.payload))
            self.stats.bytes_stored += 4 * len(tlp.payload)
            return
        if isinstance(tlp, MemRead32):
            self._queue_completions(tlp, now)
            return
        if isinstance(tlp, MsiMessage):
            self._isr_due = now + self.isr_latency
            return
        raise UnexpectedTlpType(f"host cannot consume {type(tlp).__name__}")

    def bulk_store(self, addr: int, data: bytes, now: int) -> None:
        """Store a contiguous span of write-TLP payloads in one call."""
        self.memory.store(addr, data)
        self.stats.bytes_stored += len(data)

    def _queue_completions(self, req: MemRead32, now: int) -> None:
        h = req.header
        total = 4 * h.length_dw
        data = self.memory.load(h.address, total)
        release = now + self.cpl_latency
        if not self.split_completions:
            cpl = CompletionWithData(
                header=CplHeader(
                    completer_id=HOST_ID, status=CplStatus.SUCCESS,
                    byte_count=total, requester_id=h.requester_id, tag=h.tag,
                    lower_address=h.address & 0x7F, length_dw=h.length_dw),
                payload=unpack_dwords(data))
            self._pending_cpl.append((release, cpl))
            self.stats.bytes_completed += total
            return
        # split at read-completion boundaries; byte_count counts down
        sent = 0
        while sent < total:
            addr = h.address + sent
            chunk = min(total - sent, SPLIT_BOUNDARY - addr % SPLIT_BOUNDARY)
            cpl = CompletionWithData(
                header=CplHeader(
                    completer_id=HOST_ID, status=CplStatus.SUCCESS,
                    byte_count=total - sent, requester_id=h.requester_id,
                    tag=h.tag, lower_address=addr & 0x7F,
                    length_dw=chunk // 4),
                payload=unpack_dwords(data[sent:sent + chunk]))
            self._pending_cpl.append((release, cpl))
            sent += chunk
        self.stats.bytes_completed += total

    def tick_host(self, now: int, rx_ready: bool = True
                  ) -> CompletionWithData | None:
        """Host phase of one cycle.

        Promotes the ISR when its latency has elapsed and releases at most
        one due completion stream, oldest first, when the endpoint can
        accept one.
        """
        if self._isr_due is not None and now >= self._isr_due:
            self._isr_due = None
            self.isr_state = IsrState.SERVICING
            self._emit("state-change", {"fsm": "isr", "frm": "idle",
                                        "to": "servicing"})
        if rx_ready and self._pending_cpl and self._pending_cpl[0][0] <= now:
            _, cpl = self._pending_cpl.popleft()
            self._emit("beat", {"detail": "cpl-release", "tag": cpl.header.tag,
                                "len_dw": cpl.header.length_dw})
            return cpl
        return None

    @property
    def servicing(self) -> bool:
        return self.isr_state is IsrState.SERVICING

    def next_event_cycle(self) -> int | None:
        """Earliest future cycle at which the host will act on its own."""
        candidates = []
        if self._isr_due is not None:
            candidates.append(self._isr_due)
        if self._pending_cpl:
            candidates.append(self._pending_cpl[0][0])
        return min(candidates) if candidates else None

    def quiet(self) -> bool:
        return (self.isr_state is IsrState.IDLE and self._isr_due is None
                and not self._pending_cpl)

    # --- interrupt service routine ---

    def service_interrupt(self) -> list[str]:
        """Run the ISR for whichever cause bits are set.

        Write-done verifies the received range against the expected pattern
        through a shadow copy and acks.  Read-done refills the transmit
        buffer with the next seed, acks, then stops the read engine.
        """
        if self.isr_state is not IsrState.SERVICING:
            raise SpuriousInterrupt("ISR entered without a pending interrupt")
        status = self.regs.read32(rf.REG_INT_STATUS)
        if status == 0:
            self.isr_state = IsrState.IDLE
            self._emit("state-change", {"fsm": "isr", "frm": "servicing",
                                        "to": "idle"})
            raise SpuriousInterrupt("INT_STATUS empty at service time")
        actions: list[str] = []
        if status & rf.INT_MWR_DONE:
            actions.extend(self._service_mwr_done())
        if status & rf.INT_MRD_DONE:
            actions.extend(self._service_mrd_done())
        self.isr_state = IsrState.IDLE
        self._emit("state-change", {"fsm": "isr", "frm": "servicing",
                                    "to": "idle"})
        return actions

    def _service_mwr_done(self) -> list[str]:
        run = self.last_mwr
        if run is None:
            raise SpuriousInterrupt("write-done interrupt with no programmed run")
        self.stats.mwr_interrupts += 1
        data = self.memory.load(run.address, run.total_bytes)
        off = run.address - self.rx_base
        self.shadow[off:off + len(data)] = data
        expected = pattern_bytes(self.expect_seed, 0,
                                 run.payload_len_dw * run.count)
        mismatches = self._count_mismatches(data, expected)
        self.stats.bytes_checked += len(data)
        self.stats.mismatches += mismatches
        actions = [f"verified {len(data)} bytes, {mismatches} mismatches"]
        self._emit("isr", {"cause": "mwr", "verified": len(data),
                           "mismatches": mismatches})
        if not self.suppress_ack:
            self.regs.write32(rf.REG_INT_ACK, 1)
            self.stats.acks += 1
            actions.append("int_ack")
        return actions

    def _service_mrd_done(self) -> list[str]:
        run = self.last_mrd
        if run is None:
            raise SpuriousInterrupt("read-done interrupt with no programmed run")
        self.stats.mrd_interrupts += 1
        self.mrd_seed = (self.mrd_seed + 1) & 0xFFFFFFFF
        self.memory.store(run.address,
                          pattern_bytes(self.mrd_seed, 0,
                                        run.payload_len_dw * run.count))
        actions = [f"refilled {run.total_bytes} bytes with seed {self.mrd_seed}"]
        self._emit("isr", {"cause": "mrd", "refilled": run.total_bytes})
        if not self.suppress_ack:
            self.regs.write32(rf.REG_INT_ACK, 1)
            self.stats.acks += 1
            actions.append("int_ack")
        self.regs.write32(rf.REG_MRD_STOP, 1)
        actions.append("mrd_stop")
        return actions

    @staticmethod
    def _count_mismatches(actual: bytes, expected: bytes) -> int:
        if actual == expected:
            return 0
        n = 0
        for i in range(0, min(len(actual), len(expected)), 4):
            if actual[i:i + 4] != expected[i:i + 4]:
                n += 1
        n += abs(len(actual) - len(expected)) // 4
        return n
