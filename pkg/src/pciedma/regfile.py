"""BAR0 register file shared by the host driver and the endpoint FSMs.

Map (all registers 32 bits wide, offsets within a 2 KB window):

    0x000  INIT        host RW    initialization flag
    0x004  MWR_START   host W1T   write-one-to-trigger a write run
    0x008  MWR_ADDR    host RW    write run destination address
    0x00C  MWR_LEN     host RW    write payload length in DWORDs
    0x010  MWR_COUNT   host RW    number of write TLPs in the run
    0x014  MRD_START   host W1T   write-one-to-trigger a read run
    0x018  MRD_ADDR    host RW    read run source address
    0x01C  MRD_LEN     host RW    read payload length in DWORDs
    0x020  MRD_COUNT   host RW    number of read requests in the run
    0x024  INT_STATUS  host RO    cause bits: bit0 write-done, bit1 read-done
    0x028  INT_ACK     host W1T   interrupt-serviced handshake
    0x02C  MRD_STOP    host W1T   releases the read FSM back to idle
    0x030  MWR_PERF    host RO    cycle count of the last write run
    0x034  MRD_PERF    host RO    cycle count of the last read run

Trigger registers raise an edge event on an accepted host 0 -> 1 write.
Each edge fires exactly once; the endpoint consumes it and clears the
register so the next write-one can trigger again.  Ignored writes (wrong
side, unmapped offset) never mutate state.  Reads of unmapped in-window
offsets return 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .errors import OutOfRange, UnalignedAccess

BAR0_BYTES = 2048

REG_INIT = 0x000
REG_MWR_START = 0x004
REG_MWR_ADDR = 0x008
REG_MWR_LEN = 0x00C
REG_MWR_COUNT = 0x010
REG_MRD_START = 0x014
REG_MRD_ADDR = 0x018
REG_MRD_LEN = 0x01C
REG_MRD_COUNT = 0x020
REG_INT_STATUS = 0x024
REG_INT_ACK = 0x028
REG_MRD_STOP = 0x02C
REG_MWR_PERF = 0x030
REG_MRD_PERF = 0x034

INT_MWR_DONE = 0b01
INT_MRD_DONE = 0b10


class Side(Enum):
    """Which agent is touching the register file."""

    HOST = "host"
    ENDPOINT = "endpoint"


class EdgeKind(Enum):
    MWR_START = "mwr_start"
    MRD_START = "mrd_start"
    INT_ACK = "int_ack"
    MRD_STOP = "mrd_stop"


_BOTH = frozenset({Side.HOST, Side.ENDPOINT})
_HOST_ONLY = frozenset({Side.HOST})
_ENDPOINT_ONLY = frozenset({Side.ENDPOINT})


@dataclass(frozen=True)
class RegSpec:
    offset: int
    name: str
    writers: frozenset[Side]
    edge: EdgeKind | None
    access: str
    description: str


# Trigger registers accept endpoint writes so the FSMs can self-clear them
# after consuming the edge.
REGISTERS: tuple[RegSpec, ...] = (
    RegSpec(REG_INIT, "INIT", _HOST_ONLY, None, "host RW",
            "initialization flag written before a run is started"),
    RegSpec(REG_MWR_START, "MWR_START", _BOTH, EdgeKind.MWR_START, "host W1T",
            "write-one-to-trigger; launches a DMA write run"),
    RegSpec(REG_MWR_ADDR, "MWR_ADDR", _HOST_ONLY, None, "host RW",
            "destination address for the write run"),
    RegSpec(REG_MWR_LEN, "MWR_LEN", _HOST_ONLY, None, "host RW",
            "write payload length per TLP in DWORDs"),
    RegSpec(REG_MWR_COUNT, "MWR_COUNT", _HOST_ONLY, None, "host RW",
            "number of write TLPs in the run"),
    RegSpec(REG_MRD_START, "MRD_START", _BOTH, EdgeKind.MRD_START, "host W1T",
            "write-one-to-trigger; launches a DMA read run"),
    RegSpec(REG_MRD_ADDR, "MRD_ADDR", _HOST_ONLY, None, "host RW",
            "source address for the read run"),
    RegSpec(REG_MRD_LEN, "MRD_LEN", _HOST_ONLY, None, "host RW",
            "read payload length per request in DWORDs"),
    RegSpec(REG_MRD_COUNT, "MRD_COUNT", _HOST_ONLY, None, "host RW",
            "number of read requests in the run"),
    RegSpec(REG_INT_STATUS, "INT_STATUS", _ENDPOINT_ONLY, None, "host RO",
            "interrupt cause bits: bit0 write-done, bit1 read-done"),
    RegSpec(REG_INT_ACK, "INT_ACK", _BOTH, EdgeKind.INT_ACK, "host W1T",
            "interrupt-serviced handshake from the ISR"),
    RegSpec(REG_MRD_STOP, "MRD_STOP", _BOTH, EdgeKind.MRD_STOP, "host W1T",
            "releases the read FSM from its stopped state"),
    RegSpec(REG_MWR_PERF, "MWR_PERF", _ENDPOINT_ONLY, None, "host RO",
            "cycle counter published at the end of a write run"),
    RegSpec(REG_MRD_PERF, "MRD_PERF", _ENDPOINT_ONLY, None, "host RO",
            "cycle counter published at the end of a read run"),
)

_BY_OFFSET = {spec.offset: spec for spec in REGISTERS}


@dataclass(frozen=True)
class WriteEffect:
    """What a write32 call did."""

    offset: int
    name: str | None
    value: int
    side: Side
    accepted: bool
    reason: str | None = None
    edge: EdgeKind | None = None


EventSink = Callable[[str, str, dict], None] | None


class RegisterFile:
    """2 KB BAR0 block with edge-event bookkeeping.

    The optional sink receives (source, kind, detail) triples for every
    access so traced runs can show register traffic; it stays None for
    untraced runs.
    """

    def __init__(self, sink: EventSink = None):
        self._values: dict[int, int] = {spec.offset: 0 for spec in REGISTERS}
        self._pending: set[EdgeKind] = set()
        self.sink = sink

    def _check_offset(self, offset: int) -> None:
        if not isinstance(offset, int) or not 0 <= offset < BAR0_BYTES:
            raise OutOfRange(f"offset {offset!r} outside the {BAR0_BYTES}-byte window")
        if offset & 0x3:
            raise UnalignedAccess(f"offset {offset:#x} is not 4-byte aligned")

    def read32(self, offset: int, side: Side = Side.HOST) -> int:
        """Read a register; unmapped in-window offsets read as 0."""
        self._check_offset(offset)
        value = self._values.get(offset, 0)
        if self.sink is not None:
            spec = _BY_OFFSET.get(offset)
            self.sink(side.value, "register-access", {
                "op": "read", "reg": spec.name if spec else f"{offset:#05x}",
                "value": value})
        return value

    def write32(self, offset: int, value: int, side: Side = Side.HOST) -> WriteEffect:
        """Write a register, honoring the per-register side policy.

        Accepted host 0 -> 1 writes to trigger registers queue an edge
        event; everything else stores silently or is ignored with a reason.
        """
        self._check_offset(offset)
        value &= 0xFFFFFFFF
        spec = _BY_OFFSET.get(offset)

        if spec is None:
            effect = WriteEffect(offset, None, value, side, False, reason="unmapped")
        elif side not in spec.writers:
            effect = WriteEffect(offset, spec.name, value, side, False, reason="read-only")
        else:
            old = self._values[offset]
            self._values[offset] = value
            edge = None
            if spec.edge is not None and side is Side.HOST and old == 0 and value != 0:
                self._pending.add(spec.edge)
                edge = spec.edge
            effect = WriteEffect(offset, spec.name, value, side, True, edge=edge)

        if self.sink is not None:
            detail = {"op": "write",
                      "reg": effect.name if effect.name else f"{offset:#05x}",
                      "value": value, "accepted": int(effect.accepted)}
            if effect.reason:
                detail["reason"] = effect.reason
            if effect.edge:
                detail["edge"] = effect.edge.value
            self.sink(side.value, "register-access", detail)
        return effect

    def consume_edge(self, kind: EdgeKind) -> bool:
        """Pop a pending edge; clears the trigger register so it can re-arm."""
        if kind not in self._pending:
            return False
        self._pending.discard(kind)
        offset = next(s.offset for s in REGISTERS if s.edge is kind)
        self.write32(offset, 0, Side.ENDPOINT)
        return True

    def edge_pending(self, kind: EdgeKind) -> bool:
        return kind in self._pending

    def pending_edges(self) -> frozenset[EdgeKind]:
        return frozenset(self._pending)

    def snapshot(self) -> list[tuple[int, str, int]]:
        """(offset, name, value) for every named register, offset order."""
        return [(spec.offset, spec.name, self._values[spec.offset])
                for spec in REGISTERS]


def regmap_table() -> str:
    """Fixed-format text table of the register map."""
    lines = [f"{'offset':<8} {'name':<11} {'access':<9} description",
             f"{'-' * 8} {'-' * 11} {'-' * 9} {'-' * 48}"]
    for spec in REGISTERS:
        lines.append(f"{spec.offset:#05x}   {spec.name:<11} {spec.access:<9} "
                     f"{spec.description}")
    return "\n".join(lines) + "\n"
