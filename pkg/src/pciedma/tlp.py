"""Transaction layer packet codec.

Models the three TLP shapes the DMA engine exchanges plus the MSI message,
with a fixed big-endian wire layout:

    MemWrite32 / MemRead32 (3DW header, 12 bytes)
        DW0  [31] reserved  [30:29] fmt  [28:24] type  [22:20] tc  [9:0] length
        DW1  [31:16] requester_id  [15:8] tag  [7:4] last_be  [3:0] first_be
        DW2  [31:2] address[31:2]  [1:0] 00

    CompletionWithData (3DW header, 12 bytes)
        DW0  as above with fmt=with-data, type=0b01010
        DW1  [31:16] completer_id  [15:13] status  [11:0] byte_count
        DW2  [31:16] requester_id  [15:8] tag  [6:0] lower_address

    MsiMessage (4 bytes)
        [31:24] marker 0x34  [4:0] vector

The length field is 10 bits wide; a wire value of 0 encodes 1024 DWORDs.
byte_count mirrors that rule over 12 bits (0 encodes 4096 bytes).  Payload
DWORDs follow the header in big-endian order.  Addresses are DWORD aligned,
so the low two address bits are always zero on the wire.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

from .errors import (
    InvalidField,
    InvalidLength,
    MisalignedAddress,
    PayloadLengthMismatch,
    TruncatedPacket,
    UnknownTypeCode,
)

FMT_3DW_NO_DATA = 0b00
FMT_3DW_WITH_DATA = 0b10

TYPE_MEM = 0b00000
TYPE_CPL = 0b01010

# First header byte of the 4-byte interrupt message.  The value parses as a
# 4DW format code, which this model never emits, so it cannot collide with a
# real header.
MSI_MARKER = 0x34

HEADER_BYTES = 12
MSI_BYTES = 4
MAX_LENGTH_DW = 1024
MAX_BYTE_COUNT = 4096


class CplStatus(IntEnum):
    """Completion status field."""

    SUCCESS = 0b000
    UNSUPPORTED_REQUEST = 0b001
    COMPLETER_ABORT = 0b100


@dataclass(frozen=True)
class TlpHeader:
    """3DW request header for MemWrite32/MemRead32."""

    fmt: int
    tlp_type: int = TYPE_MEM
    traffic_class: int = 0
    length_dw: int = 1
    requester_id: int = 0
    tag: int = 0
    first_be: int = 0xF
    last_be: int = 0
    address: int = 0


@dataclass(frozen=True)
class CplHeader:
    """3DW completion header.

    byte_count carries the bytes remaining for the request including this
    completion, so a lone completion has byte_count == 4 * length_dw and a
    split series counts down to its final chunk.
    """

    completer_id: int = 0
    status: CplStatus = CplStatus.SUCCESS
    byte_count: int = 4
    requester_id: int = 0
    tag: int = 0
    lower_address: int = 0
    length_dw: int = 1


@dataclass(frozen=True)
class MemWrite32:
    header: TlpHeader
    payload: tuple[int, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class MemRead32:
    header: TlpHeader


@dataclass(frozen=True)
class CompletionWithData:
    header: CplHeader
    payload: tuple[int, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class MsiMessage:
    vector: int = 0


Tlp = MemWrite32 | MemRead32 | CompletionWithData | MsiMessage


@dataclass(frozen=True)
class Violation:
    """One failed invariant from validate()."""

    field: str
    message: str


@dataclass(frozen=True)
class OverheadConfig:
    """Per-TLP wire overhead used by the throughput model.

    Defaults describe a 3DW request: 12-byte header plus 2 sequence bytes,
    4 LCRC bytes and 2 framing symbols.  total_override pins the sum to an
    arbitrary value (0 models the no-overhead bound).
    """

    header_bytes: int = 12
    seq_bytes: int = 2
    lcrc_bytes: int = 4
    framing_bytes: int = 2
    total_override: int | None = None


def wire_overhead_bytes(config: OverheadConfig) -> int:
    """Total per-TLP overhead in bytes for the given component sizes."""
    if config.total_override is not None:
        if config.total_override < 0:
            raise InvalidField("total_override must be >= 0")
        return config.total_override
    total = (config.header_bytes + config.seq_bytes
             + config.lcrc_bytes + config.framing_bytes)
    if total < 0:
        raise InvalidField("overhead components must be >= 0")
    return total


def mem_write32(address: int, payload: tuple[int, ...], *, tag: int = 0,
                requester_id: int = 0, traffic_class: int = 0) -> MemWrite32:
    """Build a write request with conventional byte enables."""
    n = len(payload)
    return MemWrite32(
        header=TlpHeader(
            fmt=FMT_3DW_WITH_DATA,
            tlp_type=TYPE_MEM,
            traffic_class=traffic_class,
            length_dw=n,
            requester_id=requester_id,
            tag=tag,
            first_be=0xF,
            last_be=0xF if n > 1 else 0,
            address=address,
        ),
        payload=tuple(payload),
    )


def mem_read32(address: int, length_dw: int, *, tag: int = 0,
               requester_id: int = 0, traffic_class: int = 0) -> MemRead32:
    """Build a read request with conventional byte enables."""
    return MemRead32(
        header=TlpHeader(
            fmt=FMT_3DW_NO_DATA,
            tlp_type=TYPE_MEM,
            traffic_class=traffic_class,
            length_dw=length_dw,
            requester_id=requester_id,
            tag=tag,
            first_be=0xF,
            last_be=0xF if length_dw > 1 else 0,
            address=address,
        )
    )


def _check_u(report: list[Violation], name: str, value: int, bits: int) -> None:
    if not isinstance(value, int) or not 0 <= value < (1 << bits):
        report.append(Violation(name, f"{name} outside {bits}-bit range: {value!r}"))


def _check_length(report: list[Violation], length_dw: int) -> None:
    if not isinstance(length_dw, int) or not 1 <= length_dw <= MAX_LENGTH_DW:
        report.append(Violation(
            "length_dw", f"length_dw outside [1, {MAX_LENGTH_DW}]: {length_dw!r}"))


def _check_address(report: list[Violation], address: int) -> None:
    if not isinstance(address, int) or not 0 <= address <= 0xFFFFFFFF:
        report.append(Violation("address", f"address outside 32-bit range: {address!r}"))
    elif address & 0x3:
        report.append(Violation("address", f"address not DWORD aligned: {address:#x}"))


def _check_payload(report: list[Violation], payload: tuple[int, ...],
                   length_dw: int) -> None:
    if len(payload) != length_dw:
        report.append(Violation(
            "payload", f"payload has {len(payload)} DWORDs, header declares {length_dw}"))
    for i, dw in enumerate(payload):
        if not isinstance(dw, int) or not 0 <= dw <= 0xFFFFFFFF:
            report.append(Violation("payload", f"payload[{i}] outside 32-bit range: {dw!r}"))
            break


def _validate_request(tlp: MemWrite32 | MemRead32) -> list[Violation]:
    h = tlp.header
    report: list[Violation] = []
    want_fmt = FMT_3DW_WITH_DATA if isinstance(tlp, MemWrite32) else FMT_3DW_NO_DATA
    if h.fmt != want_fmt:
        report.append(Violation("fmt", f"fmt {h.fmt:#04b} breaks the no-data/with-data rule"))
    if h.tlp_type != TYPE_MEM:
        report.append(Violation("tlp_type", f"type {h.tlp_type:#07b} is not a memory request"))
    _check_u(report, "traffic_class", h.traffic_class, 3)
    _check_length(report, h.length_dw)
    _check_u(report, "requester_id", h.requester_id, 16)
    _check_u(report, "tag", h.tag, 8)
    _check_u(report, "first_be", h.first_be, 4)
    _check_u(report, "last_be", h.last_be, 4)
    _check_address(report, h.address)
    if isinstance(tlp, MemWrite32) and isinstance(h.length_dw, int):
        _check_payload(report, tlp.payload, h.length_dw)
    return report


def _validate_cpl(tlp: CompletionWithData) -> list[Violation]:
    h = tlp.header
    report: list[Violation] = []
    _check_u(report, "completer_id", h.completer_id, 16)
    if h.status not in tuple(CplStatus):
        report.append(Violation("status", f"unknown completion status: {h.status!r}"))
    if not isinstance(h.byte_count, int) or not 1 <= h.byte_count <= MAX_BYTE_COUNT:
        report.append(Violation(
            "byte_count", f"byte_count outside [1, {MAX_BYTE_COUNT}]: {h.byte_count!r}"))
    _check_length(report, h.length_dw)
    if (isinstance(h.byte_count, int) and isinstance(h.length_dw, int)
            and 1 <= h.length_dw <= MAX_LENGTH_DW
            and h.byte_count < 4 * h.length_dw):
        report.append(Violation(
            "byte_count", f"byte_count {h.byte_count} below payload size {4 * h.length_dw}"))
    _check_u(report, "requester_id", h.requester_id, 16)
    _check_u(report, "tag", h.tag, 8)
    _check_u(report, "lower_address", h.lower_address, 7)
    if isinstance(h.length_dw, int):
        _check_payload(report, tlp.payload, h.length_dw)
    return report


def validate(tlp: Tlp) -> list[Violation]:
    """List every violated invariant; empty iff encode(tlp) succeeds."""
    if isinstance(tlp, (MemWrite32, MemRead32)):
        return _validate_request(tlp)
    if isinstance(tlp, CompletionWithData):
        return _validate_cpl(tlp)
    if isinstance(tlp, MsiMessage):
        report: list[Violation] = []
        _check_u(report, "vector", tlp.vector, 5)
        return report
    return [Violation("tlp", f"not a TLP value: {tlp!r}")]


def _error_for(v: Violation) -> Exception:
    if v.field == "length_dw":
        return InvalidLength(v.message)
    if v.field == "address":
        return MisalignedAddress(v.message)
    return InvalidField(v.message)


def pack_dwords(dwords: tuple[int, ...]) -> bytes:
    """Render payload DWORDs in big-endian wire order."""
    return struct.pack(f">{len(dwords)}I", *dwords) if dwords else b""


def unpack_dwords(data: bytes) -> tuple[int, ...]:
    """Parse big-endian payload bytes back into DWORDs."""
    n = len(data) // 4
    return struct.unpack(f">{n}I", data) if n else ()


def encode(tlp: Tlp) -> bytes:
    """Serialize a TLP to its wire bytes.

    Raises the error matching the first validation failure, so encode
    succeeds exactly when validate() returns an empty report.
    """
    report = validate(tlp)
    if report:
        raise _error_for(report[0])

    if isinstance(tlp, MsiMessage):
        return struct.pack(">I", (MSI_MARKER << 24) | tlp.vector)

    if isinstance(tlp, (MemWrite32, MemRead32)):
        h = tlp.header
        dw0 = ((h.fmt & 0x3) << 29 | (h.tlp_type & 0x1F) << 24
               | (h.traffic_class & 0x7) << 20 | (h.length_dw & 0x3FF))
        dw1 = (h.requester_id << 16) | (h.tag << 8) | (h.last_be << 4) | h.first_be
        dw2 = h.address & 0xFFFFFFFC
        head = struct.pack(">III", dw0, dw1, dw2)
        if isinstance(tlp, MemWrite32):
            return head + pack_dwords(tlp.payload)
        return head

    h = tlp.header
    dw0 = (FMT_3DW_WITH_DATA << 29 | TYPE_CPL << 24 | (h.length_dw & 0x3FF))
    dw1 = (h.completer_id << 16) | (int(h.status) << 13) | (h.byte_count & 0xFFF)
    dw2 = (h.requester_id << 16) | (h.tag << 8) | h.lower_address
    return struct.pack(">III", dw0, dw1, dw2) + pack_dwords(tlp.payload)


def decode(data: bytes) -> Tlp:
    """Parse wire bytes into a TLP.

    Never crashes on arbitrary input: every malformed stream maps to a
    typed CodecError.
    """
    if len(data) < MSI_BYTES:
        raise TruncatedPacket(f"{len(data)} bytes is below the 4-byte minimum")

    if data[0] == MSI_MARKER:
        if len(data) != MSI_BYTES:
            raise PayloadLengthMismatch(
                f"interrupt message must be exactly 4 bytes, got {len(data)}")
        word = struct.unpack(">I", data)[0]
        if word & 0x00FFFFE0:
            raise UnknownTypeCode(f"reserved interrupt bits set: {word:#010x}")
        return MsiMessage(vector=word & 0x1F)

    if len(data) < HEADER_BYTES:
        raise TruncatedPacket(f"{len(data)} bytes is below the 12-byte header")

    dw0, dw1, dw2 = struct.unpack(">III", data[:HEADER_BYTES])
    if dw0 >> 31:
        raise UnknownTypeCode(f"reserved header bit set: {dw0:#010x}")
    fmt = (dw0 >> 29) & 0x3
    tlp_type = (dw0 >> 24) & 0x1F
    traffic_class = (dw0 >> 20) & 0x7
    raw_len = dw0 & 0x3FF
    length_dw = raw_len if raw_len else MAX_LENGTH_DW
    body = data[HEADER_BYTES:]

    if (fmt, tlp_type) == (FMT_3DW_NO_DATA, TYPE_MEM):
        if body:
            raise PayloadLengthMismatch(f"read request carries {len(body)} payload bytes")
        return MemRead32(header=TlpHeader(
            fmt=fmt, tlp_type=tlp_type, traffic_class=traffic_class,
            length_dw=length_dw, requester_id=dw1 >> 16, tag=(dw1 >> 8) & 0xFF,
            first_be=dw1 & 0xF, last_be=(dw1 >> 4) & 0xF, address=dw2 & 0xFFFFFFFC))

    if (fmt, tlp_type) == (FMT_3DW_WITH_DATA, TYPE_MEM):
        if len(body) != 4 * length_dw:
            raise PayloadLengthMismatch(
                f"header declares {length_dw} DWORDs, {len(body)} payload bytes present")
        return MemWrite32(
            header=TlpHeader(
                fmt=fmt, tlp_type=tlp_type, traffic_class=traffic_class,
                length_dw=length_dw, requester_id=dw1 >> 16, tag=(dw1 >> 8) & 0xFF,
                first_be=dw1 & 0xF, last_be=(dw1 >> 4) & 0xF, address=dw2 & 0xFFFFFFFC),
            payload=unpack_dwords(body))

    if (fmt, tlp_type) == (FMT_3DW_WITH_DATA, TYPE_CPL):
        if len(body) != 4 * length_dw:
            raise PayloadLengthMismatch(
                f"header declares {length_dw} DWORDs, {len(body)} payload bytes present")
        status_raw = (dw1 >> 13) & 0x7
        try:
            status = CplStatus(status_raw)
        except ValueError:
            raise UnknownTypeCode(f"unknown completion status {status_raw:#05b}") from None
        raw_bc = dw1 & 0xFFF
        return CompletionWithData(
            header=CplHeader(
                completer_id=dw1 >> 16, status=status,
                byte_count=raw_bc if raw_bc else MAX_BYTE_COUNT,
                requester_id=dw2 >> 16, tag=(dw2 >> 8) & 0xFF,
                lower_address=dw2 & 0x7F, length_dw=length_dw),
            payload=unpack_dwords(body))

    raise UnknownTypeCode(f"fmt={fmt:#04b} type={tlp_type:#07b} is not modeled")


def tlp_summary(tlp: Tlp) -> str:
    """One-line hex summary: type, tag, address, length, leading payload bytes."""
    if isinstance(tlp, MsiMessage):
        return f"MSI vector={tlp.vector}"
    if isinstance(tlp, MemRead32):
        h = tlp.header
        return f"MRd32 tag={h.tag} addr={h.address:#010x} len_dw={h.length_dw}"
    if isinstance(tlp, MemWrite32):
        h = tlp.header
        lead = pack_dwords(tlp.payload[:2])[:8].hex()
        return (f"MWr32 tag={h.tag} addr={h.address:#010x} "
                f"len_dw={h.length_dw} data={lead}")
    h = tlp.header
    lead = pack_dwords(tlp.payload[:2])[:8].hex()
    return (f"CplD tag={h.tag} lower_addr={h.lower_address:#04x} "
            f"len_dw={h.length_dw} byte_count={h.byte_count} data={lead}")
