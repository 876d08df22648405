"""Closed-form throughput models and the cycle-count oracles.

Three layers, from wire to datapath:

  * link_throughput_mbps: payload share of the raw lane rate.  A serial
    lane carries 250 MB/s of traffic after line coding; each packet of P
    payload bytes drags H overhead bytes (12 header + 2 sequence + 4 CRC
    + 2 framing by default), so an N-lane link moves
    P / (P + H) * N * 250 MB/s of payload.
  * stream_efficiency / stream_speed_gbps: the DMA engine's own framing
    cost in the one-DWORD-per-transfer view.  A payload of PL DWORDs pays
    one extra transfer slot, hence F = PL / (PL + 1) and
    V = PL * 4 / ((PL + 1) * 8) GB/s on an 8 ns clock.
  * mwr/mrd_cycle_counts and the speeds derived from them: the beat-exact
    accounting of the 128-bit datapath that the simulator's counters
    implement (descriptor beat, ceil(PL/4) data beats, one dummy beat
    between consecutive write packets).

Exact results are returned as Fraction so tests can pin them; callers
convert to float at the edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import InvalidConfig, ZeroCounter

PER_LANE_MBPS = 250          # post-coding payload rate of one full-speed lane
DEFAULT_LANES = 8
DEFAULT_OVERHEAD_BYTES = 20  # 12 header + 2 sequence + 4 LCRC + 2 framing
CLOCK_PERIOD_NS = 8.0
DW_PER_BEAT = 4


@dataclass(frozen=True)
class LinkParams:
    """Inputs of the packet-efficiency model."""

    payload_bytes: int
    overhead_bytes: int = DEFAULT_OVERHEAD_BYTES
    lanes: int = DEFAULT_LANES
    per_lane_mbps: int = PER_LANE_MBPS


def link_throughput_mbps(params: LinkParams) -> Fraction:
    """Payload throughput of the link in MB/s, exact."""
    p = params.payload_bytes
    if p <= 0:
        raise InvalidConfig("payload_bytes must be positive")
    if params.overhead_bytes < 0:
        raise InvalidConfig("overhead_bytes cannot be negative")
    if params.lanes < 1 or params.per_lane_mbps < 1:
        raise InvalidConfig("lanes and per_lane_mbps must be positive")
    return (Fraction(p, p + params.overhead_bytes)
            * params.lanes * params.per_lane_mbps)


def link_efficiency(params: LinkParams) -> Fraction:
    """Payload fraction of the wire traffic, P / (P + H)."""
    if params.payload_bytes <= 0:
        raise InvalidConfig("payload_bytes must be positive")
    return Fraction(params.payload_bytes,
                    params.payload_bytes + params.overhead_bytes)


def stream_efficiency(payload_len_dw: int) -> Fraction:
    """DMA stream efficiency F = PL / (PL + 1)."""
    _check_pl(payload_len_dw)
    return Fraction(payload_len_dw, payload_len_dw + 1)


def stream_speed_gbps(payload_len_dw: int) -> Fraction:
    """DMA stream speed V = PL * 4 / ((PL + 1) * 8) GB/s."""
    _check_pl(payload_len_dw)
    return Fraction(payload_len_dw * 4, (payload_len_dw + 1) * 8)


def _check_pl(payload_len_dw: int) -> None:
    if not 1 <= payload_len_dw <= 1024:
        raise InvalidConfig("payload length must be 1..1024 DWORDs")


def payload_beats(payload_len_dw: int, dw_per_beat: int = DW_PER_BEAT) -> int:
    return -(-payload_len_dw // dw_per_beat)


def mwr_cycle_count(count: int, payload_len_dw: int,
                    dw_per_beat: int = DW_PER_BEAT) -> int:
    """Cycles from start to the final data beat of a write run.

    Each packet costs one descriptor beat plus its data beats; consecutive
    packets are separated by exactly one dummy beat.
    """
    _check_run(count, payload_len_dw)
    per_tlp = 1 + payload_beats(payload_len_dw, dw_per_beat)
    return count * per_tlp + (count - 1)


def mrd_cycle_count(count: int, payload_len_dw: int,
                    dw_per_beat: int = DW_PER_BEAT) -> int:
    """Receive-valid cycles of a read run: header plus data beats per
    completion, latency gaps excluded."""
    _check_run(count, payload_len_dw)
    return count * (1 + payload_beats(payload_len_dw, dw_per_beat))


def _check_run(count: int, payload_len_dw: int) -> None:
    _check_pl(payload_len_dw)
    if count < 1:
        raise InvalidConfig("count must be at least 1")


def measured_speed_gbps(data_bytes: int, counter: int,
                        clock_period_ns: float = CLOCK_PERIOD_NS) -> float:
    """Counter reading to GB/s: data volume over counted time."""
    if counter == 0:
        if data_bytes == 0:
            return 0.0
        raise ZeroCounter(f"{data_bytes} bytes against a zero counter")
    return data_bytes / (clock_period_ns * counter)


def mwr_speed_gbps(count: int, payload_len_dw: int,
                   dw_per_beat: int = DW_PER_BEAT) -> Fraction:
    """Exact measured write speed predicted by the cycle model."""
    cycles = mwr_cycle_count(count, payload_len_dw, dw_per_beat)
    return Fraction(4 * payload_len_dw * count, 8 * cycles)


def mrd_speed_gbps(count: int, payload_len_dw: int,
                   dw_per_beat: int = DW_PER_BEAT) -> Fraction:
    """Exact measured read speed predicted by the cycle model."""
    cycles = mrd_cycle_count(count, payload_len_dw, dw_per_beat)
    return Fraction(4 * payload_len_dw * count, 8 * cycles)


def mwr_asymptotic_gbps(payload_len_dw: int,
                        dw_per_beat: int = DW_PER_BEAT) -> Fraction:
    """Limit of the write speed as the run length grows."""
    _check_pl(payload_len_dw)
    per_tlp = 2 + payload_beats(payload_len_dw, dw_per_beat)
    return Fraction(4 * payload_len_dw, 8 * per_tlp)


def theory_rows(payload_dws: list[int],
                overhead_bytes: int = DEFAULT_OVERHEAD_BYTES,
                lanes: int = DEFAULT_LANES) -> list[dict]:
    """One row of the analytic report per payload size."""
    rows = []
    for pl in payload_dws:
        params = LinkParams(payload_bytes=4 * pl,
                            overhead_bytes=overhead_bytes, lanes=lanes)
        rows.append({
            "payload_dw": pl,
            "payload_bytes": 4 * pl,
            "link_mbps": float(link_throughput_mbps(params)),
            "stream_eff": float(stream_efficiency(pl)),
            "v_gbps": float(stream_speed_gbps(pl)),
        })
    return rows


def format_sig(value: float, digits: int = 5) -> str:
    """Stable shortest decimal rendering at a given significance."""
    if value == 0:
        return "0"
    text = f"{value:.{digits}g}"
    if "e" in text or "E" in text:
        # expand scientific notation; report columns stay plain decimal
        text = f"{float(text):.{max(digits + 6, 1)}f}".rstrip("0").rstrip(".")
    return text


def format_mbps(value: Fraction | float) -> str:
    return f"{float(value):.2f}"
