"""Endpoint FSM tests: hand-derived beat timelines, interrupt flow, errors."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pciedma import regfile as rf
from pciedma.endpoint import (
    Endpoint,
    RxState,
    TxState,
    generate_pattern,
    pattern_bytes,
    verify_pattern,
)
from pciedma.errors import (
    DescriptorInvalid,
    MsiAlreadyPending,
    ProtocolViolation,
)
from pciedma.tlp import (
    CompletionWithData,
    CplHeader,
    CplStatus,
    MemRead32,
    MemWrite32,
    MsiMessage,
    unpack_dwords,
)


def make_endpoint(seed=0):
    regs = rf.RegisterFile()
    return regs, Endpoint(regs, pattern_seed=seed)


def program_mwr(regs, addr, len_dw, count):
    regs.write32(rf.REG_MWR_ADDR, addr)
    regs.write32(rf.REG_MWR_LEN, len_dw)
    regs.write32(rf.REG_MWR_COUNT, count)
    regs.write32(rf.REG_MWR_START, 1)


def program_mrd(regs, addr, len_dw, count):
    regs.write32(rf.REG_MRD_ADDR, addr)
    regs.write32(rf.REG_MRD_LEN, len_dw)
    regs.write32(rf.REG_MRD_COUNT, count)
    regs.write32(rf.REG_MRD_START, 1)


# --- pattern helpers ---

def test_generate_pattern():
    assert generate_pattern(0, 0) == 0
    assert generate_pattern(0x5A5A5A5A, 3) == 0x5A5A5A59
    assert generate_pattern(0xFFFFFFFF, 0xFFFFFFFF) == 0


def test_pattern_bytes_matches_scalar():
    blob = pattern_bytes(0x1234, 7, 5)
    assert unpack_dwords(blob) == tuple(generate_pattern(0x1234, 7 + i)
                                        for i in range(5))
    assert pattern_bytes(1, 0, 0) == b""


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 0xFFFFFFFF), st.integers(0, 1 << 20), st.integers(1, 64))
def test_verify_pattern_accepts_generated(seed, base, n):
    payload = unpack_dwords(pattern_bytes(seed, base, n))
    assert verify_pattern(seed, base, payload) == []


def test_verify_pattern_reports_index_and_values():
    payload = list(unpack_dwords(pattern_bytes(9, 4, 4)))
    payload[2] ^= 0x80
    bad = verify_pattern(9, 4, payload)
    assert bad == [(2, generate_pattern(9, 6), payload[2])]


# --- write engine: timeline derived beat by beat ---

def test_mwr_single_tlp_timeline():
    regs, ep = make_endpoint()
    program_mwr(regs, 0x80000000, 4, 1)

    out, _ = ep.tick(0)              # start edge: descriptor beat
    assert out is None
    assert ep.tx_state is TxState.LOAD_DESCRIPTOR
    assert ep.mwr_counter == 1

    out, _ = ep.tick(1)              # one data beat finishes the TLP
    assert isinstance(out, MemWrite32)
    assert out.header.address == 0x80000000
    assert out.payload == tuple(generate_pattern(0, i) for i in range(4))
    assert ep.mwr_counter == 2
    assert regs.read32(rf.REG_MWR_PERF) == 2    # counter stops with the data

    out, _ = ep.tick(2)              # interrupt goes out one cycle later
    assert isinstance(out, MsiMessage)
    assert ep.tx_state is TxState.WAIT_INT_DONE
    assert regs.read32(rf.REG_INT_STATUS) == rf.INT_MWR_DONE
    assert ep.mwr_counter == 2       # the message is outside the window

    regs.write32(rf.REG_INT_ACK, 1)
    out, _ = ep.tick(3)
    assert out is None
    assert ep.tx_state is TxState.IDLE
    assert regs.read32(rf.REG_INT_STATUS) == 0


def test_mwr_two_tlps_have_one_dummy_beat_between():
    regs, ep = make_endpoint()
    program_mwr(regs, 0x80000000, 4, 2)
    outs = []
    for cycle in range(6):
        out, _ = ep.tick(cycle)
        outs.append(out)
    # desc, data, dummy, desc, data, msi
    assert [type(o).__name__ for o in outs] == [
        "NoneType", "MemWrite32", "NoneType", "NoneType", "MemWrite32",
        "MsiMessage"]
    assert regs.read32(rf.REG_MWR_PERF) == 5
    assert outs[4].header.address == 0x80000010
    assert outs[4].payload == tuple(generate_pattern(0, 4 + i)
                                    for i in range(4))


def test_mwr_counter_spans_start_to_last_beat():
    regs, ep = make_endpoint()
    program_mwr(regs, 0x80000000, 16, 3)
    cycle = 0
    while regs.read32(rf.REG_MWR_PERF) == 0:
        ep.tick(cycle)
        cycle += 1
    # 3 TLPs of (1 desc + 4 data) with 2 dummies between
    assert regs.read32(rf.REG_MWR_PERF) == 3 * 5 + 2
    assert cycle == 17               # counter value equals elapsed busy cycles


def test_mwr_stall_hook_stretches_the_window():
    regs, ep = make_endpoint()
    stalled = {1}
    ep.tx_stall = lambda cycle: cycle in stalled
    program_mwr(regs, 0x80000000, 4, 1)
    ep.tick(0)
    out, _ = ep.tick(1)              # stalled: counted, no beat
    assert out is None
    out, _ = ep.tick(2)
    assert isinstance(out, MemWrite32)
    assert regs.read32(rf.REG_MWR_PERF) == 3


def test_bad_descriptor_rejected_before_any_state_change():
    regs, ep = make_endpoint()
    program_mwr(regs, 0x80000000, 0, 4)
    with pytest.raises(DescriptorInvalid):
        ep.tick(0)
    assert ep.tx_state is TxState.IDLE
    assert ep.tx_desc is None
    program_mrd(regs, 0x80100000, 4, 0)
    with pytest.raises(DescriptorInvalid):
        ep.tick(1)
    assert ep.rx_state is RxState.IDLE


# --- read engine ---

def completion_for(req: MemRead32, seed: int) -> CompletionWithData:
    base_dw = (req.header.address - 0x80100000) // 4
    payload = unpack_dwords(pattern_bytes(seed, base_dw, req.header.length_dw))
    return CompletionWithData(
        header=CplHeader(byte_count=4 * req.header.length_dw,
                         requester_id=req.header.requester_id,
                         tag=req.header.tag,
                         lower_address=req.header.address & 0x7F,
                         length_dw=req.header.length_dw),
        payload=payload)


def test_mrd_single_request_timeline():
    regs, ep = make_endpoint()
    program_mrd(regs, 0x80100000, 4, 1)

    out, _ = ep.tick(0)
    assert isinstance(out, MemRead32)
    assert out.header.length_dw == 4 and out.header.tag == 0
    assert ep.rx_state is RxState.ISSUE_MRD
    assert ep.mrd_counter == 0       # nothing received yet

    cpl = completion_for(out, seed=0)
    out, _ = ep.tick(64, rx_in=cpl)  # header beat on the arrival cycle
    assert out is None
    assert ep.mrd_counter == 1

    out, _ = ep.tick(65)             # final data beat: verify, stop counter
    assert out is None
    assert ep.mrd_counter == 2
    assert regs.read32(rf.REG_MRD_PERF) == 2
    assert ep.rx_state is RxState.GEN_MSI
    assert ep.rx_mismatches == 0

    out, _ = ep.tick(66)             # interrupt on the cycle after the beat
    assert isinstance(out, MsiMessage)
    assert ep.rx_state is RxState.WAIT_INT_DONE
    assert regs.read32(rf.REG_INT_STATUS) == rf.INT_MRD_DONE

    regs.write32(rf.REG_INT_ACK, 1)
    ep.tick(67)
    assert ep.rx_state is RxState.WAIT_STOP
    seed_before = ep.rx_seed
    regs.write32(rf.REG_MRD_STOP, 1)
    ep.tick(68)
    assert ep.rx_state is RxState.IDLE
    assert ep.rx_seed == seed_before + 1


def test_mrd_next_request_waits_for_drain_end():
    regs, ep = make_endpoint()
    program_mrd(regs, 0x80100000, 4, 2)
    out, _ = ep.tick(0)
    cpl = completion_for(out, seed=0)
    out, _ = ep.tick(10, rx_in=cpl)
    assert out is None
    out, _ = ep.tick(11)             # final beat; issue happens next cycle
    assert out is None
    out, _ = ep.tick(12)
    assert isinstance(out, MemRead32)
    assert out.header.tag == 1
    assert out.header.address == 0x80100010


def test_mrd_detects_corrupted_payload():
    regs, ep = make_endpoint()
    program_mrd(regs, 0x80100000, 2, 1)
    out, _ = ep.tick(0)
    cpl = completion_for(out, seed=0)
    bad = CompletionWithData(header=cpl.header,
                             payload=(cpl.payload[0] ^ 1, cpl.payload[1]))
    ep.tick(1, rx_in=bad)
    ep.tick(2)
    assert ep.rx_mismatches == 1


def test_completion_protocol_violations():
    regs, ep = make_endpoint()
    program_mrd(regs, 0x80100000, 4, 1)
    out, _ = ep.tick(0)
    cpl = completion_for(out, seed=0)

    unknown_tag = CompletionWithData(
        header=CplHeader(byte_count=16, tag=9, length_dw=4),
        payload=cpl.payload)
    with pytest.raises(ProtocolViolation):
        ep.tick(1, rx_in=unknown_tag)

    bad_status = CompletionWithData(
        header=CplHeader(byte_count=16, tag=0, length_dw=4,
                         status=CplStatus.COMPLETER_ABORT),
        payload=cpl.payload)
    with pytest.raises(ProtocolViolation):
        ep.tick(2, rx_in=bad_status)

    with pytest.raises(ProtocolViolation):
        ep.tick(3, rx_in=MemRead32(header=out.header))


def test_completion_over_delivery_rejected():
    regs, ep = make_endpoint()
    program_mrd(regs, 0x80100000, 2, 1)
    out, _ = ep.tick(0)
    too_big = CompletionWithData(
        header=CplHeader(byte_count=16, tag=0, length_dw=4),
        payload=(0, 0, 0, 0))
    with pytest.raises(ProtocolViolation):
        ep.tick(1, rx_in=too_big)


def test_msi_is_single_outstanding():
    regs, ep = make_endpoint()
    ep.raise_msi("mwr", 0)
    with pytest.raises(MsiAlreadyPending):
        ep.raise_msi("mrd", 1)


def test_split_completion_series():
    # one request satisfied by two chunks; counter counts both streams
    regs, ep = make_endpoint()
    program_mrd(regs, 0x80100000, 8, 1)
    out, _ = ep.tick(0)
    first = CompletionWithData(
        header=CplHeader(byte_count=32, tag=0, length_dw=4),
        payload=unpack_dwords(pattern_bytes(0, 0, 4)))
    second = CompletionWithData(
        header=CplHeader(byte_count=16, tag=0, length_dw=4, lower_address=16),
        payload=unpack_dwords(pattern_bytes(0, 4, 4)))
    ep.tick(1, rx_in=first)
    ep.tick(2)
    assert ep.rx_state is RxState.ISSUE_MRD     # still mid-request
    ep.tick(3, rx_in=second)
    ep.tick(4)
    assert ep.rx_state is RxState.GEN_MSI
    assert ep.mrd_counter == 4
    assert ep.rx_mismatches == 0
    assert ep.mrd_bytes_read == 32


# --- bulk helpers mirror the stepped engine ---

def test_tx_stream_bulk_equals_stepped_run():
    regs1, ep1 = make_endpoint()
    program_mwr(regs1, 0x80000000, 4, 8)
    sent = []
    cycle = 0
    while regs1.read32(rf.REG_MWR_PERF) == 0:
        out, _ = ep1.tick(cycle)
        if isinstance(out, MemWrite32):
            sent.append(out)
        cycle += 1

    regs2, ep2 = make_endpoint()
    program_mwr(regs2, 0x80000000, 4, 8)
    ep2.tick(0)                      # consume the edge, descriptor beat
    while ep2._tx_phase != "desc":
        ep2.tick(1)
    used, blob = ep2.tx_stream_bulk(2, None)
    stepped = b"".join(pattern_bytes(0, 0, 4 * len(sent)) for _ in [0])
    assert regs2.read32(rf.REG_MWR_PERF) == regs1.read32(rf.REG_MWR_PERF)
    assert blob[0] == 0x80000010     # second TLP onward
    assert stepped.endswith(blob[1])
    assert ep2.mwr_bytes_sent == ep1.mwr_bytes_sent


def test_rx_drain_bulk_equals_stepped_drain():
    regs1, ep1 = make_endpoint()
    program_mrd(regs1, 0x80100000, 16, 1)
    out, _ = ep1.tick(0)
    cpl = completion_for(out, seed=0)
    ep1.tick(1, rx_in=cpl)
    for c in range(2, 6):
        ep1.tick(c)

    regs2, ep2 = make_endpoint()
    program_mrd(regs2, 0x80100000, 16, 1)
    out, _ = ep2.tick(0)
    used = ep2.rx_drain_bulk(completion_for(out, seed=0), 1)
    assert used == 5                 # header + four data beats
    assert ep2.mrd_counter == ep1.mrd_counter == 5
    assert ep2.rx_state is ep1.rx_state is RxState.GEN_MSI
