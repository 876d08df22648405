"""Acceptance gate: the nine headline behaviors, one PASS/FAIL line each.

Each test prints exactly one `[criterion N] PASS/FAIL: ...` line on the
terminal (bypassing capture) so a full run reads as a checklist.  Frozen
numbers come from the closed-form cycle model evaluated by hand; exact
comparisons use Fraction so no tolerance hides an off-by-one.
"""

import csv
import io
import json
import random
import time
from contextlib import contextmanager, redirect_stderr, redirect_stdout
from fractions import Fraction

import pytest

from pciedma import cli
from pciedma.endpoint import RxState
from pciedma.errors import CodecError
from pciedma.perf import (
    LinkParams,
    format_sig,
    link_throughput_mbps,
    mrd_cycle_count,
    mwr_cycle_count,
    stream_efficiency,
    stream_speed_gbps,
)
from pciedma.sim import SimConfig, System
from pciedma.tlp import (
    CompletionWithData,
    CplHeader,
    CplStatus,
    MemRead32,
    MemWrite32,
    MsiMessage,
    TlpHeader,
    decode,
    encode,
    mem_read32,
    mem_write32,
)


@contextmanager
def criterion(capsys, number, title):
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"[criterion {number}] FAIL: {title}", flush=True)
        raise
    with capsys.disabled():
        print(f"[criterion {number}] PASS: {title}", flush=True)


def test_c1_headline_throughput(capsys):
    with criterion(capsys, 1,
                   "64 KB write run at 16-byte payload sustains > 666 MB/s"):
        start = time.perf_counter()
        result = System(SimConfig()).run_mwr(4, 4096)
        wall = time.perf_counter() - start
        assert result.mwr_perf == 12287
        v = result.v_mwr_gbps
        assert v == pytest.approx(65536 / (8 * 12287), rel=1e-12)
        assert abs(v - 2 / 3) <= 0.001 * (2 / 3)
        assert v > 0.666
        assert format_sig(v) == "0.66672"
        assert wall < 1.0


def test_c2_counters_match_cycle_model(capsys):
    with criterion(capsys, 2,
                   "counters equal the closed-form cycle model on [1,64]^2 "
                   "in both directions"):
        start = time.perf_counter()
        for payload_dw in range(1, 65):
            for count in range(1, 65):
                s = System(SimConfig(engine="cycle"))
                assert s.run_mwr(payload_dw, count).mwr_perf == \
                    mwr_cycle_count(count, payload_dw)
                s = System(SimConfig(engine="cycle"))
                assert s.run_mrd(payload_dw, count).mrd_perf == \
                    mrd_cycle_count(count, payload_dw)
        assert time.perf_counter() - start < 30.0


def _random_valid_tlp(rng):
    kind = rng.randrange(4)
    if kind == 0:
        length = rng.choice((rng.randint(1, 8), rng.randint(1, 1024)))
        return mem_write32(
            rng.randrange(0, 1 << 32, 4),
            tuple(rng.randrange(1 << 32) for _ in range(length)),
            tag=rng.randrange(256), requester_id=rng.randrange(1 << 16),
            traffic_class=rng.randrange(8))
    if kind == 1:
        return mem_read32(
            rng.randrange(0, 1 << 32, 4), rng.randint(1, 1024),
            tag=rng.randrange(256), requester_id=rng.randrange(1 << 16))
    if kind == 2:
        length = rng.randint(1, 64)
        return CompletionWithData(
            header=CplHeader(
                completer_id=rng.randrange(1 << 16),
                status=rng.choice(tuple(CplStatus)),
                byte_count=rng.randint(4 * length, 4096),
                requester_id=rng.randrange(1 << 16),
                tag=rng.randrange(256),
                lower_address=rng.randrange(128),
                length_dw=length),
            payload=tuple(rng.randrange(1 << 32) for _ in range(length)))
    return MsiMessage(vector=rng.randrange(32))


def _mutate(rng, data):
    blob = bytearray(data)
    op = rng.randrange(4)
    if op == 0 and blob:
        for _ in range(rng.randint(1, 3)):
            blob[rng.randrange(len(blob))] ^= 1 << rng.randrange(8)
        return bytes(blob)
    if op == 1:
        return bytes(blob[:rng.randrange(len(blob) + 1)])
    if op == 2:
        return bytes(blob) + rng.randbytes(rng.randint(1, 9))
    return rng.randbytes(rng.randint(0, 80))


def test_c3_codec_soundness(capsys):
    with criterion(capsys, 3,
                   "10k random TLPs round-trip exactly; 10k mutated streams "
                   "decode or raise typed errors"):
        rng = random.Random(0x51C0DEC)
        for _ in range(10_000):
            tlp = _random_valid_tlp(rng)
            assert decode(encode(tlp)) == tlp
        for _ in range(10_000):
            blob = _mutate(rng, encode(_random_valid_tlp(rng)))
            try:
                out = decode(blob)
            except CodecError:
                continue
            assert isinstance(out, (MemWrite32, MemRead32,
                                    CompletionWithData, MsiMessage))


def test_c4_link_throughput_calculator(capsys):
    with criterion(capsys, 4,
                   "packet-efficiency model gives 1729.73 and 888.89 MB/s on "
                   "the 8-lane link"):
        wide = link_throughput_mbps(LinkParams(payload_bytes=128))
        assert wide == Fraction(64000, 37)
        assert float(wide) == pytest.approx(1729.73, abs=0.01)
        narrow = link_throughput_mbps(LinkParams(payload_bytes=16))
        assert float(narrow) == pytest.approx(888.89, abs=0.01)
        assert link_throughput_mbps(
            LinkParams(payload_bytes=128, overhead_bytes=0)) == 2000


def test_c5_stream_model_identities(capsys):
    with criterion(capsys, 5,
                   "stream efficiency and speed are exact rationals with "
                   "V = F/2 across all payload lengths"):
        assert stream_efficiency(16) == Fraction(16, 17)
        assert stream_speed_gbps(4) == Fraction(2, 5)
        assert float(stream_speed_gbps(4)) == 0.4
        for payload_dw in range(1, 1025):
            assert (stream_speed_gbps(payload_dw)
                    == stream_efficiency(payload_dw) * Fraction(1, 2))


def test_c6_interrupt_handshake_endurance(capsys):
    with criterion(capsys, 6,
                   "1000 write rounds complete with 1000 acked interrupts and "
                   "64 MB moved intact"):
        start = time.perf_counter()
        s = System(SimConfig())
        result = s.run_mwr(4, 4096, rounds=1000)
        wall = time.perf_counter() - start
        assert result.mwr_interrupts == 1000
        assert s.host.stats.acks == 1000
        assert result.mismatches == 0
        assert result.bytes_written == 65_536_000
        assert s.quiescent()
        assert wall < 10.0


def test_c7_read_flow_integrity(capsys):
    with criterion(capsys, 7,
                   "every default read payload delivers 64 KB intact with one "
                   "interrupt and a clean stop"):
        for payload_dw in (2 ** k for k in range(2, 11)):
            s = System(SimConfig())
            result = s.run_mrd(payload_dw, 65536 // (4 * payload_dw))
            assert result.mismatches == 0
            assert result.bytes_read == 65536
            assert result.mrd_interrupts == 1
            assert s.endpoint.rx_state == RxState.IDLE
            assert s.quiescent()


def test_c8_throughput_trends(capsys):
    with criterion(capsys, 8,
                   "write speed falls toward 2/3 GB/s as size grows; read "
                   "speed rises with payload under 2 GB/s"):
        floor, ceiling = Fraction(2, 3), Fraction(1)
        previous = None
        for size in (2 ** k for k in range(6, 21)):
            result = System(cli._sized_config(size)).run_mwr(4, size // 16)
            v = Fraction(size, 8 * result.mwr_perf)
            assert floor < v <= ceiling
            assert previous is None or v <= previous
            previous = v
        previous = None
        for payload_dw in (2 ** k for k in range(2, 11)):
            result = System(SimConfig()).run_mrd(
                payload_dw, 65536 // (4 * payload_dw))
            v = Fraction(65536, 8 * result.mrd_perf)
            assert v <= 2
            assert previous is None or v >= previous
            previous = v


def _cli_bytes(argv, path):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = cli.main(argv + ["--out", str(path)])
    assert code == 0, err.getvalue()
    return path.read_bytes()


def test_c9_reproducible_reports(capsys, tmp_path):
    with criterion(capsys, 9,
                   "repeated sweep, model, and trace invocations are "
                   "byte-identical"):
        jobs = [
            ("mwr", ["mwr-sweep"]),
            ("mrd", ["mrd-sweep", "--format", "json"]),
            ("theory", ["theory"]),
            ("trace", ["trace", "--mode", "mrd", "--count", "4",
                       "--format", "jsonl"]),
        ]
        for name, argv in jobs:
            first = _cli_bytes(argv, tmp_path / f"{name}_a")
            second = _cli_bytes(argv, tmp_path / f"{name}_b")
            assert first == second
            assert first
        header = (tmp_path / "mwr_a").read_bytes().split(b"\n", 1)[0]
        assert header.decode() == ",".join(cli._MWR_COLUMNS)
        rows = list(csv.DictReader(
            io.StringIO((tmp_path / "mwr_a").read_text())))
        assert len(rows) == 15
        doc = json.loads((tmp_path / "mrd_a").read_text())
        assert len(doc["rows"]) == 9
