"""Transaction-level simulator of a PCIe bus-master DMA engine.

The package models one endpoint (two DMA engine FSMs behind a BAR0
register block) talking to one host (driver, buffers, completion logic,
interrupt service routine) over an x8 first-generation link, cycle by
8 ns cycle.  The measured speeds come from the same performance counters
the hardware exposes; the closed-form models live in pciedma.perf.

Quick start:

    from pciedma import SimConfig, System
    result = System(SimConfig()).run_mwr(payload_len_dw=4, count=4096)
    print(result.v_mwr_gbps)
"""

from .endpoint import (
    Endpoint,
    RxState,
    TxState,
    generate_pattern,
    pattern_bytes,
    verify_pattern,
)
from .errors import (
    CodecError,
    DeadlockDetected,
    EndpointError,
    Halted,
    HostError,
    InvalidConfig,
    PcieDmaError,
    SimulationError,
    UsageError,
)
from .host import Host, HostMemory
from .perf import (
    LinkParams,
    link_throughput_mbps,
    measured_speed_gbps,
    mrd_cycle_count,
    mwr_asymptotic_gbps,
    mwr_cycle_count,
    stream_efficiency,
    stream_speed_gbps,
)
from .regfile import RegisterFile, regmap_table
from .sim import RunResult, SimConfig, System, build_system
from .tlp import (
    CompletionWithData,
    MemRead32,
    MemWrite32,
    MsiMessage,
    OverheadConfig,
    decode,
    mem_read32,
    mem_write32,
)
from .trace import TraceEvent, emit_trace

__version__ = "0.1.0"

__all__ = [
    "CodecError",
    "CompletionWithData",
    "DeadlockDetected",
    "Endpoint",
    "EndpointError",
    "Halted",
    "Host",
    "HostError",
    "HostMemory",
    "InvalidConfig",
    "LinkParams",
    "MemRead32",
    "MemWrite32",
    "MsiMessage",
    "OverheadConfig",
    "PcieDmaError",
    "RegisterFile",
    "RunResult",
    "RxState",
    "SimConfig",
    "SimulationError",
    "System",
    "TraceEvent",
    "TxState",
    "UsageError",
    "build_system",
    "decode",
    "emit_trace",
    "generate_pattern",
    "link_throughput_mbps",
    "measured_speed_gbps",
    "mem_read32",
    "mem_write32",
    "mrd_cycle_count",
    "mwr_asymptotic_gbps",
    "mwr_cycle_count",
    "pattern_bytes",
    "regmap_table",
    "stream_efficiency",
    "stream_speed_gbps",
    "verify_pattern",
    "__version__",
]
