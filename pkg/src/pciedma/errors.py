"""Exception hierarchy for the simulator.

Every error raised by this package derives from PcieDmaError so callers can
catch simulator faults without swallowing unrelated exceptions.
"""

from __future__ import annotations


class PcieDmaError(Exception):
    """Base class for all simulator errors."""


# --- TLP codec ---

class CodecError(PcieDmaError):
    """Base class for encode/decode failures."""


class InvalidLength(CodecError):
    """length_dw outside [1, 1024]."""


class MisalignedAddress(CodecError):
    """Address is not DWORD aligned or not a 32-bit value."""


class InvalidField(CodecError):
    """A header field is outside its wire range."""


class TruncatedPacket(CodecError):
    """Byte stream shorter than the minimum for its shape."""


class UnknownTypeCode(CodecError):
    """fmt/type combination this model does not speak."""


class PayloadLengthMismatch(CodecError):
    """Declared length and attached payload bytes disagree."""


# --- register file ---

class RegisterAccessError(PcieDmaError):
    """Base class for BAR0 access faults."""


class UnalignedAccess(RegisterAccessError):
    """Offset not 4-byte aligned."""


class OutOfRange(RegisterAccessError):
    """Offset outside the 2 KB window."""


# --- DMA endpoint ---

class EndpointError(PcieDmaError):
    """Base class for endpoint protocol faults."""


class ProtocolViolation(EndpointError):
    """Completion for a tag that was never issued."""


class DescriptorInvalid(EndpointError):
    """Start edge seen with a zero count or out-of-range length."""


class MsiAlreadyPending(EndpointError):
    """A second interrupt was raised before the first was acked."""


# --- host driver ---

class HostError(PcieDmaError):
    """Base class for host-model faults."""


class RangeOutsideBuffer(HostError):
    """Programmed DMA range does not fit the target buffer."""


class BadDescriptor(HostError):
    """Zero count or out-of-range payload length at program time."""


class AddressUnmapped(HostError):
    """DMA address falls outside every declared host region."""


class UnexpectedTlpType(HostError):
    """Host received a TLP kind it never initiates a response to."""


class SpuriousInterrupt(HostError):
    """ISR entered with no INT_STATUS cause bit set."""


# --- simulation ---

class SimulationError(PcieDmaError):
    """Base class for simulation-control faults."""


class InvalidConfig(SimulationError):
    """Configuration value outside its legal domain."""


class Halted(SimulationError):
    """step() called past the max_cycles safety bound."""


class DeadlockDetected(SimulationError):
    """Cycle budget exhausted with work still pending; names stuck states."""


# --- performance model ---

class ZeroCounter(PcieDmaError):
    """Measured-speed request with a zero cycle counter."""


# --- CLI ---

class UsageError(PcieDmaError):
    """Bad command-line input; maps to exit code 1."""


class IndivisibleDataSize(UsageError):
    """Sweep data size not divisible by the TLP payload size."""


class PayloadOutOfRange(UsageError):
    """Payload length outside [1, 1024] DWORDs."""


class IoFailure(UsageError):
    """Report or trace output could not be written."""
