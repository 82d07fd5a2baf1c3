"""Frame-locked co-simulation: wire protocol, kernel, recording, server."""

from taftwin.cosim.protocol import (
    FrameMessage,
    MalformedMessage,
    MessageKind,
    decode_message,
    encode_message,
)
from taftwin.cosim.recording import (
    CorruptRecording,
    IncompatibleRecordings,
    RecordedFrame,
    ScenarioRecording,
    load_recording,
    overdub,
    playback,
    save_recording,
)
from taftwin.cosim.kernel import (
    FrameState,
    OwnershipViolation,
    SimulationKernel,
    StaleUpdate,
)

__all__ = [
    "CorruptRecording",
    "FrameMessage",
    "FrameState",
    "IncompatibleRecordings",
    "MalformedMessage",
    "MessageKind",
    "OwnershipViolation",
    "RecordedFrame",
    "ScenarioRecording",
    "SimulationKernel",
    "StaleUpdate",
    "decode_message",
    "encode_message",
    "load_recording",
    "overdub",
    "playback",
    "save_recording",
]
