"""Scenario recording (.dtrec), playback, and over-dubbing.

A .dtrec file is JSON lines: one header line, one frame line per tick,
and a trailing integrity-hash line (SHA-256 over every preceding line).
Files ending in ``.gz`` are gzip-compressed transparently.
"""

import gzip
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator

from taftwin.core.types import GeoAnchor, ParticipantState, StateSource
from taftwin.cosim.protocol import FrameMessage, MessageKind

FORMAT_VERSION = "dtrec-1"


class CorruptRecording(ValueError):
    pass


class IncompatibleRecordings(ValueError):
    pass


@dataclass(frozen=True)
class RecordedFrame:
    frame_no: int
    sim_time: float
    participants: tuple[ParticipantState, ...]
    signals: dict[int, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "frame",
            "frame_no": self.frame_no,
            "sim_time": self.sim_time,
            "payload": [p.to_dict() for p in self.participants],
            "signals": {str(g): s for g, s in self.signals.items()},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RecordedFrame":
        return cls(
            frame_no=int(d["frame_no"]),
            sim_time=float(d["sim_time"]),
            participants=tuple(ParticipantState.from_dict(p) for p in d.get("payload", [])),
            signals={int(g): str(s) for g, s in d.get("signals", {}).items()},
        )


@dataclass(frozen=True)
class ScenarioRecording:
    anchor: GeoAnchor
    dt: float
    frames: tuple[RecordedFrame, ...] = ()
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "frames", tuple(self.frames))


def _open(path: Path, mode: str):
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def save_recording(recording: ScenarioRecording, path: str | Path) -> None:
    path = Path(path)
    lines = [
        json.dumps(
            {
                "type": "header",
                "version": FORMAT_VERSION,
                "anchor": recording.anchor.to_dict(),
                "dt": recording.dt,
                "metadata": recording.metadata,
            },
            separators=(",", ":"),
            sort_keys=True,
        )
    ]
    lines.extend(
        json.dumps(frame.to_dict(), separators=(",", ":"), sort_keys=True)
        for frame in recording.frames
    )
    digest = hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()
    lines.append(json.dumps({"type": "hash", "sha256": digest}, separators=(",", ":"), sort_keys=True))
    with _open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_recording(path: str | Path) -> ScenarioRecording:
    path = Path(path)
    with _open(path, "r") as f:
        raw_lines = [line.rstrip("\n") for line in f if line.strip()]
    if len(raw_lines) < 2:
        raise CorruptRecording("recording too short")
    try:
        trailer = json.loads(raw_lines[-1])
    except json.JSONDecodeError as exc:
        raise CorruptRecording(f"bad trailer line: {exc}") from exc
    if trailer.get("type") != "hash":
        raise CorruptRecording("missing integrity hash line")
    digest = hashlib.sha256("\n".join(raw_lines[:-1]).encode("utf-8")).hexdigest()
    if digest != trailer.get("sha256"):
        raise CorruptRecording("integrity hash mismatch")
    try:
        header = json.loads(raw_lines[0])
    except json.JSONDecodeError as exc:
        raise CorruptRecording(f"bad header line: {exc}") from exc
    if header.get("type") != "header":
        raise CorruptRecording("first line is not a header")
    frames = []
    for raw in raw_lines[1:-1]:
        try:
            doc = json.loads(raw)
            frames.append(RecordedFrame.from_dict(doc))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise CorruptRecording(f"bad frame line: {exc}") from exc
    for a, b in zip(frames, frames[1:]):
        if b.frame_no <= a.frame_no:
            raise CorruptRecording(
                f"non-monotone frame numbers: {a.frame_no} then {b.frame_no}"
            )
    return ScenarioRecording(
        anchor=GeoAnchor.from_dict(header["anchor"]),
        dt=float(header["dt"]),
        frames=tuple(frames),
        metadata=header.get("metadata", {}),
    )


def record_frames(
    anchor: GeoAnchor,
    dt: float,
    frames: Iterable[RecordedFrame],
    metadata: dict[str, Any] | None = None,
) -> ScenarioRecording:
    return ScenarioRecording(
        anchor=anchor, dt=dt, frames=tuple(frames), metadata=metadata or {}
    )


def playback(
    recording: ScenarioRecording, speed: float = 1.0
) -> Iterator[tuple[float, FrameMessage]]:
    """Yield (wall-clock delay seconds, FRAME message) per recorded frame.

    Participants are re-tagged source=recorded. Payloads are bit-exact
    otherwise; pacing is the caller's job (sleep the yielded delay).
    """
    if speed <= 0:
        raise ValueError("speed must be positive")
    delay = recording.dt / speed
    for frame in recording.frames:
        msg = FrameMessage(
            kind=MessageKind.FRAME,
            frame_no=frame.frame_no,
            sim_time=frame.sim_time,
            payload=tuple(
                p.with_source(StateSource.RECORDED) for p in frame.participants
            ),
            control={"signals": {str(g): s for g, s in frame.signals.items()}},
        )
        yield delay, msg


def overdub(
    base: ScenarioRecording, overlay: ScenarioRecording
) -> ScenarioRecording:
    """Layer an overlay recording onto a base one.

    Frames are aligned by frame number; participants are unioned. Overlay
    ids colliding with base ids are remapped to fresh ids (the remap table
    lands in metadata["overdub_remap"]). The base signal track wins unless
    the overlay's metadata sets ``signal_override``.
    """
    if abs(base.dt - overlay.dt) > 1e-12:
        raise IncompatibleRecordings(f"dt mismatch: {base.dt} vs {overlay.dt}")
    if base.anchor != overlay.anchor:
        raise IncompatibleRecordings("anchor mismatch")

    base_ids = {p.id for frame in base.frames for p in frame.participants}
    overlay_ids = {p.id for frame in overlay.frames for p in frame.participants}
    next_id = max(base_ids | overlay_ids, default=0) + 1
    remap: dict[int, int] = {}
    for pid in sorted(overlay_ids & base_ids):
        remap[pid] = next_id
        next_id += 1

    signal_override = bool(overlay.metadata.get("signal_override", False))
    overlay_by_no = {frame.frame_no: frame for frame in overlay.frames}
    merged_frames = []
    seen = set()
    for frame in base.frames:
        seen.add(frame.frame_no)
        over = overlay_by_no.get(frame.frame_no)
        participants = list(frame.participants)
        signals = dict(frame.signals)
        if over is not None:
            for p in over.participants:
                if p.id in remap:
                    p = replace(p, id=remap[p.id])
                participants.append(p)
            if signal_override:
                signals = dict(over.signals)
        merged_frames.append(
            RecordedFrame(
                frame_no=frame.frame_no,
                sim_time=frame.sim_time,
                participants=tuple(participants),
                signals=signals,
            )
        )
    for frame in overlay.frames:
        if frame.frame_no in seen:
            continue
        participants = tuple(
            replace(p, id=remap[p.id]) if p.id in remap else p
            for p in frame.participants
        )
        merged_frames.append(replace(frame, participants=participants))
    merged_frames.sort(key=lambda f: f.frame_no)

    metadata = dict(base.metadata)
    metadata["overdub_remap"] = {str(old): new for old, new in remap.items()}
    return ScenarioRecording(
        anchor=base.anchor, dt=base.dt, frames=tuple(merged_frames), metadata=metadata
    )
