"""Newline-delimited JSON wire protocol for the co-simulation master.

One message per line, UTF-8. Field names are part of the contract:
``kind``, ``frame_no``, ``sim_time``, ``client_id``, ``payload``,
``control``. Unknown JSON fields are ignored on decode so older kernels
tolerate newer clients.
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from taftwin.core.types import ParticipantState


class MessageKind(str, Enum):
    HELLO = "HELLO"
    WELCOME = "WELCOME"
    FRAME = "FRAME"
    UPDATE = "UPDATE"
    ACK = "ACK"
    CONTROL = "CONTROL"
    BYE = "BYE"


class MalformedMessage(ValueError):
    def __init__(self, message: str, line: str = "", position: int | None = None):
        detail = message
        if position is not None:
            detail += f" (position {position})"
        super().__init__(detail)
        self.line = line
        self.position = position


@dataclass(frozen=True)
class FrameMessage:
    """One protocol message; FRAME carries the complete participant list."""

    kind: MessageKind
    frame_no: int = 0
    sim_time: float = 0.0
    client_id: str | None = None
    payload: tuple[ParticipantState, ...] = ()
    control: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "payload", tuple(self.payload))


def encode_message(msg: FrameMessage) -> bytes:
    """Serialize to one newline-terminated JSON line."""
    doc = {
        "kind": msg.kind.value,
        "frame_no": msg.frame_no,
        "sim_time": msg.sim_time,
        "client_id": msg.client_id,
        "payload": [p.to_dict() for p in msg.payload],
        "control": msg.control,
    }
    return (json.dumps(doc, separators=(",", ":"), sort_keys=True) + "\n").encode("utf-8")


def decode_message(data: bytes | str) -> FrameMessage:
    """Parse one line back into a message; unknown fields are ignored."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    text = text.strip()
    if not text:
        raise MalformedMessage("empty message line", line=text)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedMessage(f"invalid JSON: {exc.msg}", line=text, position=exc.pos) from exc
    if not isinstance(doc, dict):
        raise MalformedMessage("message is not a JSON object", line=text)
    try:
        kind = MessageKind(doc["kind"])
    except (KeyError, ValueError) as exc:
        raise MalformedMessage(f"bad or missing kind: {exc}", line=text) from exc
    try:
        payload = tuple(ParticipantState.from_dict(p) for p in doc.get("payload", []))
        return FrameMessage(
            kind=kind,
            frame_no=int(doc.get("frame_no", 0)),
            sim_time=float(doc.get("sim_time", 0.0)),
            client_id=doc.get("client_id"),
            payload=payload,
            control=doc.get("control", {}) or {},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedMessage(f"bad field: {exc}", line=text) from exc
