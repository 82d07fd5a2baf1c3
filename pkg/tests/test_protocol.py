"""Wire-protocol encode/decode tests."""

import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taftwin.core.types import ParticipantClass
from taftwin.cosim.protocol import (
    FrameMessage,
    MalformedMessage,
    MessageKind,
    decode_message,
    encode_message,
)
from tests.conftest import make_state


participant_states = st.builds(
    make_state,
    pid=st.integers(min_value=0, max_value=10**6),
    t=st.floats(min_value=0, max_value=1e5),
    cls=st.sampled_from(list(ParticipantClass)),
    position=st.tuples(
        st.floats(min_value=-1e4, max_value=1e4),
        st.floats(min_value=-1e4, max_value=1e4),
        st.floats(min_value=-100, max_value=100),
    ),
    yaw=st.floats(min_value=-3.1, max_value=3.1),
    yaw_rate=st.floats(min_value=-5, max_value=5),
    speed=st.floats(min_value=0, max_value=100),
)

messages = st.builds(
    FrameMessage,
    kind=st.sampled_from(list(MessageKind)),
    frame_no=st.integers(min_value=0, max_value=10**9),
    sim_time=st.floats(min_value=0, max_value=1e6),
    client_id=st.one_of(st.none(), st.text(min_size=1, max_size=12)),
    payload=st.lists(participant_states, max_size=5).map(tuple),
    control=st.dictionaries(
        st.text(min_size=1, max_size=8),
        st.one_of(st.integers(), st.text(max_size=8), st.booleans()),
        max_size=3,
    ),
)


class TestRoundTrip:
    def test_simple_frame(self):
        msg = FrameMessage(
            kind=MessageKind.FRAME,
            frame_no=7,
            sim_time=0.35,
            payload=(make_state(pid=1), make_state(pid=2)),
        )
        assert decode_message(encode_message(msg)) == msg

    def test_frame_payload_is_json_array(self):
        msg = FrameMessage(
            kind=MessageKind.FRAME, payload=(make_state(pid=1), make_state(pid=2))
        )
        doc = json.loads(encode_message(msg))
        assert isinstance(doc["payload"], list)
        assert len(doc["payload"]) == 2
        assert doc["kind"] == "FRAME"

    def test_one_message_per_line(self):
        encoded = encode_message(FrameMessage(kind=MessageKind.ACK))
        assert encoded.endswith(b"\n")
        assert encoded.count(b"\n") == 1

    @settings(max_examples=500, deadline=None)
    @given(msg=messages)
    def test_round_trip_property(self, msg):
        assert decode_message(encode_message(msg)) == msg


class TestForwardCompatibility:
    def test_unknown_fields_ignored(self):
        encoded = encode_message(FrameMessage(kind=MessageKind.ACK, frame_no=3))
        doc = json.loads(encoded)
        doc["future_field"] = {"nested": [1, 2, 3]}
        decoded = decode_message(json.dumps(doc))
        assert decoded.kind is MessageKind.ACK
        assert decoded.frame_no == 3


class TestMalformed:
    def test_truncated_line(self):
        encoded = encode_message(FrameMessage(kind=MessageKind.FRAME))
        with pytest.raises(MalformedMessage):
            decode_message(encoded[: len(encoded) // 2])

    def test_invalid_json_reports_position(self):
        with pytest.raises(MalformedMessage) as exc:
            decode_message('{"kind": "FRAME", ')
        assert exc.value.position is not None

    def test_empty_line(self):
        with pytest.raises(MalformedMessage):
            decode_message("")

    def test_non_object(self):
        with pytest.raises(MalformedMessage):
            decode_message("[1, 2, 3]")

    def test_unknown_kind(self):
        with pytest.raises(MalformedMessage):
            decode_message('{"kind": "TELEPORT"}')

    def test_bad_payload_field(self):
        with pytest.raises(MalformedMessage):
            decode_message('{"kind": "UPDATE", "payload": [{"id": 1}]}')


class TestSharedCorpus:
    """The corpus under frontend/tests/corpus pins the canonical encoding
    shared with the TypeScript client SDK."""

    CORPUS = (
        Path(__file__).resolve().parent.parent
        / "frontend" / "tests" / "corpus" / "messages.jsonl"
    )

    def test_corpus_round_trips_byte_identically(self):
        lines = self.CORPUS.read_bytes().splitlines(keepends=True)
        assert len(lines) == 200
        for line in lines:
            assert encode_message(decode_message(line)) == line
