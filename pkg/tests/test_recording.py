"""Scenario recording save/load, playback, and over-dub tests."""

import pytest

from taftwin.core.types import GeoAnchor, StateSource
from taftwin.cosim.protocol import MessageKind
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
from tests.conftest import make_state

ANCHOR = GeoAnchor(origin_lat=48.78, origin_lon=9.18)


def make_recording(
    n_frames: int = 5, pid: int = 1, dt: float = 0.1, anchor: GeoAnchor = ANCHOR
) -> ScenarioRecording:
    frames = [
        RecordedFrame(
            frame_no=i,
            sim_time=i * dt,
            participants=(
                make_state(pid=pid, t=i * dt, position=(float(i), 0.0, 0.0)),
            ),
            signals={1: "green" if i % 2 == 0 else "red"},
        )
        for i in range(n_frames)
    ]
    return ScenarioRecording(anchor=anchor, dt=dt, frames=tuple(frames))


class TestSaveLoad:
    def test_round_trip(self, tmp_path):
        recording = make_recording()
        path = tmp_path / "run.dtrec"
        save_recording(recording, path)
        loaded = load_recording(path)
        assert loaded.frames == recording.frames
        assert loaded.dt == recording.dt
        assert loaded.anchor == recording.anchor

    def test_gzip_round_trip(self, tmp_path):
        recording = make_recording()
        path = tmp_path / "run.dtrec.gz"
        save_recording(recording, path)
        assert load_recording(path).frames == recording.frames

    def test_tampered_file_rejected(self, tmp_path):
        path = tmp_path / "run.dtrec"
        save_recording(make_recording(), path)
        text = path.read_text(encoding="utf-8")
        path.write_text(text.replace('"sim_time":0.1', '"sim_time":0.2'), "utf-8")
        with pytest.raises(CorruptRecording):
            load_recording(path)

    def test_shuffled_frame_numbers_rejected(self, tmp_path):
        frames = list(make_recording().frames)
        frames[1], frames[3] = frames[3], frames[1]
        recording = ScenarioRecording(anchor=ANCHOR, dt=0.1, frames=tuple(frames))
        path = tmp_path / "run.dtrec"
        save_recording(recording, path)
        with pytest.raises(CorruptRecording):
            load_recording(path)

    def test_missing_hash_line_rejected(self, tmp_path):
        path = tmp_path / "run.dtrec"
        save_recording(make_recording(), path)
        lines = path.read_text("utf-8").strip().split("\n")
        path.write_text("\n".join(lines[:-1]) + "\n", "utf-8")
        with pytest.raises(CorruptRecording):
            load_recording(path)


class TestPlayback:
    def test_bit_exact_payloads(self):
        recording = make_recording(n_frames=10)
        replayed = list(playback(recording))
        assert len(replayed) == 10
        for frame, (_, msg) in zip(recording.frames, replayed):
            assert msg.kind is MessageKind.FRAME
            assert msg.frame_no == frame.frame_no
            assert msg.sim_time == frame.sim_time
            # Identical except the source retag.
            stripped = tuple(
                p.with_source(StateSource.SIMULATED) for p in msg.payload
            )
            assert stripped == frame.participants

    def test_participants_retagged_recorded(self):
        recording = make_recording()
        _, msg = next(iter(playback(recording)))
        assert all(p.source is StateSource.RECORDED for p in msg.payload)

    def test_speed_halves_delay(self):
        recording = make_recording(dt=0.1)
        delay_1x = next(iter(playback(recording, speed=1.0)))[0]
        delay_2x = next(iter(playback(recording, speed=2.0)))[0]
        assert delay_1x == pytest.approx(0.1)
        assert delay_2x == pytest.approx(0.05)

    def test_bad_speed_rejected(self):
        with pytest.raises(ValueError):
            list(playback(make_recording(), speed=0.0))


class TestOverdub:
    def test_disjoint_ids_union(self):
        base = make_recording(pid=1)
        overlay = make_recording(pid=2)
        merged = overdub(base, overlay)
        for frame in merged.frames:
            assert {p.id for p in frame.participants} == {1, 2}
        assert merged.metadata["overdub_remap"] == {}

    def test_colliding_ids_remapped(self):
        base = make_recording(pid=3)
        overlay = make_recording(pid=3)
        merged = overdub(base, overlay)
        remap = merged.metadata["overdub_remap"]
        assert remap == {"3": 4}
        for frame in merged.frames:
            assert {p.id for p in frame.participants} == {3, 4}

    def test_base_signal_track_wins_by_default(self):
        base = make_recording()
        overlay_frames = tuple(
            RecordedFrame(f.frame_no, f.sim_time, f.participants, {1: "red"})
            for f in make_recording(pid=2).frames
        )
        overlay = ScenarioRecording(anchor=ANCHOR, dt=0.1, frames=overlay_frames)
        merged = overdub(base, overlay)
        assert merged.frames[0].signals == {1: "green"}

    def test_overlay_signal_override(self):
        base = make_recording()
        overlay = ScenarioRecording(
            anchor=ANCHOR,
            dt=0.1,
            frames=tuple(
                RecordedFrame(f.frame_no, f.sim_time, f.participants, {1: "red"})
                for f in make_recording(pid=2).frames
            ),
            metadata={"signal_override": True},
        )
        merged = overdub(base, overlay)
        assert merged.frames[0].signals == {1: "red"}

    def test_dt_mismatch_rejected(self):
        with pytest.raises(IncompatibleRecordings):
            overdub(make_recording(dt=0.1), make_recording(dt=0.05))

    def test_anchor_mismatch_rejected(self):
        other = GeoAnchor(origin_lat=50.0, origin_lon=8.0)
        with pytest.raises(IncompatibleRecordings):
            overdub(make_recording(), make_recording(anchor=other))
