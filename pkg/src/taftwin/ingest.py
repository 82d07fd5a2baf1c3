"""Camera-plane detections to geo-referenced, tracked object lists.

Projection is locally adaptive: each query point is projected with a
homography fitted to its seven nearest calibration pairs (normalized DLT,
least squares when overdetermined), which absorbs terrain and lens
distortion a single global fit cannot. Same-class points from different
cameras are fused by proximity, tracked with a constant-velocity
nearest-neighbor tracker, and exported as a CSV object list.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from taftwin.core.types import GeoAnchor, ParticipantClass


class DegenerateConfiguration(ValueError):
    pass


#: Default fallback dimensions (length, width, height) per class for export.
CLASS_DIMENSIONS = {
    ParticipantClass.CAR: (4.5, 1.8, 1.5),
    ParticipantClass.TRUCK: (10.0, 2.5, 3.5),
    ParticipantClass.BUS: (12.0, 2.5, 3.2),
    ParticipantClass.TRAM: (30.0, 2.4, 3.5),
    ParticipantClass.BICYCLE: (1.8, 0.6, 1.7),
    ParticipantClass.PEDESTRIAN: (0.5, 0.5, 1.8),
    ParticipantClass.UNKNOWN: (1.0, 1.0, 1.0),
}


@dataclass(frozen=True)
class CalibrationSet:
    """Pixel-to-world point pairs for one camera."""

    camera_id: str
    pairs: tuple[tuple[float, float, float, float], ...]  # (u, v, x, y)

    def __post_init__(self) -> None:
        if len(self.pairs) < 4:
            raise ValueError(
                f"camera {self.camera_id}: need >= 4 calibration pairs, got {len(self.pairs)}"
            )
        pixels = [(u, v) for u, v, _, _ in self.pairs]
        if len(set(pixels)) != len(pixels):
            raise ValueError(f"camera {self.camera_id}: duplicate pixel points")
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationSet":
        return cls(
            camera_id=str(d["camera_id"]),
            pairs=tuple(
                (float(p["u"]), float(p["v"]), float(p["x"]), float(p["y"]))
                for p in d["pairs"]
            ),
        )


@dataclass(frozen=True)
class Detection:
    """One camera-plane detection (base center of the object's mask)."""

    camera_id: str
    timestamp: float
    u: float
    v: float
    participant_class: ParticipantClass


@dataclass(frozen=True)
class WorldPoint:
    """A detection projected onto the world ground plane."""

    camera_id: str
    timestamp: float
    x: float
    y: float
    participant_class: ParticipantClass


def _hartley_normalization(points: np.ndarray) -> np.ndarray:
    """Similarity transform taking points to centroid 0, mean distance sqrt(2)."""
    centroid = points.mean(axis=0)
    distances = np.linalg.norm(points - centroid, axis=1)
    mean_dist = distances.mean()
    scale = math.sqrt(2.0) / mean_dist if mean_dist > 0 else 1.0
    return np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def fit_homography(
    src: Sequence[tuple[float, float]], dst: Sequence[tuple[float, float]]
) -> np.ndarray:
    """Normalized DLT homography src -> dst; least squares when > 4 pairs."""
    if len(src) < 4 or len(src) != len(dst):
        raise ValueError("need >= 4 point pairs of equal count")
    src_arr = np.asarray(src, dtype=float)
    dst_arr = np.asarray(dst, dtype=float)
    if _collinear(src_arr) or _collinear(dst_arr):
        raise DegenerateConfiguration("calibration points are collinear")
    t_src = _hartley_normalization(src_arr)
    t_dst = _hartley_normalization(dst_arr)
    src_h = (t_src @ np.column_stack([src_arr, np.ones(len(src_arr))]).T).T
    dst_h = (t_dst @ np.column_stack([dst_arr, np.ones(len(dst_arr))]).T).T

    rows = []
    for (sx, sy, _), (dx, dy, _) in zip(src_h, dst_h):
        rows.append([-sx, -sy, -1, 0, 0, 0, dx * sx, dx * sy, dx])
        rows.append([0, 0, 0, -sx, -sy, -1, dy * sx, dy * sy, dy])
    a = np.asarray(rows)
    _, s, vt = np.linalg.svd(a)
    if s[-2] < 1e-10 * s[0]:
        raise DegenerateConfiguration("homography system is rank deficient")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_norm @ t_src
    return h / h[2, 2]


def _collinear(points: np.ndarray, tol: float = 1e-9) -> bool:
    centered = points - points.mean(axis=0)
    singular = np.linalg.svd(centered, compute_uv=False)
    scale = singular[0] if singular[0] > 0 else 1.0
    return singular[1] / scale < tol


def apply_homography(h: np.ndarray, point: tuple[float, float]) -> tuple[float, float]:
    vec = h @ np.array([point[0], point[1], 1.0])
    return float(vec[0] / vec[2]), float(vec[1] / vec[2])


def project_point(
    calib: CalibrationSet, pixel: tuple[float, float], k: int = 7
) -> tuple[float, float]:
    """Project one pixel using a homography over its k nearest pairs.

    Falls back to a larger neighborhood when the nearest pairs are
    degenerate; raises DegenerateConfiguration if even the full set is.
    """
    pairs = sorted(
        calib.pairs, key=lambda p: (p[0] - pixel[0]) ** 2 + (p[1] - pixel[1]) ** 2
    )
    k = max(4, min(k, len(pairs)))
    while True:
        subset = pairs[:k]
        src = [(u, v) for u, v, _, _ in subset]
        dst = [(x, y) for _, _, x, y in subset]
        try:
            h = fit_homography(src, dst)
            return apply_homography(h, pixel)
        except DegenerateConfiguration:
            if k >= len(pairs):
                raise
            k += 1


def project_detections(
    calibrations: dict[str, CalibrationSet], detections: Iterable[Detection]
) -> list[WorldPoint]:
    out = []
    for det in detections:
        calib = calibrations[det.camera_id]
        x, y = project_point(calib, (det.u, det.v))
        out.append(
            WorldPoint(
                camera_id=det.camera_id,
                timestamp=det.timestamp,
                x=x,
                y=y,
                participant_class=det.participant_class,
            )
        )
    return out


def merge_detections(points: Sequence[WorldPoint], radius: float) -> list[WorldPoint]:
    """Fuse same-class points within radius across cameras (single linkage).

    Per-camera duplicates inside a group are averaged before the group
    centroid, so a camera firing twice does not outvote another camera.
    Output order is canonical (class, then coordinates), making the result
    invariant to input permutation.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    points = list(points)
    parent = list(range(len(points)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            a, b = points[i], points[j]
            if a.participant_class != b.participant_class:
                continue
            if math.hypot(a.x - b.x, a.y - b.y) <= radius:
                union(i, j)

    groups: dict[int, list[WorldPoint]] = {}
    for i, point in enumerate(points):
        groups.setdefault(find(i), []).append(point)

    fused = []
    for members in groups.values():
        per_camera: dict[str, list[WorldPoint]] = {}
        for p in members:
            per_camera.setdefault(p.camera_id, []).append(p)
        cam_means = [
            (
                sum(p.x for p in ps) / len(ps),
                sum(p.y for p in ps) / len(ps),
            )
            for ps in per_camera.values()
        ]
        cx = sum(x for x, _ in cam_means) / len(cam_means)
        cy = sum(y for _, y in cam_means) / len(cam_means)
        fused.append(
            WorldPoint(
                camera_id="fused",
                timestamp=max(p.timestamp for p in members),
                x=cx,
                y=cy,
                participant_class=members[0].participant_class,
            )
        )
    fused.sort(key=lambda p: (p.participant_class.value, p.x, p.y))
    return fused


@dataclass
class Track:
    """One tracked object: time-ordered world positions plus coasting state."""

    track_id: int
    participant_class: ParticipantClass
    history: list[tuple[float, float, float]] = field(default_factory=list)  # (t, x, y)
    missed: int = 0
    closed: bool = False

    def velocity(self) -> tuple[float, float]:
        if len(self.history) < 2:
            return 0.0, 0.0
        (t0, x0, y0), (t1, x1, y1) = self.history[-2], self.history[-1]
        dt = t1 - t0
        if dt <= 0:
            return 0.0, 0.0
        return (x1 - x0) / dt, (y1 - y0) / dt

    def predict(self, dt: float) -> tuple[float, float]:
        _, x, y = self.history[-1]
        vx, vy = self.velocity()
        steps = self.missed + 1
        return x + vx * dt * steps, y + vy * dt * steps


class Tracker:
    """Greedy global-nearest-neighbor tracker with CV prediction."""

    def __init__(self, gate: float, max_missed: int = 5):
        if gate <= 0:
            raise ValueError("gate must be positive")
        self.gate = gate
        self.max_missed = max_missed
        self.tracks: list[Track] = []
        self._next_id = 1

    @property
    def open_tracks(self) -> list[Track]:
        return [t for t in self.tracks if not t.closed]

    def step(self, detections: Sequence[WorldPoint], dt: float) -> list[Track]:
        if dt <= 0:
            raise ValueError("dt must be positive")
        open_tracks = self.open_tracks
        candidates = []
        for ti, track in enumerate(open_tracks):
            px, py = track.predict(dt)
            for di, det in enumerate(detections):
                if det.participant_class != track.participant_class:
                    continue
                dist = math.hypot(det.x - px, det.y - py)
                if dist <= self.gate:
                    candidates.append((dist, ti, di))
        candidates.sort(key=lambda c: (c[0], c[1], c[2]))
        used_tracks: set[int] = set()
        used_dets: set[int] = set()
        for dist, ti, di in candidates:
            if ti in used_tracks or di in used_dets:
                continue
            used_tracks.add(ti)
            used_dets.add(di)
            track = open_tracks[ti]
            det = detections[di]
            track.history.append((det.timestamp, det.x, det.y))
            track.missed = 0
        for ti, track in enumerate(open_tracks):
            if ti not in used_tracks:
                track.missed += 1
                if track.missed > self.max_missed:
                    track.closed = True
        for di, det in enumerate(detections):
            if di not in used_dets:
                track = Track(
                    track_id=self._next_id,
                    participant_class=det.participant_class,
                    history=[(det.timestamp, det.x, det.y)],
                )
                self._next_id += 1
                self.tracks.append(track)
        return self.tracks


OBJECT_LIST_COLUMNS = [
    "id",
    "timestamp",
    "class",
    "lat",
    "lon",
    "x",
    "y",
    "z",
    "yaw",
    "yaw_rate",
    "speed",
    "v_rel",
    "length",
    "width",
    "height",
]


def export_object_list(tracks: Iterable[Track], anchor: GeoAnchor) -> str:
    """CSV object list, one row per (track, frame).

    x/y are world Mercator-plane meters relative to the anchor; lat/lon
    come from the anchor conversion. yaw/speed derive from displacement;
    v_rel is the speed change versus the previous frame (an extension
    column, 0 for the first frame). Dimensions are class defaults.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(OBJECT_LIST_COLUMNS)
    for track in sorted(tracks, key=lambda t: t.track_id):
        dims = CLASS_DIMENSIONS[track.participant_class]
        prev_yaw: Optional[float] = None
        prev_speed = 0.0
        prev_t: Optional[float] = None
        for i, (t, x, y) in enumerate(track.history):
            if i + 1 < len(track.history):
                t2, x2, y2 = track.history[i + 1]
                step = t2 - t
                if step > 0:
                    speed = math.hypot(x2 - x, y2 - y) / step
                    yaw = (
                        math.atan2(y2 - y, x2 - x)
                        if speed > 1e-9
                        else (prev_yaw if prev_yaw is not None else 0.0)
                    )
                else:
                    speed, yaw = prev_speed, (prev_yaw if prev_yaw is not None else 0.0)
            else:
                # Last sample: hold the previous estimate.
                speed = prev_speed
                yaw = prev_yaw if prev_yaw is not None else 0.0
            back = t - prev_t if prev_t is not None else 0.0
            yaw_rate = (yaw - prev_yaw) / back if prev_yaw is not None and back > 0 else 0.0
            v_rel = speed - prev_speed if i > 0 else 0.0
            lat, lon = anchor.enu_to_wgs84(x, y)
            writer.writerow(
                [
                    track.track_id,
                    f"{t:.6f}",
                    track.participant_class.value,
                    f"{lat:.8f}",
                    f"{lon:.8f}",
                    f"{x:.4f}",
                    f"{y:.4f}",
                    "0.0000",
                    f"{yaw:.6f}",
                    f"{yaw_rate:.6f}",
                    f"{speed:.4f}",
                    f"{v_rel:.4f}",
                    f"{dims[0]:.2f}",
                    f"{dims[1]:.2f}",
                    f"{dims[2]:.2f}",
                ]
            )
            prev_yaw = yaw
            prev_speed = speed
            prev_t = t
    return buffer.getvalue()


# -- file plumbing ----------------------------------------------------------------


def load_calibrations(path: str | Path) -> dict[str, CalibrationSet]:
    """Calibration JSON: one camera object or a list of them."""
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    cameras = doc if isinstance(doc, list) else [doc]
    out = {}
    for raw in cameras:
        calib = CalibrationSet.from_dict(raw)
        out[calib.camera_id] = calib
    return out


def load_detections(path: str | Path) -> list[Detection]:
    """Detection input: JSON lines with camera_id, t, u, v, class."""
    detections = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            detections.append(
                Detection(
                    camera_id=str(d["camera_id"]),
                    timestamp=float(d["t"]),
                    u=float(d["u"]),
                    v=float(d["v"]),
                    participant_class=ParticipantClass(d["class"]),
                )
            )
    detections.sort(key=lambda d: d.timestamp)
    return detections


def run_ingest(
    calibrations: dict[str, CalibrationSet],
    detections: Sequence[Detection],
    anchor: GeoAnchor,
    merge_radius: float = 1.5,
    frame_dt: float = 0.1,
    gate: float = 3.0,
    max_missed: int = 5,
) -> tuple[list[Track], str]:
    """Whole pipeline: project, fuse per frame, track, export CSV."""
    world = project_detections(calibrations, detections)
    frames: dict[int, list[WorldPoint]] = {}
    for point in world:
        frames.setdefault(int(round(point.timestamp / frame_dt)), []).append(point)
    tracker = Tracker(gate=gate, max_missed=max_missed)
    for frame_index in sorted(frames):
        fused = merge_detections(frames[frame_index], merge_radius)
        tracker.step(fused, frame_dt)
    csv_text = export_object_list(tracker.tracks, anchor)
    return tracker.tracks, csv_text
