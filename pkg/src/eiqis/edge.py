"""Per-camera edge pipeline: detector cadence, gap-filling tracker, features.

The detector is a scenario oracle: it reads ground-truth boxes and applies
seeded miss/jitter noise, standing in for CNN inference. It fires every
``cadence`` frames; between firings each track coasts on a constant-velocity
prediction. Feature extractors are registered microservice-style: each one
owns a disjoint set of emitted keys and can be added or removed at runtime.

A track is *live* while it was matched at the most recent detector firing
(misses == 0). Tracks that missed keep coasting up to the miss limit but
emit no features, so ghost tracks never leak into counts.
"""

from __future__ import annotations

import hashlib
import math
import random
from collections import deque
from dataclasses import dataclass
from typing import Callable, IO, Iterable

from .records import FeatureRecord, encode_record
from .scenario import Box, GroundTruthFrame, WorldConfig

DETECTOR_CADENCE = 15  # frames between detector firings (2 Hz at 30 fps)
IOU_TAU = 0.3          # minimum IoU to accept a track/detection match
MISS_LIMIT = 10        # consecutive unmatched firings before retirement
HISTORY_WINDOW = 5     # (ts, center) samples kept for speed/direction


class SequencingError(RuntimeError):
    """Frames were fed to a tracker out of order."""


class RegistryError(ValueError):
    """Extractor registration or emission violated the key registry."""


@dataclass(frozen=True)
class NoiseParams:
    miss_rate: float = 0.0
    jitter_px: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.miss_rate < 1.0:
            raise ValueError(f"miss_rate must be in [0, 1), got {self.miss_rate}")
        if self.jitter_px < 0:
            raise ValueError(f"jitter_px must be >= 0, got {self.jitter_px}")


@dataclass(frozen=True, slots=True)
class Detection:
    cls: str
    box: Box
    confidence: float


@dataclass(slots=True)
class TrackState:
    track_id: int
    camera_id: str
    cls: str
    box: Box
    history: deque  # of (ts_ms, cx, cy), maxlen HISTORY_WINDOW
    velocity: tuple[float, float] = (0.0, 0.0)  # px/s
    misses: int = 0
    born_frame_no: int = 0
    first_ts: float = 0.0

    @property
    def live(self) -> bool:
        return self.misses == 0


@dataclass(frozen=True, slots=True)
class TrackEvent:
    kind: str  # "opened" | "retired"
    track_id: int
    frame_no: int


def _frame_rng(seed: int, camera_id: str, frame_no: int) -> random.Random:
    # Stable across processes (unlike hash()), independent of call order.
    digest = hashlib.blake2s(
        f"{seed}:{camera_id}:{frame_no}".encode(), digest_size=8
    ).digest()
    return random.Random(int.from_bytes(digest, "big"))


def detect(frame: GroundTruthFrame, noise: NoiseParams) -> list[Detection]:
    """Oracle detector: ground-truth boxes with seeded miss/jitter noise.

    Each box is independently dropped with probability miss_rate; survivors
    get uniform jitter in [-jitter_px, +jitter_px] on every coordinate.
    """
    rng = _frame_rng(noise.seed, frame.camera_id, frame.frame_no)
    out = []
    for _entity_id, cls, box in frame.boxes:
        if noise.miss_rate > 0 and rng.random() < noise.miss_rate:
            continue
        if noise.jitter_px > 0:
            j = noise.jitter_px
            box = Box(
                x=box.x + rng.uniform(-j, j),
                y=box.y + rng.uniform(-j, j),
                w=max(box.w + rng.uniform(-j, j), 1.0),
                h=max(box.h + rng.uniform(-j, j), 1.0),
            )
        out.append(Detection(cls=cls, box=box, confidence=1.0 - noise.miss_rate))
    return out


def iou(a: Box, b: Box) -> float:
    """Intersection-over-union of two boxes, in [0, 1]."""
    ix = max(a.x, b.x)
    iy = max(a.y, b.y)
    iw = min(a.x + a.w, b.x + b.w) - ix
    ih = min(a.y + a.h, b.y + b.h) - iy
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


def _window_velocity(history: deque) -> tuple[float, float]:
    if len(history) < 2:
        return (0.0, 0.0)
    t0, x0, y0 = history[0]
    t1, x1, y1 = history[-1]
    dt_s = (t1 - t0) / 1000.0
    if dt_s <= 0:
        return (0.0, 0.0)
    return ((x1 - x0) / dt_s, (y1 - y0) / dt_s)


class Tracker:
    """Greedy IoU association with constant-velocity gap filling.

    Must be stepped once per frame in frame order; detections are passed
    only on detector-cadence frames. Track ids are never reused.
    """

    def __init__(
        self,
        camera_id: str,
        frame_period_ms: float,
        tau: float = IOU_TAU,
        miss_limit: int = MISS_LIMIT,
        history_window: int = HISTORY_WINDOW,
    ) -> None:
        self.camera_id = camera_id
        self.frame_period_ms = frame_period_ms
        self.tau = tau
        self.miss_limit = miss_limit
        self.history_window = history_window
        self.tracks: list[TrackState] = []
        self.next_track_id = 0
        self.last_frame_no: int | None = None

    def step(
        self, frame: GroundTruthFrame, detections: list[Detection] | None
    ) -> list[TrackEvent]:
        if self.last_frame_no is not None and frame.frame_no != self.last_frame_no + 1:
            raise SequencingError(
                f"{self.camera_id}: frame {frame.frame_no} after {self.last_frame_no}"
            )
        self.last_frame_no = frame.frame_no
        events: list[TrackEvent] = []

        dt_s = self.frame_period_ms / 1000.0
        for tr in self.tracks:
            vx, vy = tr.velocity
            tr.box = Box(tr.box.x + vx * dt_s, tr.box.y + vy * dt_s, tr.box.w, tr.box.h)

        if detections is not None:
            events.extend(self._associate(frame, detections))
            # History holds measured centers only: matched and newborn tracks.
            # Coasting on predicted positions must not feed the velocity
            # estimate back into itself.
            for tr in self.tracks:
                if tr.misses == 0:
                    cx, cy = tr.box.center
                    tr.history.append((frame.ts, cx, cy))
                    tr.velocity = _window_velocity(tr.history)
        return events

    def _associate(
        self, frame: GroundTruthFrame, detections: list[Detection]
    ) -> list[TrackEvent]:
        events: list[TrackEvent] = []
        pairs = []
        for ti, tr in enumerate(self.tracks):
            for di, det in enumerate(detections):
                score = iou(tr.box, det.box)
                if score >= self.tau:
                    pairs.append((-score, ti, di))
        pairs.sort()

        matched_tracks: set[int] = set()
        matched_dets: set[int] = set()
        for neg_score, ti, di in pairs:
            if ti in matched_tracks or di in matched_dets:
                continue
            matched_tracks.add(ti)
            matched_dets.add(di)
            tr = self.tracks[ti]
            tr.box = detections[di].box
            tr.cls = detections[di].cls
            tr.misses = 0

        survivors = []
        for ti, tr in enumerate(self.tracks):
            if ti in matched_tracks:
                survivors.append(tr)
                continue
            tr.misses += 1
            if tr.misses > self.miss_limit:
                events.append(TrackEvent("retired", tr.track_id, frame.frame_no))
            else:
                survivors.append(tr)
        self.tracks = survivors

        for di, det in enumerate(detections):
            if di in matched_dets:
                continue
            tr = TrackState(
                track_id=self.next_track_id,
                camera_id=self.camera_id,
                cls=det.cls,
                box=det.box,
                history=deque(maxlen=self.history_window),
                born_frame_no=frame.frame_no,
                first_ts=frame.ts,
            )
            self.next_track_id += 1
            self.tracks.append(tr)
            events.append(TrackEvent("opened", tr.track_id, frame.frame_no))
        return events


# --- Feature extractor registry -------------------------------------------

# per_track extractors: fn(track, frame) -> {key: value}
# per_frame extractors: fn(live_tracks, frame) -> {key: value}
ExtractorFn = Callable[..., dict]

PER_TRACK = "per_track"
PER_FRAME = "per_frame"


@dataclass(frozen=True)
class ExtractorDef:
    name: str
    level: str  # PER_TRACK | PER_FRAME
    emitted_keys: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.level not in (PER_TRACK, PER_FRAME):
            raise ValueError(f"extractor level must be per_track|per_frame, got {self.level!r}")


def _kinematics(track: TrackState, frame: GroundTruthFrame) -> dict:
    cx, cy = track.box.center
    out = {"pos_x": cx, "pos_y": cy}
    if len(track.history) >= 2:
        t0, x0, y0 = track.history[0]
        t1, x1, y1 = track.history[-1]
        dt_s = (t1 - t0) / 1000.0
        if dt_s > 0:
            dx, dy = x1 - x0, y1 - y0
            dist = math.hypot(dx, dy)
            out["speed"] = dist / dt_s
            # Suppress noise-driven angles for near-stationary objects.
            if dist > 1.0:
                out["direction"] = math.degrees(math.atan2(dy, dx)) % 360.0
    return out


def _class_counts(live_tracks: list[TrackState], frame: GroundTruthFrame) -> dict:
    counts = {"count_person": 0, "count_vehicle": 0, "count_other": 0}
    for tr in live_tracks:
        counts[f"count_{tr.cls}"] += 1
    return counts


BUILTIN_EXTRACTORS: tuple[tuple[ExtractorDef, ExtractorFn], ...] = (
    (ExtractorDef("kinematics", PER_TRACK, ("pos_x", "pos_y", "speed", "direction")), _kinematics),
    (ExtractorDef("class_counts", PER_FRAME, ("count_person", "count_vehicle", "count_other")), _class_counts),
)


class ExtractorRegistry:
    """Named feature extractors with mutually disjoint emitted keys."""

    def __init__(self, install_builtins: bool = True) -> None:
        self._entries: dict[str, tuple[ExtractorDef, ExtractorFn]] = {}
        if install_builtins:
            for xdef, fn in BUILTIN_EXTRACTORS:
                self.register(xdef, fn)

    def register(self, xdef: ExtractorDef, fn: ExtractorFn) -> None:
        if xdef.name in self._entries:
            raise RegistryError(f"extractor {xdef.name!r} already registered")
        in_use = self.keys_in_use()
        for key in xdef.emitted_keys:
            if key in in_use:
                raise RegistryError(f"key {key!r} already claimed by another extractor")
        self._entries[xdef.name] = (xdef, fn)

    def deregister(self, name: str) -> None:
        if name not in self._entries:
            raise RegistryError(f"extractor {name!r} is not registered")
        del self._entries[name]

    def keys_in_use(self) -> set[str]:
        return {k for xdef, _ in self._entries.values() for k in xdef.emitted_keys}

    def entries(self) -> list[tuple[ExtractorDef, ExtractorFn]]:
        return list(self._entries.values())

    def __contains__(self, name: str) -> bool:
        return name in self._entries


def register_extractor(registry: ExtractorRegistry, xdef: ExtractorDef, fn: ExtractorFn) -> None:
    registry.register(xdef, fn)


def extract_features(
    tracks: Iterable[TrackState], frame: GroundTruthFrame, registry: ExtractorRegistry
) -> list[FeatureRecord]:
    """Run every registered extractor over the live tracks of one frame.

    Pure with respect to its inputs: repeated calls yield identical records.
    """
    live = sorted((tr for tr in tracks if tr.live), key=lambda tr: tr.track_id)
    records: list[FeatureRecord] = []

    def emit(xdef: ExtractorDef, track_id: int | None, out: dict) -> None:
        for key, value in out.items():
            if key not in xdef.emitted_keys:
                raise RegistryError(
                    f"extractor {xdef.name!r} emitted unregistered key {key!r}"
                )
            records.append(
                FeatureRecord(
                    ts=frame.ts,
                    camera_id=frame.camera_id,
                    frame_no=frame.frame_no,
                    track_id=track_id,
                    key=key,
                    value=value,
                )
            )

    for xdef, fn in registry.entries():
        if xdef.level == PER_TRACK:
            for tr in live:
                emit(xdef, tr.track_id, fn(tr, frame))
        else:
            emit(xdef, None, fn(live, frame))
    return records


class EdgeAgent:
    """One camera's pipeline: cadenced detector, tracker, feature extraction.

    Appends every record to the edge-local feature log (in memory, and to
    ``log_file`` when given) in canonical line format.
    """

    def __init__(
        self,
        world: WorldConfig,
        camera_id: str,
        noise: NoiseParams | None = None,
        cadence: int = DETECTOR_CADENCE,
        registry: ExtractorRegistry | None = None,
        log_file: IO[str] | None = None,
    ) -> None:
        if cadence < 1:
            raise ValueError("detector cadence must be >= 1")
        self.camera_id = camera_id
        self.noise = noise or NoiseParams()
        self.cadence = cadence
        self.registry = registry or ExtractorRegistry()
        self.tracker = Tracker(camera_id, world.frame_period_ms)
        self.events: list[TrackEvent] = []
        self.log_lines: list[str] = []
        self._log_file = log_file

    def step(self, frame: GroundTruthFrame) -> list[FeatureRecord]:
        detections = None
        if frame.frame_no % self.cadence == 0:
            detections = detect(frame, self.noise)
        self.events.extend(self.tracker.step(frame, detections))
        records = extract_features(self.tracker.tracks, frame, self.registry)
        for rec in records:
            line = encode_record(rec)
            self.log_lines.append(line)
            if self._log_file is not None:
                self._log_file.write(line + "\n")
        return records
