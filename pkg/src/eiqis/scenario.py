"""Deterministic synthetic world standing in for camera footage.

A scenario file describes cameras and entities; entities move along
waypoint paths with piecewise-linear interpolation, and each (camera,
frame) yields a ground-truth frame of bounding boxes that downstream
modules treat as the camera feed. The world is pure and immutable after
loading: identical config text always produces the identical frame
stream.

Scenario file schema (UTF-8 JSON):

    {
      "seed": 7, "start_epoch_ms": 1609545900000, "fps": 30, "duration_s": 600,
      "cameras": [{"camera_id": "...", "width": 1280, "height": 720,
                   "location": "...", "zone": "...",
                   "open_hours": ["07:00", "22:00"], "terrain": "..."}],
      "entities": [{"entity_id": "...", "class": "person",
                    "waypoints": [[0.0, 100, 200], [30.0, 400, 200]],
                    "box_size": [32, 64]}]
    }

Timestamps are epoch milliseconds carried as floats so the per-frame step
is exactly 1000/fps even when fps does not divide 1000.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path

CLASSES = ("person", "vehicle", "other")


class ScenarioError(ValueError):
    """Base for scenario file problems; message names the offending field."""


class SchemaError(ScenarioError):
    """Config text does not match the scenario schema."""


class ValidationError(ScenarioError):
    """Config parsed but violates a world invariant."""


def parse_hhmm(text: str) -> int:
    """Parse 'HH:MM' into minutes since midnight."""
    parts = text.split(":")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise SchemaError(f"open_hours: expected HH:MM, got {text!r}")
    hh, mm = int(parts[0]), int(parts[1])
    if hh > 23 or mm > 59:
        raise ValidationError(f"open_hours: {text!r} is not a valid time of day")
    return hh * 60 + mm


def minute_of_day(ts_ms: float, tz_offset_min: int = 0) -> int:
    return int((ts_ms // 60_000 + tz_offset_min) % 1440)


def hour_of_day(ts_ms: float, tz_offset_min: int = 0) -> int:
    return minute_of_day(ts_ms, tz_offset_min) // 60


@dataclass(frozen=True, slots=True)
class Box:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"box: w and h must be > 0, got ({self.w}, {self.h})")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class CameraDef:
    camera_id: str
    width: int
    height: int
    location: str
    zone: str
    open_hours: tuple[int, int]  # minutes since midnight, [open, close)
    terrain: str

    def is_open_at(self, minute: int) -> bool:
        """Closed-open interval [open, close); wraps past midnight.

        open == close means always open.
        """
        lo, hi = self.open_hours
        if lo == hi:
            return True
        if lo < hi:
            return lo <= minute < hi
        return minute >= lo or minute < hi


@dataclass(frozen=True)
class EntityDef:
    entity_id: str
    cls: str  # scenario-file key "class"
    waypoints: tuple[tuple[float, float, float], ...]  # (time_s, x, y)
    box_size: tuple[float, float]


@dataclass(frozen=True, slots=True)
class GroundTruthFrame:
    camera_id: str
    frame_no: int
    ts: float  # epoch ms
    boxes: tuple[tuple[str, str, Box], ...]  # (entity_id, class, box)


@dataclass(frozen=True)
class WorldConfig:
    seed: int
    start_epoch_ms: float
    fps: int
    duration_s: int
    cameras: tuple[CameraDef, ...]
    entities: tuple[EntityDef, ...]

    @property
    def frame_period_ms(self) -> float:
        return 1000.0 / self.fps

    @property
    def total_frames(self) -> int:
        return self.fps * self.duration_s

    def camera(self, camera_id: str) -> CameraDef:
        for cam in self.cameras:
            if cam.camera_id == camera_id:
                return cam
        raise KeyError(f"unknown camera {camera_id!r}")

    def frame_ts(self, frame_no: int) -> float:
        return self.start_epoch_ms + frame_no * self.frame_period_ms


def _require(obj: dict, field: str, ctx: str):
    if field not in obj:
        raise SchemaError(f"{ctx}: missing field {field!r}")
    return obj[field]


def _parse_camera(obj: dict) -> CameraDef:
    ctx = f"cameras[{obj.get('camera_id', '?')}]"
    hours = _require(obj, "open_hours", ctx)
    if not (isinstance(hours, list) and len(hours) == 2):
        raise SchemaError(f"{ctx}: open_hours must be a [start, end] pair")
    cam = CameraDef(
        camera_id=str(_require(obj, "camera_id", ctx)),
        width=int(_require(obj, "width", ctx)),
        height=int(_require(obj, "height", ctx)),
        location=str(_require(obj, "location", ctx)),
        zone=str(_require(obj, "zone", ctx)),
        open_hours=(parse_hhmm(hours[0]), parse_hhmm(hours[1])),
        terrain=str(_require(obj, "terrain", ctx)),
    )
    if cam.width <= 0 or cam.height <= 0:
        raise ValidationError(f"{ctx}: width and height must be > 0")
    return cam


def _parse_entity(obj: dict) -> EntityDef:
    ctx = f"entities[{obj.get('entity_id', '?')}]"
    cls = str(_require(obj, "class", ctx))
    if cls not in CLASSES:
        raise ValidationError(f"{ctx}: class must be one of {CLASSES}, got {cls!r}")
    raw_wps = _require(obj, "waypoints", ctx)
    if not isinstance(raw_wps, list) or not raw_wps:
        raise SchemaError(f"{ctx}: waypoints must be a nonempty list")
    wps = []
    for wp in raw_wps:
        if not (isinstance(wp, list) and len(wp) == 3):
            raise SchemaError(f"{ctx}: each waypoint must be [time_s, x, y]")
        wps.append((float(wp[0]), float(wp[1]), float(wp[2])))
    size = _require(obj, "box_size", ctx)
    if not (isinstance(size, list) and len(size) == 2):
        raise SchemaError(f"{ctx}: box_size must be [w, h]")
    return EntityDef(
        entity_id=str(_require(obj, "entity_id", ctx)),
        cls=cls,
        waypoints=tuple(wps),
        box_size=(float(size[0]), float(size[1])),
    )


def load_world(config_text: str) -> WorldConfig:
    """Parse and fully validate a scenario file."""
    try:
        doc = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"scenario: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("scenario: top level must be a JSON object")

    world = WorldConfig(
        seed=int(_require(doc, "seed", "scenario")),
        start_epoch_ms=float(_require(doc, "start_epoch_ms", "scenario")),
        fps=int(_require(doc, "fps", "scenario")),
        duration_s=int(_require(doc, "duration_s", "scenario")),
        cameras=tuple(_parse_camera(c) for c in _require(doc, "cameras", "scenario")),
        entities=tuple(_parse_entity(e) for e in _require(doc, "entities", "scenario")),
    )
    _validate(world)
    return world


def load_world_file(path: str | Path) -> WorldConfig:
    return load_world(Path(path).read_text(encoding="utf-8"))


def _validate(world: WorldConfig) -> None:
    if world.fps < 1:
        raise ValidationError("fps: must be >= 1")
    if world.duration_s < 1:
        raise ValidationError("duration_s: must be >= 1")

    seen: set[str] = set()
    for cam in world.cameras:
        if cam.camera_id in seen:
            raise ValidationError(f"cameras: duplicate camera_id {cam.camera_id!r}")
        seen.add(cam.camera_id)

    seen.clear()
    for ent in world.entities:
        ctx = f"entities[{ent.entity_id}]"
        if ent.entity_id in seen:
            raise ValidationError(f"entities: duplicate entity_id {ent.entity_id!r}")
        seen.add(ent.entity_id)
        w, h = ent.box_size
        if w <= 0 or h <= 0:
            raise ValidationError(f"{ctx}: box_size must be positive")
        times = [wp[0] for wp in ent.waypoints]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValidationError(f"{ctx}: waypoint times must be strictly increasing")
        # Every camera renders every entity, so the box must fit all of them.
        for cam in world.cameras:
            for t, x, y in ent.waypoints:
                if x < 0 or y < 0 or x + w > cam.width or y + h > cam.height:
                    raise ValidationError(
                        f"{ctx}: waypoint at t={t} puts box outside "
                        f"camera {cam.camera_id!r} bounds"
                    )


def _interpolate(ent: EntityDef, t_s: float) -> tuple[float, float] | None:
    """Entity position at scenario time t_s, or None if absent."""
    wps = ent.waypoints
    if t_s < wps[0][0] or t_s > wps[-1][0]:
        return None
    times = [wp[0] for wp in wps]
    i = bisect_right(times, t_s)
    if i >= len(wps):
        return wps[-1][1], wps[-1][2]
    t0, x0, y0 = wps[i - 1]
    t1, x1, y1 = wps[i]
    frac = (t_s - t0) / (t1 - t0)
    return x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)


def ground_truth(world: WorldConfig, camera_id: str, frame_no: int) -> GroundTruthFrame:
    """Ground-truth boxes for one camera frame.

    Boxes are linear interpolations between bracketing waypoints; entities
    outside their [first, last] waypoint time are absent. Boxes are clamped
    into camera bounds.
    """
    cam = world.camera(camera_id)
    if not 0 <= frame_no < world.total_frames:
        raise ValueError(
            f"frame_no {frame_no} outside scenario span [0, {world.total_frames})"
        )
    t_s = frame_no / world.fps
    boxes = []
    for ent in world.entities:
        pos = _interpolate(ent, t_s)
        if pos is None:
            continue
        w, h = ent.box_size
        x = min(max(pos[0], 0.0), cam.width - w)
        y = min(max(pos[1], 0.0), cam.height - h)
        boxes.append((ent.entity_id, ent.cls, Box(x, y, w, h)))
    return GroundTruthFrame(
        camera_id=camera_id,
        frame_no=frame_no,
        ts=world.frame_ts(frame_no),
        boxes=tuple(boxes),
    )


def clip(
    world: WorldConfig, camera_id: str, start_ts: float, end_ts: float
) -> list[GroundTruthFrame]:
    """All frames with start_ts <= ts <= end_ts, in frame order.

    A range outside the scenario span yields an empty list.
    """
    if start_ts > end_ts:
        raise ValueError("clip: start_ts must be <= end_ts")
    period = world.frame_period_ms
    k_lo = math.ceil((start_ts - world.start_epoch_ms) / period - 1e-9)
    k_hi = math.floor((end_ts - world.start_epoch_ms) / period + 1e-9)
    k_lo = max(k_lo, 0)
    k_hi = min(k_hi, world.total_frames - 1)
    return [ground_truth(world, camera_id, k) for k in range(k_lo, k_hi + 1)]
