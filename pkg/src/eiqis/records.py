"""Feature records and their canonical line encoding.

A feature record is one key/value observation stamped with camera, frame,
timestamp and, for per-track features, a track id. The line format

    ts=<epoch_ms> cam=<id> frame=<n> track=<id|-> key=<name> val=<value>

is both the edge-local feature log format and the canonical byte encoding
hashed by the transport layer, so it must be bit-stable: ints render as
ints, floats via repr (shortest round trip), strings verbatim. ``val`` is
the last field and may contain spaces.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

Value = str | int | float

_INT_RE = re.compile(r"-?\d+$")
_FLOAT_RE = re.compile(r"-?\d+(\.\d+)?([eE][+-]?\d+)?$")


class LineFormatError(ValueError):
    """A feature-log line does not match the canonical format."""


@dataclass(frozen=True, slots=True)
class FeatureRecord:
    ts: float  # epoch milliseconds
    camera_id: str
    frame_no: int
    track_id: int | None  # None for frame-level features
    key: str
    value: Value

    def __post_init__(self) -> None:
        if not self.key:
            raise ValueError("feature record key must be nonempty")


def format_value(value: Value) -> str:
    if isinstance(value, bool):
        raise TypeError("boolean feature values are not supported")
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_value(text: str) -> Value:
    """Numbers round-trip by format; anything else stays a string.

    Strict numeric regexes keep words like "inf" or "nan" as strings.
    """
    if _INT_RE.match(text):
        return int(text)
    if _FLOAT_RE.match(text):
        return float(text)
    return text


def encode_record(rec: FeatureRecord) -> str:
    """Render one record as a canonical feature-log line."""
    track = "-" if rec.track_id is None else str(rec.track_id)
    return (
        f"ts={format_value(rec.ts)} cam={rec.camera_id} frame={rec.frame_no} "
        f"track={track} key={rec.key} val={format_value(rec.value)}"
    )


def decode_record(line: str) -> FeatureRecord:
    """Parse a canonical feature-log line back into a record."""
    parts = line.split(" ", 5)
    if len(parts) != 6:
        raise LineFormatError(f"expected 6 fields, got {len(parts)}: {line!r}")
    values = []
    for part, prefix in zip(parts, ("ts=", "cam=", "frame=", "track=", "key=", "val=")):
        if not part.startswith(prefix):
            raise LineFormatError(f"expected field {prefix!r} in {line!r}")
        values.append(part[len(prefix):])
    ts, cam, frame, track, key, val = values
    try:
        return FeatureRecord(
            ts=float(ts),
            camera_id=cam,
            frame_no=int(frame),
            track_id=None if track == "-" else int(track),
            key=key,
            value=parse_value(val),
        )
    except ValueError as exc:
        raise LineFormatError(f"bad field in {line!r}: {exc}") from exc
