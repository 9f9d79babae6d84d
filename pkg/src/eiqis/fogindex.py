"""Fog tier: verified ingest, contextualization, inverted index, rules.

Incoming blocks are checked against the channel's expected seq, stored head
hash, payload hash, and HMAC before any state changes; a rejected block
leaves the node bit-identical. Verified records are contextualized with
camera metadata and posted into an inverted index keyed by (feature key,
value bucket), where each posting is a clip reference covering one
detector-cadence interval. Lookups gather candidate postings from buckets
intersecting the comparator's range, then re-check candidates against the
retained raw records, so bucket width is a performance knob that never
changes answers.

Windowed anomaly rules run over the contextualized stream; an emitted
event is indexed like any feature under key ``event``.
"""

from __future__ import annotations

import hashlib
import hmac as hmac_mod
import json
import math
import operator
from bisect import insort
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator

from .chainlog import (
    GENESIS_HASH,
    LedgerBlock,
    block_head_hash,
    canonical_payload,
    signing_bytes,
)
from .records import FeatureRecord, Value, decode_record
from .scenario import CameraDef, hour_of_day, minute_of_day

COMPARATORS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


class UnknownCameraError(LookupError):
    pass


class BlockRejected(RuntimeError):
    def __init__(self, channel_id: str, seq: int, reason: str) -> None:
        super().__init__(f"block {seq} on {channel_id!r} rejected: {reason}")
        self.channel_id = channel_id
        self.seq = seq
        self.reason = reason


def compare(value: Value, cmp: str, literal: Value) -> bool:
    """Typed comparison: numbers with numbers, strings with strings."""
    if isinstance(literal, str) != isinstance(value, str):
        return False
    return COMPARATORS[cmp](value, literal)


@dataclass(frozen=True, order=True, slots=True)
class ClipRef:
    camera_id: str
    start_ts: float
    end_ts: float
    first_frame: int
    last_frame: int


@dataclass(frozen=True, slots=True)
class ContextualizedRecord:
    ts: float
    camera_id: str
    frame_no: int
    track_id: int | None
    key: str
    value: Value
    zone: str
    terrain: str
    open_now: bool
    hour_of_day: int


@dataclass(frozen=True)
class AnomalyRule:
    name: str
    key: str
    cmp: str
    threshold: Value
    guard_open_now: bool | None  # None = no guard
    window_ms: float
    min_hits: int

    def __post_init__(self) -> None:
        if self.cmp not in COMPARATORS:
            raise ValueError(f"rule {self.name!r}: bad comparator {self.cmp!r}")
        if self.window_ms <= 0:
            raise ValueError(f"rule {self.name!r}: window_ms must be > 0")
        if self.min_hits < 1:
            raise ValueError(f"rule {self.name!r}: min_hits must be >= 1")


def load_rules(text: str) -> list[AnomalyRule]:
    """Parse the rules file: a JSON array of rule objects."""
    doc = json.loads(text)
    if not isinstance(doc, list):
        raise ValueError("rules file must be a JSON array")
    rules = []
    for obj in doc:
        guard = obj.get("guard", {}) or {}
        rules.append(
            AnomalyRule(
                name=str(obj["name"]),
                key=str(obj["key"]),
                cmp=str(obj["cmp"]),
                threshold=obj["threshold"],
                guard_open_now=guard.get("open_now"),
                window_ms=float(obj["window_ms"]),
                min_hits=int(obj["min_hits"]),
            )
        )
    return rules


@dataclass(frozen=True)
class EventRecord:
    event_id: str
    rule: str
    camera_id: str
    ts: float
    frame_no: int


@dataclass(frozen=True)
class BucketConfig:
    """Value bucketing per key: exact buckets for counts, intervals elsewhere."""

    widths: tuple[tuple[str, float], ...] = (
        ("speed", 10.0),
        ("direction", 45.0),
        ("pos_x", 64.0),
        ("pos_y", 64.0),
    )
    default_numeric_width: float = 10.0
    exact_prefixes: tuple[str, ...] = ("count_",)

    def width_for(self, key: str) -> float:
        for k, w in self.widths:
            if k == key:
                return w
        return self.default_numeric_width

    def is_exact(self, key: str) -> bool:
        return any(key.startswith(p) for p in self.exact_prefixes)

    def bucket_for(self, key: str, value: Value) -> tuple:
        if isinstance(value, str):
            return ("s", value)
        if self.is_exact(key) and float(value).is_integer():
            return ("i", int(value))
        width = self.width_for(key)
        return ("b", math.floor(value / width))


class _PostingList:
    """Clip references kept sorted by (camera_id, start_ts), deduplicated."""

    def __init__(self) -> None:
        self._clips: list[ClipRef] = []
        self._seen: set[ClipRef] = set()

    def add(self, clip: ClipRef) -> None:
        if clip in self._seen:
            return
        self._seen.add(clip)
        insort(self._clips, clip)

    def __iter__(self) -> Iterator[ClipRef]:
        return iter(self._clips)

    def __len__(self) -> int:
        return len(self._clips)


class FogNode:
    """Fog state: verified ingest, index, raw store, rule engine."""

    def __init__(
        self,
        cameras: Iterable[CameraDef],
        fps: int,
        start_epoch_ms: float,
        duration_s: int,
        cadence: int,
        tz_offset_min: int = 0,
        buckets: BucketConfig | None = None,
        rules: Iterable[AnomalyRule] = (),
    ) -> None:
        self.cameras = {cam.camera_id: cam for cam in cameras}
        self.fps = fps
        self.start_epoch_ms = start_epoch_ms
        self.duration_s = duration_s
        self.cadence = cadence
        self.tz_offset_min = tz_offset_min
        self.buckets = buckets or BucketConfig()
        self.rules = list(rules)

        self._index: dict[str, dict[tuple, _PostingList]] = {}
        self._raw: dict[tuple[str, int], list[ContextualizedRecord]] = {}
        self._clip_cache: dict[tuple[str, int], ClipRef] = {}
        self._heads: dict[str, tuple[int, bytes]] = {}  # channel -> (next_seq, prev)
        self._rule_hits: dict[tuple[str, str], deque] = {}
        self._open_events: set[tuple[str, str]] = set()
        self._all_clips: set[ClipRef] = set()
        self.events: list[EventRecord] = []
        self.records_ingested = 0
        self.blocks_ingested = 0
        self.lookup_count = 0  # instrumentation: index accesses per process

    # --- clip geometry ------------------------------------------------------

    @property
    def total_frames(self) -> int:
        return self.fps * self.duration_s

    def _frame_ts(self, frame_no: int) -> float:
        return self.start_epoch_ms + frame_no * (1000.0 / self.fps)

    def clip_ref(self, camera_id: str, clip_idx: int) -> ClipRef:
        cached = self._clip_cache.get((camera_id, clip_idx))
        if cached is not None:
            return cached
        first = clip_idx * self.cadence
        last = min(first + self.cadence - 1, self.total_frames - 1)
        clip = ClipRef(
            camera_id=camera_id,
            start_ts=self._frame_ts(first),
            end_ts=self._frame_ts(last),
            first_frame=first,
            last_frame=last,
        )
        self._clip_cache[(camera_id, clip_idx)] = clip
        return clip

    def all_clips(self) -> set[ClipRef]:
        return set(self._all_clips)

    # --- contextualization ---------------------------------------------------

    def contextualize(self, record: FeatureRecord) -> ContextualizedRecord:
        """Attach zone, terrain, open-hours status, and local hour."""
        cam = self.cameras.get(record.camera_id)
        if cam is None:
            raise UnknownCameraError(f"unknown camera {record.camera_id!r}")
        minute = minute_of_day(record.ts, self.tz_offset_min)
        return ContextualizedRecord(
            ts=record.ts,
            camera_id=record.camera_id,
            frame_no=record.frame_no,
            track_id=record.track_id,
            key=record.key,
            value=record.value,
            zone=cam.zone,
            terrain=cam.terrain,
            open_now=cam.is_open_at(minute),
            hour_of_day=hour_of_day(record.ts, self.tz_offset_min),
        )

    # --- ingest ---------------------------------------------------------------

    def _verify_block(self, channel_id: str, block: LedgerBlock, key: bytes) -> None:
        expected_seq, expected_prev = self._heads.get(channel_id, (0, GENESIS_HASH))
        if block.seq != expected_seq:
            raise BlockRejected(
                channel_id, block.seq,
                f"expected seq {expected_seq} (replay or gap)",
            )
        if block.prev_hash != expected_prev:
            raise BlockRejected(channel_id, block.seq, "link mismatch")
        if hashlib.sha256(canonical_payload(block.payload)).digest() != block.payload_hash:
            raise BlockRejected(channel_id, block.seq, "payload_hash mismatch")
        tag = hmac_mod.new(
            key, signing_bytes(block.seq, block.prev_hash, block.payload_hash), "sha256"
        ).digest()
        if not hmac_mod.compare_digest(tag, block.hmac):
            raise BlockRejected(channel_id, block.seq, "hmac mismatch")

    def ingest_block(self, channel_id: str, block: LedgerBlock, key: bytes) -> int:
        """Verify, contextualize, and index one block; returns records indexed.

        Raises BlockRejected before touching any state if verification fails.
        """
        self._verify_block(channel_id, block, key)

        # Decode and contextualize everything up front so a malformed payload
        # cannot leave a partially ingested block behind.
        staged: list[ContextualizedRecord] = []
        for line in block.payload:
            try:
                record = decode_record(line)
            except ValueError as exc:
                raise BlockRejected(channel_id, block.seq, f"bad payload line: {exc}")
            if record.camera_id != channel_id:
                raise BlockRejected(
                    channel_id, block.seq,
                    f"record camera {record.camera_id!r} does not match channel",
                )
            if not 0 <= record.frame_no < self.total_frames:
                raise BlockRejected(
                    channel_id, block.seq, f"frame {record.frame_no} outside scenario"
                )
            if record.camera_id not in self.cameras:
                raise BlockRejected(channel_id, block.seq, f"unknown camera {channel_id!r}")
            staged.append(self.contextualize(record))

        for ctx in staged:
            self._insert(ctx)
            self.run_rules(ctx)
        self._heads[channel_id] = (block.seq + 1, block_head_hash(block))
        self.records_ingested += len(staged)
        self.blocks_ingested += 1
        return len(staged)

    def _insert(self, ctx: ContextualizedRecord) -> None:
        clip_idx = ctx.frame_no // self.cadence
        clip = self.clip_ref(ctx.camera_id, clip_idx)
        self._raw.setdefault((ctx.camera_id, clip_idx), []).append(ctx)
        self._all_clips.add(clip)
        bucket = self.buckets.bucket_for(ctx.key, ctx.value)
        self._index.setdefault(ctx.key, {}).setdefault(bucket, _PostingList()).add(clip)

    # --- lookup ----------------------------------------------------------------

    def _bucket_matches(self, key: str, bucket: tuple, cmp: str, literal: Value) -> bool:
        kind, v = bucket
        if isinstance(literal, str):
            return kind == "s" and compare(v, cmp, literal)
        if kind == "s":
            return False
        if kind == "i":
            # Exact-integer buckets hold exactly the value v.
            return compare(v, cmp, literal)
        width = self.buckets.width_for(key)
        lo = v * width
        hi = lo + width
        if cmp == "=":
            return lo <= literal < hi
        if cmp == "!=":
            return True  # any interval may hold values != literal
        if cmp == "<":
            return lo < literal
        if cmp == "<=":
            return lo <= literal
        # ">" and ">=": the interval's supremum is hi (exclusive).
        return literal < hi

    def index_lookup(self, key: str, cmp: str, literal: Value) -> set[ClipRef]:
        """Exact clip set for `key cmp literal`: bucket candidates, then verify."""
        if cmp not in COMPARATORS:
            raise ValueError(f"bad comparator {cmp!r}")
        self.lookup_count += 1
        buckets = self._index.get(key)
        if not buckets:
            return set()
        candidates: set[ClipRef] = set()
        for bucket, postings in buckets.items():
            if self._bucket_matches(key, bucket, cmp, literal):
                candidates.update(postings)
        return {clip for clip in candidates if self._clip_matches(clip, key, cmp, literal)}

    def _clip_matches(self, clip: ClipRef, key: str, cmp: str, literal: Value) -> bool:
        for ctx in self._raw.get((clip.camera_id, clip.first_frame // self.cadence), ()):
            if ctx.key == key and compare(ctx.value, cmp, literal):
                return True
        return False

    def records_for_clip(self, clip: ClipRef) -> list[ContextualizedRecord]:
        return list(self._raw.get((clip.camera_id, clip.first_frame // self.cadence), ()))

    def iter_records(self) -> Iterator[ContextualizedRecord]:
        for recs in self._raw.values():
            yield from recs

    # --- rules -------------------------------------------------------------------

    def run_rules(self, ctx: ContextualizedRecord) -> list[EventRecord]:
        """Feed one record through every rule; returns any events emitted."""
        emitted: list[EventRecord] = []
        for rule in self.rules:
            state_key = (rule.name, ctx.camera_id)
            hits = self._rule_hits.setdefault(state_key, deque())
            while hits and hits[0] <= ctx.ts - rule.window_ms:
                hits.popleft()
            if not hits:
                self._open_events.discard(state_key)
            guard_ok = rule.guard_open_now is None or ctx.open_now == rule.guard_open_now
            if guard_ok and ctx.key == rule.key and compare(ctx.value, rule.cmp, rule.threshold):
                hits.append(ctx.ts)
                if len(hits) >= rule.min_hits and state_key not in self._open_events:
                    self._open_events.add(state_key)
                    emitted.append(self._emit_event(rule, ctx))
        return emitted

    def _emit_event(self, rule: AnomalyRule, ctx: ContextualizedRecord) -> EventRecord:
        event = EventRecord(
            event_id=f"{rule.name}:{ctx.camera_id}:{ctx.frame_no}",
            rule=rule.name,
            camera_id=ctx.camera_id,
            ts=ctx.ts,
            frame_no=ctx.frame_no,
        )
        self.events.append(event)
        feature = FeatureRecord(
            ts=ctx.ts,
            camera_id=ctx.camera_id,
            frame_no=ctx.frame_no,
            track_id=None,
            key="event",
            value=rule.name,
        )
        self._insert(self.contextualize(feature))
        return event

    # --- snapshot -------------------------------------------------------------------

    def snapshot(self) -> dict:
        """Canonical JSON-ready view of all mutable state."""
        def clip_key(clip: ClipRef) -> list:
            return [clip.camera_id, clip.first_frame]

        return {
            "heads": {
                ch: [seq, prev.hex()] for ch, (seq, prev) in self._heads.items()
            },
            "records": {
                f"{cam}:{idx}": [
                    [c.ts, c.frame_no, c.track_id, c.key, c.value,
                     c.zone, c.terrain, c.open_now, c.hour_of_day]
                    for c in recs
                ]
                for (cam, idx), recs in self._raw.items()
            },
            "index": {
                key: {
                    f"{kind}:{v}": [clip_key(c) for c in postings]
                    for (kind, v), postings in buckets.items()
                }
                for key, buckets in self._index.items()
            },
            "rules": {
                f"{rule}:{cam}": {
                    "hits": list(hits),
                    "open": (rule, cam) in self._open_events,
                }
                for (rule, cam), hits in self._rule_hits.items()
            },
            "events": [
                [e.event_id, e.rule, e.camera_id, e.ts, e.frame_no] for e in self.events
            ],
            "counters": {
                "records": self.records_ingested,
                "blocks": self.blocks_ingested,
            },
        }

    def snapshot_bytes(self) -> bytes:
        return json.dumps(self.snapshot(), sort_keys=True).encode("utf-8")
