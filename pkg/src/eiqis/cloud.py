"""Cloud tier: hourly per-camera profiles, z-score alarms, feedback tuning.

Profiles accumulate mean/std of the person count per hour of day in a
single pass (Welford); scoring abstains below a minimum sample count.
Operator feedback nudges the alarm threshold k inside fixed bounds, with
false alarms weighted double so the threshold drifts up faster than down.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

from .fogindex import ContextualizedRecord

EPSILON = 1e-6       # std floor for z-scores
MIN_SAMPLES = 10     # abstain below this many samples in an hour bucket
PROFILE_KEY = "count_person"

INSUFFICIENT_DATA = None


class UnknownEventError(LookupError):
    pass


@dataclass
class HourStats:
    n: int = 0
    mean: float = 0.0
    _m2: float = 0.0

    def add(self, value: float) -> None:
        self.n += 1
        delta = value - self.mean
        self.mean += delta / self.n
        self._m2 += delta * (value - self.mean)

    @property
    def std(self) -> float:
        # Population std; bucket mean/std are undefined until n > 0.
        if self.n == 0:
            return 0.0
        return math.sqrt(self._m2 / self.n)


@dataclass
class CameraProfile:
    camera_id: str
    hours: dict[int, HourStats] = field(default_factory=dict)

    def add(self, hour: int, value: float) -> None:
        self.hours.setdefault(hour, HourStats()).add(value)


def build_profile(
    records: Iterable[ContextualizedRecord], camera_id: str
) -> CameraProfile:
    """Single-pass hourly profile of the person count for one camera."""
    profile = CameraProfile(camera_id)
    for rec in records:
        if rec.camera_id == camera_id and rec.key == PROFILE_KEY:
            profile.add(rec.hour_of_day, float(rec.value))
    return profile


def zscore(
    profile: CameraProfile,
    hour: int,
    value: float,
    n_min: int = MIN_SAMPLES,
    eps: float = EPSILON,
) -> float | None:
    """Standard score against the hour bucket, or None when data is thin."""
    stats = profile.hours.get(hour)
    if stats is None or stats.n < n_min:
        return INSUFFICIENT_DATA
    return (value - stats.mean) / max(stats.std, eps)


@dataclass
class SensitivityState:
    k: float = 3.0
    k_min: float = 1.0
    k_max: float = 6.0
    step: float = 0.5
    feedback_log: list[tuple[str, str]] = field(default_factory=list)
    known_events: set[str] = field(default_factory=set)

    def __post_init__(self) -> None:
        if self.k <= 0:
            raise ValueError("alarm threshold k must be > 0")


def alarm(state: SensitivityState, score: float) -> bool:
    """Fire iff score >= k (closed threshold)."""
    if not math.isfinite(score):
        raise ValueError(f"score must be finite, got {score}")
    return score >= state.k


def feedback(state: SensitivityState, event_id: str, verdict: str) -> SensitivityState:
    """Retune k from an operator verdict; false alarms push twice as hard."""
    if verdict not in ("true_alarm", "false_alarm"):
        raise ValueError(f"verdict must be true_alarm|false_alarm, got {verdict!r}")
    if event_id not in state.known_events:
        raise UnknownEventError(f"unknown event {event_id!r}")
    if verdict == "false_alarm":
        state.k = min(state.k + state.step, state.k_max)
    else:
        state.k = max(state.k - state.step / 2.0, state.k_min)
    state.feedback_log.append((event_id, verdict))
    return state


# --- Snapshot files -------------------------------------------------------------

def profile_to_json(profile: CameraProfile) -> dict:
    return {
        "camera_id": profile.camera_id,
        "hours": [
            {"h": h, "n": s.n, "mean": s.mean, "std": s.std}
            for h, s in sorted(profile.hours.items())
        ],
    }


def save_profile(profile: CameraProfile, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(profile_to_json(profile), fh, indent=2)
        fh.write("\n")


def state_to_json(state: SensitivityState) -> dict:
    return {
        "k": state.k,
        "k_min": state.k_min,
        "k_max": state.k_max,
        "step": state.step,
        "feedback_log": [list(item) for item in state.feedback_log],
        "known_events": sorted(state.known_events),
    }


def state_from_json(doc: dict) -> SensitivityState:
    return SensitivityState(
        k=float(doc.get("k", 3.0)),
        k_min=float(doc.get("k_min", 1.0)),
        k_max=float(doc.get("k_max", 6.0)),
        step=float(doc.get("step", 0.5)),
        feedback_log=[tuple(item) for item in doc.get("feedback_log", [])],
        known_events=set(doc.get("known_events", [])),
    )
