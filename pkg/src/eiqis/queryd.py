"""Operator-facing query daemon: eligibility check, evaluation, clips.

Request handling follows a fixed order: authorize the requester first (a
denied request performs zero index accesses), then parse, then evaluate
against the fog index. Clip requests need the higher access level and are
served from the scenario store.

Access levels are ordered none < query < clip; unknown requesters hold
none. NOT is evaluated as complement within the universe of all indexed
clips at evaluation time.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import scenario
from .fogindex import ClipRef, FogNode
from .querylang import (
    And,
    CameraPred,
    CountPred,
    KeyPred,
    Node,
    Not,
    Or,
    ParseError,
    TimePred,
    parse_query,
)
from .scenario import WorldConfig, minute_of_day

LEVELS = ("none", "query", "clip")


@dataclass(frozen=True)
class AuthDecision:
    granted: bool
    held: str  # level the requester actually holds


class AccessTable:
    """Static requester -> level map; unknown requesters hold 'none'."""

    def __init__(self, levels: dict[str, str] | None = None) -> None:
        levels = levels or {}
        for requester, level in levels.items():
            if level not in LEVELS:
                raise ValueError(f"bad access level {level!r} for {requester!r}")
        self._levels = dict(levels)

    def level_of(self, requester_id: str) -> str:
        return self._levels.get(requester_id, "none")


def authorize(table: AccessTable, requester_id: str, needs: str) -> AuthDecision:
    """Granted iff the held level dominates the needed one."""
    if needs not in LEVELS:
        raise ValueError(f"bad required level {needs!r}")
    held = table.level_of(requester_id)
    return AuthDecision(LEVELS.index(held) >= LEVELS.index(needs), held)


@dataclass(frozen=True)
class ResultRow:
    camera_id: str
    start_ts: float
    end_ts: float
    matched_keys: tuple[str, ...]
    clip: ClipRef


@dataclass(frozen=True)
class QueryResult:
    rows: tuple[ResultRow, ...]

    def clip_set(self) -> set[ClipRef]:
        return {row.clip for row in self.rows}


def _leaf_name(pred: Node) -> str:
    if isinstance(pred, KeyPred):
        return pred.key
    if isinstance(pred, CountPred):
        return f"count_{pred.cls}"
    if isinstance(pred, TimePred):
        return "time"
    return "camera"


def _clip_set(fog: FogNode, node: Node, universe: set[ClipRef]) -> set[ClipRef]:
    if isinstance(node, KeyPred):
        return fog.index_lookup(node.key, node.cmp, node.literal)
    if isinstance(node, CountPred):
        return fog.index_lookup(f"count_{node.cls}", node.cmp, node.count)
    if isinstance(node, TimePred):
        return {
            c for c in universe
            if node.contains_minute(minute_of_day(c.start_ts, fog.tz_offset_min))
        }
    if isinstance(node, CameraPred):
        wanted = set(node.cameras)
        return {c for c in universe if c.camera_id in wanted}
    if isinstance(node, Not):
        return universe - _clip_set(fog, node.operand, universe)
    if isinstance(node, And):
        return _clip_set(fog, node.left, universe) & _clip_set(fog, node.right, universe)
    if isinstance(node, Or):
        return _clip_set(fog, node.left, universe) | _clip_set(fog, node.right, universe)
    raise TypeError(f"not a query node: {node!r}")


def _positive_leaves(node: Node, out: list[Node]) -> None:
    # Leaves under any NOT contribute no matched_keys.
    if isinstance(node, Not):
        return
    if isinstance(node, (And, Or)):
        _positive_leaves(node.left, out)
        _positive_leaves(node.right, out)
        return
    out.append(node)


def evaluate(fog: FogNode, ast: Node) -> QueryResult:
    """Evaluate a query AST to result rows sorted by (start_ts, camera_id)."""
    universe = fog.all_clips()
    result = _clip_set(fog, ast, universe)

    leaves: list[Node] = []
    _positive_leaves(ast, leaves)
    leaf_sets = [(leaf, _clip_set(fog, leaf, universe)) for leaf in leaves]

    rows = []
    for clip in sorted(result, key=lambda c: (c.start_ts, c.camera_id)):
        matched = sorted({_leaf_name(leaf) for leaf, cs in leaf_sets if clip in cs})
        rows.append(
            ResultRow(
                camera_id=clip.camera_id,
                start_ts=clip.start_ts,
                end_ts=clip.end_ts,
                matched_keys=tuple(matched),
                clip=clip,
            )
        )
    return QueryResult(tuple(rows))


# --- Wire-level request handling ----------------------------------------------

def clip_to_json(clip: ClipRef) -> dict:
    return {
        "camera_id": clip.camera_id,
        "start_ts": clip.start_ts,
        "end_ts": clip.end_ts,
        "first_frame": clip.first_frame,
        "last_frame": clip.last_frame,
    }


def row_to_json(row: ResultRow) -> dict:
    return {
        "camera_id": row.camera_id,
        "start_ts": row.start_ts,
        "end_ts": row.end_ts,
        "matched_keys": list(row.matched_keys),
        "clip": clip_to_json(row.clip),
    }


def frame_to_json(frame: scenario.GroundTruthFrame) -> dict:
    return {
        "frame_no": frame.frame_no,
        "ts": frame.ts,
        "boxes": [
            [entity_id, cls, box.x, box.y, box.w, box.h]
            for entity_id, cls, box in frame.boxes
        ],
    }


class QueryService:
    """Protocol front for one fog node: query and clip requests."""

    def __init__(self, fog: FogNode, world: WorldConfig, access: AccessTable) -> None:
        self.fog = fog
        self.world = world
        self.access = access

    def handle_request(self, msg: dict) -> dict:
        req_id = msg.get("req_id")
        try:
            kind = msg.get("type")
            if kind == "query":
                return self._handle_query(msg)
            if kind == "clip":
                return self._handle_clip(msg)
            return _error(req_id, f"unknown request type {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            return _error(req_id, f"malformed request: {exc}")

    def _handle_query(self, msg: dict) -> dict:
        req_id = msg["req_id"]
        decision = authorize(self.access, str(msg["requester"]), "query")
        if not decision.granted:
            return _denied(req_id, decision.held)
        try:
            ast = parse_query(str(msg["body"]))
        except ParseError as exc:
            return {
                "req_id": req_id,
                "status": "bad_query",
                "detail": {
                    "offset": exc.offset,
                    "expected": list(exc.expected),
                    "message": str(exc),
                },
            }
        result = evaluate(self.fog, ast)
        return {
            "req_id": req_id,
            "status": "ok",
            "rows": [row_to_json(row) for row in result.rows],
        }

    def _handle_clip(self, msg: dict) -> dict:
        req_id = msg["req_id"]
        decision = authorize(self.access, str(msg["requester"]), "clip")
        if not decision.granted:
            return _denied(req_id, decision.held)
        body = msg["body"]
        frames = scenario.clip(
            self.world,
            str(body["camera_id"]),
            float(body["start_ts"]),
            float(body["end_ts"]),
        )
        return {
            "req_id": req_id,
            "status": "ok",
            "frames": [frame_to_json(f) for f in frames],
        }


def _denied(req_id, held: str) -> dict:
    return {"req_id": req_id, "status": "denied", "detail": {"held": held}}


def _error(req_id, message: str) -> dict:
    return {"req_id": req_id, "status": "error", "detail": message}
