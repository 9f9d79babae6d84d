"""Linear-scan query evaluation and the indexed-vs-scan benchmark.

scan_evaluate answers a query by one pass over every retained raw record,
never touching the inverted index; it is the ground truth the indexed
evaluator is checked against and the baseline the index is timed against.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

from .fogindex import COMPARATORS, ClipRef, FogNode
from .queryd import evaluate
from .querylang import (
    And,
    CameraPred,
    CountPred,
    KeyPred,
    Node,
    Not,
    Or,
    TimePred,
    parse_query,
)
from .scenario import minute_of_day


def _collect_key_leaves(node: Node, out: dict) -> None:
    if isinstance(node, KeyPred):
        out.setdefault(node, set())
    elif isinstance(node, CountPred):
        out.setdefault(node, set())
    elif isinstance(node, Not):
        _collect_key_leaves(node.operand, out)
    elif isinstance(node, (And, Or)):
        _collect_key_leaves(node.left, out)
        _collect_key_leaves(node.right, out)


def scan_evaluate(fog: FogNode, ast: Node) -> set[ClipRef]:
    """Evaluate by brute-force scan of all raw records (no index access)."""
    leaf_sets: dict[Node, set[ClipRef]] = {}
    _collect_key_leaves(ast, leaf_sets)
    probes = []
    for leaf, hits in leaf_sets.items():
        if isinstance(leaf, KeyPred):
            key, literal = leaf.key, leaf.literal
        else:
            key, literal = f"count_{leaf.cls}", leaf.count
        probes.append((key, COMPARATORS[leaf.cmp], isinstance(literal, str), literal, hits))

    universe: set[ClipRef] = set()
    cadence = fog.cadence
    clip_for = fog.clip_ref
    for rec in fog.iter_records():
        clip = clip_for(rec.camera_id, rec.frame_no // cadence)
        universe.add(clip)
        rec_key = rec.key
        for key, op, literal_is_str, literal, hits in probes:
            if rec_key == key:
                value = rec.value
                if isinstance(value, str) == literal_is_str and op(value, literal):
                    hits.add(clip)

    def algebra(node: Node) -> set[ClipRef]:
        if isinstance(node, (KeyPred, CountPred)):
            return leaf_sets[node]
        if isinstance(node, TimePred):
            return {
                c for c in universe
                if node.contains_minute(minute_of_day(c.start_ts, fog.tz_offset_min))
            }
        if isinstance(node, CameraPred):
            wanted = set(node.cameras)
            return {c for c in universe if c.camera_id in wanted}
        if isinstance(node, Not):
            return universe - algebra(node.operand)
        if isinstance(node, And):
            return algebra(node.left) & algebra(node.right)
        if isinstance(node, Or):
            return algebra(node.left) | algebra(node.right)
        raise TypeError(f"not a query node: {node!r}")

    return algebra(ast)


@dataclass(frozen=True)
class BenchResult:
    query: str
    indexed_ms: float
    scan_ms: float
    equal: bool
    row_count: int


def bench_query(fog: FogNode, query_text: str, repeats: int = 3) -> BenchResult:
    """Median indexed vs scan timings plus result-set equality."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    ast = parse_query(query_text)

    indexed_times = []
    indexed_set: set[ClipRef] = set()
    for _ in range(repeats):
        t0 = time.perf_counter()
        indexed_set = evaluate(fog, ast).clip_set()
        indexed_times.append((time.perf_counter() - t0) * 1000.0)

    scan_times = []
    scan_set: set[ClipRef] = set()
    for _ in range(repeats):
        t0 = time.perf_counter()
        scan_set = scan_evaluate(fog, ast)
        scan_times.append((time.perf_counter() - t0) * 1000.0)

    return BenchResult(
        query=query_text,
        indexed_ms=statistics.median(indexed_times),
        scan_ms=statistics.median(scan_times),
        equal=indexed_set == scan_set,
        row_count=len(indexed_set),
    )
