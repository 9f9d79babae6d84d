import json
import random

import pytest

from eiqis.chainlog import Chain, LedgerBlock, append
from eiqis.edge import EdgeAgent
from eiqis.fogindex import (
    AnomalyRule,
    BlockRejected,
    BucketConfig,
    FogNode,
    compare,
    load_rules,
)
from eiqis.records import FeatureRecord
from eiqis.scenario import ground_truth, load_world

from conftest import tiny_scenario_doc

KEY = b"fog-test-key"


def make_fog(world, cadence=5, rules=()):
    return FogNode(world.cameras, world.fps, world.start_epoch_ms,
                   world.duration_s, cadence=cadence, rules=rules)


def pipeline(world, fog, camera_id="cam1", cadence=5, frames=None, noise=None):
    """Drive an edge agent and ingest one chain into the fog."""
    from eiqis.edge import NoiseParams

    agent = EdgeAgent(world, camera_id, noise=noise or NoiseParams(), cadence=cadence)
    chain = Chain(camera_id)
    pending = []
    total = frames if frames is not None else world.total_frames
    for frame_no in range(total):
        pending.extend(agent.step(ground_truth(world, camera_id, frame_no)))
        if (frame_no + 1) % cadence == 0 or frame_no == total - 1:
            if pending:
                block = append(chain, pending, KEY)
                fog.ingest_block(camera_id, block, KEY)
                pending.clear()
    return agent, chain


@pytest.fixture
def fog_world(tiny_world):
    fog = make_fog(tiny_world)
    pipeline(tiny_world, fog)
    return fog, tiny_world


# --- contextualize ---------------------------------------------------------------

def rec_at(world, frame_no, key="count_person", value=1):
    return FeatureRecord(ts=world.frame_ts(frame_no), camera_id="cam1",
                         frame_no=frame_no, track_id=None, key=key, value=value)


def test_contextualize_closed_at_night(tiny_world):
    # scenario starts 23:25; open hours [07:00, 22:00)
    fog = make_fog(tiny_world)
    ctx = fog.contextualize(rec_at(tiny_world, 50))
    assert ctx.zone == "hall"
    assert ctx.terrain == "tile"
    assert ctx.open_now is False
    assert ctx.hour_of_day == 23


def test_contextualize_open_boundary():
    doc = tiny_scenario_doc()
    # 07:00:00 exactly
    doc["start_epoch_ms"] = 1614927600000
    world = load_world(json.dumps(doc))
    fog = make_fog(world)
    ctx = fog.contextualize(rec_at(world, 0))
    assert ctx.open_now is True
    assert ctx.hour_of_day == 7


def test_contextualize_midnight_wrap():
    doc = tiny_scenario_doc()
    doc["cameras"][0]["open_hours"] = ["22:00", "06:00"]
    doc["start_epoch_ms"] = 1614907500000  # 01:25:00 UTC
    world = load_world(json.dumps(doc))
    fog = make_fog(world)
    ctx = fog.contextualize(rec_at(world, 0))
    assert ctx.open_now is True
    assert ctx.hour_of_day == 1


def test_contextualize_unknown_camera(tiny_world):
    fog = make_fog(tiny_world)
    rec = FeatureRecord(ts=0.0, camera_id="ghost", frame_no=0,
                        track_id=None, key="k", value=1)
    with pytest.raises(LookupError):
        fog.contextualize(rec)


def test_timezone_offset_changes_hour(tiny_world):
    fog = FogNode(tiny_world.cameras, tiny_world.fps, tiny_world.start_epoch_ms,
                  tiny_world.duration_s, cadence=5, tz_offset_min=120)
    ctx = fog.contextualize(rec_at(tiny_world, 0))
    assert ctx.hour_of_day == 1  # 23:25 UTC + 2 h


# --- ingest ----------------------------------------------------------------------

def test_ingest_then_find(fog_world):
    fog, world = fog_world
    assert fog.records_ingested > 0
    hits = fog.index_lookup("count_person", "=", 1)
    assert hits  # person present through most of the scenario
    for clip in hits:
        assert clip.camera_id == "cam1"


def test_tampered_block_rejected_atomically(tiny_world):
    fog = make_fog(tiny_world)
    agent, chain = pipeline(tiny_world, fog, frames=40)
    snap = fog.snapshot_bytes()

    fog2 = make_fog(tiny_world)
    for block in chain.blocks[:-1]:
        fog2.ingest_block("cam1", block, KEY)
    before = fog2.snapshot_bytes()
    last = chain.blocks[-1]
    bad = LedgerBlock(last.seq, last.prev_hash,
                      tuple(p + "x" for p in last.payload),
                      last.payload_hash, last.hmac)
    with pytest.raises(BlockRejected, match="payload_hash"):
        fog2.ingest_block("cam1", bad, KEY)
    assert fog2.snapshot_bytes() == before
    # and the intact block still ingests fine afterwards
    fog2.ingest_block("cam1", last, KEY)
    assert fog2.snapshot_bytes() == snap


def test_replay_rejected(tiny_world):
    fog = make_fog(tiny_world)
    _agent, chain = pipeline(tiny_world, fog, frames=20)
    with pytest.raises(BlockRejected, match="replay"):
        fog.ingest_block("cam1", chain.blocks[0], KEY)


def test_wrong_key_rejected(tiny_world):
    fog = make_fog(tiny_world)
    chain = Chain("cam1")
    block = append(chain, [rec_at(tiny_world, 0)], b"attacker-key")
    with pytest.raises(BlockRejected, match="hmac"):
        fog.ingest_block("cam1", block, KEY)


def test_monotone_ingestion_never_removes_postings(tiny_world):
    fog = make_fog(tiny_world)
    agent, chain = pipeline(tiny_world, fog, frames=60)
    seen = set()
    fog2 = make_fog(tiny_world)
    for block in chain.blocks:
        fog2.ingest_block("cam1", block, KEY)
        now = fog2.all_clips()
        assert seen <= now
        seen = now


# --- lookup ---------------------------------------------------------------------

def test_lookup_unknown_key_empty(fog_world):
    fog, _ = fog_world
    assert fog.index_lookup("never_emitted", "=", 1) == set()


def test_lookup_comparators_match_linear_scan(fog_world):
    fog, _ = fog_world
    rng = random.Random(7)
    keys = ["count_person", "count_vehicle", "speed", "pos_x", "direction"]
    for _ in range(60):
        key = rng.choice(keys)
        cmp = rng.choice(["=", "!=", "<", "<=", ">", ">="])
        literal = rng.choice([rng.randint(0, 3), round(rng.uniform(0, 400), 1)])
        got = fog.index_lookup(key, cmp, literal)
        want = set()
        for rec in fog.iter_records():
            if rec.key == key and compare(rec.value, cmp, literal):
                want.add(fog.clip_ref(rec.camera_id, rec.frame_no // fog.cadence))
        assert got == want, (key, cmp, literal)


def test_lookup_string_key(fog_world):
    fog, world = fog_world
    event = FeatureRecord(ts=world.frame_ts(3), camera_id="cam1", frame_no=3,
                          track_id=None, key="badge", value="blue")
    fog._insert(fog.contextualize(event))
    assert len(fog.index_lookup("badge", "=", "blue")) == 1
    assert fog.index_lookup("badge", "=", "red") == set()
    assert fog.index_lookup("badge", "!=", "red") == fog.index_lookup("badge", "=", "blue")


def test_bucket_config_widths():
    cfg = BucketConfig()
    assert cfg.bucket_for("speed", 57.0) == ("b", 5)
    assert cfg.bucket_for("direction", 91.0) == ("b", 2)
    assert cfg.bucket_for("count_person", 12) == ("i", 12)
    assert cfg.bucket_for("event", "congestion") == ("s", "congestion")
    assert cfg.bucket_for("dwell_time", 37.5) == ("b", 3)


# --- rules -----------------------------------------------------------------------

def congestion_rule(min_hits=1, window_ms=5000.0):
    return AnomalyRule(name="congestion", key="count_person", cmp=">=", threshold=10,
                       guard_open_now=False, window_ms=window_ms, min_hits=min_hits)


def ctx_count(fog, world, frame_no, count):
    return fog.contextualize(rec_at(world, frame_no, "count_person", count))


def test_rule_emits_when_closed(tiny_world):
    # tiny_world runs 23:25 onward; hall is closed [22:00, 07:00)
    fog = make_fog(tiny_world, rules=[congestion_rule()])
    events = fog.run_rules(ctx_count(fog, tiny_world, 10, 12))
    assert len(events) == 1
    assert events[0].rule == "congestion"
    # the event is indexed like any feature
    assert fog.index_lookup("event", "=", "congestion")


def test_rule_guard_blocks_when_open():
    doc = tiny_scenario_doc()
    doc["start_epoch_ms"] = 1614952500000  # 14:00:00 UTC, open hours
    world = load_world(json.dumps(doc))
    fog = make_fog(world, rules=[congestion_rule()])
    assert fog.run_rules(ctx_count(fog, world, 10, 12)) == []


def test_rule_min_hits_window(tiny_world):
    fog = make_fog(tiny_world, rules=[congestion_rule(min_hits=3, window_ms=2000.0)])
    # hits at 0.0, 0.5, 1.0 s -> event exactly at the third hit
    assert fog.run_rules(ctx_count(fog, tiny_world, 0, 11)) == []
    assert fog.run_rules(ctx_count(fog, tiny_world, 5, 11)) == []
    events = fog.run_rules(ctx_count(fog, tiny_world, 10, 11))
    assert len(events) == 1


def test_rule_dedup_while_open(tiny_world):
    fog = make_fog(tiny_world, rules=[congestion_rule()])
    total = []
    for frame_no in range(0, 40, 2):
        total += fog.run_rules(ctx_count(fog, tiny_world, frame_no, 12))
    assert len(total) == 1  # stays open, never re-fires


def test_rule_reopens_after_window_empties(tiny_world):
    fog = make_fog(tiny_world, rules=[congestion_rule(window_ms=1000.0)])
    assert len(fog.run_rules(ctx_count(fog, tiny_world, 0, 12))) == 1
    # 10 fps: frame 50 is 5 s later, way past the 1 s window
    assert len(fog.run_rules(ctx_count(fog, tiny_world, 50, 12))) == 1


def test_rules_file_parsing():
    rules = load_rules(json.dumps([
        {"name": "r1", "key": "count_person", "cmp": ">=", "threshold": 10,
         "guard": {"open_now": False}, "window_ms": 5000, "min_hits": 1},
        {"name": "r2", "key": "speed", "cmp": ">", "threshold": 120.5,
         "guard": {}, "window_ms": 1000, "min_hits": 3},
    ]))
    assert rules[0].guard_open_now is False
    assert rules[1].guard_open_now is None
    with pytest.raises(ValueError):
        load_rules(json.dumps([{"name": "bad", "key": "k", "cmp": "~", "threshold": 1,
                                "window_ms": 1, "min_hits": 1}]))
