import json

import pytest

from eiqis.scenario import (
    SchemaError,
    ValidationError,
    clip,
    ground_truth,
    load_world,
    minute_of_day,
    parse_hhmm,
)

from conftest import tiny_scenario_doc


def load(doc):
    return load_world(json.dumps(doc))


def test_minimal_world_no_entities():
    world = load(tiny_scenario_doc(entities=[]))
    assert world.entities == ()
    frame = ground_truth(world, "cam1", 0)
    assert frame.boxes == ()


def test_duplicate_camera_id_rejected():
    doc = tiny_scenario_doc()
    doc["cameras"].append(dict(doc["cameras"][0]))
    with pytest.raises(ValidationError, match="camera_id"):
        load(doc)


def test_duplicate_entity_id_rejected():
    doc = tiny_scenario_doc()
    doc["entities"].append(dict(doc["entities"][0]))
    with pytest.raises(ValidationError, match="entity_id"):
        load(doc)


def test_missing_field_named_in_error():
    doc = tiny_scenario_doc()
    del doc["cameras"][0]["zone"]
    with pytest.raises(SchemaError, match="zone"):
        load(doc)


def test_nonincreasing_waypoints_rejected():
    doc = tiny_scenario_doc()
    doc["entities"][0]["waypoints"] = [[5.0, 10, 10], [5.0, 20, 10]]
    with pytest.raises(ValidationError, match="strictly increasing"):
        load(doc)


def test_waypoint_outside_camera_rejected():
    doc = tiny_scenario_doc()
    doc["entities"][0]["waypoints"] = [[0.0, 630.0, 10.0], [5.0, 700.0, 10.0]]
    with pytest.raises(ValidationError, match="bounds"):
        load(doc)


def test_bad_open_hours():
    doc = tiny_scenario_doc()
    doc["cameras"][0]["open_hours"] = ["07:00", "24:01"]
    with pytest.raises(ValidationError, match="time of day"):
        load(doc)
    assert parse_hhmm("23:59") == 23 * 60 + 59


def test_campus_fixture_three_zones():
    from conftest import CONFIG_DIR

    world = load_world((CONFIG_DIR / "campus.json").read_text())
    zones = {cam.zone for cam in world.cameras}
    assert len(world.cameras) == 3
    assert len(zones) == 3


def test_linear_interpolation_midpoint():
    doc = tiny_scenario_doc(entities=[{
        "entity_id": "e", "class": "person",
        "waypoints": [[0.0, 0.0, 0.0], [10.0, 100.0, 0.0]],
        "box_size": [10, 10],
    }])
    world = load(doc)
    frame = ground_truth(world, "cam1", 50)  # t = 5 s at 10 fps
    assert len(frame.boxes) == 1
    assert frame.boxes[0][2].x == pytest.approx(50.0)


def test_entity_absent_outside_waypoint_span():
    doc = tiny_scenario_doc(entities=[{
        "entity_id": "e", "class": "person",
        "waypoints": [[5.0, 0.0, 0.0], [10.0, 100.0, 0.0]],
        "box_size": [10, 10],
    }])
    world = load(doc)
    assert ground_truth(world, "cam1", 0).boxes == ()
    assert ground_truth(world, "cam1", 40).boxes == ()   # t=4 s, before entry
    assert len(ground_truth(world, "cam1", 50).boxes) == 1
    assert ground_truth(world, "cam1", 150).boxes == ()  # t=15 s, after exit


def test_crossing_entities_both_present():
    doc = tiny_scenario_doc(entities=[
        {"entity_id": "a", "class": "person",
         "waypoints": [[0.0, 0.0, 100.0], [10.0, 200.0, 100.0]], "box_size": [20, 20]},
        {"entity_id": "b", "class": "person",
         "waypoints": [[0.0, 200.0, 100.0], [10.0, 0.0, 100.0]], "box_size": [20, 20]},
    ])
    world = load(doc)
    frame = ground_truth(world, "cam1", 50)  # both at x=100, overlapping
    assert len(frame.boxes) == 2
    xs = sorted(box.x for _e, _c, box in frame.boxes)
    assert xs == [pytest.approx(100.0), pytest.approx(100.0)]


def test_unknown_camera():
    world = load(tiny_scenario_doc())
    with pytest.raises(KeyError):
        ground_truth(world, "nope", 0)


def test_clip_point_range():
    world = load(tiny_scenario_doc())
    ts7 = world.frame_ts(7)
    frames = clip(world, "cam1", ts7, ts7)
    assert [f.frame_no for f in frames] == [7]


def test_clip_full_span_count():
    world = load(tiny_scenario_doc())
    frames = clip(world, "cam1", world.start_epoch_ms, world.frame_ts(world.total_frames - 1))
    assert len(frames) == world.fps * world.duration_s


def test_clip_partial_span():
    world = load(tiny_scenario_doc())
    frames = clip(world, "cam1", world.frame_ts(10), world.frame_ts(19))
    assert [f.frame_no for f in frames] == list(range(10, 20))
    ts = [f.ts for f in frames]
    assert ts == sorted(ts)


def test_clip_outside_span_empty():
    world = load(tiny_scenario_doc())
    assert clip(world, "cam1", 0.0, 1000.0) == []


def test_determinism_identical_streams():
    text = json.dumps(tiny_scenario_doc())
    w1, w2 = load_world(text), load_world(text)
    for frame_no in range(0, w1.total_frames, 17):
        assert ground_truth(w1, "cam1", frame_no) == ground_truth(w2, "cam1", frame_no)


def test_frame_ts_constant_step():
    # Constant to within float rounding at epoch-ms magnitude (~2.5e-4 ms),
    # i.e. never the 33/34 ms alternation an integer clock would produce.
    world = load(tiny_scenario_doc(fps=30))
    step = 1000.0 / 30
    prev = world.frame_ts(0)
    for frame_no in range(1, 200):
        ts = world.frame_ts(frame_no)
        assert ts > prev
        assert ts - prev == pytest.approx(step, abs=1e-3)
        prev = ts


def test_boxes_clamped_to_camera():
    # Waypoints valid at endpoints; clamping guards float edges en route.
    world = load(tiny_scenario_doc())
    for frame_no in range(0, world.total_frames, 23):
        for _e, _c, box in ground_truth(world, "cam1", frame_no).boxes:
            assert 0 <= box.x <= 640 - box.w
            assert 0 <= box.y <= 480 - box.h


def test_minute_of_day_and_open_hours():
    world = load(tiny_scenario_doc())
    cam = world.camera("cam1")
    # scenario starts 23:25 UTC
    assert minute_of_day(world.start_epoch_ms) == 23 * 60 + 25
    assert not cam.is_open_at(23 * 60 + 30)
    assert cam.is_open_at(7 * 60)       # opening boundary is open
    assert not cam.is_open_at(22 * 60)  # closing boundary is closed
