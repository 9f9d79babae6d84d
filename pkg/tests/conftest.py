import json
from pathlib import Path

import pytest

from eiqis import harness

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def tiny_scenario_doc(**overrides) -> dict:
    """Small single-camera world used across unit tests."""
    doc = {
        "seed": 3,
        "start_epoch_ms": 1614986700000,  # 23:25:00 UTC
        "fps": 10,
        "duration_s": 30,
        "cameras": [
            {"camera_id": "cam1", "width": 640, "height": 480,
             "location": "hall", "zone": "hall",
             "open_hours": ["07:00", "22:00"], "terrain": "tile"},
        ],
        "entities": [
            {"entity_id": "p1", "class": "person",
             "waypoints": [[0.0, 40.0, 100.0], [28.0, 500.0, 100.0]],
             "box_size": [32, 64]},
            {"entity_id": "v1", "class": "vehicle",
             "waypoints": [[5.0, 60.0, 300.0], [25.0, 400.0, 320.0]],
             "box_size": [100, 50]},
        ],
    }
    doc.update(overrides)
    return doc


@pytest.fixture
def tiny_world():
    from eiqis.scenario import load_world

    return load_world(json.dumps(tiny_scenario_doc()))


@pytest.fixture(scope="session")
def campus_config() -> harness.DeploymentConfig:
    return harness.load_config(CONFIG_DIR / "deploy.json")


@pytest.fixture(scope="session")
def campus_run(campus_config) -> harness.RunResult:
    """The full acceptance fixture pipeline, built once per session."""
    return harness.run(campus_config, mode="in_process")


@pytest.fixture(scope="session")
def mini_deploy(tmp_path_factory) -> harness.DeploymentConfig:
    """A small but complete deployment (2 cameras, 1 minute) for drills."""
    base = tmp_path_factory.mktemp("mini")
    scenario = {
        "seed": 11,
        "start_epoch_ms": 1614986700000,
        "fps": 30,
        "duration_s": 60,
        "cameras": [
            {"camera_id": "mini_a", "width": 800, "height": 600,
             "location": "door", "zone": "door",
             "open_hours": ["06:00", "22:00"], "terrain": "paved"},
            {"camera_id": "mini_b", "width": 800, "height": 600,
             "location": "yard", "zone": "yard",
             "open_hours": ["00:00", "00:00"], "terrain": "grass"},
        ],
        "entities": [
            {"entity_id": "w1", "class": "person",
             "waypoints": [[1.0, 30.0, 80.0], [55.0, 700.0, 120.0]],
             "box_size": [32, 64]},
            {"entity_id": "w2", "class": "person",
             "waypoints": [[10.0, 700.0, 400.0], [50.0, 100.0, 380.0]],
             "box_size": [32, 64]},
            {"entity_id": "c1", "class": "vehicle",
             "waypoints": [[20.0, 50.0, 500.0], [45.0, 600.0, 500.0]],
             "box_size": [100, 50]},
        ],
    }
    (base / "scenario.json").write_text(json.dumps(scenario))
    (base / "rules.json").write_text(json.dumps([
        {"name": "late_visit", "key": "count_person", "cmp": ">=", "threshold": 1,
         "guard": {"open_now": False}, "window_ms": 3000, "min_hits": 1},
    ]))
    doc = {
        "scenario": "scenario.json",
        "rules": "rules.json",
        "access": {"operator": "clip", "analyst": "query"},
        "channel_keys": {"default": "mini-secret"},
        "detector_cadence": 15,
        "noise": {"miss_rate": 0.0, "jitter_px": 0.0, "seed": 5},
        "queries": ["count_person >= 1"],
    }
    (base / "deploy.json").write_text(json.dumps(doc))
    return harness.load_config(base / "deploy.json")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" in rep.nodeid and getattr(rep, "when", "call") == "call":
                name = rep.nodeid.split("::")[-1]
                rows.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if rows:
        terminalreporter.section("acceptance criteria")
        for name, status in sorted(rows):
            terminalreporter.write_line(f"{status}  {name}")
