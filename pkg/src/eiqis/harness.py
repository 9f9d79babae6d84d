"""Run orchestration: the full pipeline, reports, and tamper drills.

A run loads a scenario, drives one edge agent per camera, seals records
into per-camera chains, ingests them at the fog, and answers the config's
logged queries both ways (indexed and scan). in_process mode wires the
tiers by direct calls; multi_process mode puts the fog node and each edge
agent in its own process, talking only the framed wire protocol, and must
produce the same record counts, events, and query answers.
"""

from __future__ import annotations

import json
import multiprocessing
import random
import socket
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import chainlog
from .chainlog import Chain, LedgerBlock, block_to_msg, head_to_msg
from .edge import EdgeAgent, NoiseParams, iou
from .fogindex import BlockRejected, FogNode, load_rules
from .framing import recv_msg, send_msg
from .oracle import bench_query
from .queryd import AccessTable, QueryService, evaluate, row_to_json
from .querylang import parse_query
from .scenario import WorldConfig, ground_truth, load_world_file
from .server import FogNodeServer

MODES = ("in_process", "multi_process")


class ConfigError(ValueError):
    pass


class ComponentError(RuntimeError):
    """A pipeline component failed to start or misbehaved mid-run."""


@dataclass(frozen=True)
class DeploymentConfig:
    scenario_path: Path
    rules_path: Path | None
    access: dict[str, str]
    channel_keys: dict[str, str]
    detector_cadence: int = 15
    noise: NoiseParams = NoiseParams()
    tz_offset_min: int = 0
    ports: tuple[tuple[str, int], ...] = (("fog", 0),)
    mode: str = "in_process"
    queries: tuple[str, ...] = ()
    log_dir: Path | None = None
    bench_repeats: int = 3

    def key_for(self, camera_id: str) -> bytes:
        raw = self.channel_keys.get(camera_id, self.channel_keys.get("default", ""))
        if not raw:
            raise ConfigError(f"no channel key for camera {camera_id!r}")
        return raw.encode("utf-8")

    def port(self, name: str) -> int:
        for n, p in self.ports:
            if n == name:
                return p
        return 0


def config_from_doc(doc: dict, base_dir: Path) -> DeploymentConfig:
    """Build a validated config; relative paths resolve against base_dir."""
    def resolve(value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base_dir / p

    scenario_path = resolve(doc.get("scenario"))
    if scenario_path is None or not scenario_path.exists():
        raise ConfigError(f"scenario file not found: {scenario_path}")
    rules_path = resolve(doc.get("rules"))
    if doc.get("rules") is not None and not rules_path.exists():
        raise ConfigError(f"rules file not found: {rules_path}")

    noise_doc = doc.get("noise", {}) or {}
    mode = str(doc.get("mode", "in_process")).replace("-", "_")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")

    ports_doc = doc.get("ports", {"fog": 0}) or {"fog": 0}
    ports = tuple(sorted((str(k), int(v)) for k, v in ports_doc.items()))
    bound = [p for _n, p in ports if p != 0]
    if len(bound) != len(set(bound)):
        raise ConfigError(f"ports must be distinct, got {ports_doc}")

    keys = doc.get("channel_keys") or {"default": "eiqis-demo-key"}
    return DeploymentConfig(
        scenario_path=scenario_path,
        rules_path=rules_path,
        access={str(k): str(v) for k, v in (doc.get("access") or {}).items()},
        channel_keys={str(k): str(v) for k, v in keys.items()},
        detector_cadence=int(doc.get("detector_cadence", 15)),
        noise=NoiseParams(
            miss_rate=float(noise_doc.get("miss_rate", 0.0)),
            jitter_px=float(noise_doc.get("jitter_px", 0.0)),
            seed=int(noise_doc.get("seed", 0)),
        ),
        tz_offset_min=int(doc.get("tz_offset_min", 0)),
        ports=ports,
        mode=mode,
        queries=tuple(str(q) for q in doc.get("queries", [])),
        log_dir=resolve(doc.get("log_dir")),
        bench_repeats=int(doc.get("bench_repeats", 3)),
    )


def load_config(path: str | Path) -> DeploymentConfig:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    return config_from_doc(doc, path.parent.resolve())


def build_fog(config: DeploymentConfig, world: WorldConfig) -> FogNode:
    rules = []
    if config.rules_path is not None:
        rules = load_rules(config.rules_path.read_text(encoding="utf-8"))
    return FogNode(
        cameras=world.cameras,
        fps=world.fps,
        start_epoch_ms=world.start_epoch_ms,
        duration_s=world.duration_s,
        cadence=config.detector_cadence,
        tz_offset_min=config.tz_offset_min,
        rules=rules,
    )


@dataclass
class QueryStat:
    text: str
    row_count: int
    indexed_eval_ms: float
    scan_eval_ms: float
    equal: bool


@dataclass
class RunReport:
    mode: str
    records_ingested: int = 0
    blocks: int = 0
    events: list[dict] = field(default_factory=list)
    queries: list[QueryStat] = field(default_factory=list)
    tracks_opened: int = 0
    id_switches: int = 0
    chain_verify: dict[str, str] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)
    elapsed_s: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass
class RunResult:
    report: RunReport
    config: DeploymentConfig
    world: WorldConfig
    query_rows: dict[str, list[dict]] = field(default_factory=dict)
    # In-process runs keep the live components around for inspection.
    fog: FogNode | None = None
    service: QueryService | None = None
    chains: dict[str, Chain] = field(default_factory=dict)
    agents: dict[str, EdgeAgent] = field(default_factory=dict)


class _FidelityStats:
    """Ground-truth-aided tracker stats: id switches across a run."""

    def __init__(self) -> None:
        self._prev: dict[str, dict[str, int]] = {}
        self.id_switches = 0

    def observe(self, camera_id, frame, live_tracks) -> None:
        current: dict[str, int] = {}
        for tr in live_tracks:
            best_id, best_iou = None, 0.0
            for entity_id, _cls, box in frame.boxes:
                score = iou(tr.box, box)
                if score > best_iou:
                    best_id, best_iou = entity_id, score
            if best_id is not None and best_iou >= 0.5:
                current[best_id] = tr.track_id
        prev = self._prev.get(camera_id, {})
        for entity_id, track_id in current.items():
            if entity_id in prev and prev[entity_id] != track_id:
                self.id_switches += 1
        self._prev[camera_id] = current


def _event_dicts(fog: FogNode) -> list[dict]:
    events = [
        {"event_id": e.event_id, "rule": e.rule, "camera_id": e.camera_id,
         "ts": e.ts, "frame_no": e.frame_no}
        for e in fog.events
    ]
    events.sort(key=lambda e: (e["camera_id"], e["frame_no"], e["rule"]))
    return events


def run(config: DeploymentConfig, mode: str | None = None, realtime: bool = False) -> RunResult:
    """Execute the full pipeline over the scenario and assemble a report."""
    mode = (mode or config.mode).replace("-", "_")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "in_process":
        return _run_in_process(config, realtime=realtime)
    return _run_multi_process(config)


def _run_in_process(config: DeploymentConfig, realtime: bool = False) -> RunResult:
    t0 = time.perf_counter()
    world = load_world_file(config.scenario_path)
    fog = build_fog(config, world)
    access = AccessTable(config.access)
    service = QueryService(fog, world, access)

    log_files = {}
    if config.log_dir is not None:
        config.log_dir.mkdir(parents=True, exist_ok=True)

    agents: dict[str, EdgeAgent] = {}
    chains: dict[str, Chain] = {}
    pending: dict[str, list] = {}
    for cam in world.cameras:
        log_file = None
        if config.log_dir is not None:
            log_file = open(config.log_dir / f"{cam.camera_id}.log", "w", encoding="utf-8")
            log_files[cam.camera_id] = log_file
        agents[cam.camera_id] = EdgeAgent(
            world, cam.camera_id, noise=config.noise,
            cadence=config.detector_cadence, log_file=log_file,
        )
        chains[cam.camera_id] = Chain(cam.camera_id)
        pending[cam.camera_id] = []

    stats = _FidelityStats()
    report = RunReport(mode="in_process")
    try:
        for frame_no in range(world.total_frames):
            for cam in world.cameras:
                cam_id = cam.camera_id
                frame = ground_truth(world, cam_id, frame_no)
                records = agents[cam_id].step(frame)
                stats.observe(cam_id, frame, [t for t in agents[cam_id].tracker.tracks if t.live])
                pending[cam_id].extend(records)
                if (frame_no + 1) % config.detector_cadence == 0 or frame_no == world.total_frames - 1:
                    if pending[cam_id]:
                        block = chainlog.append(chains[cam_id], pending[cam_id], config.key_for(cam_id))
                        try:
                            fog.ingest_block(cam_id, block, config.key_for(cam_id))
                        except BlockRejected as exc:
                            report.violations.append(f"ingest: {exc}")
                        pending[cam_id].clear()
            if realtime:
                time.sleep(world.frame_period_ms / 1000.0)
    finally:
        for fh in log_files.values():
            fh.close()

    for cam_id, chain in chains.items():
        tamper = chainlog.verify(chain, config.key_for(cam_id))
        if tamper is None:
            report.chain_verify[cam_id] = "ok"
        else:
            report.chain_verify[cam_id] = f"{tamper.reason} at seq {tamper.first_bad_seq}"
            report.violations.append(f"chain {cam_id}: {report.chain_verify[cam_id]}")

    result = RunResult(
        report=report, config=config, world=world,
        fog=fog, service=service, chains=chains, agents=agents,
    )
    for text in config.queries:
        bench = bench_query(fog, text, repeats=config.bench_repeats)
        report.queries.append(QueryStat(
            text=text, row_count=bench.row_count,
            indexed_eval_ms=bench.indexed_ms, scan_eval_ms=bench.scan_ms,
            equal=bench.equal,
        ))
        if not bench.equal:
            report.violations.append(f"query {text!r}: indexed and scan results differ")
        result.query_rows[text] = [
            row_to_json(row) for row in evaluate(fog, parse_query(text)).rows
        ]

    report.records_ingested = fog.records_ingested
    report.blocks = fog.blocks_ingested
    report.events = _event_dicts(fog)
    report.tracks_opened = sum(a.tracker.next_track_id for a in agents.values())
    report.id_switches = stats.id_switches
    report.elapsed_s = time.perf_counter() - t0
    return result


# --- multi-process mode -------------------------------------------------------

def _serve_worker(config: DeploymentConfig, conn) -> None:
    world = load_world_file(config.scenario_path)
    fog = build_fog(config, world)
    service = QueryService(fog, world, AccessTable(config.access))
    keys = {cam.camera_id: config.key_for(cam.camera_id) for cam in world.cameras}
    server = FogNodeServer(service, keys, port=config.port("fog"))
    conn.send(server.port)
    conn.close()
    server.serve_forever()


def _edge_worker(config: DeploymentConfig, camera_id: str, port: int, conn) -> None:
    world = load_world_file(config.scenario_path)
    agent = EdgeAgent(world, camera_id, noise=config.noise, cadence=config.detector_cadence)
    chain = Chain(camera_id)
    key = config.key_for(camera_id)
    stats = _FidelityStats()
    pending = []
    sock = socket.create_connection(("127.0.0.1", port), timeout=30)
    try:
        for frame_no in range(world.total_frames):
            frame = ground_truth(world, camera_id, frame_no)
            pending.extend(agent.step(frame))
            stats.observe(camera_id, frame, [t for t in agent.tracker.tracks if t.live])
            if (frame_no + 1) % config.detector_cadence == 0 or frame_no == world.total_frames - 1:
                if pending:
                    block = chainlog.append(chain, pending, key)
                    send_msg(sock, block_to_msg(camera_id, block))
                    ack = recv_msg(sock)
                    if ack is None or ack.get("status") != "ok":
                        raise ComponentError(f"fog rejected block: {ack}")
                    pending.clear()
        # Head gossip: fog's copy of our head must match ours.
        if chain.blocks:
            send_msg(sock, head_to_msg(camera_id, chain.blocks[-1]))
            ack = recv_msg(sock)
            sync = ack.get("status") if ack else None
        else:
            sync = "consistent"
        tamper = chainlog.verify(chain, key)
        conn.send({
            "camera_id": camera_id,
            "records": sum(len(b.payload) for b in chain.blocks),
            "blocks": len(chain.blocks),
            "tracks_opened": agent.tracker.next_track_id,
            "id_switches": stats.id_switches,
            "chain_verify": "ok" if tamper is None else f"{tamper.reason} at seq {tamper.first_bad_seq}",
            "head_sync": sync,
        })
    except Exception as exc:  # surfaced to the parent as a component failure
        conn.send({"camera_id": camera_id, "error": f"{type(exc).__name__}: {exc}"})
    finally:
        conn.close()
        sock.close()


def _run_multi_process(config: DeploymentConfig) -> RunResult:
    t0 = time.perf_counter()
    world = load_world_file(config.scenario_path)
    ctx = multiprocessing.get_context("spawn")

    # Fog node first; edges connect to the port it reports.
    parent_conn, child_conn = ctx.Pipe()
    fog_proc = ctx.Process(target=_serve_worker, args=(config, child_conn), daemon=True)
    fog_proc.start()
    if not parent_conn.poll(30):
        fog_proc.terminate()
        raise ComponentError("fog node: did not report a port within 30s")
    port = parent_conn.recv()

    edge_results: dict[str, dict] = {}
    procs = []
    for cam in world.cameras:
        recv_conn, send_conn = ctx.Pipe()
        proc = ctx.Process(
            target=_edge_worker, args=(config, cam.camera_id, port, send_conn), daemon=True
        )
        proc.start()
        procs.append((cam.camera_id, proc, recv_conn))
    report = RunReport(mode="multi_process")
    for cam_id, proc, recv_conn in procs:
        if recv_conn.poll(300):
            edge_results[cam_id] = recv_conn.recv()
        else:
            edge_results[cam_id] = {"camera_id": cam_id, "error": "edge agent timed out"}
        proc.join(10)

    result = RunResult(report=report, config=config, world=world)
    try:
        sock = socket.create_connection(("127.0.0.1", port), timeout=30)
    except OSError as exc:
        raise ComponentError(f"fog node: cannot connect for stats: {exc}")
    try:
        for text in config.queries:
            send_msg(sock, {"type": "bench", "body": text, "repeats": config.bench_repeats})
            bench = recv_msg(sock)
            if not bench or bench.get("status") != "ok":
                report.violations.append(f"bench {text!r}: {bench and bench.get('detail')}")
                continue
            report.queries.append(QueryStat(
                text=text, row_count=int(bench["row_count"]),
                indexed_eval_ms=float(bench["indexed_ms"]),
                scan_eval_ms=float(bench["scan_ms"]), equal=bool(bench["equal"]),
            ))
            if not bench["equal"]:
                report.violations.append(f"query {text!r}: indexed and scan results differ")
            send_msg(sock, {"type": "eval", "body": text})
            evaled = recv_msg(sock)
            if evaled and evaled.get("status") == "ok":
                result.query_rows[text] = evaled["rows"]
        send_msg(sock, {"type": "stats"})
        stats_msg = recv_msg(sock) or {}
        send_msg(sock, {"type": "shutdown"})
        recv_msg(sock)
    finally:
        sock.close()
    fog_proc.join(10)
    if fog_proc.is_alive():
        fog_proc.terminate()

    for cam_id, res in edge_results.items():
        if "error" in res:
            report.violations.append(f"edge {cam_id}: {res['error']}")
            report.chain_verify[cam_id] = "edge failed"
            continue
        report.chain_verify[cam_id] = res["chain_verify"]
        if res["chain_verify"] != "ok":
            report.violations.append(f"chain {cam_id}: {res['chain_verify']}")
        if res["head_sync"] != "consistent":
            report.violations.append(f"head gossip {cam_id}: {res['head_sync']}")
        report.tracks_opened += res["tracks_opened"]
        report.id_switches += res["id_switches"]

    report.records_ingested = int(stats_msg.get("records_ingested", 0))
    report.blocks = int(stats_msg.get("blocks_ingested", 0))
    events = list(stats_msg.get("events", []))
    events.sort(key=lambda e: (e["camera_id"], e["frame_no"], e["rule"]))
    report.events = events
    report.elapsed_s = time.perf_counter() - t0
    return result


# --- report files ---------------------------------------------------------------

def write_report(report: RunReport, path: str | Path) -> None:
    """JSON lines: one object per measured query, then a summary object."""
    with open(path, "w", encoding="utf-8") as fh:
        for q in report.queries:
            fh.write(json.dumps({
                "type": "query", "text": q.text, "row_count": q.row_count,
                "indexed_eval_ms": round(q.indexed_eval_ms, 4),
                "scan_eval_ms": round(q.scan_eval_ms, 4), "equal": q.equal,
            }) + "\n")
        fh.write(json.dumps({
            "type": "summary", "mode": report.mode,
            "records_ingested": report.records_ingested, "blocks": report.blocks,
            "events": report.events, "tracks_opened": report.tracks_opened,
            "id_switches": report.id_switches, "chain_verify": report.chain_verify,
            "violations": report.violations, "elapsed_s": round(report.elapsed_s, 3),
        }) + "\n")


# --- tamper drills ----------------------------------------------------------------

_PRINTABLE = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"


@dataclass(frozen=True)
class DrillRecord:
    camera_id: str
    seq: int
    target: str  # payload | prev_hash | payload_hash | hmac
    detected: bool
    detected_seq: int | None
    reason: str | None
    rejected: bool
    state_unchanged: bool

    @property
    def ok(self) -> bool:
        return (
            self.detected
            and self.detected_seq is not None
            and self.detected_seq <= self.seq
            and self.rejected
            and self.state_unchanged
        )


@dataclass
class DrillOutcome:
    drills: list[DrillRecord]

    @property
    def passed(self) -> bool:
        return all(d.ok for d in self.drills)


def _flip_byte(data: bytes, rng: random.Random) -> bytes:
    idx = rng.randrange(len(data))
    xor = rng.randrange(1, 256)
    return data[:idx] + bytes([data[idx] ^ xor]) + data[idx + 1:]


def _mutate_block(block: LedgerBlock, rng: random.Random) -> tuple[LedgerBlock, str]:
    target = rng.choice(("payload", "payload", "prev_hash", "payload_hash", "hmac"))
    if target == "payload":
        lines = list(block.payload)
        li = rng.randrange(len(lines))
        line = lines[li]
        ci = rng.randrange(len(line))
        repl = rng.choice([c for c in _PRINTABLE if c != line[ci]])
        lines[li] = line[:ci] + repl + line[ci + 1:]
        mutated = LedgerBlock(block.seq, block.prev_hash, tuple(lines),
                              block.payload_hash, block.hmac)
    elif target == "prev_hash":
        mutated = LedgerBlock(block.seq, _flip_byte(block.prev_hash, rng), block.payload,
                              block.payload_hash, block.hmac)
    elif target == "payload_hash":
        mutated = LedgerBlock(block.seq, block.prev_hash, block.payload,
                              _flip_byte(block.payload_hash, rng), block.hmac)
    else:
        mutated = LedgerBlock(block.seq, block.prev_hash, block.payload,
                              block.payload_hash, _flip_byte(block.hmac, rng))
    return mutated, target


def drill_once(result: RunResult, rng: random.Random) -> DrillRecord:
    """One randomized single-byte tamper drill on a completed run's chains."""
    candidates = [cam for cam, chain in result.chains.items() if chain.blocks]
    if not candidates:
        raise ValueError("run produced no blocks to tamper with")
    cam_id = rng.choice(sorted(candidates))
    chain = result.chains[cam_id]
    key = result.config.key_for(cam_id)
    seq = rng.randrange(len(chain.blocks))
    mutated_block, target = _mutate_block(chain.blocks[seq], rng)

    mutated_chain = Chain(cam_id, chain.blocks[:seq] + [mutated_block] + chain.blocks[seq + 1:])
    tamper = chainlog.verify(mutated_chain, key)

    # A fresh fog must reject the mutated block without any state change.
    fog = build_fog(result.config, result.world)
    for good in chain.blocks[:seq]:
        fog.ingest_block(cam_id, good, key)
    before = fog.snapshot_bytes()
    rejected = False
    try:
        fog.ingest_block(cam_id, mutated_block, key)
    except BlockRejected:
        rejected = True
    state_unchanged = fog.snapshot_bytes() == before

    return DrillRecord(
        camera_id=cam_id,
        seq=seq,
        target=target,
        detected=tamper is not None,
        detected_seq=tamper.first_bad_seq if tamper else None,
        reason=tamper.reason if tamper else None,
        rejected=rejected,
        state_unchanged=state_unchanged,
    )


def tamper_drill(config: DeploymentConfig, drills: int = 1, seed: int = 0) -> DrillOutcome:
    """Run the pipeline once, then run seeded drills on copies of its chains."""
    result = _run_in_process(config)
    rng = random.Random(seed)
    return DrillOutcome([drill_once(result, rng) for _ in range(drills)])
