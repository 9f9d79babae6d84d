"""Command-line entry points for running, querying, and drilling the pipeline."""

from __future__ import annotations

import json
import socket
import sys
from pathlib import Path

import click

from . import cloud, harness
from .framing import recv_msg, send_msg
from .server import FogNodeServer


@click.group()
def main() -> None:
    """Desk-scale surveillance pipeline: edge agents, fog index, operator queries."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--realtime", is_flag=True, help="Sleep one frame period per frame.")
@click.option("--mode", type=click.Choice(["in-process", "multi-process"]), default=None)
@click.option("--report", "report_path", type=click.Path(), default=None)
def run(config_path: str, realtime: bool, mode: str | None, report_path: str | None) -> None:
    """Run the full pipeline over a scenario and write a run report."""
    config = harness.load_config(config_path)
    result = harness.run(config, mode=mode, realtime=realtime)
    report = result.report
    if report_path:
        harness.write_report(report, report_path)
    click.echo(
        f"mode={report.mode} records={report.records_ingested} blocks={report.blocks} "
        f"events={len(report.events)} tracks={report.tracks_opened} "
        f"id_switches={report.id_switches}"
    )
    for cam_id, status in sorted(report.chain_verify.items()):
        click.echo(f"chain {cam_id}: {status}")
    for stat in report.queries:
        click.echo(
            f"query {stat.text!r}: rows={stat.row_count} "
            f"indexed={stat.indexed_eval_ms:.3f}ms scan={stat.scan_eval_ms:.3f}ms "
            f"equal={stat.equal}"
        )
    if not report.ok:
        for violation in report.violations:
            click.echo(f"VIOLATION: {violation}", err=True)
        sys.exit(1)


@main.command()
@click.option("--addr", default="127.0.0.1:7700", help="host:port of a serving fog node.")
@click.option("--requester", required=True)
@click.argument("query_text")
def query(addr: str, requester: str, query_text: str) -> None:
    """Send one query to a running fog node and print the rows."""
    host, _, port = addr.rpartition(":")
    sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=30)
    try:
        send_msg(sock, {
            "type": "query", "req_id": 1, "requester": requester, "body": query_text,
        })
        reply = recv_msg(sock)
    finally:
        sock.close()
    if reply is None:
        click.echo("connection closed without a response", err=True)
        sys.exit(1)
    status = reply.get("status")
    if status == "ok":
        for row in reply.get("rows", []):
            click.echo(json.dumps(row))
        click.echo(f"{len(reply.get('rows', []))} row(s)")
    else:
        click.echo(json.dumps(reply), err=True)
        sys.exit(1)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True),
              help="File with one query per line.")
@click.option("--repeats", default=3, show_default=True)
def bench(config_path: str, queries_path: str, repeats: int) -> None:
    """Time indexed vs scan evaluation for each query in a file."""
    from .oracle import bench_query

    config = harness.load_config(config_path)
    result = harness.run(config, mode="in_process")
    assert result.fog is not None
    all_equal = True
    for line in Path(queries_path).read_text(encoding="utf-8").splitlines():
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        res = bench_query(result.fog, text, repeats=repeats)
        all_equal = all_equal and res.equal
        click.echo(json.dumps({
            "query": res.query, "row_count": res.row_count,
            "indexed_ms": round(res.indexed_ms, 4), "scan_ms": round(res.scan_ms, 4),
            "equal": res.equal,
        }))
    if not all_equal:
        sys.exit(1)


@main.command("tamper-drill")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--drills", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True)
def tamper_drill(config_path: str, drills: int, seed: int) -> None:
    """Mutate random bytes in stored blocks and check detection/rejection."""
    config = harness.load_config(config_path)
    outcome = harness.tamper_drill(config, drills=drills, seed=seed)
    for d in outcome.drills:
        click.echo(
            f"{'pass' if d.ok else 'FAIL'} camera={d.camera_id} seq={d.seq} "
            f"target={d.target} detected_seq={d.detected_seq} reason={d.reason}"
        )
    click.echo(f"{sum(d.ok for d in outcome.drills)}/{len(outcome.drills)} detected")
    if not outcome.passed:
        sys.exit(1)


@main.group()
def profile() -> None:
    """Cloud-tier profile building and alarm-feedback tuning."""


@profile.command("build")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--camera", "camera_id", default=None, help="Only this camera.")
def profile_build(config_path: str, out_dir: str, camera_id: str | None) -> None:
    """Run the pipeline and write per-camera hourly profile snapshots."""
    config = harness.load_config(config_path)
    result = harness.run(config, mode="in_process")
    assert result.fog is not None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cameras = [camera_id] if camera_id else [c.camera_id for c in result.world.cameras]
    records = list(result.fog.iter_records())
    for cam in cameras:
        prof = cloud.build_profile(records, cam)
        cloud.save_profile(prof, out / f"{cam}.json")
        click.echo(f"wrote {out / f'{cam}.json'}")
    state = cloud.SensitivityState(
        known_events={e["event_id"] for e in result.report.events}
    )
    state_path = out / "sensitivity.json"
    state_path.write_text(json.dumps(cloud.state_to_json(state), indent=2) + "\n")
    click.echo(f"wrote {state_path} (k={state.k}, {len(state.known_events)} known events)")


@profile.command("feedback")
@click.option("--state", "state_path", required=True, type=click.Path(exists=True))
@click.option("--event", "event_id", required=True)
@click.option("--verdict", type=click.Choice(["true_alarm", "false_alarm"]), required=True)
def profile_feedback(state_path: str, event_id: str, verdict: str) -> None:
    """Apply one operator verdict to the sensitivity state file."""
    doc = json.loads(Path(state_path).read_text(encoding="utf-8"))
    state = cloud.state_from_json(doc)
    try:
        cloud.feedback(state, event_id, verdict)
    except cloud.UnknownEventError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    Path(state_path).write_text(json.dumps(cloud.state_to_json(state), indent=2) + "\n")
    click.echo(f"k={state.k}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--port", default=7700, show_default=True)
@click.option("--realtime", is_flag=True)
def serve(config_path: str, port: int, realtime: bool) -> None:
    """Ingest the scenario, then keep serving queries on the wire protocol."""
    config = harness.load_config(config_path)
    result = harness.run(config, mode="in_process", realtime=realtime)
    assert result.fog is not None and result.service is not None
    keys = {c.camera_id: config.key_for(c.camera_id) for c in result.world.cameras}
    server = FogNodeServer(result.service, keys, port=port)
    click.echo(
        f"ingested {result.report.records_ingested} records, "
        f"{len(result.report.events)} events; serving on {server.host}:{server.port}"
    )
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()


if __name__ == "__main__":
    main()
