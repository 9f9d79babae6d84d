"""Fog-node TCP service speaking the length-prefixed JSON protocol.

One port handles both channels: block/head messages from edge agents and
query/clip messages from operators, plus small admin messages (stats,
events, shutdown) used by the run harness and the console gateway. A
single lock serializes ingestion against evaluation so every request sees
a consistent index snapshot and never a partially ingested block.
"""

from __future__ import annotations

import socket
import threading

from .chainlog import ChainHead, ProtocolError, msg_to_block, msg_to_head, sync_heads
from .fogindex import BlockRejected, FogNode
from .framing import recv_msg, send_msg
from .queryd import QueryService


class FogNodeServer:
    def __init__(
        self,
        service: QueryService,
        channel_keys: dict[str, bytes],
        host: str = "127.0.0.1",
        port: int = 0,
    ) -> None:
        self.service = service
        self.channel_keys = channel_keys
        self._lock = threading.RLock()
        self._stop = threading.Event()
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(16)
        self.host, self.port = self._sock.getsockname()
        self._threads: list[threading.Thread] = []

    @property
    def fog(self) -> FogNode:
        return self.service.fog

    def serve_forever(self) -> None:
        """Accept connections until a shutdown message arrives."""
        while not self._stop.is_set():
            try:
                conn, _addr = self._sock.accept()
            except OSError:
                break
            t = threading.Thread(target=self._serve_conn, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)
        self._sock.close()

    def start(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t

    def stop(self) -> None:
        self._stop.set()
        # Unblock accept().
        try:
            poke = socket.create_connection((self.host, self.port), timeout=1)
            poke.close()
        except OSError:
            pass

    def _serve_conn(self, conn: socket.socket) -> None:
        with conn:
            while not self._stop.is_set():
                try:
                    msg = recv_msg(conn)
                except (OSError, ValueError):
                    return
                if msg is None:
                    return
                reply = self.handle(msg)
                if reply is not None:
                    try:
                        send_msg(conn, reply)
                    except OSError:
                        return

    def handle(self, msg: dict) -> dict | None:
        kind = msg.get("type")
        if kind == "block":
            return self._handle_block(msg)
        if kind == "head":
            return self._handle_head(msg)
        if kind in ("query", "clip"):
            with self._lock:
                return self.service.handle_request(msg)
        if kind == "stats":
            return self._handle_stats()
        if kind == "events":
            return self._handle_events(msg)
        if kind == "bench":
            return self._handle_bench(msg)
        if kind == "eval":
            return self._handle_eval(msg)
        if kind == "shutdown":
            self.stop()
            return {"type": "ack", "status": "ok"}
        return {"type": "ack", "status": "error", "detail": f"unknown type {kind!r}"}

    def _handle_block(self, msg: dict) -> dict:
        try:
            channel_id, block = msg_to_block(msg)
        except (ProtocolError, KeyError, ValueError) as exc:
            return {"type": "ack", "status": "error", "detail": str(exc)}
        key = self.channel_keys.get(channel_id)
        if key is None:
            return {
                "type": "ack", "status": "rejected", "channel": channel_id,
                "seq": block.seq, "detail": "no key for channel",
            }
        with self._lock:
            try:
                indexed = self.fog.ingest_block(channel_id, block, key)
            except BlockRejected as exc:
                return {
                    "type": "ack", "status": "rejected", "channel": channel_id,
                    "seq": exc.seq, "detail": exc.reason,
                }
        return {
            "type": "ack", "status": "ok", "channel": channel_id,
            "seq": block.seq, "indexed": indexed,
        }

    def _handle_head(self, msg: dict) -> dict:
        try:
            peer = msg_to_head(msg)
        except (ProtocolError, KeyError, ValueError) as exc:
            return {"type": "ack", "status": "error", "detail": str(exc)}
        with self._lock:
            state = self.fog._heads.get(peer.channel_id)
        if state is None:
            return {
                "type": "head_ack", "channel": peer.channel_id,
                "status": "diverged", "seq": 0,
            }
        next_seq, head_hash = state
        local = ChainHead(peer.channel_id, next_seq - 1, head_hash)
        diverged = sync_heads(local, peer)
        if diverged is None:
            return {"type": "head_ack", "channel": peer.channel_id, "status": "consistent"}
        return {
            "type": "head_ack", "channel": peer.channel_id,
            "status": "diverged", "seq": diverged,
        }

    def _handle_stats(self) -> dict:
        with self._lock:
            fog = self.fog
            return {
                "type": "stats",
                "records_ingested": fog.records_ingested,
                "blocks_ingested": fog.blocks_ingested,
                "lookup_count": fog.lookup_count,
                "events": [
                    {
                        "event_id": e.event_id, "rule": e.rule,
                        "camera_id": e.camera_id, "ts": e.ts, "frame_no": e.frame_no,
                    }
                    for e in fog.events
                ],
            }

    def _handle_bench(self, msg: dict) -> dict:
        from .oracle import bench_query

        with self._lock:
            try:
                res = bench_query(
                    self.fog, str(msg["body"]), repeats=int(msg.get("repeats", 3))
                )
            except ValueError as exc:
                return {"type": "bench", "status": "error", "detail": str(exc)}
        return {
            "type": "bench", "status": "ok", "query": res.query,
            "indexed_ms": res.indexed_ms, "scan_ms": res.scan_ms,
            "equal": res.equal, "row_count": res.row_count,
        }

    def _handle_eval(self, msg: dict) -> dict:
        from .oracle import parse_query
        from .queryd import evaluate, row_to_json

        with self._lock:
            try:
                result = evaluate(self.fog, parse_query(str(msg["body"])))
            except ValueError as exc:
                return {"type": "eval", "status": "error", "detail": str(exc)}
        return {
            "type": "eval", "status": "ok",
            "rows": [row_to_json(row) for row in result.rows],
        }

    def _handle_events(self, msg: dict) -> dict:
        since = int(msg.get("since", 0))
        with self._lock:
            events = self.fog.events[since:]
            return {
                "type": "events",
                "next": since + len(events),
                "events": [
                    {
                        "event_id": e.event_id, "rule": e.rule,
                        "camera_id": e.camera_id, "ts": e.ts, "frame_no": e.frame_no,
                    }
                    for e in events
                ],
            }
