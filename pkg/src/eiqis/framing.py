"""Length-prefixed JSON framing shared by the block and query channels.

Each frame is a 4-byte big-endian payload length followed by that many
bytes of UTF-8 JSON encoding one object.
"""

from __future__ import annotations

import json
import socket
import struct

HEADER_SIZE = 4
MAX_FRAME = 64 * 1024 * 1024


class FramingError(RuntimeError):
    pass


def encode_frame(obj: dict) -> bytes:
    payload = json.dumps(obj, separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME:
        raise FramingError(f"frame of {len(payload)} bytes exceeds limit")
    return struct.pack(">I", len(payload)) + payload


def decode_frame(data: bytes) -> tuple[dict, bytes]:
    """Decode one frame from a buffer; returns (object, remaining bytes)."""
    if len(data) < HEADER_SIZE:
        raise FramingError("buffer shorter than frame header")
    (length,) = struct.unpack(">I", data[:HEADER_SIZE])
    end = HEADER_SIZE + length
    if len(data) < end:
        raise FramingError("buffer shorter than framed payload")
    return json.loads(data[HEADER_SIZE:end].decode("utf-8")), data[end:]


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            return None
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def send_msg(sock: socket.socket, obj: dict) -> None:
    sock.sendall(encode_frame(obj))


def recv_msg(sock: socket.socket) -> dict | None:
    """Receive one framed object; None on clean EOF."""
    header = _recv_exact(sock, HEADER_SIZE)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise FramingError(f"peer announced {length}-byte frame, over limit")
    payload = _recv_exact(sock, length)
    if payload is None:
        raise FramingError("connection closed mid-frame")
    return json.loads(payload.decode("utf-8"))
