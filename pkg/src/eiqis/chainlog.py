"""Tamper-evident transport of feature records from edge to fog.

Records are batched into hash-chained blocks: each block stores a SHA-256
digest of its canonical payload (the feature-log lines joined with newlines,
UTF-8, no trailing newline) plus an HMAC-SHA-256 tag over
(seq || prev_hash || payload_hash) under the channel's pre-shared key.
Chain heads are gossiped between peers so divergence is detectable from
(seq, head_hash) alone.
"""

from __future__ import annotations

import hashlib
import hmac as hmac_mod
import struct
from dataclasses import dataclass, field
from typing import Iterable

from .records import FeatureRecord, encode_record

GENESIS_HASH = bytes(32)

SEQ_MISMATCH = "seq mismatch"
LINK_MISMATCH = "link mismatch"
PAYLOAD_HASH_MISMATCH = "payload_hash mismatch"
HMAC_MISMATCH = "hmac mismatch"


class ProtocolError(RuntimeError):
    """Peers disagree about the channel they are talking on."""


@dataclass(frozen=True)
class LedgerBlock:
    seq: int
    prev_hash: bytes
    payload: tuple[str, ...]  # canonical feature-log lines
    payload_hash: bytes
    hmac: bytes


@dataclass(frozen=True)
class ChainHead:
    channel_id: str
    seq: int
    head_hash: bytes


@dataclass(frozen=True)
class TamperReport:
    first_bad_seq: int
    reason: str


def canonical_payload(lines: Iterable[str]) -> bytes:
    return "\n".join(lines).encode("utf-8")


def signing_bytes(seq: int, prev_hash: bytes, payload_hash: bytes) -> bytes:
    return struct.pack(">Q", seq) + prev_hash + payload_hash


def block_head_hash(block: LedgerBlock) -> bytes:
    return hashlib.sha256(
        signing_bytes(block.seq, block.prev_hash, block.payload_hash)
    ).digest()


def make_block(
    seq: int, prev_hash: bytes, lines: Iterable[str], key: bytes
) -> LedgerBlock:
    payload = tuple(lines)
    if not payload:
        raise ValueError("block payload must be nonempty")
    payload_hash = hashlib.sha256(canonical_payload(payload)).digest()
    tag = hmac_mod.new(key, signing_bytes(seq, prev_hash, payload_hash), "sha256").digest()
    return LedgerBlock(seq=seq, prev_hash=prev_hash, payload=payload,
                       payload_hash=payload_hash, hmac=tag)


@dataclass
class Chain:
    channel_id: str
    blocks: list[LedgerBlock] = field(default_factory=list)

    def next_prev_hash(self) -> bytes:
        return GENESIS_HASH if not self.blocks else block_head_hash(self.blocks[-1])

    def head(self) -> ChainHead:
        if not self.blocks:
            raise ValueError(f"chain {self.channel_id!r} is empty")
        last = self.blocks[-1]
        return ChainHead(self.channel_id, last.seq, block_head_hash(last))


def append(chain: Chain, records: Iterable[FeatureRecord], key: bytes) -> LedgerBlock:
    """Seal records into the next block and advance the chain head."""
    lines = [encode_record(r) for r in records]
    block = make_block(len(chain.blocks), chain.next_prev_hash(), lines, key)
    chain.blocks.append(block)
    return block


def verify(chain: Chain, key: bytes) -> TamperReport | None:
    """Recompute every payload hash, link, and tag; None means intact.

    On failure, reports the lowest failing seq and which check failed.
    """
    prev = GENESIS_HASH
    for i, block in enumerate(chain.blocks):
        if block.seq != i:
            return TamperReport(i, SEQ_MISMATCH)
        if block.prev_hash != prev:
            return TamperReport(i, LINK_MISMATCH)
        if hashlib.sha256(canonical_payload(block.payload)).digest() != block.payload_hash:
            return TamperReport(i, PAYLOAD_HASH_MISMATCH)
        expected = hmac_mod.new(
            key, signing_bytes(block.seq, block.prev_hash, block.payload_hash), "sha256"
        ).digest()
        if not hmac_mod.compare_digest(expected, block.hmac):
            return TamperReport(i, HMAC_MISMATCH)
        prev = block_head_hash(block)
    return None


def sync_heads(local: ChainHead, peer: ChainHead) -> int | None:
    """None when heads agree; else the lower seq bound of disagreement."""
    if local.channel_id != peer.channel_id:
        raise ProtocolError(
            f"channel mismatch: {local.channel_id!r} vs {peer.channel_id!r}"
        )
    if local.seq == peer.seq:
        if local.head_hash == peer.head_hash:
            return None
        return local.seq
    # The laggard's next block is the first one the peers disagree about.
    return min(local.seq, peer.seq) + 1


# --- Wire encoding ----------------------------------------------------------

def block_to_msg(channel_id: str, block: LedgerBlock) -> dict:
    return {
        "type": "block",
        "channel": channel_id,
        "seq": block.seq,
        "prev_hash": block.prev_hash.hex(),
        "payload_hash": block.payload_hash.hex(),
        "hmac": block.hmac.hex(),
        "payload": list(block.payload),
    }


def head_to_msg(channel_id: str, block: LedgerBlock) -> dict:
    """Head gossip: the head block's fields without the payload."""
    msg = block_to_msg(channel_id, block)
    msg["type"] = "head"
    msg["payload"] = []
    return msg


def _hex32(msg: dict, field_name: str) -> bytes:
    value = msg.get(field_name)
    if not (isinstance(value, str) and len(value) == 64):
        raise ProtocolError(f"{field_name}: expected 64 hex chars")
    try:
        return bytes.fromhex(value)
    except ValueError as exc:
        raise ProtocolError(f"{field_name}: not hex") from exc


def msg_to_block(msg: dict) -> tuple[str, LedgerBlock]:
    if msg.get("type") != "block":
        raise ProtocolError(f"expected block message, got {msg.get('type')!r}")
    block = LedgerBlock(
        seq=int(msg["seq"]),
        prev_hash=_hex32(msg, "prev_hash"),
        payload=tuple(msg["payload"]),
        payload_hash=_hex32(msg, "payload_hash"),
        hmac=_hex32(msg, "hmac"),
    )
    return str(msg["channel"]), block


def msg_to_head(msg: dict) -> ChainHead:
    if msg.get("type") != "head":
        raise ProtocolError(f"expected head message, got {msg.get('type')!r}")
    seq = int(msg["seq"])
    head_hash = hashlib.sha256(
        signing_bytes(seq, _hex32(msg, "prev_hash"), _hex32(msg, "payload_hash"))
    ).digest()
    return ChainHead(str(msg["channel"]), seq, head_hash)
