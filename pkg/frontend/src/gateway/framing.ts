// Length-prefixed JSON framing: 4-byte big-endian length, then UTF-8 JSON.
// Must stay byte-compatible with the fog node's channel format.

export function encodeFrame(obj: unknown): Buffer {
  const payload = Buffer.from(JSON.stringify(obj), "utf-8");
  const header = Buffer.alloc(4);
  header.writeUInt32BE(payload.length, 0);
  return Buffer.concat([header, payload]);
}

/** Decode one frame if fully buffered; returns [obj, rest] or null. */
export function tryDecodeFrame(buf: Buffer): [unknown, Buffer] | null {
  if (buf.length < 4) return null;
  const length = buf.readUInt32BE(0);
  if (buf.length < 4 + length) return null;
  const obj = JSON.parse(buf.subarray(4, 4 + length).toString("utf-8"));
  return [obj, buf.subarray(4 + length)];
}
