import net from "node:net";

import { encodeFrame, tryDecodeFrame } from "./framing.js";
import type { AccessLevel } from "../shared/protocol.js";

export interface FogAddr {
  host: string;
  port: number;
}

export function parseAddr(text: string): FogAddr {
  const idx = text.lastIndexOf(":");
  if (idx < 0) throw new Error(`bad address ${text}, want host:port`);
  return { host: text.slice(0, idx) || "127.0.0.1", port: Number(text.slice(idx + 1)) };
}

let reqCounter = 0;

/** One framed request/response round trip on a fresh connection. */
export function fogRequest(addr: FogAddr, msg: Record<string, unknown>): Promise<any> {
  return new Promise((resolve, reject) => {
    const sock = net.connect(addr.port, addr.host);
    let buf = Buffer.alloc(0);
    const fail = (err: Error) => {
      sock.destroy();
      reject(err);
    };
    sock.setTimeout(30_000, () => fail(new Error("fog node timed out")));
    sock.on("error", fail);
    sock.on("connect", () => sock.write(encodeFrame(msg)));
    sock.on("data", (chunk) => {
      buf = Buffer.concat([buf, chunk]);
      const decoded = tryDecodeFrame(buf);
      if (decoded) {
        sock.end();
        resolve(decoded[0]);
      }
    });
    sock.on("close", () => reject(new Error("connection closed before a response")));
  });
}

export function queryRequest(addr: FogAddr, requester: string, text: string): Promise<any> {
  return fogRequest(addr, {
    type: "query",
    req_id: ++reqCounter,
    requester,
    body: text,
  });
}

export function clipRequest(
  addr: FogAddr,
  requester: string,
  camera: string,
  startTs: number,
  endTs: number,
): Promise<any> {
  return fogRequest(addr, {
    type: "clip",
    req_id: ++reqCounter,
    requester,
    body: { camera_id: camera, start_ts: startTs, end_ts: endTs },
  });
}

export function eventsRequest(addr: FogAddr, since: number): Promise<any> {
  return fogRequest(addr, { type: "events", since });
}

/**
 * Learn a requester's access level from the server's own answers:
 * an empty query is denied for level none (authorization runs before
 * parsing), parse-fails for query and clip; a clip probe separates those.
 * No index access happens on any path.
 */
export async function probeLevel(addr: FogAddr, requester: string): Promise<AccessLevel> {
  const q = await queryRequest(addr, requester, "");
  if (q.status === "denied") return (q.detail?.held ?? "none") as AccessLevel;
  const c = await clipRequest(addr, requester, "", 0, 0);
  if (c.status === "denied") return (c.detail?.held ?? "query") as AccessLevel;
  return "clip";
}
