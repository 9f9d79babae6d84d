// Canned fog-node payloads, byte-shaped like the real wire responses.

import type { ClipFrame, EventRecord, QueryResponse, ResultRow, WireBox } from "../src/shared/protocol.js";

export const CLIP_START = 1614986959000.0;
export const CLIP_END = 1614986959466.6667;

export function congestionRow(camera = "cam_quad", start = CLIP_START): ResultRow {
  return {
    camera_id: camera,
    start_ts: start,
    end_ts: start + (CLIP_END - CLIP_START),
    matched_keys: ["count_person", "time"],
    clip: {
      camera_id: camera,
      start_ts: start,
      end_ts: start + (CLIP_END - CLIP_START),
      first_frame: 7770,
      last_frame: 7784,
    },
  };
}

export const CONGESTION_EVENT: EventRecord = {
  event_id: "congestion:cam_quad:7770",
  rule: "congestion",
  camera_id: "cam_quad",
  ts: CLIP_START,
  frame_no: 7770,
};

export function okResponse(rows: ResultRow[]): QueryResponse {
  return { req_id: 1, status: "ok", rows };
}

export const DENIED_RESPONSE: QueryResponse = {
  req_id: 1,
  status: "denied",
  detail: { held: "none" },
};

export const BAD_QUERY_RESPONSE: QueryResponse = {
  req_id: 1,
  status: "bad_query",
  detail: {
    offset: 13,
    message: "at offset 13: expected '>=', found '('",
  },
};

/** A 15-frame clip at 30 fps whose 8th frame shows twelve labeled persons. */
export function twelvePersonClip(): ClipFrame[] {
  const frames: ClipFrame[] = [];
  for (let i = 0; i < 15; i++) {
    const boxes: WireBox[] = [];
    const population = i === 7 ? 12 : 3;
    for (let p = 0; p < population; p++) {
      boxes.push([`crowd_${String(p).padStart(2, "0")}`, "person", 400 + 30 * p, 300, 32, 64]);
    }
    frames.push({ frame_no: 7770 + i, ts: CLIP_START + (i * 1000.0) / 30.0, boxes });
  }
  return frames;
}
