// Wire-facing types mirroring the fog node's JSON responses. The console
// never evaluates queries itself: every row shown comes verbatim from one
// of these payloads.

export type Status = "ok" | "denied" | "bad_query" | "error";
export type AccessLevel = "none" | "query" | "clip";

export interface ClipRef {
  camera_id: string;
  start_ts: number;
  end_ts: number;
  first_frame: number;
  last_frame: number;
}

export interface ResultRow {
  camera_id: string;
  start_ts: number;
  end_ts: number;
  matched_keys: string[];
  clip: ClipRef;
}

export interface QueryResponse {
  req_id?: unknown;
  status: Status;
  rows?: ResultRow[];
  detail?: { held?: AccessLevel; offset?: number; message?: string } | string;
}

/** boxes: [entity id, class, x, y, w, h] */
export type WireBox = [string, string, number, number, number, number];

export interface ClipFrame {
  frame_no: number;
  ts: number;
  boxes: WireBox[];
}

export interface ClipResponse {
  req_id?: unknown;
  status: Status;
  frames?: ClipFrame[];
  detail?: { held?: AccessLevel } | string;
}

export interface EventRecord {
  event_id: string;
  rule: string;
  camera_id: string;
  ts: number;
  frame_no: number;
}
