// Operator session state. All transitions consume server responses
// verbatim; the console renders what the fog node decided and never
// evaluates or authorizes anything itself.

import type {
  AccessLevel,
  ClipRef,
  EventRecord,
  QueryResponse,
  ResultRow,
} from "../shared/protocol.js";

export interface DisplayRow extends ResultRow {
  hasEvent: boolean;
}

export interface CaretError {
  offset: number;
  message: string;
}

export interface SessionState {
  requester: string;
  level: AccessLevel;
  query: string;
  status: "idle" | "ok" | "denied" | "bad_query" | "error";
  rows: DisplayRow[];
  banner: string | null;
  caret: CaretError | null;
  selectedClip: ClipRef | null;
}

export function newSession(requester: string, level: AccessLevel): SessionState {
  return {
    requester,
    level,
    query: "",
    status: "idle",
    rows: [],
    banner: null,
    caret: null,
    selectedClip: null,
  };
}

export function canPlayClips(state: SessionState): boolean {
  return state.level === "clip";
}

function eventInSpan(row: ResultRow, event: EventRecord): boolean {
  return (
    event.camera_id === row.camera_id &&
    row.start_ts <= event.ts &&
    event.ts <= row.end_ts
  );
}

/** Rows that cover an indexed event get the event badge. */
export function attachEventBadges(rows: ResultRow[], events: EventRecord[]): DisplayRow[] {
  return rows.map((row) => ({
    ...row,
    hasEvent: events.some((event) => eventInSpan(row, event)),
  }));
}

export function applyQueryResponse(
  state: SessionState,
  queryText: string,
  response: QueryResponse,
  events: EventRecord[],
): SessionState {
  const next: SessionState = {
    ...state,
    query: queryText,
    rows: [],
    banner: null,
    caret: null,
    selectedClip: null,
  };
  if (response.status === "ok") {
    const rows = [...(response.rows ?? [])].sort(
      (a, b) => a.start_ts - b.start_ts || a.camera_id.localeCompare(b.camera_id),
    );
    next.status = "ok";
    next.rows = attachEventBadges(rows, events);
    return next;
  }
  if (response.status === "denied") {
    const held = typeof response.detail === "object" ? response.detail?.held : undefined;
    next.status = "denied";
    next.banner = `Access denied: requester "${state.requester}" holds level "${held ?? "none"}".`;
    return next;
  }
  if (response.status === "bad_query") {
    const detail = typeof response.detail === "object" ? response.detail : undefined;
    next.status = "bad_query";
    next.caret = {
      offset: detail?.offset ?? 0,
      message: detail?.message ?? "syntax error",
    };
    return next;
  }
  next.status = "error";
  next.banner = typeof response.detail === "string" ? response.detail : "request failed";
  return next;
}

/** Clip selection is offered only at clip level; the server still re-checks. */
export function selectClip(state: SessionState, clip: ClipRef): SessionState {
  if (!canPlayClips(state)) {
    return {
      ...state,
      selectedClip: null,
      banner: `Clip playback requires level "clip"; "${state.requester}" holds "${state.level}".`,
    };
  }
  return { ...state, selectedClip: clip, banner: null };
}

/** Two display lines: the query text and a caret under the bad byte. */
export function caretLines(text: string, caret: CaretError): [string, string] {
  return [text, " ".repeat(Math.max(0, Math.min(caret.offset, text.length))) + "^"];
}
