import { describe, expect, it } from "vitest";

import {
  applyQueryResponse,
  attachEventBadges,
  canPlayClips,
  caretLines,
  newSession,
  selectClip,
} from "../src/console/session.js";
import {
  BAD_QUERY_RESPONSE,
  CONGESTION_EVENT,
  DENIED_RESPONSE,
  congestionRow,
  okResponse,
} from "./fixtures.js";

const CONGESTION_QUERY = "COUNT(person) >= 10 AND TIME IN [22:00,06:00]";

describe("query submission", () => {
  it("renders congestion rows with an event badge", () => {
    const session = newSession("operator", "clip");
    const rows = [congestionRow(), congestionRow("cam_gate")];
    const next = applyQueryResponse(
      session, CONGESTION_QUERY, okResponse(rows), [CONGESTION_EVENT]);
    expect(next.status).toBe("ok");
    expect(next.rows.length).toBeGreaterThanOrEqual(1);
    const badged = next.rows.filter((r) => r.hasEvent);
    expect(badged.length).toBe(1);
    expect(badged[0].camera_id).toBe("cam_quad");
  });

  it("sorts rows by start then camera", () => {
    const rows = [
      congestionRow("cam_lot", 2000),
      congestionRow("cam_gate", 1000),
      congestionRow("cam_quad", 1000),
    ];
    const next = applyQueryResponse(
      newSession("operator", "clip"), "speed >= 0", okResponse(rows), []);
    expect(next.rows.map((r) => [r.start_ts, r.camera_id])).toEqual([
      [1000, "cam_gate"],
      [1000, "cam_quad"],
      [2000, "cam_lot"],
    ]);
  });

  it("shows the denial banner for a none-level requester", () => {
    const next = applyQueryResponse(
      newSession("kiosk", "none"), CONGESTION_QUERY, DENIED_RESPONSE, []);
    expect(next.status).toBe("denied");
    expect(next.rows).toEqual([]);
    expect(next.banner).toContain("kiosk");
    expect(next.banner).toContain('"none"');
  });

  it("surfaces parse errors with a caret at the byte offset", () => {
    const text = "COUNT(person (>= 10";
    const next = applyQueryResponse(
      newSession("analyst", "query"), text, BAD_QUERY_RESPONSE, []);
    expect(next.status).toBe("bad_query");
    expect(next.caret?.offset).toBe(13);
    const [line, underline] = caretLines(text, next.caret!);
    expect(line).toBe(text);
    expect(underline.indexOf("^")).toBe(13);
  });

  it("keeps an empty result set distinct from errors", () => {
    const next = applyQueryResponse(
      newSession("analyst", "query"), "speed > 9000", okResponse([]), []);
    expect(next.status).toBe("ok");
    expect(next.rows).toEqual([]);
    expect(next.banner).toBeNull();
  });
});

describe("clip gating", () => {
  it("offers playback only at clip level", () => {
    expect(canPlayClips(newSession("operator", "clip"))).toBe(true);
    expect(canPlayClips(newSession("analyst", "query"))).toBe(false);
  });

  it("locks clip selection below clip level with an explanation", () => {
    const state = selectClip(newSession("analyst", "query"), congestionRow().clip);
    expect(state.selectedClip).toBeNull();
    expect(state.banner).toContain('"query"');
  });

  it("selects the clip at clip level", () => {
    const state = selectClip(newSession("operator", "clip"), congestionRow().clip);
    expect(state.selectedClip?.first_frame).toBe(7770);
    expect(state.banner).toBeNull();
  });
});

describe("event badges", () => {
  it("flags only rows whose span covers an event on the same camera", () => {
    const inside = congestionRow("cam_quad");
    const wrongCamera = congestionRow("cam_gate");
    const later = congestionRow("cam_quad", CONGESTION_EVENT.ts + 60_000);
    const rows = attachEventBadges([inside, wrongCamera, later], [CONGESTION_EVENT]);
    expect(rows.map((r) => r.hasEvent)).toEqual([true, false, false]);
  });
});
