import { describe, expect, it } from "vitest";

import { attachEventBadges } from "../src/console/session.js";
import { buildTimeline } from "../src/console/timeline.js";
import { CONGESTION_EVENT, congestionRow } from "./fixtures.js";

describe("timeline", () => {
  it("builds one band per camera with markers sorted by start", () => {
    const rows = attachEventBadges([
      congestionRow("cam_quad", 3000),
      congestionRow("cam_quad", 1000),
      congestionRow("cam_gate", 2000),
    ], []);
    const timeline = buildTimeline(rows, [], 800);
    expect(timeline.bands.map((b) => b.cameraId)).toEqual(["cam_gate", "cam_quad"]);
    const quad = timeline.bands[1].markers;
    expect(quad.map((m) => m.startTs)).toEqual([1000, 3000]);
  });

  it("marker spans equal the clip spans under the linear scale", () => {
    const rows = attachEventBadges(
      [congestionRow("cam_quad", 0), congestionRow("cam_quad", 1000)], []);
    const width = 500;
    const timeline = buildTimeline(rows, [], width);
    const span = timeline.t1 - timeline.t0;
    for (const marker of timeline.bands[0].markers) {
      const expectedX = ((marker.startTs - timeline.t0) / span) * width;
      const expectedW = ((marker.endTs - marker.startTs) / span) * width;
      expect(marker.x).toBeCloseTo(expectedX, 6);
      expect(marker.w).toBeCloseTo(Math.max(expectedW, 1), 6);
    }
  });

  it("highlights markers covering an event", () => {
    const rows = attachEventBadges(
      [congestionRow("cam_quad"), congestionRow("cam_gate")], [CONGESTION_EVENT]);
    const timeline = buildTimeline(rows, [CONGESTION_EVENT], 800);
    const byCamera = Object.fromEntries(
      timeline.bands.map((b) => [b.cameraId, b.markers[0].hasEvent]));
    expect(byCamera).toEqual({ cam_quad: true, cam_gate: false });
  });

  it("handles the empty result set", () => {
    const timeline = buildTimeline([], [], 800);
    expect(timeline.bands).toEqual([]);
  });
});
