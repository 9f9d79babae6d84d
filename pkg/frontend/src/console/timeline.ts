// Per-camera result timeline: one horizontal band per camera, one marker
// per returned clip, positioned linearly on a shared time axis. Marker
// spans are exactly the clip spans; markers covering an event are flagged.

import type { EventRecord } from "../shared/protocol.js";
import type { DisplayRow } from "./session.js";

export interface TimelineMarker {
  startTs: number;
  endTs: number;
  x: number;
  w: number;
  hasEvent: boolean;
}

export interface CameraBand {
  cameraId: string;
  markers: TimelineMarker[];
}

export interface Timeline {
  t0: number;
  t1: number;
  width: number;
  bands: CameraBand[];
}

export function buildTimeline(
  rows: DisplayRow[],
  events: EventRecord[],
  width: number,
): Timeline {
  if (rows.length === 0) {
    return { t0: 0, t1: 0, width, bands: [] };
  }
  const t0 = Math.min(...rows.map((r) => r.start_ts));
  const t1 = Math.max(...rows.map((r) => r.end_ts));
  const span = Math.max(t1 - t0, 1);
  const scale = width / span;

  const byCamera = new Map<string, TimelineMarker[]>();
  for (const row of rows) {
    const markers = byCamera.get(row.camera_id) ?? [];
    markers.push({
      startTs: row.start_ts,
      endTs: row.end_ts,
      x: (row.start_ts - t0) * scale,
      w: Math.max((row.end_ts - row.start_ts) * scale, 1),
      hasEvent: events.some(
        (e) => e.camera_id === row.camera_id && row.start_ts <= e.ts && e.ts <= row.end_ts,
      ),
    });
    byCamera.set(row.camera_id, markers);
  }
  const bands = [...byCamera.entries()]
    .sort(([a], [b]) => a.localeCompare(b))
    .map(([cameraId, markers]) => ({
      cameraId,
      markers: markers.sort((a, b) => a.startTs - b.startTs),
    }));
  return { t0, t1, width, bands };
}
