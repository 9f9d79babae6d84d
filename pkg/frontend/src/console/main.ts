// Browser wiring: gateway calls, DOM updates, canvas playback. All logic
// that can be pure lives in session/timeline/playback; this file only
// renders their output.

import type { AccessLevel, ClipRef, ClipResponse, EventRecord } from "../shared/protocol.js";
import { PlaybackModel } from "./playback.js";
import {
  SessionState,
  applyQueryResponse,
  canPlayClips,
  caretLines,
  newSession,
  selectClip,
} from "./session.js";
import { buildTimeline } from "./timeline.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

let session: SessionState = newSession("", "none");
const events: EventRecord[] = [];
let playback: PlaybackModel | null = null;
let playing = false;
let playClock = 0;
let lastTick = 0;

// --- session -----------------------------------------------------------------

async function connect(): Promise<void> {
  const requester = ($("requester") as HTMLInputElement).value.trim();
  if (!requester) return;
  const reply = await fetch(`/api/probe?requester=${encodeURIComponent(requester)}`);
  const { level } = (await reply.json()) as { level: AccessLevel };
  session = newSession(requester, level);
  $("level-badge").textContent = `level: ${level}`;
  $("level-badge").dataset.level = level;
  renderSession();
}

async function submitQuery(): Promise<void> {
  const text = ($("query") as HTMLInputElement).value;
  const reply = await fetch("/api/query", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ requester: session.requester, text }),
  });
  session = applyQueryResponse(session, text, await reply.json(), events);
  renderSession();
}

async function openClip(clip: ClipRef): Promise<void> {
  session = selectClip(session, clip);
  renderSession();
  if (!session.selectedClip) return;
  const params = new URLSearchParams({
    requester: session.requester,
    camera: clip.camera_id,
    start: String(clip.start_ts),
    end: String(clip.end_ts),
  });
  const reply = (await (await fetch(`/api/clip?${params}`)).json()) as ClipResponse;
  if (reply.status !== "ok" || !reply.frames?.length) {
    session = { ...session, banner: `clip fetch failed: ${JSON.stringify(reply.detail)}` };
    renderSession();
    return;
  }
  playback = new PlaybackModel(reply.frames);
  playClock = 0;
  playing = true;
  lastTick = performance.now();
  const scrub = $("scrub") as HTMLInputElement;
  scrub.max = String(playback.frameCount - 1);
  scrub.value = "0";
  $("player").hidden = false;
  requestAnimationFrame(tick);
}

// --- rendering ---------------------------------------------------------------

function renderSession(): void {
  const banner = $("banner");
  banner.hidden = !session.banner;
  banner.textContent = session.banner ?? "";
  banner.className = session.status === "denied" ? "banner denied" : "banner";

  const caret = $("caret");
  if (session.caret) {
    const [line, underline] = caretLines(session.query, session.caret);
    caret.hidden = false;
    caret.textContent = `${line}\n${underline} ${session.caret.message}`;
  } else {
    caret.hidden = true;
  }

  renderRows();
  renderTimeline();
}

function renderRows(): void {
  const tbody = $("rows");
  tbody.replaceChildren();
  $("empty-state").hidden = !(session.status === "ok" && session.rows.length === 0);
  for (const row of session.rows) {
    const tr = document.createElement("tr");
    const when = new Date(row.start_ts).toISOString().slice(11, 19);
    tr.innerHTML =
      `<td>${row.camera_id}</td><td>${when}</td>` +
      `<td>${row.matched_keys.join(", ")}</td>` +
      `<td>${row.hasEvent ? '<span class="event-badge">event</span>' : ""}</td>`;
    const td = document.createElement("td");
    const button = document.createElement("button");
    button.textContent = canPlayClips(session) ? "play" : "🔒";
    button.title = canPlayClips(session)
      ? "fetch and play this clip"
      : "clip playback requires clip-level access";
    button.onclick = () => void openClip(row.clip);
    td.appendChild(button);
    tr.appendChild(td);
    tbody.appendChild(tr);
  }
}

function renderTimeline(): void {
  const host = $("timeline");
  host.replaceChildren();
  const timeline = buildTimeline(session.rows, events, host.clientWidth || 800);
  for (const band of timeline.bands) {
    const label = document.createElement("div");
    label.className = "band-label";
    label.textContent = band.cameraId;
    const lane = document.createElement("div");
    lane.className = "band-lane";
    for (const marker of band.markers) {
      const el = document.createElement("div");
      el.className = marker.hasEvent ? "marker event" : "marker";
      el.style.left = `${marker.x}px`;
      el.style.width = `${marker.w}px`;
      el.title = new Date(marker.startTs).toISOString();
      lane.appendChild(el);
    }
    const rowEl = document.createElement("div");
    rowEl.className = "band";
    rowEl.append(label, lane);
    host.appendChild(rowEl);
  }
}

function renderFrame(index: number): void {
  if (!playback) return;
  const canvas = $("player-canvas") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  ctx.fillStyle = "#10141c";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const frame = playback.frames[index];
  $("frame-label").textContent = `frame ${frame.frame_no}`;
  for (const box of playback.boxesAt(index)) {
    ctx.strokeStyle = box.cls === "person" ? "#5ad18b" : box.cls === "vehicle" ? "#5aa7d1" : "#d1b45a";
    ctx.lineWidth = 2;
    ctx.strokeRect(box.x, box.y, box.w, box.h);
    ctx.fillStyle = ctx.strokeStyle;
    ctx.font = "11px monospace";
    ctx.fillText(box.label, box.x, Math.max(box.y - 3, 10));
  }
}

function tick(now: number): void {
  if (!playback) return;
  if (playing) {
    playClock += now - lastTick;
    if (playClock >= playback.durationMs) {
      playClock = playback.durationMs - 1;
      playing = false;
    }
    const index = playback.frameIndexAt(playClock);
    ($("scrub") as HTMLInputElement).value = String(index);
    renderFrame(index);
  }
  lastTick = now;
  requestAnimationFrame(tick);
}

// --- event feed ----------------------------------------------------------------

function connectEvents(): void {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  const ws = new WebSocket(`${proto}://${location.host}/api/events`);
  ws.onmessage = (msg) => {
    const event = JSON.parse(msg.data) as EventRecord;
    events.push(event);
    const li = document.createElement("li");
    const when = new Date(event.ts).toISOString().slice(11, 19);
    li.textContent = `${when}  ${event.rule} @ ${event.camera_id} (frame ${event.frame_no})`;
    $("event-feed").prepend(li);
    renderSession(); // refresh badges and timeline highlights
  };
  ws.onclose = () => setTimeout(connectEvents, 2000);
}

// --- boot ------------------------------------------------------------------------

$("connect").onclick = () => void connect();
$("submit").onclick = () => void submitQuery();
($("query") as HTMLInputElement).addEventListener("keydown", (e) => {
  if (e.key === "Enter") void submitQuery();
});
$("play-pause").onclick = () => {
  playing = !playing;
  lastTick = performance.now();
};
($("scrub") as HTMLInputElement).addEventListener("input", (e) => {
  playing = false;
  renderFrame(Number((e.target as HTMLInputElement).value));
});
connectEvents();
