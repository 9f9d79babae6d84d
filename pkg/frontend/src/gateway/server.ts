// Thin gateway: translates the fog node's length-prefixed TCP protocol to
// HTTP for the browser console and pushes indexed events over a WebSocket.
// Responses pass through verbatim; the gateway adds nothing and decides
// nothing (the fog node stays authoritative for access and evaluation).

import fs from "node:fs";
import http from "node:http";
import path from "node:path";
import { fileURLToPath } from "node:url";

import { WebSocketServer, WebSocket } from "ws";

import {
  FogAddr,
  clipRequest,
  eventsRequest,
  parseAddr,
  probeLevel,
  queryRequest,
} from "./fogclient.js";

const MIME: Record<string, string> = {
  ".html": "text/html; charset=utf-8",
  ".js": "text/javascript; charset=utf-8",
  ".css": "text/css; charset=utf-8",
  ".map": "application/json",
};

function json(res: http.ServerResponse, code: number, body: unknown): void {
  const data = JSON.stringify(body);
  res.writeHead(code, { "content-type": "application/json; charset=utf-8" });
  res.end(data);
}

function readBody(req: http.IncomingMessage): Promise<string> {
  return new Promise((resolve, reject) => {
    const chunks: Buffer[] = [];
    req.on("data", (c) => chunks.push(c));
    req.on("end", () => resolve(Buffer.concat(chunks).toString("utf-8")));
    req.on("error", reject);
  });
}

export interface Gateway {
  server: http.Server;
  port: number;
  close(): void;
}

export function startGateway(
  fogAddr: FogAddr,
  port: number,
  staticRoots: string[],
  pollMs = 500,
): Promise<Gateway> {
  const server = http.createServer(async (req, res) => {
    const url = new URL(req.url ?? "/", "http://localhost");
    try {
      if (req.method === "POST" && url.pathname === "/api/query") {
        const body = JSON.parse(await readBody(req));
        const reply = await queryRequest(fogAddr, String(body.requester), String(body.text));
        json(res, 200, reply);
        return;
      }
      if (req.method === "GET" && url.pathname === "/api/clip") {
        const reply = await clipRequest(
          fogAddr,
          url.searchParams.get("requester") ?? "",
          url.searchParams.get("camera") ?? "",
          Number(url.searchParams.get("start")),
          Number(url.searchParams.get("end")),
        );
        json(res, 200, reply);
        return;
      }
      if (req.method === "GET" && url.pathname === "/api/probe") {
        const level = await probeLevel(fogAddr, url.searchParams.get("requester") ?? "");
        json(res, 200, { level });
        return;
      }
      if (req.method === "GET") {
        serveStatic(url.pathname, staticRoots, res);
        return;
      }
      json(res, 404, { error: "not found" });
    } catch (err) {
      json(res, 502, { error: String(err) });
    }
  });

  // Event feed: poll the fog node and fan out to every connected socket.
  const wss = new WebSocketServer({ server, path: "/api/events" });
  let since = 0;
  const poll = setInterval(async () => {
    if (wss.clients.size === 0) return;
    try {
      const reply = await eventsRequest(fogAddr, since);
      since = reply.next ?? since;
      for (const event of reply.events ?? []) {
        const data = JSON.stringify(event);
        for (const client of wss.clients) {
          if (client.readyState === WebSocket.OPEN) client.send(data);
        }
      }
    } catch {
      // fog momentarily unreachable; keep polling
    }
  }, pollMs);

  return new Promise((resolve) => {
    server.listen(port, "127.0.0.1", () => {
      const actual = (server.address() as { port: number }).port;
      resolve({
        server,
        port: actual,
        close: () => {
          clearInterval(poll);
          wss.close();
          server.close();
        },
      });
    });
  });
}

function serveStatic(pathname: string, roots: string[], res: http.ServerResponse): void {
  const rel = pathname === "/" ? "index.html" : pathname.replace(/^\/+/, "");
  for (const root of roots) {
    const full = path.join(root, rel);
    if (!full.startsWith(path.resolve(root))) continue; // no traversal
    if (fs.existsSync(full) && fs.statSync(full).isFile()) {
      res.writeHead(200, {
        "content-type": MIME[path.extname(full)] ?? "application/octet-stream",
      });
      res.end(fs.readFileSync(full));
      return;
    }
  }
  res.writeHead(404, { "content-type": "text/plain" });
  res.end("not found");
}

const isMain = process.argv[1] && fileURLToPath(import.meta.url) === path.resolve(process.argv[1]);
if (isMain) {
  const addr = parseAddr(process.env.EIQIS_ADDR ?? "127.0.0.1:7700");
  const port = Number(process.env.GATEWAY_PORT ?? 8080);
  // dist/gateway -> serve public/ for the page and dist/ for the modules
  const here = path.dirname(fileURLToPath(import.meta.url));
  const roots = [path.resolve(here, "../../public"), path.resolve(here, "..")];
  startGateway(addr, port, roots).then((gw) => {
    console.log(`console gateway on http://127.0.0.1:${gw.port} -> fog ${addr.host}:${addr.port}`);
  });
}
