/**
 * Browser entry: connect to the server given by the `?url=` query param
 * (default ws://127.0.0.1:8763), render frames as bars, keep validating
 * until the tab closes. Uses the native WebSocket; sends nothing after
 * the handshake.
 */

import { connectAndValidate, type FrameView, type WsLike } from "./client.js";
import { BarRenderer, FrameBuffer } from "./render.js";

function start(): void {
  const params = new URLSearchParams(window.location.search);
  const url = params.get("url") ?? "ws://127.0.0.1:8763";
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");

  const renderer = new BarRenderer(root, document);
  const buffer = new FrameBuffer();
  let droppedFrames = 0;
  let lastSeq: number | null = null;

  const loop = () => {
    const view = buffer.take();
    if (view) renderer.paint(view, droppedFrames);
    window.requestAnimationFrame(loop);
  };
  window.requestAnimationFrame(loop);

  // effectively endless; the report only matters in headless mode
  connectAndValidate(
    url,
    Number.MAX_SAFE_INTEGER,
    (u) => new WebSocket(u) as unknown as WsLike,
    {
      timeoutMs: Number.MAX_SAFE_INTEGER / 4,
      onFrame: (view: FrameView) => {
        if (view.ok && view.frame) {
          if (lastSeq !== null && view.frame.seq > lastSeq + 1) {
            droppedFrames += view.frame.seq - lastSeq - 1;
          }
          lastSeq = view.frame.seq;
        }
        buffer.offer(view);
      },
    },
  ).catch((e) => {
    const status = root.querySelector(".status");
    if (status) status.textContent = `connection lost: ${(e as Error).message}`;
  });
}

window.addEventListener("DOMContentLoaded", start);
