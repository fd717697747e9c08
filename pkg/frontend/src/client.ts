/**
 * Protocol client: connect, handshake, then validate a fixed number of
 * frames and summarize what was seen.
 *
 * The client is transport-agnostic: pass a factory returning anything
 * WebSocket-shaped (browser WebSocket, or `ws` in Node). After the single
 * handshake message nothing is ever sent back to the server.
 */

import { validateMessage, type FrameData } from "./schema.js";

export interface WsLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: string, listener: (ev: MessageLikeEvent) => void): void;
}

export interface MessageLikeEvent {
  data?: unknown;
  message?: string;
}

export type WsFactory = (url: string) => WsLike;

export const HANDSHAKE = { hello: "relisten", version: 1 };

/** One received frame plus arrival bookkeeping; rendered only if ok. */
export interface FrameView {
  frame: FrameData | null;
  ok: boolean;
  errors: string[];
  arrivalMs: number;
}

export interface ValidationReport {
  url: string;
  framesRequested: number;
  framesReceived: number;
  schemaViolations: number;
  violationSamples: string[];
  seqGaps: number;
  droppedFrames: number;
  interArrivalP50Ms: number | null;
  handshake: Record<string, unknown> | null;
  elapsedMs: number;
}

export interface ClientOptions {
  /** overall deadline; the promise rejects if it passes before n frames */
  timeoutMs?: number;
  /** called for every frame, valid or not (rendering hook) */
  onFrame?: (view: FrameView) => void;
}

export function medianOf(values: number[]): number | null {
  if (values.length === 0) return null;
  const s = [...values].sort((a, b) => a - b);
  const mid = Math.floor(s.length / 2);
  const lo = s[mid - (s.length % 2 === 0 ? 1 : 0)]!;
  return (lo + s[mid]!) / 2;
}

/**
 * Connect to `url`, handshake, receive `nFrames` frames, resolve with the
 * validation report. Rejects on connection errors, handshake rejection, or
 * deadline expiry. Schema violations do not stop the run; they are counted
 * and the client keeps reading.
 */
export function connectAndValidate(
  url: string,
  nFrames: number,
  makeWs: WsFactory,
  opts: ClientOptions = {},
): Promise<ValidationReport> {
  const timeoutMs = opts.timeoutMs ?? 60_000;
  return new Promise((resolve, reject) => {
    let ws: WsLike;
    try {
      ws = makeWs(url);
    } catch (e) {
      reject(e);
      return;
    }

    const t0 = performance.now();
    let handshake: Record<string, unknown> | null = null;
    let received = 0;
    let violations = 0;
    const violationSamples: string[] = [];
    let lastSeq: number | null = null;
    let dropped = 0;
    let gapEvents = 0;
    const arrivals: number[] = [];
    let settled = false;

    const timer = setTimeout(() => {
      finish(new Error(`deadline: ${received}/${nFrames} frames after ${timeoutMs} ms`));
    }, timeoutMs);

    function finish(err: Error | null): void {
      if (settled) return;
      settled = true;
      clearTimeout(timer);
      try {
        ws.close();
      } catch {
        // already closed
      }
      if (err) {
        reject(err);
        return;
      }
      const gaps: number[] = [];
      for (let i = 1; i < arrivals.length; i++) {
        gaps.push(arrivals[i]! - arrivals[i - 1]!);
      }
      resolve({
        url,
        framesRequested: nFrames,
        framesReceived: received,
        schemaViolations: violations,
        violationSamples,
        seqGaps: gapEvents,
        droppedFrames: dropped,
        interArrivalP50Ms: medianOf(gaps),
        handshake,
        elapsedMs: performance.now() - t0,
      });
    }

    ws.addEventListener("open", () => {
      ws.send(JSON.stringify(HANDSHAKE));
    });
    ws.addEventListener("error", (ev) => {
      finish(new Error(`connection error: ${ev.message ?? "unknown"}`));
    });
    ws.addEventListener("close", () => {
      if (received < nFrames) {
        finish(new Error(`server closed after ${received}/${nFrames} frames`));
      }
    });

    ws.addEventListener("message", (ev) => {
      if (settled) return;
      const text = typeof ev.data === "string" ? ev.data : String(ev.data);

      if (handshake === null) {
        let reply: unknown;
        try {
          reply = JSON.parse(text);
        } catch {
          finish(new Error("handshake reply is not JSON"));
          return;
        }
        const doc = reply as Record<string, unknown>;
        if (doc["error"] !== undefined || doc["hello"] !== "relisten") {
          finish(new Error(`handshake rejected: ${text}`));
          return;
        }
        handshake = doc;
        return;
      }

      const arrivalMs = performance.now();
      const result = validateMessage(text);
      received += 1;
      arrivals.push(arrivalMs);
      if (!result.ok) {
        violations += 1;
        if (violationSamples.length < 5) {
          violationSamples.push(result.errors[0] ?? "unknown violation");
        }
      } else {
        const seq = result.frame!.seq;
        if (lastSeq !== null && seq > lastSeq + 1) {
          gapEvents += 1;
          dropped += seq - lastSeq - 1;
        }
        lastSeq = seq;
      }
      opts.onFrame?.({
        frame: result.ok ? result.frame! : null,
        ok: result.ok,
        errors: result.errors,
        arrivalMs,
      });
      if (received >= nFrames) {
        finish(null);
      }
    });
  });
}
