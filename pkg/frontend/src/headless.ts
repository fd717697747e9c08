/**
 * Headless validation mode for CI.
 *
 *   node dist/headless.js ws://127.0.0.1:8763 [n_frames]
 *
 * Connects, validates n_frames (default 100), prints the report as JSON on
 * stdout. Exit 0 when all frames arrived with zero schema violations,
 * 1 otherwise, 2 on bad arguments.
 */

import { WebSocket } from "ws";
import { connectAndValidate, type WsLike } from "./client.js";

async function main(): Promise<number> {
  const [url, nArg] = process.argv.slice(2);
  if (!url || !url.startsWith("ws")) {
    console.error("usage: headless.js ws://HOST:PORT [n_frames]");
    return 2;
  }
  const nFrames = nArg === undefined ? 100 : Number(nArg);
  if (!Number.isInteger(nFrames) || nFrames <= 0) {
    console.error(`n_frames must be a positive integer, got ${nArg}`);
    return 2;
  }

  try {
    const report = await connectAndValidate(
      url,
      nFrames,
      (u) => new WebSocket(u) as unknown as WsLike,
      { timeoutMs: 90_000 },
    );
    console.log(JSON.stringify(report, null, 2));
    const ok = report.framesReceived === nFrames && report.schemaViolations === 0;
    return ok ? 0 : 1;
  } catch (e) {
    console.error(`validation failed: ${(e as Error).message}`);
    return 1;
  }
}

main().then((code) => {
  process.exitCode = code;
});
