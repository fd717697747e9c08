#!/usr/bin/env python3

"""Paced frame serving over a websocket, client included.

The server side owns the clock: frames are queued as fast as the producer
likes, but each connected client receives them on the 1/fps grid. A client
that stops reading is skipped without stalling anyone else.
"""

import json
import threading
import time

import numpy as np
from websockets.sync.client import connect

from relisten.frames import ArkitFrame
from relisten.server import FrameServer

FPS = 30
N_FRAMES = 45

server = FrameServer("127.0.0.1:0", fps=FPS, config_summary={"demo": True}).start()
print("server on", server.addr)


def produce():
    # burst everything at once; pacing is the server's problem
    rng = np.random.default_rng(0)
    for k in range(N_FRAMES):
        server.submit(ArkitFrame(
            weights=np.clip(0.5 + 0.3 * rng.normal(size=52), 0, 1),
            jaw_euler=np.zeros(3),
            head_euler=0.1 * rng.normal(size=3),
            seq=k,
            t_ms=round(k * 1000 / FPS),
        ))


with connect(f"ws://{server.addr}") as ws:
    ws.send(json.dumps({"hello": "relisten", "version": 1}))
    greeting = json.loads(ws.recv(timeout=5))
    print("handshake reply:", greeting)

    threading.Thread(target=produce, daemon=True).start()

    arrivals = []
    seqs = []
    while len(seqs) < N_FRAMES:
        try:
            msg = ws.recv(timeout=2.0)
        except TimeoutError:
            break
        arrivals.append(time.monotonic())
        seqs.append(json.loads(msg)["seq"])

server.close()

gaps = np.diff(arrivals) * 1000
print()
print(f"received {len(seqs)} frames, seq {seqs[0]}..{seqs[-1]}")
print(f"inter-arrival: median {np.median(gaps):.1f} ms, "
      f"p95 {np.quantile(gaps, 0.95):.1f} ms (target {1000 / FPS:.1f} ms)")
print("in order:", seqs == sorted(seqs))
