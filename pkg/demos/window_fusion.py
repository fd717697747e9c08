"""
Timestamp fusion: two uneven streams, one aligned window
========================================================
"""

# Face frames arrive in 1 s batches at 30 fps; audio features arrive in
# 0.5 s batches at 120 fps. The fusion queues keep both on their own ring
# and cut a single time-aligned window when asked.

import numpy as np

from relisten.config import PipelineConfig
from relisten.fusion import assemble_window, make_queues

cfg = PipelineConfig(expr_dim=10, l=8, K=12, T_window=16, t_history=8,
                     w_out=4, code_dim=6)
flame_q, mel_q, history_q = make_queues(cfg)

rng = np.random.default_rng(3)
us_per_flame = round(1e6 / cfg.F_fps)
us_per_mel = round(1e6 / cfg.M_fps)

# feed 1.2 s of both modalities
n_flame = int(1.2 * cfg.F_fps)
for k in range(n_flame):
    flame_q.push(k * us_per_flame, rng.normal(size=cfg.frame_dim))
for k in range(4 * n_flame):
    mel_q.push(k * us_per_mel, rng.normal(size=cfg.l))

print(f"flame queue: {flame_q.ingested} in, capacity {cfg.T_window}")
print(f"mel   queue: {mel_q.ingested} in, capacity {4 * cfg.T_window}")

window = assemble_window(flame_q, mel_q, history_q, cfg)
assert window is not None
print()
print("window shapes:",
      "flame", window.speaker_flame.shape,
      "mel", window.speaker_mel.shape,
      "history", window.listener_past.shape)
print("window ends at", window.window_end_ts_us, "us")

# per flame frame there are exactly 4 mel frames, interleaved on the grid
f_ts = window.flame_ts_us
m_ts = window.mel_ts_us
print("flame step:", set(np.diff(f_ts).tolist()), "us")
print("mel   step:", set(np.diff(m_ts).tolist()), "us")
print("mel frames per flame frame:", len(m_ts) // len(f_ts))

# history is zero-filled until the generator starts writing predictions
print()
print("history before any prediction:", float(np.abs(window.listener_past).max()))

# a queue starved of fresh data refuses to cut a window
flame_q2, mel_q2, history_q2 = make_queues(cfg)
for k in range(cfg.T_window // 2):
    flame_q2.push(k * us_per_flame, rng.normal(size=cfg.frame_dim))
print("window from a half-filled queue:",
      assemble_window(flame_q2, mel_q2, history_q2, cfg))
