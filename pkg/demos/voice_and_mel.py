#!/usr/bin/env python3

'''
Speech side of the pipe: voice activity + mel-cepstral batches
'''

import numpy as np

from relisten.audio import detect_voice, extract_mel, synth_speech

rate = 16000
audio = synth_speech(8.0, rate=rate, seed=21)
print(f"{audio.size} samples at {rate} Hz ({audio.size / rate:.1f} s)")
print()

'''
1. voice activity: energy gate with hysteresis, then duration buckets
'''

segments = detect_voice(audio, rate)
for seg in segments:
    label = seg.kind.value
    width = max(1, int(seg.duration_s * 8))
    fill = "#" if label != "no_speech" else "."
    print(f"  {seg.start_s:6.2f}-{seg.end_s:6.2f}s {fill * width:32s} {label}")

covered = sum(s.duration_s for s in segments)
print(f"segments cover {covered:.2f} s of {audio.size / rate:.2f} s (no gaps, no overlap)")
print()

'''
2. mel-cepstral features: fixed 0.5 s batches, 4 frames per video frame
   at 30 fps -> 60 feature frames of 128 coefficients per batch
'''

batches = extract_mel(audio, rate, l=128, F_fps=30, T_audio_s=0.5)
print(f"{len(batches)} batches")
b0 = batches[0]
mat = np.stack([f.coeffs for f in b0.frames])
print("batch 0 matrix:", mat.shape, mat.dtype)

# first coefficient tracks overall log energy; sketch it per batch
print()
print("energy sketch (mean c0 per 0.5 s batch):")
c0 = [float(np.mean([f.coeffs[0] for f in b.frames])) for b in batches]
lo, hi = min(c0), max(c0)
for i, v in enumerate(c0):
    n = int(1 + 29 * (v - lo) / (hi - lo)) if hi > lo else 1
    print(f"  {i * 0.5:4.1f}s {'=' * n}")

# timestamps inside a batch advance on the 1/(4*fps) grid
ts = [f.capture_ts_us for f in b0.frames]
step = set(np.diff(ts).tolist())
print()
print("frame timestamp steps inside a batch (us):", sorted(step))
