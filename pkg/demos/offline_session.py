#!/usr/bin/env python3
# End-to-end offline run on synthetic inputs, all in a temp dir.
#
# Builds every artifact the pipeline needs (audio, face track, gl matrix,
# predictor weights), runs the offline mode, then pokes at the outputs.

import json
import tempfile
from pathlib import Path

import numpy as np

from relisten.audio import synth_speech, write_wav
from relisten.cli import default_mapping_path
from relisten.config import PipelineConfig, save_config
from relisten.features import synth_flame, write_flame
from relisten.generator import PredictorModel, save_model
from relisten.mapper import GLMode, build_gl, parse_mapping_table, save_gl
from relisten.metrics import report_from_csv
from relisten.pipeline import RunSpec, run_pipeline

cfg = PipelineConfig(expr_dim=10, l=16, K=24, T_window=16, t_history=8,
                     w_out=4, code_dim=8)

tmp = Path(tempfile.mkdtemp(prefix="relisten-demo-"))
print("working in", tmp)

duration = 6.0
write_wav(str(tmp / "speaker.wav"), synth_speech(duration, seed=1), 16000)
write_flame(str(tmp / "speaker.flm"), synth_flame(duration, 30, seed=2, expr_dim=10))
save_gl(build_gl(parse_mapping_table(default_mapping_path()), GLMode.DIFFERENCE,
                 expr_dim=10), str(tmp / "gl.bin"))
save_model(str(tmp / "model.bin"), PredictorModel.build(cfg, seed=3))
save_config(cfg, str(tmp / "run.cfg"))

spec = RunSpec(
    mode="offline",
    wav_path=str(tmp / "speaker.wav"),
    flame_path=str(tmp / "speaker.flm"),
    gl_path=str(tmp / "gl.bin"),
    weights_path=str(tmp / "model.bin"),
    config_path=str(tmp / "run.cfg"),
    frames_out=str(tmp / "frames.jsonl"),
    latency_out=str(tmp / "latency.csv"),
    seed=0,
)
summary = run_pipeline(spec)
print()
for line in summary.lines():
    print(" ", line)

# output starts after the 1 s warmup window, so 6 s in -> (6-1)*30 frames
print()
frames = [json.loads(l) for l in open(tmp / "frames.jsonl")]
print(f"{len(frames)} frames (expect {(int(duration) - 1) * 30})")
f = frames[0]
jaw = {k: round(v, 4) for k, v in f["jaw"].items()}
print("first frame: seq", f["seq"], " t_ms", f["t_ms"], " jaw", jaw)

weights = np.array([[v for v in fr["blendshapes"].values()] for fr in frames])
print("weight matrix", weights.shape,
      " range [%.3f, %.3f]" % (weights.min(), weights.max()))

# stage latencies recorded during the run
print()
print("stage latencies (median end-to-end, ms):")
report = report_from_csv((tmp / "latency.csv").read_text())
for row in report.rows:
    if row.metric == "end_to_end":
        print(f"  {row.stage:10s} {row.p50_s * 1000:8.3f}  ({row.count} samples)")
