"""End-to-end runs: sources -> fusion -> generator -> retarget -> sink.

Two schedulers drive the same engine. The offline fast mode replays both
input streams on a virtual clock (events ordered by publish time, audio
before video at ties) and is a pure function of inputs, config, and seed.
The live-paced mode publishes batches over the TCP transport on the real
clock, so latencies and the cold-start delay are measured, not simulated.
"""

from __future__ import annotations

import math
import os
import threading
import time
from dataclasses import dataclass

import numpy as np

from .audio import (
    MEL_TOPIC,
    MelBatch,
    encode_mel_batch,
    extract_mel,
    read_wav,
)
from .clock import now_us
from .config import PipelineConfig, load_config
from .envelope import PayloadKind, TimedEnvelope
from .errors import ConfigError
from .features import (
    FLAME_TOPIC,
    FlameSequence,
    encode_flame_batch,
    iter_batches,
    publish_batches,
    read_flame,
)
from .frames import ArkitFrame, MelFrame
from .fusion import assemble_window, ingest, make_queues, push_history
from .generator import PredictorModel, load_model, predict_step
from .mapper import GLMatrix, convert_frames, load_gl
from .metrics import MetricsRegistry, NoSamplesError, report_to_csv

MODES = ("offline", "live-paced")

LATENCY_CSV_HEADER = "stage,metric,count,p50,p95,max\n"


@dataclass(frozen=True)
class RunSpec:
    """One pipeline invocation: mode, input paths, and output paths."""

    mode: str = "offline"
    wav_path: str = ""
    flame_path: str = ""
    gl_path: str = ""
    weights_path: str = ""
    config_path: str | None = None
    frames_out: str | None = None
    latency_out: str | None = None
    seed: int | None = None
    greedy: bool = False
    serve_addr: str | None = None


def validate_run_spec(spec: RunSpec) -> None:
    """Check mode and input paths before any stage starts."""
    if spec.mode not in MODES:
        raise ConfigError(f"unknown mode {spec.mode!r}, expected one of {MODES}")
    required = (
        ("wav", spec.wav_path),
        ("flame", spec.flame_path),
        ("gl", spec.gl_path),
        ("weights", spec.weights_path),
    )
    for label, path in required:
        if not path:
            raise ConfigError(f"{label} input path is required")
        if not os.path.isfile(path):
            raise ConfigError(f"{label} input not found: {path}")


@dataclass
class RunSummary:
    mode: str
    flame_frames_in: int
    mel_frames_in: int
    steps: int
    frames_out: int
    dropped: int
    rejected: int
    first_frame_s: float | None
    wall_s: float
    frames_path: str | None
    latency_path: str | None

    def lines(self) -> list[str]:
        out = [
            f"mode            {self.mode}",
            f"frames in       {self.flame_frames_in} flame / {self.mel_frames_in} mel",
            f"frames out      {self.frames_out} ({self.steps} steps)",
            f"queue drops     {self.dropped} dropped, {self.rejected} stale",
        ]
        if self.first_frame_s is not None:
            out.append(f"first frame     {self.first_frame_s:.3f} s")
        out.append(f"wall time       {self.wall_s:.3f} s")
        if self.frames_path:
            out.append(f"frames file     {self.frames_path}")
        if self.latency_path:
            out.append(f"latency file    {self.latency_path}")
        return out


def _check_dims(cfg: PipelineConfig, gl: GLMatrix, model: PredictorModel) -> None:
    if gl.expr_dim != cfg.expr_dim:
        raise ConfigError(
            f"gl matrix expression dim {gl.expr_dim} != config expr_dim {cfg.expr_dim}"
        )
    if model.frame_dim != cfg.frame_dim:
        raise ConfigError(
            f"model frame dim {model.frame_dim} != config frame dim {cfg.frame_dim}"
        )
    if model.l != cfg.l:
        raise ConfigError(f"model mel dim {model.l} != config l {cfg.l}")
    if model.w_out != cfg.w_out:
        raise ConfigError(f"model w_out {model.w_out} != config w_out {cfg.w_out}")
    if cfg.t_history % model.w_out != 0:
        raise ConfigError(
            f"t_history {cfg.t_history} must be a multiple of w_out {model.w_out}"
        )


class Engine:
    """Fusion, prediction, and retargeting core shared by both schedulers.

    The output clock starts one T_video after input start (the first window
    needs a full video batch) and then advances w_out frames per prediction
    step on the F_fps grid. advance() runs every step whose first output
    frame is due at the given cursor; each step re-assembles the window from
    whatever the queues hold, so late or missing data degrades to padding
    instead of stalling the output.
    """

    def __init__(
        self,
        cfg: PipelineConfig,
        gl: GLMatrix,
        model: PredictorModel,
        metrics: MetricsRegistry,
        rng: np.random.Generator,
        greedy: bool,
        sink,
    ):
        self.cfg = cfg
        self.gl = gl
        self.model = model
        self.metrics = metrics
        self.rng = rng
        self.greedy = greedy
        self.sink = sink
        self.flame_q, self.mel_q, self.history_q = make_queues(cfg)
        self.e0_us = int(round(cfg.T_video_s * 1e6))
        self.steps = 0
        self.frames_out = 0
        self.frame_cap: int | None = None
        self.flame_frames_in = 0
        self.mel_frames_in = 0

    def set_frame_cap(self, input_end_us: int) -> None:
        """Emit only frames timestamped strictly before the input end."""
        span = max(0, input_end_us - self.e0_us)
        self.frame_cap = -((-span * self.cfg.F_fps) // 1_000_000)

    def ingest_env(self, env: TimedEnvelope) -> int:
        if env.payload_kind is PayloadKind.FLAME:
            n = ingest(self.flame_q, env)
            self.flame_frames_in += n
            return n
        if env.payload_kind is PayloadKind.MEL:
            n = ingest(self.mel_q, env)
            self.mel_frames_in += n
            return n
        return 0

    def _next_step_due_us(self) -> int:
        k0 = self.steps * self.cfg.w_out
        return self.e0_us + (k0 * 1_000_000) // self.cfg.F_fps

    def advance(self, cursor_us: int) -> int:
        """Run every prediction step due at the cursor; returns steps run."""
        ran = 0
        while self._next_step_due_us() <= cursor_us:
            if self.frame_cap is not None and self.frames_out >= self.frame_cap:
                break
            if not self._try_step():
                break
            ran += 1
        return ran

    def drops(self) -> tuple[int, int]:
        queues = (self.flame_q, self.mel_q, self.history_q)
        return sum(q.dropped for q in queues), sum(q.rejected for q in queues)

    def _try_step(self) -> bool:
        t0 = now_us()
        window = assemble_window(self.flame_q, self.mel_q, self.history_q, self.cfg)
        t1 = now_us()
        if window is None:
            return False  # not a single flame frame yet
        self.metrics.record_values("fusion", t0, t0, t1, t1)

        step = predict_step(self.model, window, rng=self.rng, greedy=self.greedy)
        t2 = now_us()
        self.metrics.record_values("generator", t1, t1, t2, t2)
        push_history(self.history_q, step.frames)

        take = len(step.frames)
        if self.frame_cap is not None:
            take = min(take, self.frame_cap - self.frames_out)
        if take > 0:
            t3 = now_us()
            arkit = convert_frames(
                step.frames[:take],
                self.gl,
                self.cfg.F_fps,
                start_seq=self.frames_out,
                start_t_ms=self.e0_us / 1000.0
                + self.frames_out * (1000.0 / self.cfg.F_fps),
            )
            t4 = now_us()
            self.metrics.record_values("gl", t3, t3, t4, t4)
            self.sink(arkit)
            t5 = now_us()
            self.metrics.record_values("publish", t4, t4, t5, t5)
            self.frames_out += take
        self.steps += 1
        return True


def timed_mel_batches(
    samples: np.ndarray, rate: int, cfg: PipelineConfig, metrics: MetricsRegistry
) -> list[MelBatch]:
    """Extract one T_audio chunk at a time, recording per-batch timings.

    Chunked extraction mirrors live arrival, so the recorded mel stage
    numbers mean the same thing in both run modes.
    """
    spb = int(round(cfg.T_audio_s * rate))
    n_batches = math.ceil(len(samples) / spb)
    batches: list[MelBatch] = []
    for b in range(n_batches):
        chunk = samples[b * spb : (b + 1) * spb]
        t0 = now_us()
        got = extract_mel(
            chunk, rate, l=cfg.l, F_fps=cfg.F_fps, T_audio_s=cfg.T_audio_s
        )[0]
        t1 = now_us()
        metrics.record_values("mel", t0, t0, t1, t1)
        offset = int(round(b * cfg.T_audio_s * 1e6))
        frames = tuple(
            MelFrame(coeffs=f.coeffs, capture_ts_us=f.capture_ts_us + offset)
            for f in got.frames
        )
        batches.append(MelBatch(frames=frames, batch_index=b))
    return batches


def _write_latency(metrics: MetricsRegistry, path: str | None) -> None:
    if not path:
        return
    try:
        text = report_to_csv(metrics.report())
    except NoSamplesError:
        text = LATENCY_CSV_HEADER
    with open(path, "w") as fh:
        fh.write(text)


class _FrameDump:
    """JSONL sink: one server-schema frame per line, flushed on close."""

    def __init__(self, path: str | None):
        from .server import encode_frame

        self._encode = encode_frame
        self._fh = open(path, "w") if path else None

    def write(self, frames: list[ArkitFrame]) -> None:
        if self._fh is None:
            return
        for f in frames:
            self._fh.write(self._encode(f) + "\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def _load_inputs(
    spec: RunSpec, cfg: PipelineConfig
) -> tuple[FlameSequence, np.ndarray, int, GLMatrix, PredictorModel]:
    seq = read_flame(spec.flame_path)
    samples, rate = read_wav(spec.wav_path)
    gl = load_gl(spec.gl_path)
    model = load_model(spec.weights_path)
    _check_dims(cfg, gl, model)
    return seq, samples, rate, gl, model


def run_offline(spec: RunSpec, cfg: PipelineConfig) -> RunSummary:
    t_start = time.monotonic()
    seq, samples, rate, gl, model = _load_inputs(spec, cfg)
    metrics = MetricsRegistry()
    rng = np.random.default_rng(cfg.seed if spec.seed is None else spec.seed)

    # audio sorts before video at equal publish instants, so a step
    # triggered by a video batch always sees the freshest mel frames
    events: list[tuple[int, int, int, PayloadKind, bytes, int]] = []
    for b, batch in enumerate(iter_batches(seq, cfg.T_video_s)):
        pub = int(round((b + 1) * cfg.T_video_s * 1e6))
        events.append(
            (pub, 1, b, PayloadKind.FLAME, encode_flame_batch(batch),
             batch[-1].capture_ts_us)
        )
    for b, mel in enumerate(timed_mel_batches(samples, rate, cfg, metrics)):
        pub = int(round((b + 1) * cfg.T_audio_s * 1e6))
        events.append(
            (pub, 0, b, PayloadKind.MEL, encode_mel_batch(mel),
             mel.frames[-1].capture_ts_us)
        )
    events.sort(key=lambda e: (e[0], e[1]))

    dump = _FrameDump(spec.frames_out)
    first_emit: list[float | None] = [None]

    def sink(frames: list[ArkitFrame]) -> None:
        if first_emit[0] is None:
            first_emit[0] = frames[0].t_ms / 1000.0  # virtual-clock emit time
        dump.write(frames)

    engine = Engine(cfg, gl, model, metrics, rng, spec.greedy, sink)
    engine.set_frame_cap(int(round(seq.duration_s * 1e6)))
    try:
        cursor = 0
        for pub, _, seqno, kind, payload, capture in events:
            topic = FLAME_TOPIC if kind is PayloadKind.FLAME else MEL_TOPIC
            engine.ingest_env(
                TimedEnvelope(
                    topic=topic,
                    seq=seqno,
                    capture_ts_us=capture,
                    publish_ts_us=pub,
                    payload_kind=kind,
                    payload=payload,
                )
            )
            cursor = max(cursor, pub)
            engine.advance(cursor)
    finally:
        dump.close()
    _write_latency(metrics, spec.latency_out)

    dropped, rejected = engine.drops()
    return RunSummary(
        mode=spec.mode,
        flame_frames_in=engine.flame_frames_in,
        mel_frames_in=engine.mel_frames_in,
        steps=engine.steps,
        frames_out=engine.frames_out,
        dropped=dropped,
        rejected=rejected,
        first_frame_s=first_emit[0],
        wall_s=time.monotonic() - t_start,
        frames_path=spec.frames_out,
        latency_path=spec.latency_out,
    )


def run_live(spec: RunSpec, cfg: PipelineConfig) -> RunSummary:
    from .transport import Publisher, Subscriber

    t_start = time.monotonic()
    seq, samples, rate, gl, model = _load_inputs(spec, cfg)
    metrics = MetricsRegistry()
    rng = np.random.default_rng(cfg.seed if spec.seed is None else spec.seed)

    server = None
    if spec.serve_addr:
        from .server import FrameServer

        server = FrameServer(spec.serve_addr, fps=cfg.F_fps).start()

    flame_pub = Publisher(FLAME_TOPIC)
    mel_pub = Publisher(MEL_TOPIC)
    sub = Subscriber({FLAME_TOPIC: flame_pub.addr, MEL_TOPIC: mel_pub.addr})
    deadline = time.monotonic() + 2.0
    while time.monotonic() < deadline and (
        flame_pub.subscriber_count() < 1 or mel_pub.subscriber_count() < 1
    ):
        time.sleep(0.005)

    dump = _FrameDump(spec.frames_out)
    first_emit: list[float | None] = [None]
    start_mono = time.monotonic()

    def sink(frames: list[ArkitFrame]) -> None:
        if first_emit[0] is None:
            first_emit[0] = time.monotonic() - start_mono
        dump.write(frames)
        if server is not None:
            for f in frames:
                server.submit(f)

    engine = Engine(cfg, gl, model, metrics, rng, spec.greedy, sink)
    engine.set_frame_cap(int(round(seq.duration_s * 1e6)))

    def feed_mel() -> None:
        spb = int(round(cfg.T_audio_s * rate))
        for b in range(math.ceil(len(samples) / spb)):
            delay = start_mono + (b + 1) * cfg.T_audio_s - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            chunk = samples[b * spb : (b + 1) * spb]
            t0 = now_us()
            got = extract_mel(
                chunk, rate, l=cfg.l, F_fps=cfg.F_fps, T_audio_s=cfg.T_audio_s
            )[0]
            t1 = now_us()
            metrics.record_values("mel", t0, t0, t1, t1)
            offset = int(round(b * cfg.T_audio_s * 1e6))
            frames = tuple(
                MelFrame(coeffs=f.coeffs, capture_ts_us=f.capture_ts_us + offset)
                for f in got.frames
            )
            mel_pub.publish(
                PayloadKind.MEL,
                encode_mel_batch(MelBatch(frames=frames, batch_index=b)),
                capture_ts_us=frames[-1].capture_ts_us,
            )

    threads = [
        threading.Thread(target=feed_mel, name="mel-feed", daemon=True),
        threading.Thread(
            target=publish_batches,
            args=(seq, cfg.T_video_s, flame_pub),
            kwargs={"fast": False},
            name="flame-feed",
            daemon=True,
        ),
    ]
    for t in threads:
        t.start()

    try:
        stop_at = start_mono + seq.duration_s + 3.0
        while time.monotonic() < stop_at:
            if engine.frame_cap is not None and engine.frames_out >= engine.frame_cap:
                break
            got = sub.next_with_recv_ts(timeout_ms=20.0)
            if got is not None:
                engine.ingest_env(got[0])
            elapsed_us = int((time.monotonic() - start_mono) * 1e6)
            engine.advance(elapsed_us)
        for t in threads:
            t.join(timeout=cfg.T_video_s + 2.0)
    finally:
        dump.close()
        sub.close()
        flame_pub.close()
        mel_pub.close()
        if server is not None:
            server.close()
    _write_latency(metrics, spec.latency_out)

    dropped, rejected = engine.drops()
    return RunSummary(
        mode=spec.mode,
        flame_frames_in=engine.flame_frames_in,
        mel_frames_in=engine.mel_frames_in,
        steps=engine.steps,
        frames_out=engine.frames_out,
        dropped=dropped,
        rejected=rejected,
        first_frame_s=first_emit[0],
        wall_s=time.monotonic() - t_start,
        frames_path=spec.frames_out,
        latency_path=spec.latency_out,
    )


def run_pipeline(spec: RunSpec) -> RunSummary:
    """Validate, dispatch on mode, and run to input exhaustion."""
    cfg = load_config(spec.config_path) if spec.config_path else PipelineConfig()
    cfg.validate()
    validate_run_spec(spec)
    if spec.mode == "offline":
        return run_offline(spec, cfg)
    return run_live(spec, cfg)
