"""Command-line entry point wiring all stages together.

Exit codes: 0 success, 2 usage error (argparse), 1 runtime error.
Set RELISTEN_LOG=DEBUG|INFO|WARNING|ERROR to control log verbosity.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from importlib import resources

import numpy as np

from .audio import (
    extract_mel,
    read_wav,
    synth_speech,
    write_mel_file,
    write_wav,
)
from .config import PipelineConfig, load_config
from .errors import RelistenError
from .features import read_flame, synth_flame, write_flame
from .generator import PredictorModel, train_codebook, l2_loss, save_model
from .mapper import GLMode, build_gl, parse_mapping_table, save_gl
from .pipeline import RunSpec, run_pipeline

log = logging.getLogger("relisten")


def default_mapping_path() -> str:
    return str(resources.files("relisten").joinpath("data/default_mapping.txt"))


def _load_cfg(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    cfg.validate()
    return cfg


def _cmd_run(args) -> int:
    if args.fast and args.mode == "live-paced":
        print("error: --fast conflicts with --mode live-paced", file=sys.stderr)
        return 2
    spec = RunSpec(
        mode="offline" if args.fast else args.mode,
        wav_path=args.wav,
        flame_path=args.flame,
        gl_path=args.gl,
        weights_path=args.weights,
        config_path=args.config,
        frames_out=args.frames_out,
        latency_out=args.latency_out,
        seed=args.seed,
        greedy=args.greedy,
        serve_addr=args.serve,
    )
    summary = run_pipeline(spec)
    for line in summary.lines():
        print(line)
    return 0


def _cmd_gen_synthetic(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    flame_path = os.path.join(args.out_dir, "speaker.flm")
    wav_path = os.path.join(args.out_dir, "speaker.wav")
    write_flame(
        flame_path, synth_flame(args.duration, args.fps, args.seed, args.expr_dim)
    )
    write_wav(wav_path, synth_speech(args.duration, seed=args.seed + 1), 16000)
    print(flame_path)
    print(wav_path)
    return 0


def _cmd_extract_mel(args) -> int:
    cfg = _load_cfg(args)
    samples, rate = read_wav(args.infile)
    batches = extract_mel(
        samples,
        rate,
        l=cfg.l,
        F_fps=cfg.F_fps,
        T_audio_s=cfg.T_audio_s,
        use_dct=not args.no_dct,
    )
    write_mel_file(args.out, batches)
    per_batch = len(batches[0].frames) if batches else 0
    kind = "log-mel" if args.no_dct else "cepstral"
    print(f"wrote {args.out}: {len(batches)} batches x {per_batch} {kind} frames")
    return 0


def _cmd_build_gl(args) -> int:
    mapping_path = args.mapping or default_mapping_path()
    mapping = parse_mapping_table(mapping_path)
    gl = build_gl(mapping, GLMode(args.mode), expr_dim=args.expr_dim)
    save_gl(gl, args.out)
    print(f"wrote {args.out}: {gl.expr_dim} x 52, mode {gl.mode.value}")
    return 0


def _cmd_train_codebook(args) -> int:
    cfg = _load_cfg(args)
    seq = read_flame(args.flame)
    vectors = np.stack([f.as_vector() for f in seq.frames])
    n_groups = len(vectors) // cfg.w_out
    base = PredictorModel.build(cfg)
    groups = vectors[: n_groups * cfg.w_out].reshape(n_groups, -1)
    encoded = groups @ base.encoder_map
    codebook = train_codebook(encoded, cfg.K, max_iters=args.iters, seed=cfg.seed)
    model = PredictorModel.build(cfg, codebook=codebook)
    save_model(args.out, model)
    final = codebook.training_errors[-1] if codebook.training_errors else float("nan")
    print(
        f"wrote {args.out}: K={codebook.K} code_dim={codebook.code_dim} "
        f"from {n_groups} groups, final error {final:.6f}"
    )
    return 0


def _cmd_eval_l2(args) -> int:
    a = read_flame(args.a)
    b = read_flame(args.b)
    pred = np.stack([f.as_vector() for f in a.frames])
    gt = np.stack([f.as_vector() for f in b.frames])
    print(l2_loss(pred, gt))
    return 0


def _cmd_play_flame(args) -> int:
    from .features import FLAME_TOPIC, publish_batches
    from .transport import Publisher

    cfg = _load_cfg(args)
    seq = read_flame(args.infile)
    pub = Publisher(FLAME_TOPIC, args.addr)
    try:
        print(f"publishing on {pub.addr} topic {FLAME_TOPIC}")
        if args.wait_subscribers > 0:
            deadline = time.monotonic() + args.wait_subscribers
            while time.monotonic() < deadline and pub.subscriber_count() == 0:
                time.sleep(0.01)
        count = publish_batches(seq, cfg.T_video_s, pub, fast=args.fast)
        print(f"published {count} batches ({len(seq.frames)} frames)")
    finally:
        pub.close()
    return 0


def _synthetic_arkit_frames(fps: int, seed: int, duration_s: float):
    """Smooth seeded blendshape motion; infinite when duration_s <= 0."""
    from .frames import ArkitFrame

    rng = np.random.default_rng(seed)
    freq = rng.uniform(0.1, 0.5, 52)
    phase = rng.uniform(0.0, 2.0 * math.pi, 52)
    pose_freq = rng.uniform(0.1, 0.3, 6)
    k = 0
    while duration_s <= 0 or k < round(duration_s * fps):
        t = k / fps
        weights = 0.5 + 0.5 * np.sin(2.0 * math.pi * freq * t + phase)
        eulers = 0.3 * np.sin(2.0 * math.pi * pose_freq * t)
        yield ArkitFrame(
            weights=weights,
            jaw_euler=eulers[:3],
            head_euler=eulers[3:],
            seq=k,
            t_ms=round(k * 1000.0 / fps),
        )
        k += 1


def _cmd_serve(args) -> int:
    from .server import FrameServer

    server = FrameServer(args.addr, fps=args.fps).start()
    print(f"serving on {server.addr} at {args.fps} fps")
    period = 1.0 / args.fps
    try:
        for frame in _synthetic_arkit_frames(args.fps, args.seed, args.duration):
            server.submit(frame)
            time.sleep(period)
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


def _cmd_bench(args) -> int:
    import tempfile

    cfg = _load_cfg(args)
    with tempfile.TemporaryDirectory(prefix="relisten-bench-") as work:
        flame_path = os.path.join(work, "speaker.flm")
        wav_path = os.path.join(work, "speaker.wav")
        gl_path = os.path.join(work, "gl.bin")
        weights_path = os.path.join(work, "model.bin")
        write_flame(
            flame_path, synth_flame(args.duration, cfg.F_fps, cfg.seed, cfg.expr_dim)
        )
        write_wav(wav_path, synth_speech(args.duration, seed=cfg.seed + 1), 16000)
        mapping = parse_mapping_table(default_mapping_path())
        save_gl(build_gl(mapping, GLMode.DIFFERENCE, expr_dim=cfg.expr_dim), gl_path)
        save_model(weights_path, PredictorModel.build(cfg))
        summary = run_pipeline(
            RunSpec(
                mode="offline",
                wav_path=wav_path,
                flame_path=flame_path,
                gl_path=gl_path,
                weights_path=weights_path,
                config_path=args.config,
                latency_out=args.out,
                seed=cfg.seed,
            )
        )
    for line in summary.lines():
        print(line)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relisten",
        description="Speaker audio + facial motion in, listener facial behavior out.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_and_seed(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="rng seed override")

    p = sub.add_parser("run", help="run the full pipeline over recorded inputs")
    p.add_argument("--mode", choices=("offline", "live-paced"), default="offline")
    p.add_argument("--fast", action="store_true", help="force the offline fast scheduler")
    p.add_argument("--wav", required=True, help="speaker audio (WAV PCM16)")
    p.add_argument("--flame", required=True, help="speaker facial features (.flm)")
    p.add_argument("--gl", required=True, help="expression-to-blendshape matrix")
    p.add_argument("--weights", required=True, help="predictor weights file")
    p.add_argument("--frames-out", help="output frame dump (JSON lines)")
    p.add_argument("--latency-out", help="per-stage latency CSV")
    p.add_argument("--greedy", action="store_true", help="argmax decoding, no sampling")
    p.add_argument("--serve", help="also stream frames on this websocket addr (live mode)")
    add_config_and_seed(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("gen-synthetic", help="write synthetic speaker wav + flame files")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--fps", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--expr-dim", type=int, default=100)
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("extract-mel", help="extract coefficient batches from a WAV file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-dct", action="store_true", help="emit log-mel bands instead")
    add_config_and_seed(p)
    p.set_defaults(func=_cmd_extract_mel)

    p = sub.add_parser("build-gl", help="build the expression-to-blendshape matrix")
    p.add_argument("--mapping", help="mapping table (default: shipped example)")
    p.add_argument("--out", required=True)
    p.add_argument(
        "--mode",
        choices=tuple(m.value for m in GLMode),
        default=GLMode.DIFFERENCE.value,
    )
    p.add_argument("--expr-dim", type=int, default=None)
    p.set_defaults(func=_cmd_build_gl)

    p = sub.add_parser("train-codebook", help="fit code vectors on motion groups")
    p.add_argument("--flame", required=True, help="training motion (.flm)")
    p.add_argument("--out", required=True, help="output weights file")
    p.add_argument("--iters", type=int, default=50)
    add_config_and_seed(p)
    p.set_defaults(func=_cmd_train_codebook)

    p = sub.add_parser("eval-l2", help="mean squared frame distance between two files")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=_cmd_eval_l2)

    p = sub.add_parser("play-flame", help="publish a flame file over the feature bus")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--addr", default="127.0.0.1:0")
    p.add_argument("--fast", action="store_true", help="publish without pacing")
    p.add_argument(
        "--wait-subscribers",
        type=float,
        default=0.0,
        help="seconds to wait for a subscriber before publishing",
    )
    add_config_and_seed(p)
    p.set_defaults(func=_cmd_play_flame)

    p = sub.add_parser("serve", help="stream synthetic frames over websocket")
    p.add_argument("--addr", default="127.0.0.1:9001")
    p.add_argument("--fps", type=int, default=30)
    p.add_argument("--duration", type=float, default=0.0, help="seconds; 0 = forever")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("bench", help="offline run over synthetic inputs, latency CSV out")
    p.add_argument("--out", default="latency.csv")
    p.add_argument("--duration", type=float, default=10.0)
    add_config_and_seed(p)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    level = os.environ.get("RELISTEN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    try:
        return args.func(args)
    except RelistenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
