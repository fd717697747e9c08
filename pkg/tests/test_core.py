import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relisten.clock import now_us
from relisten.config import PipelineConfig, load_config, save_config
from relisten.envelope import (
    MAX_PAYLOAD_BYTES,
    PayloadKind,
    TimedEnvelope,
    decode_envelope,
)
from relisten.errors import ConfigError, ContractError, FormatError, TransportError
from relisten.frames import ArkitFrame, FlameFrame, MelFrame


class TestClock:
    def test_monotonic(self):
        a = now_us()
        b = now_us()
        assert b >= a

    def test_sleep_advances_at_least_1ms(self):
        a = now_us()
        time.sleep(0.001)
        b = now_us()
        assert b - a >= 1000

    def test_many_calls_nondecreasing(self):
        samples = [now_us() for _ in range(1000)]
        assert all(b >= a for a, b in zip(samples, samples[1:]))


class TestEnvelope:
    def test_roundtrip_simple(self):
        env = TimedEnvelope("flame", 7, 1000, 2000, PayloadKind.FLAME, b"abc")
        assert decode_envelope(env.encode()) == env

    @settings(max_examples=200, deadline=None)
    @given(
        topic=st.text(min_size=1, max_size=32),
        seq=st.integers(min_value=0, max_value=2**64 - 1),
        cap=st.integers(min_value=0, max_value=2**64 - 1),
        pub=st.integers(min_value=0, max_value=2**64 - 1),
        kind=st.sampled_from(list(PayloadKind)),
        payload=st.binary(max_size=4096),
    )
    def test_roundtrip_property(self, topic, seq, cap, pub, kind, payload):
        env = TimedEnvelope(topic, seq, cap, pub, kind, payload)
        assert decode_envelope(env.encode()) == env

    def test_oversized_payload_rejected(self):
        env = TimedEnvelope("t", 0, 0, 0, PayloadKind.MEL, b"x" * (MAX_PAYLOAD_BYTES + 1))
        with pytest.raises(TransportError):
            env.encode()

    def test_truncated_buffer_rejected(self):
        buf = TimedEnvelope("t", 0, 0, 0, PayloadKind.MEL, b"hello").encode()
        with pytest.raises(FormatError):
            decode_envelope(buf[:-2])

    def test_trailing_garbage_rejected(self):
        buf = TimedEnvelope("t", 0, 0, 0, PayloadKind.MEL, b"hello").encode()
        with pytest.raises(FormatError):
            decode_envelope(buf + b"zz")


class TestFrames:
    def test_flame_frame_vector_roundtrip(self):
        f = FlameFrame(
            expr=np.arange(100, dtype=np.float32) / 100.0,
            jaw_aa=[0.1, 0.0, 0.0],
            head_aa=[0.0, 0.2, 0.0],
            capture_ts_us=42,
        )
        vec = f.as_vector()
        assert vec.shape == (106,)
        g = FlameFrame.from_vector(vec, 42)
        assert np.array_equal(g.expr, f.expr)
        assert np.array_equal(g.jaw_aa, f.jaw_aa)
        assert np.array_equal(g.head_aa, f.head_aa)

    def test_flame_pose_norm_limit(self):
        with pytest.raises(ContractError):
            FlameFrame(
                expr=np.zeros(10),
                jaw_aa=[math.pi, 0.0, 0.0],
                head_aa=[0.0, 0.0, 0.0],
                capture_ts_us=0,
            )

    def test_flame_shape_carried(self):
        f = FlameFrame(
            expr=np.zeros(10),
            jaw_aa=np.zeros(3),
            head_aa=np.zeros(3),
            capture_ts_us=0,
            shape=np.ones(300),
        )
        assert f.shape is not None and f.shape.shape == (300,)

    def test_mel_frame_rejects_nan(self):
        from relisten.errors import NumericError

        with pytest.raises(NumericError):
            MelFrame(coeffs=np.array([1.0, np.nan]), capture_ts_us=0)

    def test_arkit_frame_weight_range(self):
        with pytest.raises(ContractError):
            ArkitFrame(
                weights=np.full(52, 1.5),
                jaw_euler=np.zeros(3),
                head_euler=np.zeros(3),
                seq=0,
                t_ms=0,
            )

    def test_arkit_frame_accepts_boundary_pi(self):
        f = ArkitFrame(
            weights=np.zeros(52),
            jaw_euler=np.array([math.pi, 0.0, 0.0]),
            head_euler=np.zeros(3),
            seq=0,
            t_ms=0,
        )
        assert f.jaw_euler[0] == pytest.approx(math.pi)


class TestConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        p = tmp_path / "empty.cfg"
        p.write_text("")
        cfg = load_config(p)
        assert cfg.F_fps == 30
        assert cfg.M_fps == 120
        assert cfg.T_audio_s == 0.5
        assert cfg.T_video_s == 1.0
        assert cfg.expr_dim == 100
        assert cfg.l == 128
        assert cfg.K == 200
        assert cfg.T_window == 64
        assert cfg.t_history == 32
        assert cfg.w_out == 8
        assert cfg.sample_rate_hz == 16000

    def test_mfps_follows_ffps(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("F_fps=24\n")
        cfg = load_config(p)
        assert cfg.M_fps == 96

    def test_inconsistent_mfps_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("F_fps=30\nM_fps=100\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_mfps_override_flag(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("F_fps=30\nM_fps=100\noverride_mfps=true\n")
        cfg = load_config(p)
        assert cfg.M_fps == 100

    def test_zero_k_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("K=0\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_malformed_value_names_key(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("F_fps=thirty\n")
        with pytest.raises(ConfigError, match="F_fps"):
            load_config(p)

    def test_comments_and_extras(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# comment\nF_fps=25  # inline\npub.flame.addr=127.0.0.1:7001\n")
        cfg = load_config(p)
        assert cfg.F_fps == 25
        assert cfg.get_str("pub.flame.addr", "") == "127.0.0.1:7001"

    def test_save_load_idempotent(self, tmp_path):
        cfg = PipelineConfig(F_fps=24, M_fps=96, seed=7)
        cfg.extras["fusion.stride_frames"] = "4"
        p = tmp_path / "out.cfg"
        save_config(cfg, p)
        assert load_config(p) == cfg

    def test_save_load_idempotent_with_override(self, tmp_path):
        cfg = PipelineConfig(F_fps=30, M_fps=90)
        p = tmp_path / "out.cfg"
        save_config(cfg, p)
        assert load_config(p) == cfg

    def test_mel_frames_per_batch(self):
        assert PipelineConfig().mel_frames_per_batch == 60
        assert PipelineConfig(F_fps=24, M_fps=96).mel_frames_per_batch == 48
        assert PipelineConfig(F_fps=25, M_fps=100).mel_frames_per_batch == 50
