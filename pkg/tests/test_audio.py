"""Audio front-end tests.

Oracles used here are computed independently of the implementation:
channel de-interleave by strided slicing, DCT-of-constant closed forms,
and the log-mel gain identity log(g*E) = log(E) + log(g).
"""

import math
import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relisten.audio import (
    LOG_FLOOR,
    N_MELS,
    MelBatch,
    SegmentKind,
    SpeechSegment,
    VadParams,
    classify_speech_duration,
    decode_mel_batch,
    decode_vad_segments,
    detect_voice,
    encode_mel_batch,
    encode_vad_segments,
    extract_mel,
    mel_filterbank,
    read_wav,
    write_wav,
)
from relisten.errors import ContractError, FormatError

RATE = 16000


def _write_pcm16(path, samples, rate=RATE, channels=1):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(np.asarray(samples, dtype="<i2").tobytes())


class TestReadWav:
    def test_one_second_of_silence(self, tmp_path):
        path = tmp_path / "silence.wav"
        _write_pcm16(path, np.zeros(RATE, dtype=np.int16))
        samples, rate = read_wav(str(path))
        assert rate == RATE
        assert samples.shape == (RATE,)
        assert not samples.any()
        assert samples.dtype == np.int16

    def test_stereo_keeps_first_channel(self, tmp_path):
        rng = np.random.default_rng(7)
        interleaved = rng.integers(-3000, 3000, size=2 * 500, dtype=np.int16)
        path = tmp_path / "stereo.wav"
        _write_pcm16(path, interleaved, channels=2)
        samples, _ = read_wav(str(path))
        # oracle: frame-major interleave means channel 0 is every other value
        assert np.array_equal(samples, interleaved[0::2])
        assert samples.shape == (500,)

    def test_truncated_header_rejected(self, tmp_path):
        path = tmp_path / "broken.wav"
        path.write_bytes(b"RIFF\x00\x00")
        with pytest.raises(FormatError):
            read_wav(str(path))

    def test_eight_bit_rejected(self, tmp_path):
        path = tmp_path / "eight.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(1)
            wf.setframerate(RATE)
            wf.writeframes(bytes(100))
        with pytest.raises(FormatError, match="16-bit"):
            read_wav(str(path))

    def test_round_trip_with_writer(self, tmp_path):
        tone = (1000 * np.sin(2 * np.pi * 440 * np.arange(800) / RATE)).astype(np.int16)
        path = tmp_path / "tone.wav"
        write_wav(str(path), tone, RATE)
        back, rate = read_wav(str(path))
        assert rate == RATE
        assert np.array_equal(back, tone)


def _burst_signal(rng, burst_spans_s, total_s=8.0, rate=RATE, noise_std=80.0):
    """Quiet noise background with loud bursts (RMS about 10x floor)."""
    x = rng.normal(0.0, noise_std, size=int(total_s * rate))
    for start_s, dur_s in burst_spans_s:
        a, b = int(start_s * rate), int((start_s + dur_s) * rate)
        x[a:b] = rng.normal(0.0, 10.0 * noise_std, size=b - a)
    return x


def _assert_partition(segments, duration_s):
    assert segments[0].start_s == 0.0
    assert segments[-1].end_s == pytest.approx(duration_s, abs=1e-9)
    for a, b in zip(segments, segments[1:]):
        assert a.end_s == pytest.approx(b.start_s, abs=1e-9)
        assert a.kind is not b.kind  # same-kind neighbors must be merged
    for s in segments:
        assert s.duration_s > 0


class TestDetectVoice:
    def test_all_zero_single_no_speech(self):
        segments = detect_voice(np.zeros(2 * RATE), RATE)
        assert segments == [SpeechSegment(0.0, 2.0, SegmentKind.NO_SPEECH)]

    def test_empty_input(self):
        assert detect_voice(np.zeros(0), RATE) == []

    def test_low_rate_rejected(self):
        with pytest.raises(ContractError):
            detect_voice(np.zeros(100), 4000)

    def test_one_second_burst_is_backchanneling(self):
        x = _burst_signal(np.random.default_rng(0), [(3.0, 1.0)])
        segments = detect_voice(x, RATE)
        speech = [s for s in segments if s.kind is not SegmentKind.NO_SPEECH]
        assert len(speech) == 1
        assert speech[0].kind is SegmentKind.BACKCHANNELING
        assert 0.5 <= speech[0].duration_s <= 2.0
        assert speech[0].start_s == pytest.approx(3.0, abs=0.1)
        _assert_partition(segments, 8.0)

    def test_two_and_a_half_second_burst_is_short_speech(self):
        x = _burst_signal(np.random.default_rng(1), [(2.0, 2.5)])
        speech = [
            s for s in detect_voice(x, RATE) if s.kind is not SegmentKind.NO_SPEECH
        ]
        assert [s.kind for s in speech] == [SegmentKind.SHORT_SPEECH]
        assert 2.0 < speech[0].duration_s <= 3.0

    def test_four_second_burst_is_long_speech(self):
        x = _burst_signal(np.random.default_rng(2), [(1.0, 4.0)])
        speech = [
            s for s in detect_voice(x, RATE) if s.kind is not SegmentKind.NO_SPEECH
        ]
        assert [s.kind for s in speech] == [SegmentKind.LONG_SPEECH]
        assert speech[0].duration_s > 3.0

    def test_blip_below_half_second_is_silence(self):
        x = _burst_signal(np.random.default_rng(3), [(4.0, 0.15)])
        segments = detect_voice(x, RATE)
        assert all(s.kind is SegmentKind.NO_SPEECH for s in segments)
        assert len(segments) == 1

    def test_multiple_bursts_partition_timeline(self):
        x = _burst_signal(
            np.random.default_rng(4), [(1.0, 1.0), (4.0, 2.5)], total_s=10.0
        )
        segments = detect_voice(x, RATE)
        _assert_partition(segments, 10.0)
        kinds = [s.kind for s in segments if s.kind is not SegmentKind.NO_SPEECH]
        assert kinds == [SegmentKind.BACKCHANNELING, SegmentKind.SHORT_SPEECH]

    @given(
        st.integers(0, 2**32 - 1),
        st.floats(0.1, 1.2),
        st.sampled_from([8000, 16000]),
    )
    @settings(max_examples=25, deadline=None)
    def test_partition_property(self, seed, total_s, rate):
        rng = np.random.default_rng(seed)
        x = rng.normal(0, 300, size=int(total_s * rate)) * rng.integers(
            0, 2, size=int(total_s * rate)
        )
        segments = detect_voice(x, rate)
        if x.size == 0:
            assert segments == []
        else:
            _assert_partition(segments, x.size / rate)

    def test_duration_taxonomy_boundaries(self):
        assert classify_speech_duration(0.4999) is SegmentKind.NO_SPEECH
        assert classify_speech_duration(0.5) is SegmentKind.BACKCHANNELING
        assert classify_speech_duration(2.0) is SegmentKind.BACKCHANNELING
        assert classify_speech_duration(2.0 + 1e-9) is SegmentKind.SHORT_SPEECH
        assert classify_speech_duration(3.0) is SegmentKind.SHORT_SPEECH
        assert classify_speech_duration(3.0 + 1e-9) is SegmentKind.LONG_SPEECH


class TestMelFilterbank:
    def test_shape_and_support(self):
        fb = mel_filterbank()
        assert fb.shape == (N_MELS, 257)
        assert (fb >= 0).all()
        # every band must touch at least one FFT bin
        assert (fb.sum(axis=1) > 0).all()

    def test_band_centers_monotone(self):
        fb = mel_filterbank()
        centers = fb.argmax(axis=1)
        assert (np.diff(centers.astype(int)) >= 0).all()


class TestExtractMel:
    def test_batch_and_frame_counts(self):
        x = np.zeros(2 * RATE)
        batches = extract_mel(x, RATE, l=128, F_fps=30, T_audio_s=0.5)
        assert len(batches) == 4
        assert all(len(b.frames) == 60 for b in batches)
        assert [b.batch_index for b in batches] == [0, 1, 2, 3]

    @pytest.mark.parametrize("fps,expected", [(24, 48), (25, 50), (30, 60)])
    def test_resampling_law(self, fps, expected):
        batches = extract_mel(np.zeros(RATE // 2), RATE, l=16, F_fps=fps)
        assert expected == round(4 * fps * 0.5)  # arithmetic cross-check
        assert len(batches) == 1
        assert len(batches[0].frames) == expected

    def test_all_zero_input_gives_dct_of_floor_constant(self):
        batches = extract_mel(np.zeros(RATE), RATE, l=128)
        expected_c0 = math.sqrt(N_MELS) * math.log(LOG_FLOOR)
        for batch in batches:
            for frame in batch.frames:
                assert frame.coeffs.shape == (128,)
                assert frame.coeffs[0] == pytest.approx(expected_c0, rel=1e-6)
                assert np.abs(frame.coeffs[1:]).max() < 1e-4

    def test_all_zero_no_dct_gives_log_floor(self):
        batches = extract_mel(np.zeros(RATE // 2), RATE, l=128, use_dct=False)
        for frame in batches[0].frames:
            assert np.allclose(frame.coeffs, math.log(LOG_FLOOR), atol=1e-6)

    def test_gain_shifts_only_c0(self):
        rng = np.random.default_rng(11)
        x = rng.normal(0, 2000, size=RATE // 2)
        base = extract_mel(x, RATE, l=128)[0]
        scaled = extract_mel(2.0 * x, RATE, l=128)[0]
        shift = math.sqrt(N_MELS) * math.log(2.0)
        for f0, f1 in zip(base.frames, scaled.frames):
            assert f1.coeffs[0] - f0.coeffs[0] == pytest.approx(shift, abs=1e-6)
            assert np.abs(f1.coeffs[1:] - f0.coeffs[1:]).max() < 1e-6

    def test_log_mel_gain_identity(self):
        # oracle for the front half: log(g*E) = log(E) + log(g) bandwise
        rng = np.random.default_rng(12)
        x = rng.normal(0, 2000, size=RATE // 2)
        base = extract_mel(x, RATE, l=128, use_dct=False)[0]
        scaled = extract_mel(3.0 * x, RATE, l=128, use_dct=False)[0]
        for f0, f1 in zip(base.frames, scaled.frames):
            assert np.allclose(f1.coeffs - f0.coeffs, math.log(3.0), atol=1e-5)

    def test_argmax_invariant_under_gain(self):
        rng = np.random.default_rng(13)
        x = rng.normal(0, 500, size=RATE // 2)
        base = extract_mel(x, RATE, l=128, use_dct=False)[0]
        scaled = extract_mel(7.5 * x, RATE, l=128, use_dct=False)[0]
        for f0, f1 in zip(base.frames, scaled.frames):
            assert int(np.argmax(f0.coeffs)) == int(np.argmax(f1.coeffs))

    def test_determinism(self):
        rng = np.random.default_rng(14)
        x = rng.normal(0, 1500, size=RATE)
        a = extract_mel(x, RATE, l=64)
        b = extract_mel(x, RATE, l=64)
        for ba, bb in zip(a, b):
            for fa, fb_ in zip(ba.frames, bb.frames):
                assert fa.coeffs.tobytes() == fb_.coeffs.tobytes()
                assert fa.capture_ts_us == fb_.capture_ts_us

    def test_trailing_partial_window_padded(self):
        x = np.random.default_rng(15).normal(0, 1000, size=int(0.75 * RATE))
        batches = extract_mel(x, RATE, l=32)
        assert len(batches) == 2
        assert all(len(b.frames) == 60 for b in batches)
        assert all(np.isfinite(f.coeffs).all() for b in batches for f in b.frames)

    def test_timestamps_centered_and_monotone(self):
        batches = extract_mel(np.zeros(RATE), RATE, l=8)
        ts = [f.capture_ts_us for b in batches for f in b.frames]
        assert ts == sorted(ts)
        assert len(set(ts)) == len(ts)
        # frame j of batch b sits at (b*T + (j+0.5)*T/M) seconds
        assert batches[0].frames[0].capture_ts_us == round(0.5e6 / 60 / 2)
        assert batches[1].frames[0].capture_ts_us == round(0.5e6 + 0.5e6 / 60 / 2)

    def test_parameter_errors(self):
        with pytest.raises(ContractError):
            extract_mel(np.zeros(100), 44100, l=128)
        with pytest.raises(ContractError):
            extract_mel(np.zeros(100), RATE, l=129)
        with pytest.raises(ContractError):
            extract_mel(np.zeros(100), RATE, l=0)

    def test_empty_input(self):
        assert extract_mel(np.zeros(0), RATE, l=128) == []


class TestPayloadCodecs:
    def test_mel_batch_round_trip(self):
        batches = extract_mel(
            np.random.default_rng(16).normal(0, 900, RATE // 2), RATE, l=24
        )
        payload = encode_mel_batch(batches[0])
        count, dim = struct.unpack_from("<II", payload, 0)
        assert (count, dim) == (60, 24)
        back = decode_mel_batch(payload, batch_index=batches[0].batch_index)
        assert len(back.frames) == 60
        for f0, f1 in zip(batches[0].frames, back.frames):
            assert f0.capture_ts_us == f1.capture_ts_us
            assert np.array_equal(f0.coeffs, f1.coeffs)

    def test_empty_batch_rejected(self):
        with pytest.raises(ContractError):
            encode_mel_batch(MelBatch(frames=(), batch_index=0))

    def test_truncated_mel_payload_rejected(self):
        payload = encode_mel_batch(
            extract_mel(np.zeros(RATE // 2), RATE, l=4)[0]
        )
        with pytest.raises(FormatError):
            decode_mel_batch(payload[:-3])

    def test_vad_round_trip(self):
        segments = [
            SpeechSegment(0.0, 1.5, SegmentKind.NO_SPEECH),
            SpeechSegment(1.5, 2.5, SegmentKind.BACKCHANNELING),
            SpeechSegment(2.5, 6.0, SegmentKind.LONG_SPEECH),
        ]
        assert decode_vad_segments(encode_vad_segments(segments)) == segments

    def test_vad_truncated_rejected(self):
        payload = encode_vad_segments([SpeechSegment(0.0, 1.0, SegmentKind.NO_SPEECH)])
        with pytest.raises(FormatError):
            decode_vad_segments(payload[:-1])
