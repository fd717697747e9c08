"""Audio front-end: WAV ingestion, energy VAD, and Mel-cepstral extraction.

The cepstral recipe is fixed so that output is bit-reproducible:
pre-emphasis 0.97, 25 ms Hann window with 10 ms hop, 512-point FFT
magnitude, 128 triangular mel filters spanning 0-8000 Hz, natural log with
a 1e-10 floor, orthonormal DCT-II keeping the first ``l`` coefficients.
Each filter's triangle is integrated across every FFT bin (not point
sampled) so that no band is left without spectral support at this
band count. The 100 fps hop grid is then linearly re-sampled to
``4 * F_fps * T_audio`` frames per batch.

Voice activity uses frame RMS with an adaptive noise floor (10th
percentile), 4x enter / 2x release hysteresis, a 200 ms hangover, and the
duration taxonomy: backchanneling 0.5-2 s, short speech 2-3 s, long speech
beyond 3 s. Speech runs under 0.5 s count as silence.
"""

from __future__ import annotations

import math
import struct
import wave
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.fft import dct

from .config import PipelineConfig
from .errors import ContractError, FormatError
from .frames import MelFrame

MEL_TOPIC = "mel"

PRE_EMPHASIS = 0.97
WIN_S = 0.025
HOP_S = 0.010
N_FFT = 512
N_MELS = 128
FMIN_HZ = 0.0
FMAX_HZ = 8000.0
LOG_FLOOR = 1e-10


# ---------------------------------------------------------------------------
# WAV ingestion


def read_wav(path: str) -> tuple[np.ndarray, int]:
    """Read a 16-bit PCM WAV file; stereo input keeps the first channel.

    Returns (int16 samples, sample rate).
    """
    try:
        with wave.open(path, "rb") as wf:
            n_channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: not a PCM WAV file: {exc}") from exc
    if sampwidth != 2:
        raise FormatError(f"{path}: expected 16-bit samples, got {8 * sampwidth}-bit")
    samples = np.frombuffer(raw, dtype="<i2")
    if n_channels > 1:
        samples = samples[::n_channels]
    return np.ascontiguousarray(samples), rate


def write_wav(path: str, samples: np.ndarray, rate: int) -> None:
    """Write mono 16-bit PCM (test/synthetic data helper)."""
    samples = np.asarray(samples, dtype="<i2")
    with wave.open(path, "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(samples.tobytes())


# ---------------------------------------------------------------------------
# Voice activity detection


class SegmentKind(Enum):
    NO_SPEECH = "no_speech"
    BACKCHANNELING = "backchanneling"
    SHORT_SPEECH = "short_speech"
    LONG_SPEECH = "long_speech"


@dataclass(frozen=True)
class SpeechSegment:
    start_s: float
    end_s: float
    kind: SegmentKind

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class VadParams:
    frame_s: float = 0.020
    floor_percentile: float = 10.0
    enter_ratio: float = 4.0
    release_ratio: float = 2.0
    hangover_s: float = 0.200
    min_speech_s: float = 0.5


def classify_speech_duration(duration_s: float) -> SegmentKind:
    """Duration taxonomy for a detected speech run."""
    if duration_s < 0.5:
        return SegmentKind.NO_SPEECH
    if duration_s <= 2.0:
        return SegmentKind.BACKCHANNELING
    if duration_s <= 3.0:
        return SegmentKind.SHORT_SPEECH
    return SegmentKind.LONG_SPEECH


def detect_voice(
    samples: np.ndarray, rate: int, params: VadParams | None = None
) -> list[SpeechSegment]:
    """Segment a signal into ordered, non-overlapping speech/silence spans.

    The returned segments partition [0, duration]; adjacent segments of the
    same kind are merged.
    """
    if rate < 8000:
        raise ContractError(f"sample rate {rate} below 8 kHz minimum")
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        return []
    duration_s = samples.size / rate

    p = params or VadParams()
    frame_len = max(1, int(round(p.frame_s * rate)))
    n_frames = math.ceil(samples.size / frame_len)
    padded = np.zeros(n_frames * frame_len)
    padded[: samples.size] = samples
    rms = np.sqrt((padded.reshape(n_frames, frame_len) ** 2).mean(axis=1))

    floor = float(np.percentile(rms, p.floor_percentile))
    enter = p.enter_ratio * floor
    release = p.release_ratio * floor

    active = np.zeros(n_frames, dtype=bool)
    in_speech = False
    for k in range(n_frames):
        if in_speech:
            in_speech = rms[k] >= release if release > 0 else rms[k] > 0
        else:
            in_speech = rms[k] > enter
        active[k] = in_speech

    # hangover: keep speech alive for a short tail after the last hot frame
    hang = int(round(p.hangover_s / p.frame_s))
    if hang > 0 and active.any():
        extended = active.copy()
        run_end = -1
        for k in range(n_frames):
            if active[k]:
                run_end = k
            elif run_end >= 0 and k - run_end <= hang:
                extended[k] = True
        active = extended

    # speech runs shorter than the taxonomy minimum become silence
    min_frames = int(round(p.min_speech_s / p.frame_s))
    k = 0
    while k < n_frames:
        if active[k]:
            j = k
            while j < n_frames and active[j]:
                j += 1
            if j - k < min_frames:
                active[k:j] = False
            k = j
        else:
            k += 1

    segments: list[SpeechSegment] = []
    k = 0
    while k < n_frames:
        j = k
        while j < n_frames and active[j] == active[k]:
            j += 1
        start_s = k * p.frame_s
        end_s = min(j * p.frame_s, duration_s)
        if active[k]:
            kind = classify_speech_duration(end_s - start_s)
        else:
            kind = SegmentKind.NO_SPEECH
        if segments and segments[-1].kind is kind:
            segments[-1] = SpeechSegment(segments[-1].start_s, end_s, kind)
        else:
            segments.append(SpeechSegment(start_s, end_s, kind))
        k = j
    if segments and segments[-1].end_s < duration_s:
        last = segments[-1]
        segments[-1] = SpeechSegment(last.start_s, duration_s, last.kind)
    return segments


# ---------------------------------------------------------------------------
# Mel-cepstral extraction


@lru_cache(maxsize=8)
def mel_filterbank(
    n_mels: int = N_MELS,
    n_fft: int = N_FFT,
    rate: int = 16000,
    fmin_hz: float = FMIN_HZ,
    fmax_hz: float = FMAX_HZ,
) -> np.ndarray:
    """Triangular mel filterbank, (n_mels, n_fft//2 + 1), bin-integrated.

    Mel scale: m = 2595 log10(1 + f/700). Each triangle is averaged over
    every FFT bin's frequency interval, which keeps narrow low-frequency
    filters non-empty even when their support is smaller than one bin.
    """

    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)

    n_bins = n_fft // 2 + 1
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz), n_mels + 2))
    bin_width = rate / n_fft
    lo = np.arange(n_bins) * bin_width - 0.5 * bin_width
    hi = lo + bin_width

    fb = np.zeros((n_mels, n_bins))
    for i in range(n_mels):
        a, b, c = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        area = np.zeros(n_bins)
        if b > a:
            # integral of (g - a) / (b - a) over each bin clipped to [a, b]
            lo_r = np.clip(lo, a, b)
            hi_r = np.clip(hi, a, b)
            area += ((hi_r - a) ** 2 - (lo_r - a) ** 2) / (2.0 * (b - a))
        if c > b:
            lo_f = np.clip(lo, b, c)
            hi_f = np.clip(hi, b, c)
            area += ((c - lo_f) ** 2 - (c - hi_f) ** 2) / (2.0 * (c - b))
        fb[i] = area / bin_width
    fb.setflags(write=False)
    return fb


@dataclass(frozen=True)
class MelBatch:
    """Re-sampled coefficient frames covering one T_audio window."""

    frames: tuple[MelFrame, ...]
    batch_index: int


def _log_mel_frames(batch: np.ndarray, rate: int) -> np.ndarray:
    """(n_mels, n_frames) log mel energies on the 10 ms hop grid."""
    hop = int(round(HOP_S * rate))
    win = int(round(WIN_S * rate))
    n_frames = math.ceil(batch.size / hop)

    emphasized = np.empty_like(batch)
    emphasized[0] = batch[0]
    emphasized[1:] = batch[1:] - PRE_EMPHASIS * batch[:-1]

    padded = np.zeros((n_frames - 1) * hop + win)
    padded[: batch.size] = emphasized
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    windowed = padded[idx] * np.hanning(win)[None, :]

    mag = np.abs(np.fft.rfft(windowed, n=N_FFT, axis=1))  # (n_frames, bins)
    fb = mel_filterbank(N_MELS, N_FFT, rate)
    mel = mag @ fb.T  # (n_frames, n_mels)
    return np.log(np.maximum(mel, LOG_FLOOR)).T


def extract_mel(
    samples: np.ndarray,
    rate: int,
    l: int = 128,
    F_fps: int = 30,
    T_audio_s: float = 0.5,
    use_dct: bool = True,
) -> list[MelBatch]:
    """Extract coefficient batches: one MelBatch per T_audio window.

    Every batch carries exactly round(4 * F_fps * T_audio) frames obtained
    by linear interpolation along the hop-grid time axis; a trailing
    partial window is zero-padded to full length. ``use_dct=False`` emits
    log-mel bands directly instead of cepstral coefficients.
    """
    if rate != 16000:
        raise ContractError(f"sample rate {rate} unsupported; expected 16000")
    if l > N_MELS:
        raise ContractError(f"l={l} exceeds {N_MELS} mel bands")
    if l <= 0:
        raise ContractError("l must be positive")
    samples = np.asarray(samples, dtype=np.float64) / 32768.0

    batch_len = int(round(T_audio_s * rate))
    n_batches = max(1, math.ceil(samples.size / batch_len)) if samples.size else 0
    target = round(4 * F_fps * T_audio_s)
    target_times = (np.arange(target) + 0.5) * (T_audio_s / target)

    hop = int(round(HOP_S * rate))
    win = int(round(WIN_S * rate))

    batches: list[MelBatch] = []
    for b in range(n_batches):
        chunk = np.zeros(batch_len)
        piece = samples[b * batch_len : (b + 1) * batch_len]
        chunk[: piece.size] = piece

        feats = _log_mel_frames(chunk, rate)  # (n_mels, n_frames)
        if use_dct:
            feats = dct(feats, type=2, axis=0, norm="ortho")
        feats = feats[:l]

        n_frames = feats.shape[1]
        frame_times = (np.arange(n_frames) * hop + 0.5 * win) / rate
        pos = np.interp(target_times, frame_times, np.arange(n_frames, dtype=np.float64))
        i0 = np.floor(pos).astype(int)
        i1 = np.minimum(i0 + 1, n_frames - 1)
        frac = pos - i0
        resampled = feats[:, i0] * (1.0 - frac) + feats[:, i1] * frac

        base_us = b * T_audio_s * 1e6
        frames = tuple(
            MelFrame(
                coeffs=resampled[:, j],
                capture_ts_us=int(round(base_us + target_times[j] * 1e6)),
            )
            for j in range(target)
        )
        batches.append(MelBatch(frames=frames, batch_index=b))
    return batches


# ---------------------------------------------------------------------------
# Wire payload codecs


def encode_mel_batch(batch: MelBatch) -> bytes:
    """u32 frame count, u32 dim, then per frame u64 ts + dim f32 coeffs."""
    if not batch.frames:
        raise ContractError("cannot encode an empty mel batch")
    dim = batch.frames[0].coeffs.shape[0]
    out = [struct.pack("<II", len(batch.frames), dim)]
    for f in batch.frames:
        out.append(struct.pack("<Q", f.capture_ts_us))
        out.append(f.coeffs.astype("<f4").tobytes())
    return b"".join(out)


def decode_mel_batch(payload: bytes, batch_index: int = 0) -> MelBatch:
    try:
        count, dim = struct.unpack_from("<II", payload, 0)
        off = 8
        frames = []
        for _ in range(count):
            (ts,) = struct.unpack_from("<Q", payload, off)
            off += 8
            coeffs = np.frombuffer(payload, dtype="<f4", count=dim, offset=off)
            off += 4 * dim
            frames.append(MelFrame(coeffs=coeffs.copy(), capture_ts_us=ts))
        if off != len(payload):
            raise FormatError("mel payload length mismatch")
        return MelBatch(frames=tuple(frames), batch_index=batch_index)
    except (struct.error, ValueError) as exc:
        raise FormatError(f"malformed mel payload: {exc}") from exc


def encode_vad_segments(segments: list[SpeechSegment]) -> bytes:
    """u32 count, then per segment f64 start, f64 end, u8 kind ordinal."""
    kinds = list(SegmentKind)
    out = [struct.pack("<I", len(segments))]
    for s in segments:
        out.append(struct.pack("<ddB", s.start_s, s.end_s, kinds.index(s.kind)))
    return b"".join(out)


def decode_vad_segments(payload: bytes) -> list[SpeechSegment]:
    kinds = list(SegmentKind)
    try:
        (count,) = struct.unpack_from("<I", payload, 0)
        off = 4
        segments = []
        for _ in range(count):
            start, end, kind = struct.unpack_from("<ddB", payload, off)
            off += 17
            segments.append(SpeechSegment(start, end, kinds[kind]))
        return segments
    except (struct.error, IndexError) as exc:
        raise FormatError(f"malformed vad payload: {exc}") from exc


def mel_batches_for_config(samples: np.ndarray, rate: int, cfg: PipelineConfig) -> list[MelBatch]:
    return extract_mel(
        samples, rate, l=cfg.l, F_fps=cfg.F_fps, T_audio_s=cfg.T_audio_s
    )


MEL_FILE_MAGIC = b"MEL1"
_MEL_FILE_HEADER = struct.Struct("<4sII")
_U32 = struct.Struct("<I")


def write_mel_file(path: str, batches: list[MelBatch]) -> None:
    """magic "MEL1", u32 batch count, u32 l, then u32-length-prefixed batches."""
    l = batches[0].frames[0].coeffs.shape[0] if batches else 0
    with open(path, "wb") as fh:
        fh.write(_MEL_FILE_HEADER.pack(MEL_FILE_MAGIC, len(batches), l))
        for batch in batches:
            payload = encode_mel_batch(batch)
            fh.write(_U32.pack(len(payload)))
            fh.write(payload)


def read_mel_file(path: str) -> list[MelBatch]:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        magic, count, _ = _MEL_FILE_HEADER.unpack_from(raw, 0)
    except struct.error as exc:
        raise FormatError(f"{path}: truncated mel file header") from exc
    if magic != MEL_FILE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    batches = []
    off = _MEL_FILE_HEADER.size
    for b in range(count):
        try:
            (length,) = _U32.unpack_from(raw, off)
        except struct.error as exc:
            raise FormatError(f"{path}: truncated at batch {b}") from exc
        off += _U32.size
        if off + length > len(raw):
            raise FormatError(f"{path}: batch {b} extends past end of file")
        batches.append(decode_mel_batch(raw[off : off + length], batch_index=b))
        off += length
    return batches


def synth_speech(duration_s: float, rate: int = 16000, seed: int = 0) -> np.ndarray:
    """Deterministic speech-like signal: voiced bursts over a quiet floor.

    Bursts are harmonic stacks with raised-sine envelopes separated by
    pauses, so energy-based segmentation finds clear on/off structure.
    """
    if duration_s <= 0 or rate <= 0:
        raise ContractError("duration and rate must be positive")
    rng = np.random.default_rng(seed)
    n = round(duration_s * rate)
    out = rng.normal(0.0, 0.004, n)

    cursor_s = 0.3
    while cursor_s < duration_s - 0.3:
        burst_s = float(rng.uniform(0.4, 1.8))
        i0 = round(cursor_s * rate)
        i1 = min(round((cursor_s + burst_s) * rate), n)
        if i1 <= i0:
            break
        seg_t = np.arange(i1 - i0) / rate
        f0 = float(rng.uniform(110.0, 240.0))
        voiced = np.zeros(i1 - i0)
        for h in (1, 2, 3, 4):
            voiced += (0.5 / h) * np.sin(2.0 * np.pi * f0 * h * seg_t)
        envelope = np.sin(np.pi * seg_t / (seg_t[-1] + 1.0 / rate)) ** 2
        out[i0:i1] += 0.55 * envelope * voiced
        cursor_s += burst_s + float(rng.uniform(0.25, 0.8))
    return np.clip(out, -0.9, 0.9)
