"""Pipeline configuration: plain ``key=value`` files with ``#`` comments.

Unknown keys (including dotted ones such as ``pub.flame.addr`` or
``fusion.stride_frames``) are preserved in ``extras`` and exposed through
typed getters, so stage-specific knobs do not need schema changes here.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

from .errors import ConfigError

_INT_FIELDS = {
    "F_fps",
    "M_fps",
    "expr_dim",
    "l",
    "K",
    "T_window",
    "t_history",
    "w_out",
    "code_dim",
    "sample_rate_hz",
    "seed",
}
_FLOAT_FIELDS = {"T_audio_s", "T_video_s"}


@dataclass
class PipelineConfig:
    """All rates, window sizes, and model dimensions for one pipeline run."""

    F_fps: int = 30          # animation / video feature rate
    M_fps: int = 120         # mel feature rate, pinned to 4 * F_fps
    T_audio_s: float = 0.5   # audio batch duration
    T_video_s: float = 1.0   # video batch duration
    expr_dim: int = 100      # expression PCA coefficients per frame
    l: int = 128             # mel coefficients per frame
    K: int = 200             # codebook size
    T_window: int = 64       # facial-motion context frames
    t_history: int = 32      # past predicted frames kept for autoregression
    w_out: int = 8           # predicted frames per step
    code_dim: int = 64       # codebook vector dimensionality
    sample_rate_hz: int = 16000
    seed: int = 0
    extras: dict[str, str] = field(default_factory=dict)

    @property
    def frame_dim(self) -> int:
        """Width of one predicted vector: expression + jaw + head axis-angle."""
        return self.expr_dim + 6

    @property
    def mel_frames_per_batch(self) -> int:
        """Mel frames per audio batch after re-sampling: 4 * F_fps * T_audio."""
        return round(4 * self.F_fps * self.T_audio_s)

    @property
    def stride_frames(self) -> int:
        """Sliding-window advance per prediction step, in output frames."""
        return self.get_int("fusion.stride_frames", self.w_out)

    def get_int(self, key: str, default: int) -> int:
        if key not in self.extras:
            return default
        return _parse_int(key, self.extras[key])

    def get_float(self, key: str, default: float) -> float:
        if key not in self.extras:
            return default
        return _parse_float(key, self.extras[key])

    def get_str(self, key: str, default: str) -> str:
        return self.extras.get(key, default)

    def validate(self, allow_mfps_override: bool = False) -> None:
        for f in dataclasses.fields(self):
            if f.name == "extras":
                continue
            value = getattr(self, f.name)
            if f.name == "seed":
                if value < 0:
                    raise ConfigError("seed must be non-negative")
                continue
            if value <= 0:
                raise ConfigError(f"{f.name} must be positive, got {value}")
        if self.M_fps != 4 * self.F_fps and not allow_mfps_override:
            raise ConfigError(
                f"M_fps={self.M_fps} must equal 4*F_fps={4 * self.F_fps} "
                "(set override_mfps=true to force)"
            )


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not an integer: {raw!r}") from exc


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not a number: {raw!r}") from exc


def _parse_bool(key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ConfigError(f"key {key!r}: not a boolean: {raw!r}")


def load_config(path: str | os.PathLike) -> PipelineConfig:
    """Load a key=value config file, applying defaults for missing keys.

    ``M_fps`` follows ``F_fps`` (as 4x) when not set explicitly; setting both
    to inconsistent values is rejected unless ``override_mfps=true``.
    """
    pairs: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"line {lineno}: expected key=value: {line.rstrip()!r}")
            key, raw = stripped.split("=", 1)
            pairs[key.strip()] = raw.strip()

    cfg = PipelineConfig()
    override = _parse_bool("override_mfps", pairs.pop("override_mfps", "false"))
    mfps_given = "M_fps" in pairs
    for key, raw in pairs.items():
        if key in _INT_FIELDS:
            setattr(cfg, key, _parse_int(key, raw))
        elif key in _FLOAT_FIELDS:
            setattr(cfg, key, _parse_float(key, raw))
        else:
            cfg.extras[key] = raw
    if not mfps_given:
        cfg.M_fps = 4 * cfg.F_fps
    cfg.validate(allow_mfps_override=override)
    return cfg


def save_config(cfg: PipelineConfig, path: str | os.PathLike) -> None:
    """Write a config back out so that load(save(cfg)) == cfg."""
    lines = []
    for f in dataclasses.fields(cfg):
        if f.name == "extras":
            continue
        lines.append(f"{f.name}={getattr(cfg, f.name)}")
    for key in sorted(cfg.extras):
        lines.append(f"{key}={cfg.extras[key]}")
    if cfg.M_fps != 4 * cfg.F_fps:
        lines.append("override_mfps=true")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
