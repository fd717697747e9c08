"""Domain frame types: facial motion, audio features, and retargeted output.

Frames are immutable after construction; the numpy buffers they carry are
treated as read-only by convention and are safe to hand between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arkit import NUM_BLENDSHAPES
from .errors import ContractError, NumericError

SHAPE_DIM = 300
POSE_DIM = 6  # jaw axis-angle (3) + head axis-angle (3)

# float32 rounds pi up; range checks on f32 storage must use the rounded value
_PI_F32 = float(np.float32(math.pi))


def _as_f32(values, name: str, length: int | None = None) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if arr.ndim != 1:
        raise ContractError(f"{name} must be a flat vector, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ContractError(f"{name} must have {length} entries, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class FlameFrame:
    """One facial-motion frame: PCA expression coefficients plus jaw and
    head rotations in axis-angle form. The identity/shape vector is carried
    through when present but never used at runtime."""

    expr: np.ndarray
    jaw_aa: np.ndarray
    head_aa: np.ndarray
    capture_ts_us: int
    shape: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "expr", _as_f32(self.expr, "expr"))
        object.__setattr__(self, "jaw_aa", _as_f32(self.jaw_aa, "jaw_aa", 3))
        object.__setattr__(self, "head_aa", _as_f32(self.head_aa, "head_aa", 3))
        if self.shape is not None:
            object.__setattr__(
                self, "shape", _as_f32(self.shape, "shape", SHAPE_DIM)
            )
        for name in ("jaw_aa", "head_aa"):
            angle = float(np.linalg.norm(getattr(self, name).astype(np.float64)))
            if not angle < math.pi:
                raise ContractError(
                    f"{name} rotation angle {angle:.6f} rad must be < pi"
                )

    @property
    def expr_dim(self) -> int:
        return self.expr.shape[0]

    def as_vector(self) -> np.ndarray:
        """Concatenated (expr, jaw_aa, head_aa) vector of expr_dim + 6 floats."""
        return np.concatenate((self.expr, self.jaw_aa, self.head_aa))

    @staticmethod
    def from_vector(vec: np.ndarray, capture_ts_us: int) -> "FlameFrame":
        vec = np.asarray(vec, dtype=np.float32).ravel()
        if vec.shape[0] <= POSE_DIM:
            raise ContractError(f"vector of {vec.shape[0]} entries is too short")
        return FlameFrame(
            expr=vec[:-POSE_DIM],
            jaw_aa=vec[-POSE_DIM:-3],
            head_aa=vec[-3:],
            capture_ts_us=capture_ts_us,
        )


@dataclass(frozen=True)
class MelFrame:
    """One Mel-cepstral coefficient vector with its capture timestamp."""

    coeffs: np.ndarray
    capture_ts_us: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", _as_f32(self.coeffs, "coeffs"))
        if not np.isfinite(self.coeffs).all():
            raise NumericError("mel coefficients must be finite")


@dataclass(frozen=True)
class ArkitFrame:
    """Retargeted output frame: 52 blendshape weights in [0, 1] (ordered by
    the canonical name table) plus jaw and head x-y-z Euler angles."""

    weights: np.ndarray
    jaw_euler: np.ndarray
    head_euler: np.ndarray
    seq: int
    t_ms: int

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "weights", _as_f32(self.weights, "weights", NUM_BLENDSHAPES)
        )
        object.__setattr__(self, "jaw_euler", _as_f32(self.jaw_euler, "jaw_euler", 3))
        object.__setattr__(
            self, "head_euler", _as_f32(self.head_euler, "head_euler", 3)
        )
        w = self.weights
        if w.min() < 0.0 or w.max() > 1.0:
            raise ContractError("blendshape weights must lie in [0, 1]")
        for name in ("jaw_euler", "head_euler"):
            e = getattr(self, name)
            if (e <= -_PI_F32).any() or (e > _PI_F32).any():
                raise ContractError(f"{name} components must lie in (-pi, pi]")
