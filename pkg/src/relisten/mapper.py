"""Facial-motion retargeting: global PCA expression space to ARKit.

The FLAME expression basis moves many muscles at once; ARKit blendshapes
are local per-muscle activations. The bridge is a linear global-to-local
matrix whose rows come from artist-annotated ARKit activations at the
extreme values (-3 and +3) of each expression component:

* ``difference`` mode folds both annotated extremes into one row,
  ``row_i = (plus_i - minus_i) / 6``, so an expression value v in [-3, 3]
  linearly interpolates the two annotations (after the output clamp).
* ``positive_only`` mode uses ``row_i = plus_i / 3`` and ignores the
  negative annotation.

A batch of n expression vectors then retargets as one matrix product,
``clamp(F @ GL, 0, 1)``. Jaw and head rotations are converted separately:
axis-angle -> unit quaternion -> intrinsic x-y-z Euler angles.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .arkit import ARKIT_NAME_TO_INDEX, NUM_BLENDSHAPES
from .errors import ContractError, FormatError, NumericError, RelistenError
from .frames import ArkitFrame, POSE_DIM

GL_MAGIC = b"GLM1"

EXTREME_VALUE = 3.0  # annotated expression extremes sit at +-3

# identity shortcut below this rotation angle; sin(x/2)/x is ill-conditioned
_TINY_ANGLE = 1e-12
# |pitch| within this of pi/2 collapses roll into yaw (gimbal lock)
_GIMBAL_EPS = 1e-7


class ValidationError(RelistenError):
    """A mapping table references an unknown blendshape or a bad weight."""


class GLMode(Enum):
    DIFFERENCE = "difference"
    POSITIVE_ONLY = "positive_only"


@dataclass
class ExpressionMapping:
    """Sparse annotations: for (expression index, sign) the ARKit weights
    observed at that extreme. ``rows[(i, '+')] = [(name, weight), ...]``."""

    rows: dict[tuple[int, str], list[tuple[str, float]]] = field(default_factory=dict)

    def add(self, index: int, sign: str, activations: list[tuple[str, float]]) -> None:
        if sign not in ("+", "-"):
            raise ValidationError(f"sign must be '+' or '-', got {sign!r}")
        if index < 0:
            raise ValidationError(f"expression index must be >= 0, got {index}")
        key = (index, sign)
        if key in self.rows:
            raise ValidationError(f"duplicate mapping entry for index {index} sign {sign}")
        for name, weight in activations:
            if name not in ARKIT_NAME_TO_INDEX:
                raise ValidationError(f"unknown blendshape name {name!r}")
            if not 0.0 <= weight <= 1.0:
                raise ValidationError(
                    f"weight for {name!r} must be in [0, 1], got {weight}"
                )
        self.rows[key] = list(activations)

    def max_index(self) -> int:
        return max((i for i, _ in self.rows), default=-1)


def parse_mapping_table(path: str) -> ExpressionMapping:
    """Read the line-oriented mapping table.

    One record per line: ``index sign name=weight name=weight ...`` with
    ``#`` comments, e.g. ``0 + jawOpen=0.9 mouthFunnel=0.2``.
    """
    mapping = ExpressionMapping()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            parts = stripped.split()
            if len(parts) < 3:
                raise ValidationError(
                    f"{path}:{lineno}: expected 'index sign name=weight ...'"
                )
            try:
                index = int(parts[0])
            except ValueError as exc:
                raise ValidationError(
                    f"{path}:{lineno}: bad expression index {parts[0]!r}"
                ) from exc
            activations = []
            for tok in parts[2:]:
                if "=" not in tok:
                    raise ValidationError(f"{path}:{lineno}: expected name=weight, got {tok!r}")
                name, raw = tok.split("=", 1)
                try:
                    weight = float(raw)
                except ValueError as exc:
                    raise ValidationError(
                        f"{path}:{lineno}: bad weight {raw!r} for {name!r}"
                    ) from exc
                activations.append((name, weight))
            try:
                mapping.add(index, parts[1], activations)
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    return mapping


@dataclass(frozen=True)
class GLMatrix:
    """Immutable (expr_dim x 52) transform from expression space to weights."""

    values: np.ndarray
    mode: GLMode

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[1] != NUM_BLENDSHAPES:
            raise ContractError(f"GL matrix must be (F_e, 52), got {vals.shape}")
        if not np.isfinite(vals).all():
            raise NumericError("GL matrix contains non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def expr_dim(self) -> int:
        return self.values.shape[0]


def build_gl(
    mapping: ExpressionMapping, mode: GLMode, expr_dim: int | None = None
) -> GLMatrix:
    """Construct the global-to-local matrix from extreme-expression annotations.

    Expression indices the mapping never mentions produce zero rows.
    """
    if expr_dim is None:
        expr_dim = mapping.max_index() + 1
    if mapping.max_index() >= expr_dim:
        raise ContractError(
            f"mapping index {mapping.max_index()} outside expr_dim={expr_dim}"
        )
    values = np.zeros((expr_dim, NUM_BLENDSHAPES), dtype=np.float64)
    indices = {i for i, _ in mapping.rows}
    for i in indices:
        plus = np.zeros(NUM_BLENDSHAPES)
        minus = np.zeros(NUM_BLENDSHAPES)
        for name, weight in mapping.rows.get((i, "+"), []):
            plus[ARKIT_NAME_TO_INDEX[name]] = weight
        for name, weight in mapping.rows.get((i, "-"), []):
            minus[ARKIT_NAME_TO_INDEX[name]] = weight
        if mode is GLMode.DIFFERENCE:
            values[i] = (plus - minus) / (2.0 * EXTREME_VALUE)
        else:
            values[i] = plus / EXTREME_VALUE
    return GLMatrix(values=values, mode=mode)


def flame_to_arkit(F: np.ndarray, gl: GLMatrix, clamp: bool = True) -> np.ndarray:
    """Batched expression retarget: (n, F_e) -> (n, 52), clamped to [0, 1].

    ``clamp=False`` exposes the raw linear product for diagnostics; streaming
    output always clamps so one frame never depends on its batch neighbours.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 1:
        F = F[None, :]
    if F.shape[1] != gl.expr_dim:
        raise ContractError(
            f"expression batch has {F.shape[1]} columns, GL expects {gl.expr_dim}"
        )
    out = F @ gl.values
    if clamp:
        np.clip(out, 0.0, 1.0, out=out)
    return out


def save_gl(gl: GLMatrix, path: str) -> None:
    """Write magic 'GLM1', u32 F_e, u32 52, mode byte, f32 row-major values."""
    mode_byte = 0 if gl.mode is GLMode.DIFFERENCE else 1
    with open(path, "wb") as fh:
        fh.write(GL_MAGIC)
        fh.write(struct.pack("<IIB", gl.expr_dim, NUM_BLENDSHAPES, mode_byte))
        fh.write(gl.values.astype("<f4").tobytes())


def load_gl(path: str) -> GLMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != GL_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    try:
        expr_dim, cols, mode_byte = struct.unpack_from("<IIB", data, 4)
    except struct.error as exc:
        raise FormatError(f"{path}: truncated header") from exc
    if cols != NUM_BLENDSHAPES:
        raise FormatError(f"{path}: expected 52 columns, header says {cols}")
    body = data[13:]
    expected = expr_dim * cols * 4
    if len(body) != expected:
        raise FormatError(f"{path}: expected {expected} value bytes, got {len(body)}")
    values = np.frombuffer(body, dtype="<f4").reshape(expr_dim, cols).astype(np.float64)
    mode = GLMode.DIFFERENCE if mode_byte == 0 else GLMode.POSITIVE_ONLY
    return GLMatrix(values=values, mode=mode)


@dataclass(frozen=True)
class Quaternion:
    """Unit rotation quaternion, scalar-first (w, x, y, z)."""

    w: float
    x: float
    y: float
    z: float

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=np.float64)


def axis_angle_to_quaternion(aa: np.ndarray) -> Quaternion:
    """Axis-angle (rotation = angle * unit axis) to a unit quaternion.

    The rotation angle is the vector norm; below 1e-12 rad the identity is
    returned. The scalar part is kept non-negative so each rotation has one
    canonical representative of the quaternion double cover.
    """
    aa = np.asarray(aa, dtype=np.float64).ravel()
    if aa.shape != (3,):
        raise ContractError(f"axis-angle must have 3 components, got {aa.shape}")
    if not np.isfinite(aa).all():
        raise NumericError("axis-angle contains non-finite values")
    angle = float(np.linalg.norm(aa))
    if angle < _TINY_ANGLE:
        return Quaternion(1.0, 0.0, 0.0, 0.0)
    half = 0.5 * angle
    s = math.sin(half) / angle
    q = Quaternion(math.cos(half), s * aa[0], s * aa[1], s * aa[2])
    n = q.norm()
    q = Quaternion(q.w / n, q.x / n, q.y / n, q.z / n)
    if q.w < 0.0:
        q = Quaternion(-q.w, -q.x, -q.y, -q.z)
    return q


def quaternion_to_xyz_euler(q: Quaternion) -> np.ndarray:
    """Unit quaternion to intrinsic x-y-z Euler angles, each in (-pi, pi].

    Angles satisfy R = Rx(ex) @ Ry(ey) @ Rz(ez). The pitch asin argument is
    clamped to [-1, 1]; within 1e-7 of gimbal lock the x angle is zeroed and
    the z angle absorbs the remaining in-plane rotation.
    """
    if abs(q.norm() - 1.0) > 1e-6:
        raise ContractError(f"quaternion norm {q.norm():.9f} is not 1")
    w, x, y, z = q.w, q.x, q.y, q.z
    # rotation matrix entries needed for the extraction
    r00 = 1.0 - 2.0 * (y * y + z * z)
    r01 = 2.0 * (x * y - w * z)
    r02 = 2.0 * (x * z + w * y)
    r10 = 2.0 * (x * y + w * z)
    r11 = 1.0 - 2.0 * (x * x + z * z)
    r12 = 2.0 * (y * z - w * x)
    r22 = 1.0 - 2.0 * (x * x + y * y)

    ey = math.asin(max(-1.0, min(1.0, r02)))
    if abs(abs(ey) - 0.5 * math.pi) <= _GIMBAL_EPS:
        ex = 0.0
        ez = math.atan2(r10, r11)
    else:
        ex = math.atan2(-r12, r22)
        ez = math.atan2(-r01, r00)
    out = np.array([ex, ey, ez], dtype=np.float64)
    out[out == -math.pi] = math.pi
    return out


def convert_frames(
    pred: np.ndarray,
    gl: GLMatrix,
    fps: int,
    start_seq: int = 0,
    start_t_ms: float = 0.0,
) -> list[ArkitFrame]:
    """Retarget a batch of predicted vectors (expr + jaw + head axis-angle).

    Expressions go through the batched GL transform; each pose goes through
    quaternion conversion to x-y-z Euler angles. Sequence numbers continue
    from ``start_seq`` and timestamps are laid out at 1000/fps ms spacing
    from ``start_t_ms``.
    """
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim == 1:
        pred = pred[None, :]
    if pred.shape[0] == 0:
        raise ContractError("convert_frames requires a non-empty batch")
    if pred.shape[1] != gl.expr_dim + POSE_DIM:
        raise ContractError(
            f"predicted vectors have {pred.shape[1]} dims, "
            f"expected {gl.expr_dim + POSE_DIM}"
        )
    weights = flame_to_arkit(pred[:, : gl.expr_dim], gl)
    out: list[ArkitFrame] = []
    period_ms = 1000.0 / fps
    for k in range(pred.shape[0]):
        jaw = quaternion_to_xyz_euler(axis_angle_to_quaternion(pred[k, -6:-3]))
        head = quaternion_to_xyz_euler(axis_angle_to_quaternion(pred[k, -3:]))
        out.append(
            ArkitFrame(
                weights=weights[k],
                jaw_euler=jaw,
                head_euler=head,
                seq=start_seq + k,
                t_ms=round(start_t_ms + k * period_ms),
            )
        )
    return out
