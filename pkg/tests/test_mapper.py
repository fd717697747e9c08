import math

import numpy as np
import pytest

from relisten.arkit import ARKIT_NAME_TO_INDEX
from relisten.errors import ContractError
from relisten.mapper import (
    ExpressionMapping,
    GLMatrix,
    GLMode,
    Quaternion,
    ValidationError,
    axis_angle_to_quaternion,
    build_gl,
    convert_frames,
    flame_to_arkit,
    load_gl,
    parse_mapping_table,
    quaternion_to_xyz_euler,
    save_gl,
)

JAW_OPEN = ARKIT_NAME_TO_INDEX["jawOpen"]
MOUTH_CLOSE = ARKIT_NAME_TO_INDEX["mouthClose"]


def rodrigues_matrix(aa):
    """Independent axis-angle -> rotation matrix (Rodrigues), no quaternions."""
    aa = np.asarray(aa, dtype=np.float64)
    angle = np.linalg.norm(aa)
    if angle < 1e-300:
        return np.eye(3)
    k = aa / angle
    K = np.array(
        [[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]], dtype=np.float64
    )
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * (K @ K)


def euler_xyz_matrix(e):
    """Intrinsic x-y-z Euler angles -> rotation matrix: Rx @ Ry @ Rz."""
    ca, sa = math.cos(e[0]), math.sin(e[0])
    cb, sb = math.cos(e[1]), math.sin(e[1])
    cg, sg = math.cos(e[2]), math.sin(e[2])
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cg, -sg, 0], [sg, cg, 0], [0, 0, 1]])
    return rx @ ry @ rz


def quat_matrix(q):
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


class TestBuildGL:
    def test_empty_mapping_zero_matrix(self):
        gl = build_gl(ExpressionMapping(), GLMode.DIFFERENCE, expr_dim=100)
        assert gl.values.shape == (100, 52)
        assert not gl.values.any()

    def test_positive_only_scaling(self):
        m = ExpressionMapping()
        m.add(0, "+", [("jawOpen", 0.9)])
        gl = build_gl(m, GLMode.POSITIVE_ONLY, expr_dim=1)
        assert gl.values[0, JAW_OPEN] == pytest.approx(0.3)
        row = gl.values[0].copy()
        row[JAW_OPEN] = 0.0
        assert not row.any()

    def test_difference_mode_folds_extremes(self):
        m = ExpressionMapping()
        m.add(0, "+", [("jawOpen", 0.9)])
        m.add(0, "-", [("mouthClose", 0.6)])
        gl = build_gl(m, GLMode.DIFFERENCE, expr_dim=1)
        assert gl.values[0, JAW_OPEN] == pytest.approx(0.15)
        assert gl.values[0, MOUTH_CLOSE] == pytest.approx(-0.10)

    def test_unknown_name_rejected_by_name(self):
        m = ExpressionMapping()
        with pytest.raises(ValidationError, match="jawOpeen"):
            m.add(0, "+", [("jawOpeen", 0.5)])

    def test_duplicate_entry_rejected(self):
        m = ExpressionMapping()
        m.add(0, "+", [("jawOpen", 0.5)])
        with pytest.raises(ValidationError):
            m.add(0, "+", [("jawOpen", 0.6)])

    def test_weight_out_of_range_rejected(self):
        m = ExpressionMapping()
        with pytest.raises(ValidationError):
            m.add(0, "+", [("jawOpen", 1.5)])


class TestMappingTable:
    def test_parse_and_build(self, tmp_path):
        p = tmp_path / "map.txt"
        p.write_text(
            "# demo table\n"
            "0 + jawOpen=0.9 mouthFunnel=0.2\n"
            "0 - mouthClose=0.6\n"
            "2 + browInnerUp=0.8\n"
        )
        mapping = parse_mapping_table(str(p))
        gl = build_gl(mapping, GLMode.DIFFERENCE)
        assert gl.expr_dim == 3
        assert gl.values[0, JAW_OPEN] == pytest.approx(0.15)
        assert not gl.values[1].any()

    def test_parse_error_reports_line(self, tmp_path):
        p = tmp_path / "map.txt"
        p.write_text("0 + notAShape=0.5\n")
        with pytest.raises(ValidationError, match="notAShape"):
            parse_mapping_table(str(p))


class TestFlameToArkit:
    def _gl_1x1(self):
        values = np.zeros((1, 52))
        values[0, JAW_OPEN] = 0.3
        return GLMatrix(values=values, mode=GLMode.POSITIVE_ONLY)

    def test_zero_input_zero_output(self):
        gl = build_gl(ExpressionMapping(), GLMode.DIFFERENCE, expr_dim=10)
        out = flame_to_arkit(np.zeros((4, 10)), gl)
        assert out.shape == (4, 52)
        assert not out.any()

    def test_product_and_clamp(self):
        gl = self._gl_1x1()
        assert flame_to_arkit(np.array([[3.0]]), gl)[0, JAW_OPEN] == pytest.approx(0.9)
        assert flame_to_arkit(np.array([[-3.0]]), gl)[0, JAW_OPEN] == 0.0

    def test_output_always_in_unit_interval(self):
        rng = np.random.default_rng(0)
        gl = GLMatrix(values=rng.normal(size=(20, 52)), mode=GLMode.DIFFERENCE)
        out = flame_to_arkit(rng.normal(scale=5.0, size=(100, 20)), gl)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_preclamp_linearity(self):
        rng = np.random.default_rng(1)
        gl = GLMatrix(values=rng.normal(size=(8, 52)), mode=GLMode.DIFFERENCE)
        f1 = rng.normal(size=(5, 8))
        f2 = rng.normal(size=(5, 8))
        a, b = 2.5, -1.25
        lhs = flame_to_arkit(a * f1 + b * f2, gl, clamp=False)
        rhs = a * flame_to_arkit(f1, gl, clamp=False) + b * flame_to_arkit(
            f2, gl, clamp=False
        )
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_dimension_mismatch(self):
        gl = self._gl_1x1()
        with pytest.raises(ContractError):
            flame_to_arkit(np.zeros((2, 7)), gl)


class TestGLFile:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        gl = GLMatrix(
            values=rng.normal(size=(16, 52)).astype(np.float32).astype(np.float64),
            mode=GLMode.DIFFERENCE,
        )
        p = tmp_path / "gl.bin"
        save_gl(gl, str(p))
        loaded = load_gl(str(p))
        assert loaded.mode is GLMode.DIFFERENCE
        np.testing.assert_array_equal(loaded.values, gl.values)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "gl.bin"
        p.write_bytes(b"NOPE" + b"\x00" * 16)
        from relisten.errors import FormatError

        with pytest.raises(FormatError):
            load_gl(str(p))


class TestAxisAngleToQuaternion:
    def test_zero_is_identity(self):
        q = axis_angle_to_quaternion(np.zeros(3))
        assert (q.w, q.x, q.y, q.z) == (1.0, 0.0, 0.0, 0.0)

    def test_half_pi_about_x(self):
        q = axis_angle_to_quaternion(np.array([math.pi / 2, 0.0, 0.0]))
        assert q.w == pytest.approx(math.cos(math.pi / 4), abs=1e-12)
        assert q.x == pytest.approx(math.sin(math.pi / 4), abs=1e-12)
        assert q.y == 0.0 and q.z == 0.0

    def test_unit_norm_sweep(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            aa = rng.normal(size=3)
            aa *= rng.uniform(0, 2.5) / np.linalg.norm(aa)
            q = axis_angle_to_quaternion(aa)
            assert abs(q.norm() - 1.0) < 1e-9
            assert q.w >= 0.0

    def test_matches_rodrigues(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            aa = rng.normal(size=3)
            aa *= rng.uniform(0, 2.5) / np.linalg.norm(aa)
            err = np.linalg.norm(quat_matrix(axis_angle_to_quaternion(aa)) - rodrigues_matrix(aa))
            assert err < 1e-12

    def test_non_finite_rejected(self):
        from relisten.errors import NumericError

        with pytest.raises(NumericError):
            axis_angle_to_quaternion(np.array([np.nan, 0.0, 0.0]))


class TestQuaternionToEuler:
    def test_identity(self):
        e = quaternion_to_xyz_euler(Quaternion(1.0, 0.0, 0.0, 0.0))
        assert not e.any()

    def test_single_axis(self):
        q = axis_angle_to_quaternion(np.array([math.pi / 2, 0.0, 0.0]))
        e = quaternion_to_xyz_euler(q)
        np.testing.assert_allclose(e, [math.pi / 2, 0.0, 0.0], atol=1e-12)

    def test_non_unit_rejected(self):
        with pytest.raises(ContractError):
            quaternion_to_xyz_euler(Quaternion(1.0, 0.1, 0.0, 0.0))

    def test_roundtrip_against_matrix_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(2000):
            aa = rng.normal(size=3)
            aa *= rng.uniform(0, 2.5) / np.linalg.norm(aa)
            ref = rodrigues_matrix(aa)
            e = quaternion_to_xyz_euler(axis_angle_to_quaternion(aa))
            assert np.linalg.norm(euler_xyz_matrix(e) - ref) < 1e-9
            assert (e > -math.pi).all() and (e <= math.pi).all()

    def test_gimbal_lock_roll_zeroed(self):
        # a pure +pi/2 pitch rotation composed with roll: the extraction
        # must put everything into pitch and yaw, never roll
        q = axis_angle_to_quaternion(np.array([0.0, math.pi / 2, 0.0]))
        e = quaternion_to_xyz_euler(q)
        assert e[0] == 0.0
        assert e[1] == pytest.approx(math.pi / 2, abs=1e-9)
        ref = rodrigues_matrix(np.array([0.0, math.pi / 2, 0.0]))
        assert np.linalg.norm(euler_xyz_matrix(e) - ref) < 1e-9


class TestConvertFrames:
    def _gl(self, expr_dim=4):
        m = ExpressionMapping()
        m.add(0, "+", [("jawOpen", 0.9)])
        m.add(1, "+", [("mouthSmileLeft", 0.6), ("mouthSmileRight", 0.6)])
        return build_gl(m, GLMode.DIFFERENCE, expr_dim=expr_dim)

    def test_zero_batch(self):
        gl = self._gl()
        frames = convert_frames(np.zeros((3, 10)), gl, fps=30)
        assert len(frames) == 3
        for f in frames:
            assert not f.weights.any()
            assert not f.jaw_euler.any()
            assert not f.head_euler.any()

    def test_timing_and_seq(self):
        gl = self._gl()
        batch = np.zeros((32, 10))
        frames = convert_frames(batch, gl, fps=30, start_seq=100, start_t_ms=1000.0)
        assert len(frames) == 32
        for k, f in enumerate(frames):
            assert f.seq == 100 + k
            assert abs(f.t_ms - (1000.0 + k * 1000.0 / 30)) <= 0.5

    def test_weights_clamped(self):
        gl = self._gl()
        rng = np.random.default_rng(6)
        batch = rng.normal(scale=4.0, size=(16, 10))
        batch[:, -6:] *= 0.1  # keep rotations in range
        frames = convert_frames(batch, gl, fps=30)
        for f in frames:
            assert f.weights.min() >= 0.0 and f.weights.max() <= 1.0

    def test_empty_batch_rejected(self):
        with pytest.raises(ContractError):
            convert_frames(np.zeros((0, 10)), self._gl(), fps=30)
