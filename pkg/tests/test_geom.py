import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from travmap.errors import ContractError, DataError, ParseError
from travmap.geom import Pose, load_cloud, ply_bytes, save_cloud, transform_cloud

angles = st.floats(-math.pi, math.pi, allow_nan=False)
coords = st.floats(-50, 50, allow_nan=False)


@st.composite
def poses(draw):
    return Pose.from_ypr(draw(angles), draw(angles), draw(angles), (draw(coords), draw(coords), draw(coords)))


def test_identity_pose_leaves_cloud_unchanged(rng):
    pts = rng.normal(size=(50, 3))
    assert np.array_equal(transform_cloud(pts, Pose.identity()), pts)
    assert np.array_equal(transform_cloud(pts, Pose.identity(), "world_to_sensor"), pts)


def test_pure_translation():
    pose = Pose(np.eye(3), (1.0, 0.0, 0.0))
    assert transform_cloud([[0.0, 0.0, 0.0]], pose, "sensor_to_world").tolist() == [[1.0, 0.0, 0.0]]


def test_quarter_yaw_rotates_x_onto_y():
    # analytic rotation matrix for yaw = pi/2
    out = transform_cloud([[1.0, 0.0, 0.0]], Pose.from_ypr(math.pi / 2))
    np.testing.assert_allclose(out, [[0.0, 1.0, 0.0]], atol=1e-12)


def test_non_finite_point_rejects_cloud():
    with pytest.raises(DataError):
        transform_cloud([[0.0, 0.0, 0.0], [np.nan, 0.0, 1.0]], Pose.identity())


def test_improper_rotation_rejected():
    with pytest.raises(ContractError):
        Pose(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ContractError):
        Pose(np.eye(3) * 1.01)


def test_unknown_direction():
    with pytest.raises(ContractError):
        transform_cloud(np.zeros((1, 3)), Pose.identity(), "sideways")


@settings(max_examples=60, deadline=None)
@given(poses(), st.integers(0, 2**31 - 1))
def test_forward_inverse_round_trip(pose, seed):
    pts = np.random.default_rng(seed).uniform(-20, 20, size=(40, 3))
    back = transform_cloud(transform_cloud(pts, pose, "sensor_to_world"), pose, "world_to_sensor")
    np.testing.assert_allclose(back, pts, atol=1e-9, rtol=0)


@settings(max_examples=60, deadline=None)
@given(poses(), st.integers(0, 2**31 - 1))
def test_transform_is_an_isometry(pose, seed):
    pts = np.random.default_rng(seed).uniform(-20, 20, size=(30, 3))
    out = transform_cloud(pts, pose)
    d_in = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    d_out = np.linalg.norm(out[:, None] - out[None], axis=-1)
    np.testing.assert_allclose(d_out, d_in, atol=1e-9, rtol=0)


def test_pose_dict_round_trip():
    p = Pose.from_ypr(0.3, -0.1, 0.2, (1.0, 2.0, 3.0))
    q = Pose.from_dict(p.to_dict())
    assert q == p
    assert Pose.from_dict({"x": 1.0, "yaw": 0.5}).yaw == pytest.approx(0.5)
    assert p.inverse().inverse().translation == pytest.approx(p.translation)


# -- xyz ---------------------------------------------------------------------


def test_empty_xyz(tmp_path):
    f = tmp_path / "a.xyz"
    f.write_text("")
    assert load_cloud(f).shape == (0, 3)


def test_single_xyz_record(tmp_path):
    f = tmp_path / "a.xyz"
    f.write_text("1 2 3\n")
    assert load_cloud(f).tolist() == [[1.0, 2.0, 3.0]]


def test_xyz_comments_and_blank_lines(tmp_path):
    f = tmp_path / "a.xyz"
    f.write_text("# header\n1 2 3\n\n  # indented comment\n4 5 6\n")
    assert load_cloud(f).tolist() == [[1, 2, 3], [4, 5, 6]]


def test_xyz_non_numeric_token_reports_offset(tmp_path):
    f = tmp_path / "a.xyz"
    f.write_text("1 2 3\n4 x 6\n")
    with pytest.raises(ParseError) as exc:
        load_cloud(f)
    assert exc.value.offset == 8


def test_xyz_wrong_arity_is_rejected_not_skipped(tmp_path):
    f = tmp_path / "a.xyz"
    f.write_text("1 2 3\n4 5\n7 8 9\n")
    with pytest.raises(ParseError) as exc:
        load_cloud(f)
    assert exc.value.offset == 6


def test_xyz_nan_is_a_data_error(tmp_path):
    f = tmp_path / "a.xyz"
    f.write_text("1 2 nan\n")
    with pytest.raises(DataError):
        load_cloud(f)


def test_xyz_round_trip_to_nine_digits(tmp_path, rng):
    pts = rng.uniform(-100, 100, size=(500, 3))
    f = tmp_path / "a.xyz"
    save_cloud(pts, f)
    back = load_cloud(f)
    expected = np.array([[float(f"{v:.9g}") for v in row] for row in pts])
    assert np.array_equal(back, expected)
    np.testing.assert_allclose(back, pts, rtol=1e-8)


# -- ply ---------------------------------------------------------------------


@pytest.mark.parametrize("n", [0, 1, 100_000])
def test_ply_round_trip_is_bit_exact(tmp_path, rng, n):
    pts = rng.uniform(-1e3, 1e3, size=(n, 3)).astype(np.float32)
    f = tmp_path / "a.ply"
    save_cloud(pts, f)
    back = load_cloud(f)
    assert back.shape == (n, 3)
    assert np.array_equal(back.astype(np.float32).view(np.uint32), pts.view(np.uint32))


def test_ply_extra_properties_are_discarded(tmp_path):
    dtype = np.dtype([("x", "<f4"), ("intensity", "<f4"), ("y", "<f4"), ("z", "<f4"), ("ring", "<u2")])
    rec = np.zeros(2, dtype=dtype)
    rec["x"], rec["y"], rec["z"] = [1, 4], [2, 5], [3, 6]
    rec["intensity"] = 9
    rec["ring"] = 7
    header = (
        "ply\nformat binary_little_endian 1.0\ncomment made by hand\nelement vertex 2\n"
        "property float x\nproperty float intensity\nproperty float y\nproperty float z\n"
        "property ushort ring\nend_header\n"
    ).encode()
    f = tmp_path / "a.ply"
    f.write_bytes(header + rec.tobytes())
    assert load_cloud(f).tolist() == [[1, 2, 3], [4, 5, 6]]


def test_ply_truncated_payload(tmp_path):
    data = ply_bytes(np.ones((10, 3)))
    f = tmp_path / "a.ply"
    f.write_bytes(data[:-5])
    with pytest.raises(ParseError) as exc:
        load_cloud(f)
    assert exc.value.offset == len(data) - 5


def test_ply_bad_magic(tmp_path):
    f = tmp_path / "a.ply"
    f.write_bytes(b"PLY?\n")
    with pytest.raises(ParseError) as exc:
        load_cloud(f)
    assert exc.value.offset == 0


def test_ply_ascii_format_rejected(tmp_path):
    f = tmp_path / "a.ply"
    f.write_bytes(b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n")
    with pytest.raises(ParseError):
        load_cloud(f)


def test_ply_missing_coordinate(tmp_path):
    f = tmp_path / "a.ply"
    f.write_bytes(b"ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n" + b"\0" * 8)
    with pytest.raises(ParseError):
        load_cloud(f)


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        save_cloud(np.zeros((1, 3)), tmp_path / "missing" / "a.ply")
