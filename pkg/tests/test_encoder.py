import math

import numpy as np
import pytest

from action_images.encoder import (
    Action7,
    EncoderParams,
    encode_frame,
    encode_video,
    render_gaussian,
    semantic_points,
)
from action_images.errors import EncodeError, InvalidArgumentError
from action_images.geometry import CameraTrack, CameraView, Rig, euler_to_matrix, project, rot_z


@pytest.fixture
def front_cam():
    # looks along world +x from x = -1; camera x = world -y, camera y = world -z
    R = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    return CameraView(64.0, 64.0, 32.0, 32.0, R, -R @ [-1.0, 0.0, 0.0], 64, 64, "front")


def test_action_accepts_euler_or_matrix():
    a = Action7([0, 0, 0], [0.1, 0.2, 0.3], 1.0)
    b = Action7.from_euler([0, 0, 0], [0.1, 0.2, 0.3], 1.0)
    np.testing.assert_array_equal(a.rotation, euler_to_matrix([0.1, 0.2, 0.3]))
    np.testing.assert_array_equal(a.rotation, b.rotation)


@pytest.mark.parametrize("g", [-0.01, 1.01, float("nan")])
def test_action_rejects_gripper(g):
    with pytest.raises(InvalidArgumentError):
        Action7([0, 0, 0], np.eye(3), g)


def test_action_rejects_bad_position():
    with pytest.raises(InvalidArgumentError):
        Action7([0, 0, np.inf], np.eye(3), 0.5)


def test_semantic_points_identity_pose():
    pts = semantic_points(Action7([1.0, 2.0, 3.0], np.eye(3), 0.0), ell=0.1)
    np.testing.assert_allclose(pts.pos, [1, 2, 3])
    np.testing.assert_allclose(pts.up, [1.1, 2, 3])
    np.testing.assert_allclose(pts.normal, [1, 2, 2.9])


def test_semantic_points_rotated():
    # yaw 90 degrees: gripper x axis along world y, z axis unchanged
    pts = semantic_points(Action7([0, 0, 0], rot_z(math.pi / 2), 0.0), ell=0.2)
    np.testing.assert_allclose(pts.up, [0, 0.2, 0], atol=1e-15)
    np.testing.assert_allclose(pts.normal, [0, 0, -0.2], atol=1e-15)


def test_semantic_point_distances(rng):
    for _ in range(20):
        a = Action7(rng.normal(size=3), rng.uniform(-3, 3, 3), 0.5)
        p = semantic_points(a, 0.1)
        assert np.linalg.norm(p.up - p.pos) == pytest.approx(0.1)
        assert np.linalg.norm(p.normal - p.pos) == pytest.approx(0.1)
        assert np.dot(p.up - p.pos, p.normal - p.pos) == pytest.approx(0.0, abs=1e-15)


def test_sigma_px():
    assert EncoderParams().sigma_px(512, 256) == pytest.approx(12.8)


@pytest.mark.parametrize("kw", [dict(ell=0.0), dict(sigma_rel=0.0), dict(sigma_rel=1.0), dict(threshold=1.0)])
def test_encoder_params_validation(kw):
    with pytest.raises(InvalidArgumentError):
        EncoderParams(**kw)


def test_render_gaussian_rejects_sigma():
    with pytest.raises(InvalidArgumentError):
        render_gaussian([1, 1], 0.0, 4, 4)


def test_encode_frame_layout(front_cam):
    a = Action7([0, 0, 0], np.eye(3), 0.6)
    f = encode_frame(a, front_cam)
    assert f.shape == (64, 64, 3) and f.dtype == np.float32
    # position at the image center (pixel-center aligned at 32.0 -> between pixels 31 and 32)
    u = project(front_cam, [0, 0, 0])
    np.testing.assert_allclose(u, [32, 32])
    peak = np.unravel_index(np.argmax(f[..., 0]), (64, 64))
    assert peak[0] in (31, 32) and peak[1] in (31, 32)


def test_encode_frame_channels_follow_points(front_cam):
    a = Action7([0, 0, 0], np.eye(3), 0.6)
    f = encode_frame(a, front_cam)
    sigma = 0.05 * 64
    for ch, X in ((0, [0, 0, 0]), (1, [0, 0, -0.1])):
        u = project(front_cam, X)
        jj, ii = np.mgrid[0:64, 0:64]
        expected = np.exp(-((ii + 0.5 - u[0]) ** 2 + (jj + 0.5 - u[1]) ** 2) / (2 * sigma**2))
        np.testing.assert_allclose(f[..., ch], expected, atol=1e-6)


def test_encode_gripper_background(front_cam):
    a = Action7([0, 0, 0], np.eye(3), 0.6)
    ch = encode_frame(a, front_cam)[..., 2]
    low = ch <= np.float32(0.25)
    np.testing.assert_array_equal(ch[low], np.float32(0.15))
    # up = (0.1, 0, 0) sits on the optical axis, so it projects to the pixel corner (32, 32):
    # the nearest centers are half a pixel away on both axes
    sigma = 0.05 * 64
    assert ch.max() == pytest.approx(math.exp(-0.5 / (2 * sigma**2)), rel=1e-6)
    assert ch[31, 31] == ch[32, 32] == ch.max()


def test_encode_behind_camera_names_point(front_cam):
    a = Action7([-1.05, 0, 0], np.eye(3), 0.0)  # behind the camera plane
    with pytest.raises(EncodeError) as err:
        encode_frame(a, front_cam, view="front", t=4)
    assert err.value.point == "pos"
    assert err.value.view == "front" and err.value.t == 4
    assert "t=4" in str(err.value)


def test_encode_video_matches_frames(front_cam):
    rig = Rig([CameraTrack("front", [front_cam])])
    traj = [Action7([0, 0.01 * t, 0], np.eye(3), t / 3) for t in range(4)]
    (video,) = encode_video(traj, rig)
    assert video.shape == (4, 64, 64, 3)
    for t, a in enumerate(traj):
        np.testing.assert_array_equal(video[t], encode_frame(a, front_cam))
