import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrident import quat
from vrident.preprocess import (BodyRelativeFrame, FeatureStream, body_relative,
                                body_relative_arrays, derivatives, make_windows,
                                preprocess_recording, read_feature_file, resample, slerp,
                                write_feature_file)
from vrident.telemetry import DevicePose, PoseFrame

from conftest import make_recording, random_unit_quats


def test_slerp_identical_endpoints(rng):
    q = random_unit_quats(rng, 5)
    for u in (0.0, 0.3, 1.0):
        out = slerp(q, q, np.full(5, u))
        np.testing.assert_allclose(np.abs(np.sum(out * q, axis=1)), 1.0, atol=1e-12)


def test_slerp_endpoint_zero(rng):
    q0, q1 = random_unit_quats(rng, 5), random_unit_quats(rng, 5)
    np.testing.assert_allclose(slerp(q0, q1, np.zeros(5)), q0, atol=1e-12)


def test_slerp_geodesic_midpoint():
    out = slerp(quat.IDENTITY, quat.about_y(np.pi / 2), 0.5)
    np.testing.assert_allclose(out, quat.about_y(np.pi / 4), atol=1e-12)


def test_slerp_flips_to_short_arc():
    q1 = -quat.about_y(np.pi / 2)
    out = slerp(quat.IDENTITY, q1, 0.5)
    assert quat.angle_between(out, quat.about_y(np.pi / 4)) < 1e-9


def test_slerp_nearly_parallel_falls_back():
    q1 = quat.about_y(1e-6)
    out = slerp(quat.IDENTITY, q1, 0.5)
    assert np.all(np.isfinite(out))
    assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), u=st.floats(0, 1))
def test_slerp_constant_angular_rate(seed, u):
    r = np.random.default_rng(seed)
    q0, q1 = random_unit_quats(r, 2)
    out = slerp(q0, q1, u)
    total = quat.angle_between(q0, q1)
    assert quat.angle_between(q0, out) == pytest.approx(u * total, abs=1e-6)


def test_resample_on_grid_is_identity(rng):
    n = 30
    t = np.arange(n) / 30
    pos = rng.normal(size=(n, 3, 3))
    q = random_unit_quats(rng, 3 * n).reshape(n, 3, 4)
    rec = make_recording(t, pos, q)
    out = resample(rec, 30.0)
    np.testing.assert_allclose(out.t, t, atol=1e-12)
    np.testing.assert_allclose(out.positions, pos, atol=1e-12)
    dots = np.abs(np.sum(out.orientations * q, axis=2))
    np.testing.assert_allclose(dots, 1.0, atol=1e-12)


def test_resample_linear_position():
    t = np.arange(91) / 90
    pos = np.zeros((91, 3, 3))
    pos[:, :, 0] = t[:, None]
    out = resample(make_recording(t, pos), 30.0)
    assert len(out) == 31
    np.testing.assert_allclose(out.positions[:, 1, 0], np.arange(31) / 30, atol=1e-12)


def test_resample_constant_rotation_three_degrees():
    t = np.arange(181) / 90
    ang = np.radians(90.0) * t
    q = np.repeat(quat.about_y(ang)[:, None, :], 3, axis=1)
    out = resample(make_recording(t, orientations=q), 30.0)
    step = quat.multiply(out.orientations[1:, 0], quat.conjugate(out.orientations[:-1, 0]))
    np.testing.assert_allclose(step, np.tile(quat.about_y(np.radians(3.0)), (len(step), 1)),
                               atol=1e-9)


def test_resample_segments_at_gaps():
    t = np.concatenate([np.arange(45) / 90, 2.0 + np.arange(45) / 90])
    diags = []
    out = resample(make_recording(t), 30.0, diagnostics=diags)
    assert np.all(np.diff(out.t) > 0)
    assert out.t[15] == pytest.approx(2.0)
    assert diags == []


def _frame(head_p, head_q, left_p, right_p, left_q=quat.IDENTITY, right_q=quat.IDENTITY):
    return PoseFrame(0.0, DevicePose(np.asarray(head_p, float), np.asarray(head_q, float)),
                     DevicePose(np.asarray(left_p, float), np.asarray(left_q, float)),
                     DevicePose(np.asarray(right_p, float), np.asarray(right_q, float)))


def test_body_relative_canonical_rig():
    f = _frame([0, 0, 0], quat.IDENTITY, [-0.2, -0.4, -0.3], [0.2, -0.4, -0.3])
    br, yaw = body_relative(f)
    assert yaw == 0.0
    np.testing.assert_allclose(br.left_pos, [-0.2, -0.4, -0.3])
    np.testing.assert_allclose(br.right_pos, [0.2, -0.4, -0.3])
    np.testing.assert_allclose(br.head_q, quat.IDENTITY)
    assert br.as_vector().shape == (18,)


def test_body_relative_head_facing_plus_x():
    head_q = quat.about_y(-np.pi / 2)
    np.testing.assert_allclose(quat.rotate(head_q, [0, 0, -1]), [1, 0, 0], atol=1e-12)
    head = np.array([0.3, 1.6, -2.0])
    f = _frame(head, head_q, head + [0, -0.3, 0.4], head + [1, -0.3, 0])
    br, _ = body_relative(f)
    np.testing.assert_allclose(br.right_pos, [0, -0.3, -1], atol=1e-12)


def test_body_relative_translation_and_yaw_invariance(rng):
    P = rng.normal(size=(50, 3, 3))
    Q = random_unit_quats(rng, 150).reshape(50, 3, 4)
    base, _ = body_relative_arrays(P, Q)
    g = quat.about_y(np.pi / 2)
    P2 = quat.rotate(g, P) + np.array([5, 0.2, 3])
    Q2 = quat.multiply(g, Q)
    moved, _ = body_relative_arrays(P2, Q2)
    np.testing.assert_allclose(moved, base, atol=1e-9)


def test_body_relative_head_yaw_removed(rng):
    P = rng.normal(size=(100, 3, 3))
    Q = random_unit_quats(rng, 300).reshape(100, 3, 4)
    out, _ = body_relative_arrays(P, Q)
    fwd = quat.rotate(out[:, 14:18], [0, 0, -1])
    ok = np.hypot(fwd[:, 0], fwd[:, 2]) > 1e-3
    yaw = np.arctan2(-fwd[ok, 0], -fwd[ok, 2])
    assert np.max(np.abs(yaw)) < 1e-6


def test_body_relative_degenerate_forward_reuses_previous_yaw():
    up = quat.from_axis_angle([1, 0, 0], np.pi / 2)  # looking straight up
    f = _frame([0, 0, 0], up, [0, 0, -1], [1, 0, 0])
    _, yaw = body_relative(f, prev_yaw=0.7)
    assert yaw == 0.7
    _, yaw = body_relative(f)
    assert yaw == 0.0


def test_vector_round_trip():
    v = np.arange(18, dtype=float)
    np.testing.assert_array_equal(BodyRelativeFrame.from_vector(v).as_vector(), v)


def test_derivatives_constant_stream_zero():
    v = np.tile(np.r_[np.arange(14.0), quat.IDENTITY], (10, 1))
    out = derivatives(v, 30.0)
    assert out.shape == (8, 36)
    assert np.all(out == 0)


def test_derivatives_alternating_sign_quaternion():
    q = quat.about_y(0.3)
    v = np.zeros((6, 18))
    v[:, 14:18] = q * np.array([1, -1, 1, -1, 1, -1])[:, None]
    out = derivatives(v, 30.0)
    assert np.all(out == 0)


def test_derivatives_linear_position():
    v = np.zeros((10, 18))
    v[:, 0] = 0.1 * np.arange(10)
    out = derivatives(v, 30.0)
    np.testing.assert_allclose(out[:, 0], 3.0, atol=1e-12)
    np.testing.assert_allclose(out[:, 18], 0.0, atol=1e-9)


def test_derivatives_accepts_frames():
    frames = [BodyRelativeFrame.from_vector(np.full(18, k, float)) for k in range(4)]
    out = derivatives(frames, 30.0)
    np.testing.assert_allclose(out[:, :18], 30.0)


def test_derivatives_too_short():
    with pytest.raises(ValueError):
        derivatives(np.zeros((2, 18)))


@pytest.mark.parametrize("frames, mode, expected", [
    (870, "train", 0), (870, "infer", 0), (2850, "train", 3), (1800, "infer", 31),
    (900, "train", 1), (900, "infer", 1),
])
def test_window_counts(frames, mode, expected):
    w = make_windows(np.zeros((frames, 36)), mode)
    assert len(w) == expected
    assert all(x.data.shape == (900, 36) for x in w)


def test_window_start_times_and_views():
    data = np.arange(2000 * 36, dtype=float).reshape(2000, 36)
    s = FeatureStream("p", 2, 10.0, data)
    w = make_windows(s, "infer")
    assert w[1].start_t == pytest.approx(11.0)
    assert w[1].participant_id == "p" and w[1].session_index == 2
    np.testing.assert_array_equal(w[1].data, data[30:930])
    assert np.shares_memory(w[1].data, data)


def test_window_bad_mode():
    with pytest.raises(ValueError):
        make_windows(np.zeros((1000, 36)), "both")


def test_stream_between():
    s = FeatureStream("p", 1, 1.0, np.zeros((300, 36)))
    sub = s.between(2.0, 4.0)
    assert len(sub) == 60 and sub.start_t == pytest.approx(2.0)
    assert len(s.between(-5, 100)) == 300
    assert len(s.between(50, 60)) == 0


def test_preprocess_recording_pipeline(rng):
    n = 90 * 40
    t = np.arange(n) / 90
    P = np.cumsum(rng.normal(scale=1e-3, size=(n, 3, 3)), axis=0)
    q = np.tile(quat.IDENTITY, (n, 3, 1))
    streams = preprocess_recording(make_recording(t, P, q))
    assert len(streams) == 1
    s = streams[0]
    assert s.data.shape == (30 * 40 - 2, 36)
    assert s.start_t == pytest.approx(2 / 30)
    assert np.all(np.isfinite(s.data))
    w = make_windows(s, "train")
    assert len(w) == 1 and w[0].data.shape == (900, 36)


def test_feature_file_round_trip(tmp_path, rng):
    blocks = [FeatureStream("p", 3, 0.5, rng.normal(size=(40, 36))),
              FeatureStream("p", 3, 9.0, rng.normal(size=(7, 36)))]
    path = write_feature_file(tmp_path / "f.f32", blocks, "p", 3)
    header, back = read_feature_file(path)
    assert header["frames"] == [40, 7] and header["channels"] == 36
    assert [b.start_t for b in back] == [0.5, 9.0]
    np.testing.assert_array_equal(back[0].data, blocks[0].data.astype("<f4"))
