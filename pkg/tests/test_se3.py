import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from glovehand import se3
from glovehand.se3 import (Pose, Twist, integrate_twist, null_space_basis, pseudoinverse, quat_from_rotation,
                           rodrigues_exp, rotation_from_quat, rotation_log, screw_between_poses, skew,
                           twist_from_linear_first, twist_to_linear_first)

from conftest import random_rotvec

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec3 = arrays(float, 3, elements=finite)


def quat_exp_oracle(v):
    """Rotation matrix through the quaternion exponential (independent of
    the Rodrigues formula)."""
    th = np.linalg.norm(v)
    q = np.concatenate([[np.cos(th / 2)], np.sin(th / 2) * v / th])
    w, x, y, z = q
    return np.array([
        [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z]])


def test_skew_examples():
    np.testing.assert_array_equal(skew([1, 2, 3]), [[0, -3, 2], [3, 0, -1], [-2, 1, 0]])
    np.testing.assert_array_equal(skew([0, 0, 0]), np.zeros((3, 3)))
    r = np.array([0.3, -1.2, 0.5])
    np.testing.assert_allclose(skew(r) @ r, 0.0, atol=1e-15)


@given(vec3, vec3)
def test_skew_is_cross_product(a, b):
    np.testing.assert_allclose(skew(a) @ b, np.cross(a, b), atol=1e-12)
    np.testing.assert_allclose(se3.unskew(skew(a)), a)


def test_rodrigues_examples():
    np.testing.assert_array_equal(rodrigues_exp([0, 0, 0]), np.eye(3))
    np.testing.assert_allclose(rodrigues_exp([0, 0, np.pi / 2]), [[0, -1, 0], [1, 0, 0], [0, 0, 1]],
                               atol=1e-15)
    R = rodrigues_exp([0.2, -0.1, 0.3])
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-14)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(R, quat_exp_oracle(np.array([0.2, -0.1, 0.3])), atol=1e-12)


def test_rodrigues_tiny_angle_is_orthonormal():
    R = rodrigues_exp([1e-12, -2e-12, 5e-13])
    assert se3.is_rotation(R, 1e-14)


def test_log_examples():
    np.testing.assert_array_equal(rotation_log(np.eye(3)), np.zeros(3))
    np.testing.assert_allclose(rotation_log([[0, -1, 0], [1, 0, 0], [0, 0, 1]]), [0, 0, np.pi / 2],
                               atol=1e-15)


def test_log_rejects_non_rotation():
    with pytest.raises(ValueError):
        rotation_log(np.diag([1.0, 1.0, -1.0]))


def test_exp_log_round_trip(rng):
    for _ in range(1000):
        v = random_rotvec(rng)
        assert np.linalg.norm(rotation_log(rodrigues_exp(v)) - v) <= 1e-9


def test_log_near_pi():
    v = np.array([1.0, 2.0, -0.5])
    v = v / np.linalg.norm(v) * (np.pi - 1e-7)
    np.testing.assert_allclose(rodrigues_exp(rotation_log(rodrigues_exp(v))), rodrigues_exp(v), atol=1e-9)


@given(arrays(float, 3, elements=st.floats(-3, 3)))
def test_quaternion_round_trip(v):
    R = rodrigues_exp(v)
    np.testing.assert_allclose(rotation_from_quat(quat_from_rotation(R)), R, atol=1e-12)


def test_screw_examples():
    T = Pose.from_rotvec([0.1, 0.2, 0.3], [1, 2, 3])
    tw = screw_between_poses(T, T, 0.7)
    np.testing.assert_array_equal(tw.vector(), np.zeros(6))
    tw = screw_between_poses(Pose(), Pose(np.eye(3), [1, 0, 0]), 1.0)
    np.testing.assert_array_equal(tw.angular, np.zeros(3))
    np.testing.assert_array_equal(tw.linear, [1, 0, 0])


def test_screw_round_trip_and_inverse(rng):
    for _ in range(50):
        A = Pose.from_rotvec(random_rotvec(rng, hi=3.0), rng.normal(size=3))
        B = Pose.from_rotvec(random_rotvec(rng, hi=3.0), rng.normal(size=3))
        T = rng.uniform(0.1, 2.0)
        tw = screw_between_poses(A, B, T)
        C = integrate_twist(A, tw, T)
        np.testing.assert_allclose(C.matrix(), B.matrix(), atol=1e-9)
        back = screw_between_poses(B, A, T)
        np.testing.assert_allclose(back.linear, -tw.linear, atol=1e-12)
        # the reverse rotation is exp(-w T) expressed at B, same world axis
        np.testing.assert_allclose(back.angular, -tw.angular, atol=1e-9)


def test_screw_rejects_bad_duration():
    with pytest.raises(ValueError):
        screw_between_poses(Pose(), Pose(), 0.0)


def test_linear_first_converters():
    x = np.arange(6.0)
    np.testing.assert_array_equal(twist_to_linear_first(x), [3, 4, 5, 0, 1, 2])
    np.testing.assert_array_equal(twist_from_linear_first(twist_to_linear_first(x)), x)
    np.testing.assert_array_equal(Twist.from_vector(x).vector(), x)


def test_pose_algebra(rng):
    A = Pose.from_rotvec(random_rotvec(rng), rng.normal(size=3))
    np.testing.assert_allclose((A @ A.inverse()).matrix(), np.eye(4), atol=1e-12)
    p = rng.normal(size=3)
    np.testing.assert_allclose(A.transform_point(p), (A.matrix() @ np.append(p, 1))[:3])
    with pytest.raises(ValueError):
        Pose(2 * np.eye(3))


def test_pseudoinverse_examples():
    np.testing.assert_array_equal(pseudoinverse(np.eye(4)), np.eye(4))
    np.testing.assert_array_equal(pseudoinverse(np.diag([1.0, 0.0])), np.diag([1.0, 0.0]))
    np.testing.assert_array_equal(pseudoinverse(np.zeros((2, 3))), np.zeros((3, 2)))


def _mp_residuals(A, P):
    def rel(X, Y):
        return np.linalg.norm(X - Y) / max(np.linalg.norm(Y), 1e-300)
    return (rel(A @ P @ A, A), rel(P @ A @ P, P), rel((A @ P).T, A @ P), rel((P @ A).T, P @ A))


def test_moore_penrose_random_6x12(rng):
    A = rng.normal(size=(6, 12))
    assert max(_mp_residuals(A, pseudoinverse(A))) <= 1e-9


@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**31 - 1))
def test_moore_penrose_rank_deficient(m, n, seed):
    r = np.random.default_rng(seed)
    k = r.integers(0, min(m, n) + 1)
    A = r.normal(size=(m, k)) @ r.normal(size=(k, n))
    P = pseudoinverse(A)
    if np.linalg.norm(A) == 0:
        np.testing.assert_array_equal(P, 0.0)
        return
    assert max(_mp_residuals(A, P)) <= 1e-9


def test_null_space_examples():
    assert null_space_basis(np.eye(3) + 0.1).shape == (3, 0)
    N = null_space_basis([[1.0, 0.0, 0.0]])
    assert N.shape == (3, 2)
    np.testing.assert_allclose(N.T @ N, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(np.array([[1.0, 0, 0]]) @ N, 0.0, atol=1e-15)


@given(st.integers(1, 6), st.integers(1, 9), st.integers(0, 2**31 - 1))
def test_null_space_orthogonal_to_rows(m, n, seed):
    A = np.random.default_rng(seed).normal(size=(m, n))
    N = null_space_basis(A)
    assert N.shape[1] == n - np.linalg.matrix_rank(A)
    assert np.all(np.abs(A @ N) <= 1e-10)
    np.testing.assert_allclose(N.T @ N, np.eye(N.shape[1]), atol=1e-12)


def test_pinv_and_null_agree(rng):
    A = rng.normal(size=(6, 9))
    P, N = se3.pinv_and_null(A)
    np.testing.assert_array_equal(P, pseudoinverse(A))
    np.testing.assert_array_equal(N, null_space_basis(A))


def test_rank_tolerance_setting():
    old = se3.RANK_RTOL
    try:
        se3.set_rank_tolerance(1e-3)
        A = np.diag([1.0, 1e-5])
        assert null_space_basis(A).shape == (2, 1)
        with pytest.raises(ValueError):
            se3.set_rank_tolerance(-1.0)
    finally:
        se3.set_rank_tolerance(old)


def test_svd_rejects_non_finite():
    with pytest.raises(ValueError):
        pseudoinverse([[np.nan, 1.0]])


def test_integrate_twist_stays_orthonormal(rng):
    T = Pose()
    tw = Twist(rng.normal(size=3), rng.normal(size=3))
    for _ in range(500):
        T = integrate_twist(T, tw, 0.01)
    assert se3.is_rotation(T.rotation, 1e-12)
    np.testing.assert_allclose(T.rotation, rodrigues_exp(tw.angular * 5.0), atol=1e-9)
