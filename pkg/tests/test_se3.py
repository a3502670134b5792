"""SE(3) type and operation tests: group axioms, exp/log, metric laws."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajfuse.errors import ValidationError
from trajfuse.se3 import (
    Pose,
    Rotation,
    Twist,
    compose,
    exp_se3,
    exp_so3,
    inverse,
    log_se3,
    log_so3,
    rotation_angle_between,
)

from helpers import (
    assert_pose_close,
    expm_oracle,
    random_pose,
    random_rotation,
    random_twist,
)


class TestConstruction:
    def test_quaternion_renormalized(self):
        r = Rotation((2.0, 0.0, 0.0, 0.0))
        assert abs(np.linalg.norm(r.q) - 1.0) < 1e-12

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            Rotation((np.nan, 0, 0, 1))
        with pytest.raises(ValidationError):
            Pose(Rotation.identity(), (np.inf, 0, 0))
        with pytest.raises(ValidationError):
            exp_se3(Twist((0, 0, np.nan), (0, 0, 0)))

    def test_matrix_roundtrip(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            r = random_rotation(rng)
            r2 = Rotation.from_matrix(r.matrix())
            assert rotation_angle_between(r, r2) < 1e-12

    def test_matrix_roundtrip_near_pi(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            r = exp_so3(axis * (np.pi - 1e-7))
            r2 = Rotation.from_matrix(r.matrix())
            assert rotation_angle_between(r, r2) < 1e-9


class TestExpLog:
    def test_zero_twist_is_identity(self):
        p = exp_se3(Twist(np.zeros(3), np.zeros(3)))
        assert_pose_close(p, Pose.identity(), 0.0, 0.0)

    def test_quarter_turn_about_z(self):
        p = exp_se3(Twist(np.zeros(3), (0.0, 0.0, np.pi / 2)))
        want = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]], dtype=float)
        assert np.abs(p.rotation.matrix() - want).max() < 1e-12
        assert np.linalg.norm(p.translation) == 0.0

    def test_exp_matches_matrix_exponential(self):
        # oracle: numerical 4x4 matrix exponential (scaling-and-squaring)
        rng = np.random.default_rng(13)
        for _ in range(100):
            xi = random_twist(rng)
            got = exp_se3(xi).matrix()
            want = expm_oracle(xi.vector())
            assert np.abs(got - want).max() < 1e-9

    def test_identity_log_is_zero(self):
        xi = log_se3(Pose.identity())
        assert np.linalg.norm(xi.vector()) == 0.0

    def test_half_turn_about_x(self):
        p = exp_se3(Twist(np.zeros(3), (np.pi, 0.0, 0.0)))
        xi = log_se3(p)
        # at pi the sign of the axis is conventional; compare modulo it
        assert min(np.linalg.norm(xi.phi - (np.pi, 0, 0)),
                   np.linalg.norm(xi.phi + (np.pi, 0, 0))) < 1e-9

    def test_exp_log_roundtrip_twists(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            xi = random_twist(rng, max_angle=np.pi - 1e-3)
            back = log_se3(exp_se3(xi))
            assert np.abs(back.vector() - xi.vector()).max() < 1e-9

    def test_log_exp_roundtrip_poses(self):
        rng = np.random.default_rng(15)
        for _ in range(100):
            p = random_pose(rng)
            back = exp_se3(log_se3(p))
            assert_pose_close(back, p, 1e-9, 1e-9)


class TestGroupOps:
    def test_compose_with_identity(self):
        rng = np.random.default_rng(16)
        p = random_pose(rng)
        assert_pose_close(compose(p, Pose.identity()), p, 0.0, 0.0)
        assert_pose_close(compose(Pose.identity(), p), p, 1e-15, 1e-15)

    def test_compose_inverse_is_identity(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            p = random_pose(rng)
            assert_pose_close(compose(p, inverse(p)), Pose.identity(),
                              1e-10, 1e-10)
            assert_pose_close(compose(inverse(p), p), Pose.identity(),
                              1e-10, 1e-10)

    def test_associativity(self):
        rng = np.random.default_rng(18)
        for _ in range(100):
            a, b, c = (random_pose(rng) for _ in range(3))
            left = compose(compose(a, b), c)
            right = compose(a, compose(b, c))
            assert_pose_close(left, right, 1e-10, 1e-10)

    def test_compose_order_applies_b_first(self):
        a = Pose(exp_so3((0, 0, np.pi / 2)).q, (1.0, 0.0, 0.0))
        b = Pose(Rotation.identity(), (0.0, 2.0, 0.0))
        x = np.array([0.0, 0.0, 0.0])
        want = a.apply(b.apply(x))
        got = compose(a, b).apply(x)
        assert np.abs(got - want).max() < 1e-12

    def test_compose_matches_matrix_product(self):
        rng = np.random.default_rng(19)
        for _ in range(50):
            a, b = random_pose(rng), random_pose(rng)
            got = compose(a, b).matrix()
            want = a.matrix() @ b.matrix()
            assert np.abs(got - want).max() < 1e-12


class TestRotationDistance:
    def test_double_cover(self):
        rng = np.random.default_rng(20)
        r = random_rotation(rng)
        neg = Rotation(-r.q)
        assert rotation_angle_between(r, neg) == 0.0

    def test_metric_properties(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            a, b, c = (random_rotation(rng) for _ in range(3))
            dab = rotation_angle_between(a, b)
            assert abs(dab - rotation_angle_between(b, a)) < 1e-12
            assert rotation_angle_between(a, a) < 1e-12
            # triangle inequality with fp slack
            assert dab <= (rotation_angle_between(a, c)
                           + rotation_angle_between(c, b)) + 1e-10

    def test_angle_matches_trace_formula(self):
        rng = np.random.default_rng(22)
        for _ in range(50):
            a, b = random_rotation(rng), random_rotation(rng)
            rel = a.matrix().T @ b.matrix()
            want = np.arccos(np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0))
            assert abs(rotation_angle_between(a, b) - want) < 1e-7


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_property_exp_log_inverse_pair(seed):
    rng = np.random.default_rng(seed)
    xi = random_twist(rng, max_angle=np.pi - 1e-3)
    back = log_se3(exp_se3(xi))
    assert np.abs(back.vector() - xi.vector()).max() < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_property_so3_roundtrip(seed):
    rng = np.random.default_rng(seed)
    phi = rng.normal(size=3)
    n = np.linalg.norm(phi)
    if n > np.pi - 1e-3:
        phi *= (np.pi - 1e-3) / n
    back = log_so3(exp_so3(phi))
    assert np.abs(back - phi).max() < 1e-9
