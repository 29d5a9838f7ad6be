"""Physics: steppers, kinematics, wrapping, geometry."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canrl.dynamics import (
    ArticulatedRobotState,
    PointRobotState,
    SimConfig,
    WorldState,
    arm_jacobian,
    arm_points,
    arm_step,
    end_effector,
    point_segment_distance,
    point_step,
    robot_speed,
    segment_segment_distance,
    wrap_angles,
)
from canrl.errors import DimensionError, SimulationFault

BIG = SimConfig(workspace=50.0)  # walls far away


def drive_point(dt, forces, v0, damping=0.8):
    cfg = SimConfig(dt=dt, damping=damping, workspace=50.0)
    s = PointRobotState(np.zeros(2), np.asarray(v0, dtype=float))
    for f in forces:
        s = point_step(s, f, cfg)
    return s


def drive_arm(dt, actions, damping=0.8):
    cfg = SimConfig(dt=dt, damping=damping)
    s = ArticulatedRobotState(0.0, 0.0, np.zeros(4), np.zeros(4))
    for a in actions:
        s = arm_step(s, a, cfg)
    return s


class TestPointStep:
    def test_coasting_without_damping(self):
        cfg = SimConfig(dt=0.05, damping=0.0, workspace=50.0)
        s = PointRobotState(np.zeros(2), np.array([1.0, 0.0]))
        s2 = point_step(s, np.zeros(2), cfg)
        assert np.allclose(s2.position, [0.05, 0.0], atol=1e-15)
        assert np.allclose(s2.velocity, [1.0, 0.0], atol=1e-15)

    def test_matches_ten_times_finer_integration(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            forces = rng.uniform(-1, 1, size=(100, 2))
            v0 = rng.uniform(-0.5, 0.5, size=2)
            coarse = drive_point(0.01, forces, v0)
            fine = drive_point(0.001, np.repeat(forces, 10, axis=0), v0)
            assert np.max(np.abs(coarse.position - fine.position)) < 1e-2

    def test_force_is_clamped_to_limit(self):
        cfg = SimConfig(dt=0.05, damping=0.0, force_limit=1.0, workspace=50.0)
        s = PointRobotState(np.zeros(2), np.zeros(2))
        a = point_step(s, np.array([10.0, 0.0]), cfg)
        b = point_step(s, np.array([1.0, 0.0]), cfg)
        assert np.array_equal(a.position, b.position)
        assert np.array_equal(a.velocity, b.velocity)

    def test_wall_clamp_zeroes_normal_velocity(self):
        cfg = SimConfig(dt=0.1, damping=0.0, workspace=1.0)
        s = PointRobotState(np.array([0.99, 0.0]), np.array([1.0, 0.3]))
        s2 = point_step(s, np.zeros(2), cfg)
        assert s2.position[0] == 1.0
        assert s2.velocity[0] == 0.0
        assert s2.velocity[1] == pytest.approx(0.3)

    def test_nonfinite_force_faults(self):
        s = PointRobotState(np.zeros(2), np.zeros(2))
        with pytest.raises(SimulationFault):
            point_step(s, np.array([np.nan, 0.0]), BIG)

    def test_wrong_shape_raises(self):
        s = PointRobotState(np.zeros(2), np.zeros(2))
        with pytest.raises(DimensionError):
            point_step(s, np.zeros(3), BIG)

    @given(
        st.floats(-1, 1), st.floats(-1, 1),
        st.floats(0.1, 0.9),
    )
    @settings(max_examples=60, deadline=None)
    def test_unforced_speed_never_grows(self, vx, vy, damping):
        cfg = SimConfig(dt=0.05, damping=damping, workspace=50.0)
        s = PointRobotState(np.zeros(2), np.array([vx, vy]))
        speed = np.linalg.norm(s.velocity)
        for _ in range(40):
            s = point_step(s, np.zeros(2), cfg)
            now = np.linalg.norm(s.velocity)
            assert now <= speed + 1e-12
            speed = now

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_stays_inside_workspace(self, seed):
        rng = np.random.default_rng(seed)
        cfg = SimConfig(dt=0.05, damping=0.2, workspace=1.0)
        s = PointRobotState(
            rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        )
        for _ in range(50):
            s = point_step(s, rng.uniform(-1, 1, 2), cfg)
            assert np.all(np.abs(s.position) <= 1.0 + 1e-12)


class TestArmStep:
    def test_single_joint_torque_kick(self):
        cfg = SimConfig(dt=0.01, damping=0.0, joint_inertia=1.0)
        s = ArticulatedRobotState(0.0, 0.0, np.zeros(4), np.zeros(4))
        s2 = arm_step(s, np.array([1.0, 0, 0, 0, 0]), cfg)
        assert s2.joint_velocities[0] == pytest.approx(0.01, abs=1e-15)
        assert s2.joint_angles[0] == pytest.approx(1e-4, abs=1e-15)
        assert np.all(s2.joint_angles[1:] == 0)
        assert s2.base_x == 0.0

    def test_matches_ten_times_finer_integration(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            acts = rng.uniform(-1, 1, size=(100, 5))
            coarse = drive_arm(0.01, acts)
            fine = drive_arm(0.001, np.repeat(acts, 10, axis=0))
            assert np.max(np.abs(coarse.joint_angles - fine.joint_angles)) < 1e-2
            assert abs(coarse.base_x - fine.base_x) < 1e-2

    def test_angles_wrap_into_half_open_interval(self):
        cfg = SimConfig(dt=0.05, damping=0.0)
        s = ArticulatedRobotState(
            0.0, 0.0, np.array([math.pi - 0.01, 0, 0, 0]), np.array([2.0, 0, 0, 0])
        )
        s2 = arm_step(s, np.zeros(5), cfg)
        assert -math.pi < s2.joint_angles[0] <= math.pi
        assert s2.joint_angles[0] < 0  # passed the seam

    def test_base_clamped_at_rail_end(self):
        cfg = SimConfig(dt=0.1, damping=0.0, workspace=1.0)
        s = ArticulatedRobotState(0.99, 1.0, np.zeros(4), np.zeros(4))
        s2 = arm_step(s, np.zeros(5), cfg)
        assert s2.base_x == 1.0
        assert s2.base_speed == 0.0

    def test_nonfinite_action_faults(self):
        s = ArticulatedRobotState(0.0, 0.0, np.zeros(4), np.zeros(4))
        with pytest.raises(SimulationFault):
            arm_step(s, np.array([np.inf, 0, 0, 0, 0]), BIG)


def fk_oracle(base_x, angles, lengths):
    x, y = base_x, 0.0
    heading = 0.0
    for a, l in zip(angles, lengths):
        heading += a
        x += l * math.sin(heading)
        y += l * math.cos(heading)
    return np.array([x, y])


class TestKinematics:
    def test_straight_up_at_zero_angles(self):
        cfg = SimConfig(link_lengths=(0.1, 0.1, 0.1, 0.1))
        s = ArticulatedRobotState(0.0, 0.0, np.zeros(4), np.zeros(4))
        assert np.allclose(end_effector(s, cfg), [0.0, 0.4], atol=1e-15)

    def test_first_joint_quarter_turn_lays_arm_flat(self):
        cfg = SimConfig(link_lengths=(0.1, 0.1, 0.1, 0.1))
        s = ArticulatedRobotState(
            0.0, 0.0, np.array([math.pi / 2, 0, 0, 0]), np.zeros(4)
        )
        assert np.allclose(end_effector(s, cfg), [0.4, 0.0], atol=1e-12)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        cfg = SimConfig(link_lengths=(0.3, 0.25, 0.2, 0.15))
        for _ in range(20):
            s = ArticulatedRobotState(
                rng.uniform(-1, 1), 0.0, rng.uniform(-math.pi, math.pi, 4), np.zeros(4)
            )
            want = fk_oracle(s.base_x, s.joint_angles, cfg.link_lengths)
            assert np.allclose(end_effector(s, cfg), want, atol=1e-12)

    @given(
        st.floats(-1, 1),
        st.lists(st.floats(-math.pi, math.pi), min_size=4, max_size=4),
    )
    @settings(max_examples=80, deadline=None)
    def test_effector_within_reach(self, base_x, angles):
        cfg = SimConfig()
        s = ArticulatedRobotState(base_x, 0.0, np.array(angles), np.zeros(4))
        p = end_effector(s, cfg)
        reach = sum(cfg.link_lengths)
        assert np.linalg.norm(p - [base_x, 0.0]) <= reach + 1e-9

    def test_points_chain_is_consistent(self):
        cfg = SimConfig()
        s = ArticulatedRobotState(0.2, 0.0, np.array([0.3, -0.4, 1.0, 0.2]), np.zeros(4))
        pts = arm_points(s, cfg)
        assert pts.shape == (5, 2)
        for i in range(4):
            assert np.linalg.norm(pts[i + 1] - pts[i]) == pytest.approx(
                cfg.link_lengths[i], abs=1e-12
            )
        assert np.allclose(pts[-1], end_effector(s, cfg))

    def test_jacobian_matches_finite_difference(self):
        cfg = SimConfig()
        rng = np.random.default_rng(3)
        s = ArticulatedRobotState(0.1, 0.0, rng.uniform(-1, 1, 4), np.zeros(4))
        jac = arm_jacobian(s, cfg)
        h = 1e-7
        fd = np.zeros((2, 5))
        for j in range(5):
            def shifted(eps):
                if j == 0:
                    return ArticulatedRobotState(
                        s.base_x + eps, 0.0, s.joint_angles, s.joint_velocities
                    )
                ang = s.joint_angles.copy()
                ang[j - 1] += eps
                return ArticulatedRobotState(s.base_x, 0.0, ang, s.joint_velocities)

            fd[:, j] = (end_effector(shifted(h), cfg) - end_effector(shifted(-h), cfg)) / (2 * h)
        assert np.max(np.abs(jac - fd)) < 1e-6


class TestWrap:
    def test_seam_values(self):
        assert wrap_angles(np.array([math.pi]))[0] == pytest.approx(math.pi)
        assert wrap_angles(np.array([-math.pi]))[0] == pytest.approx(math.pi)
        assert wrap_angles(np.array([3 * math.pi]))[0] == pytest.approx(math.pi)

    @given(st.floats(-50, 50))
    @settings(max_examples=100, deadline=None)
    def test_range_and_equivalence(self, a):
        w = float(wrap_angles(np.array([a]))[0])
        assert -math.pi < w <= math.pi + 1e-12
        assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-9)
        assert math.sin(w) == pytest.approx(math.sin(a), abs=1e-9)


class TestGeometry:
    def test_point_segment_basic(self):
        a, b = np.array([0.0, -1.0]), np.array([0.0, 1.0])
        assert point_segment_distance(np.array([0.5, 0.0]), a, b) == pytest.approx(0.5)
        assert point_segment_distance(np.array([0.0, 2.0]), a, b) == pytest.approx(1.0)
        assert point_segment_distance(np.array([0.0, 0.3]), a, b) == pytest.approx(0.0)

    def test_degenerate_segment(self):
        a = np.array([1.0, 1.0])
        assert point_segment_distance(np.array([1.0, 2.0]), a, a) == pytest.approx(1.0)

    def test_crossing_segments_have_zero_distance(self):
        d = segment_segment_distance(
            np.array([-1.0, 0.0]), np.array([1.0, 0.0]),
            np.array([0.0, -1.0]), np.array([0.0, 1.0]),
        )
        assert d == 0.0

    def test_parallel_segments(self):
        d = segment_segment_distance(
            np.array([0.0, 0.0]), np.array([1.0, 0.0]),
            np.array([0.0, 0.5]), np.array([1.0, 0.5]),
        )
        assert d == pytest.approx(0.5)


class TestSpeed:
    def test_point_speed_is_euclidean(self):
        w = WorldState(
            PointRobotState(np.zeros(2), np.array([3.0, 4.0])), np.zeros(2)
        )
        assert robot_speed(w) == pytest.approx(5.0)

    def test_arm_speed_is_max_component(self):
        s = ArticulatedRobotState(
            0.0, -0.7, np.zeros(4), np.array([0.2, -0.5, 0.1, 0.0])
        )
        assert robot_speed(WorldState(s, np.zeros(2))) == pytest.approx(0.7)
