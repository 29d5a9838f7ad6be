"""Planar physics: a force-driven point robot and a torque-driven arm on
a sliding base, both integrated with semi-implicit Euler.

Steppers are pure state-in/state-out; many worlds can be advanced
concurrently as long as each state object has a single writer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import DimensionError, SimulationFault

if TYPE_CHECKING:
    from .attributes import DisturbanceForce, DoorSchedule, ObstacleParams, SpeedLimitProfile

POINT_STATE_DIM = 4
ARM_STATE_DIM = 10
POINT_ACTION_DIM = 2
ARM_ACTION_DIM = 5

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.05
    horizon: int = 200
    mass: float = 1.0
    damping: float = 0.8
    force_limit: float = 1.0
    torque_limit: float = 1.0
    joint_inertia: float = 1.0
    link_lengths: tuple[float, ...] = (0.25, 0.25, 0.25, 0.25)
    target_radius: float = 0.08
    workspace: float = 1.0  # half-width of the square arena
    robot_radius: float = 0.03
    link_radius: float = 0.03


@dataclass
class PointRobotState:
    position: np.ndarray
    velocity: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])


@dataclass
class ArticulatedRobotState:
    base_x: float
    base_speed: float
    joint_angles: np.ndarray
    joint_velocities: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [[self.base_x, self.base_speed], self.joint_angles, self.joint_velocities]
        )


@dataclass
class WorldState:
    robot: PointRobotState | ArticulatedRobotState
    target_position: np.ndarray
    time: float = 0.0
    step_index: int = 0
    obstacles: "list[ObstacleParams]" = field(default_factory=list)
    door: "DoorSchedule | None" = None
    speed_profile: "SpeedLimitProfile | None" = None
    disturbance: "DisturbanceForce | None" = None

    @property
    def robot_kind(self) -> str:
        return "point" if isinstance(self.robot, PointRobotState) else "arm"


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Wrap to (-pi, pi]."""
    return a - TWO_PI * np.ceil((a - math.pi) / TWO_PI)


def action_dim(robot_kind: str) -> int:
    return POINT_ACTION_DIM if robot_kind == "point" else ARM_ACTION_DIM


def action_limits(robot_kind: str, cfg: SimConfig) -> np.ndarray:
    if robot_kind == "point":
        return np.full(2, cfg.force_limit)
    return np.array([cfg.torque_limit] * 4 + [cfg.force_limit])


def _clamp_to_walls(pos: np.ndarray, vel: np.ndarray, half: float):
    # wall contact kills the normal velocity component, no bounce
    pos = pos.copy()
    vel = vel.copy()
    for i in range(pos.shape[0]):
        if pos[i] < -half:
            pos[i] = -half
            vel[i] = 0.0
        elif pos[i] > half:
            pos[i] = half
            vel[i] = 0.0
    return pos, vel


def point_integrate(
    state: PointRobotState, total_force: np.ndarray, cfg: SimConfig
) -> PointRobotState:
    """Advance one step under an already-resolved net force (not clamped)."""
    if not np.all(np.isfinite(total_force)):
        raise SimulationFault(f"non-finite force {total_force!r}")
    v = (1.0 - cfg.damping * cfg.dt) * state.velocity + (total_force / cfg.mass) * cfg.dt
    x = state.position + v * cfg.dt
    x, v = _clamp_to_walls(x, v, cfg.workspace)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise SimulationFault("point state diverged")
    return PointRobotState(x, v)


def point_step(
    state: PointRobotState, force: np.ndarray, cfg: SimConfig
) -> PointRobotState:
    force = np.asarray(force, dtype=np.float64)
    if force.shape != (POINT_ACTION_DIM,):
        raise DimensionError(f"expected force (2,), got {force.shape}")
    if not np.all(np.isfinite(force)):
        raise SimulationFault(f"non-finite force {force!r}")
    force = np.clip(force, -cfg.force_limit, cfg.force_limit)
    return point_integrate(state, force, cfg)


def arm_integrate(
    state: ArticulatedRobotState, generalized: np.ndarray, cfg: SimConfig
) -> ArticulatedRobotState:
    """Advance one step under net joint torques and base force (not clamped)."""
    if not np.all(np.isfinite(generalized)):
        raise SimulationFault(f"non-finite action {generalized!r}")
    torques, base_force = generalized[:4], generalized[4]
    decay = 1.0 - cfg.damping * cfg.dt
    jv = decay * state.joint_velocities + (torques / cfg.joint_inertia) * cfg.dt
    angles = wrap_angles(state.joint_angles + jv * cfg.dt)
    bs = decay * state.base_speed + (base_force / cfg.mass) * cfg.dt
    bx = state.base_x + bs * cfg.dt
    if bx < -cfg.workspace:
        bx, bs = -cfg.workspace, 0.0
    elif bx > cfg.workspace:
        bx, bs = cfg.workspace, 0.0
    if not (np.all(np.isfinite(angles)) and np.all(np.isfinite(jv))):
        raise SimulationFault("arm state diverged")
    return ArticulatedRobotState(float(bx), float(bs), angles, jv)


def arm_step(
    state: ArticulatedRobotState, action: np.ndarray, cfg: SimConfig
) -> ArticulatedRobotState:
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (ARM_ACTION_DIM,):
        raise DimensionError(f"expected action (5,), got {action.shape}")
    if not np.all(np.isfinite(action)):
        raise SimulationFault(f"non-finite action {action!r}")
    clipped = np.clip(action, -action_limits("arm", cfg), action_limits("arm", cfg))
    return arm_integrate(state, clipped, cfg)


def arm_points(state: ArticulatedRobotState, cfg: SimConfig) -> np.ndarray:
    """Base anchor plus the far end of each link, shape (n_links+1, 2).

    Angles are cumulative; at all-zero angles the arm points straight up.
    """
    cum = np.cumsum(state.joint_angles)
    steps = np.asarray(cfg.link_lengths)[:, None] * np.stack(
        [np.sin(cum), np.cos(cum)], axis=1
    )
    pts = np.empty((len(cfg.link_lengths) + 1, 2))
    pts[0] = (state.base_x, 0.0)
    pts[1:] = pts[0] + np.cumsum(steps, axis=0)
    return pts


def end_effector(state: ArticulatedRobotState, cfg: SimConfig) -> np.ndarray:
    return arm_points(state, cfg)[-1]


def arm_jacobian(state: ArticulatedRobotState, cfg: SimConfig) -> np.ndarray:
    """d(effector)/d(base_x, joint angles), shape (2, 5)."""
    cum = np.cumsum(state.joint_angles)
    lengths = np.asarray(cfg.link_lengths)
    jac = np.zeros((2, 5))
    jac[0, 0] = 1.0
    for j in range(4):
        jac[0, j + 1] = np.sum(lengths[j:] * np.cos(cum[j:]))
        jac[1, j + 1] = -np.sum(lengths[j:] * np.sin(cum[j:]))
    return jac


def reference_point(world: WorldState, cfg: SimConfig) -> np.ndarray:
    """The body point that attributes reason about: the point robot itself,
    or the arm's end effector."""
    if world.robot_kind == "point":
        return world.robot.position
    return end_effector(world.robot, cfg)


def robot_speed(world: WorldState) -> float:
    """Scalar speed used by speed limits: planar speed for the point robot,
    the largest joint/base magnitude for the arm."""
    if world.robot_kind == "point":
        return float(np.linalg.norm(world.robot.velocity))
    r = world.robot
    return float(max(np.max(np.abs(r.joint_velocities)), abs(r.base_speed)))


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_intersect(p0, p1, q0, q1) -> bool:
    d1 = _orient(q0, q1, p0)
    d2 = _orient(q0, q1, p1)
    d3 = _orient(p0, p1, q0)
    d4 = _orient(p0, p1, q1)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    return False


def segment_segment_distance(p0, p1, q0, q1) -> float:
    if segments_intersect(p0, p1, q0, q1):
        return 0.0
    return min(
        point_segment_distance(p0, q0, q1),
        point_segment_distance(p1, q0, q1),
        point_segment_distance(q0, p0, p1),
        point_segment_distance(q1, p0, p1),
    )
