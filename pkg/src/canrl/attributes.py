"""Task attributes: each one owns a reward channel, a minimal view of the
world, and (for the disturbance) a hook into the dynamics.

The base attribute is target reaching; add-ons are obstacle avoidance, a
door with an opening schedule, a time-varying speed limit, and a constant
push.  Total task reward is the plain sum of the per-attribute rewards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .dynamics import (
    ARM_STATE_DIM,
    POINT_STATE_DIM,
    ArticulatedRobotState,
    PointRobotState,
    SimConfig,
    WorldState,
    action_dim,
    action_limits,
    arm_integrate,
    arm_jacobian,
    arm_points,
    end_effector,
    point_integrate,
    point_segment_distance,
    reference_point,
    robot_speed,
    segment_segment_distance,
    wrap_angles,
)
from .errors import DimensionError, InfeasibleTaskError, TaskConfigError

OBSTACLE_PENALTY = -0.3
DOOR_PENALTY = -0.01
SPEED_PENALTY_COEFF = 0.3

ATTRIBUTE_KINDS = ("reach", "obstacle", "door", "speed", "force")

# how hard the initial joint/linear velocities can be shaken at level 1
INIT_SPEED_RANGE = 0.3
ARM_TARGET_Y = (0.15, 0.85)
MAX_RESET_TRIES = 1000
OBSTACLE_SPAWN_MARGIN = 0.1
SPAWN_MARGIN = 0.02


@dataclass
class ObstacleParams:
    center: np.ndarray
    radius: float
    velocity: np.ndarray


@dataclass
class DoorSchedule:
    """A wall segment that blocks (penalizes) passage outside open windows."""

    segment: np.ndarray  # (2, 2): endpoints
    open_intervals: list[tuple[float, float]]

    def is_open(self, t: float) -> bool:
        return any(s <= t < e for s, e in self.open_intervals)

    def time_to_next_open(self, t: float, cap: float = 10.0) -> float:
        if self.is_open(t):
            return 0.0
        waits = [s - t for s, _ in self.open_intervals if s > t]
        return min(min(waits), cap) if waits else cap


def periodic_door_schedule(
    segment: np.ndarray,
    period: float,
    open_fraction: float,
    phase: float,
    t_end: float,
) -> DoorSchedule:
    """Door open during the last `open_fraction` of each period, shifted by
    `phase`, with explicit intervals covering [0, t_end]."""
    closed_len = period * (1.0 - open_fraction)
    intervals = []
    k = int(math.floor((0.0 + phase) / period)) - 1
    while True:
        start = k * period - phase + closed_len
        end = k * period - phase + period
        k += 1
        if end <= 0.0:
            continue
        if start > t_end:
            break
        intervals.append((max(start, 0.0), end))
    return DoorSchedule(np.asarray(segment, dtype=float), intervals)


@dataclass
class SpeedLimitProfile:
    times: np.ndarray
    limits: np.ndarray
    penalty_coeff: float = SPEED_PENALTY_COEFF

    def limit(self, t: float) -> float:
        return float(np.interp(t, self.times, self.limits))


@dataclass
class DisturbanceForce:
    force: np.ndarray  # planar, applied to the body / at the end effector


def advance_obstacle(obs: ObstacleParams, dt: float, half: float) -> ObstacleParams:
    """Constant-velocity drift with elastic bounces off the arena walls."""
    c = obs.center + obs.velocity * dt
    v = obs.velocity.copy()
    lo, hi = -(half - obs.radius), (half - obs.radius)
    c = c.copy()
    for i in range(2):
        if c[i] < lo:
            c[i] = lo + (lo - c[i])
            v[i] = -v[i]
        elif c[i] > hi:
            c[i] = hi - (c[i] - hi)
            v[i] = -v[i]
    return ObstacleParams(c, obs.radius, v)


# ---------------------------------------------------------------------------
# contact predicates

def robot_touches_disc(world: WorldState, cfg: SimConfig, obs: ObstacleParams) -> bool:
    if world.robot_kind == "point":
        gap = np.linalg.norm(world.robot.position - obs.center)
        return bool(gap <= obs.radius + cfg.robot_radius)
    pts = arm_points(world.robot, cfg)
    reach = obs.radius + cfg.link_radius
    return any(
        point_segment_distance(obs.center, pts[i], pts[i + 1]) <= reach
        for i in range(len(pts) - 1)
    )


def robot_touches_segment(world: WorldState, cfg: SimConfig, seg: np.ndarray) -> bool:
    if world.robot_kind == "point":
        # swept test: the previous position is exactly pos - v*dt under
        # semi-implicit Euler, so fast crossings cannot tunnel through
        pos = world.robot.position
        prev = pos - world.robot.velocity * cfg.dt
        d = segment_segment_distance(prev, pos, seg[0], seg[1])
        return bool(d <= cfg.robot_radius)
    pts = arm_points(world.robot, cfg)
    return any(
        segment_segment_distance(pts[i], pts[i + 1], seg[0], seg[1]) <= cfg.link_radius
        for i in range(len(pts) - 1)
    )


def obstacle_clearance(world: WorldState, cfg: SimConfig, obs: ObstacleParams) -> float:
    """Surface-to-surface distance; negative while touching."""
    if world.robot_kind == "point":
        gap = float(np.linalg.norm(world.robot.position - obs.center))
        return gap - obs.radius - cfg.robot_radius
    pts = arm_points(world.robot, cfg)
    gap = min(
        point_segment_distance(obs.center, pts[i], pts[i + 1])
        for i in range(len(pts) - 1)
    )
    return gap - obs.radius - cfg.link_radius


def target_reached(world: WorldState, cfg: SimConfig) -> bool:
    ref = reference_point(world, cfg)
    return bool(np.linalg.norm(ref - world.target_position) <= cfg.target_radius)


# ---------------------------------------------------------------------------
# reward channels

def reaching_reward(world: WorldState, cfg: SimConfig) -> float:
    return 1.0 if target_reached(world, cfg) else 0.0


def obstacle_reward(world: WorldState, cfg: SimConfig, obs: ObstacleParams) -> float:
    return OBSTACLE_PENALTY if robot_touches_disc(world, cfg, obs) else 0.0


def door_reward(world: WorldState, cfg: SimConfig, door: DoorSchedule) -> float:
    if door.is_open(world.time):
        return 0.0
    return DOOR_PENALTY if robot_touches_segment(world, cfg, door.segment) else 0.0


def speed_reward(world: WorldState, profile: SpeedLimitProfile) -> float:
    excess = robot_speed(world) - profile.limit(world.time)
    return -profile.penalty_coeff * max(excess, 0.0)


# ---------------------------------------------------------------------------
# attribute specs

@dataclass
class AttributeSpec:
    """One attribute: id, minimal state view, reward, activity predicate,
    and an optional action-space dynamics hook."""

    id: int
    kind: str
    state_dim: int
    extract: Callable[[WorldState], np.ndarray]
    reward: Callable[[WorldState, np.ndarray], float]
    is_active: Callable[[WorldState], bool]
    dynamics_effect: Callable[[WorldState, np.ndarray], np.ndarray] | None = None
    entity_index: int = 0


def robot_state_dim(robot: str) -> int:
    return POINT_STATE_DIM if robot == "point" else ARM_STATE_DIM


def view_dim(kind: str, robot: str) -> int:
    base = robot_state_dim(robot)
    return base + {"reach": 2, "obstacle": 5, "door": 5, "speed": 1, "force": 2}[kind]


def _robot_vector(world: WorldState) -> np.ndarray:
    return world.robot.as_vector()


def _get_obstacle(world: WorldState, index: int) -> ObstacleParams:
    if index >= len(world.obstacles):
        raise TaskConfigError(
            f"view needs obstacle {index}, world has {len(world.obstacles)}"
        )
    return world.obstacles[index]


def make_attribute(
    kind: str, attr_id: int, robot: str, cfg: SimConfig, entity_index: int = 0
) -> AttributeSpec:
    """Build the AttributeSpec for one attribute bound to one world entity."""
    if kind not in ATTRIBUTE_KINDS:
        raise TaskConfigError(f"unknown attribute kind {kind!r}")
    dim = view_dim(kind, robot)

    if kind == "reach":
        def extract(world: WorldState) -> np.ndarray:
            rel = world.target_position - reference_point(world, cfg)
            return np.concatenate([_robot_vector(world), rel])

        def reward(world: WorldState, action: np.ndarray) -> float:
            return reaching_reward(world, cfg)

        return AttributeSpec(attr_id, kind, dim, extract, reward, lambda w: True)

    if kind == "obstacle":
        def extract(world: WorldState) -> np.ndarray:
            obs = _get_obstacle(world, entity_index)
            rel = obs.center - reference_point(world, cfg)
            return np.concatenate(
                [_robot_vector(world), rel, obs.velocity, [obs.radius]]
            )

        def reward(world: WorldState, action: np.ndarray) -> float:
            return obstacle_reward(world, cfg, _get_obstacle(world, entity_index))

        def active(world: WorldState) -> bool:
            obs = _get_obstacle(world, entity_index)
            return obstacle_clearance(world, cfg, obs) < 2.0 * obs.radius

        return AttributeSpec(
            attr_id, kind, dim, extract, reward, active, entity_index=entity_index
        )

    if kind == "door":
        def extract(world: WorldState) -> np.ndarray:
            if world.door is None:
                raise TaskConfigError("view needs a door, world has none")
            ref = reference_point(world, cfg)
            seg = world.door.segment
            wait = world.door.time_to_next_open(world.time)
            return np.concatenate(
                [_robot_vector(world), seg[0] - ref, seg[1] - ref, [wait]]
            )

        def reward(world: WorldState, action: np.ndarray) -> float:
            if world.door is None:
                raise TaskConfigError("reward needs a door, world has none")
            return door_reward(world, cfg, world.door)

        def active(world: WorldState) -> bool:
            return world.door is not None and not world.door.is_open(world.time)

        return AttributeSpec(attr_id, kind, dim, extract, reward, active)

    if kind == "speed":
        def extract(world: WorldState) -> np.ndarray:
            if world.speed_profile is None:
                raise TaskConfigError("view needs a speed profile, world has none")
            lim = world.speed_profile.limit(world.time)
            return np.concatenate([_robot_vector(world), [lim]])

        def reward(world: WorldState, action: np.ndarray) -> float:
            if world.speed_profile is None:
                raise TaskConfigError("reward needs a speed profile, world has none")
            return speed_reward(world, world.speed_profile)

        return AttributeSpec(attr_id, kind, dim, extract, reward, lambda w: True)

    # force
    def extract(world: WorldState) -> np.ndarray:
        if world.disturbance is None:
            raise TaskConfigError("view needs a disturbance, world has none")
        return np.concatenate([_robot_vector(world), world.disturbance.force])

    def reward(world: WorldState, action: np.ndarray) -> float:
        return 0.0

    def effect(world: WorldState, action: np.ndarray) -> np.ndarray:
        if world.disturbance is None:
            raise TaskConfigError("dynamics effect needs a disturbance")
        push = world.disturbance.force
        if world.robot_kind == "point":
            return action + push
        # the push acts at the end effector; map it to generalized forces
        jac = arm_jacobian(world.robot, cfg)
        return action + jac.T @ push

    return AttributeSpec(
        attr_id, kind, dim, extract, reward, lambda w: True, dynamics_effect=effect
    )


# ---------------------------------------------------------------------------
# task definition

@dataclass
class AddonSetup:
    """Nominal parameters for one add-on entity, as read from the task file."""

    kind: str
    params: dict


@dataclass
class Nominal:
    target: np.ndarray
    position: np.ndarray | None = None  # point robot
    base_x: float = 0.0  # arm
    joint_angles: np.ndarray | None = None


@dataclass
class Task:
    robot: str
    cfg: SimConfig
    nominal: Nominal
    base: AttributeSpec
    addons: list[AttributeSpec]
    addon_setups: list[AddonSetup]

    @property
    def specs(self) -> list[AttributeSpec]:
        return [self.base, *self.addons]

    @property
    def action_dim(self) -> int:
        return action_dim(self.robot)


def build_task(robot: str, cfg: SimConfig, nominal: Nominal, addons: list[AddonSetup]) -> Task:
    if robot not in ("point", "arm"):
        raise TaskConfigError(f"unknown robot {robot!r}")
    base = make_attribute("reach", 0, robot, cfg)
    specs = []
    n_obstacles = 0
    for i, setup in enumerate(addons):
        if setup.kind == "reach":
            raise TaskConfigError("reach is the base attribute, not an add-on")
        idx = n_obstacles if setup.kind == "obstacle" else 0
        specs.append(make_attribute(setup.kind, i + 1, robot, cfg, entity_index=idx))
        if setup.kind == "obstacle":
            n_obstacles += 1
        elif sum(1 for s in addons if s.kind == setup.kind) > 1:
            raise TaskConfigError(f"at most one {setup.kind!r} add-on per task")
    return Task(robot, cfg, nominal, base, specs, list(addons))


def full_view(task: Task, world: WorldState) -> np.ndarray:
    """Concatenation of every attribute view; the flat-baseline observation."""
    return np.concatenate([spec.extract(world) for spec in task.specs])


def full_view_dim(task: Task) -> int:
    return sum(spec.state_dim for spec in task.specs)


# ---------------------------------------------------------------------------
# reset sampling

def _lerp_box(center: float, lo_full: float, hi_full: float, level: float, u: float) -> float:
    lo = center + level * (lo_full - center)
    hi = center + level * (hi_full - center)
    return lo + u * (hi - lo)


def _sample_entities(task: Task, level: float, rng: np.random.Generator, world: WorldState) -> None:
    cfg = task.cfg
    t_end = cfg.horizon * cfg.dt
    for setup in task.addon_setups:
        p = setup.params
        if setup.kind == "obstacle":
            u = rng.uniform(size=3)
            half = cfg.workspace - p["radius"]
            cx = _lerp_box(p["center"][0], -half, half, level, u[0])
            cy = _lerp_box(p["center"][1], -half, half, level, u[1])
            heading = p["heading"] + level * (2.0 * u[2] - 1.0) * math.pi
            vel = p["speed"] * np.array([math.cos(heading), math.sin(heading)])
            world.obstacles.append(
                ObstacleParams(np.array([cx, cy]), p["radius"], vel)
            )
        elif setup.kind == "door":
            phase = level * rng.uniform() * p["period"]
            seg = np.array(
                [[p["x"], p["y_lo"]], [p["x"], p["y_hi"]]], dtype=float
            )
            world.door = periodic_door_schedule(
                seg, p["period"], p["open_fraction"], phase, t_end
            )
        elif setup.kind == "speed":
            world.speed_profile = SpeedLimitProfile(
                np.asarray(p["times"], dtype=float),
                np.asarray(p["limits"], dtype=float),
                p.get("coeff", SPEED_PENALTY_COEFF),
            )
        elif setup.kind == "force":
            u = rng.uniform()
            heading = p["heading"] + level * (2.0 * u - 1.0) * math.pi
            world.disturbance = DisturbanceForce(
                p["magnitude"] * np.array([math.cos(heading), math.sin(heading)])
            )


def _sample_world(task: Task, level: float, rng: np.random.Generator, mode: str) -> WorldState:
    cfg = task.cfg
    nom = task.nominal
    w = cfg.workspace

    if task.robot == "point":
        ut = rng.uniform(size=2)
        target = np.array(
            [
                _lerp_box(nom.target[0], -w, w, level, ut[0]),
                _lerp_box(nom.target[1], -w, w, level, ut[1]),
            ]
        )
        center = target if mode == "rcl" else nom.position
        ur = rng.uniform(size=2)
        pos = np.array(
            [
                _lerp_box(center[0], -w, w, level, ur[0]),
                _lerp_box(center[1], -w, w, level, ur[1]),
            ]
        )
        vel = level * INIT_SPEED_RANGE * rng.uniform(-1.0, 1.0, size=2)
        robot = PointRobotState(pos, vel)
    else:
        ut = rng.uniform(size=2)
        target = np.array(
            [
                _lerp_box(nom.target[0], -w, w, level, ut[0]),
                _lerp_box(nom.target[1], ARM_TARGET_Y[0], ARM_TARGET_Y[1], level, ut[1]),
            ]
        )
        if mode == "rcl":
            # fold pose with the end effector exactly on the target:
            # joints (a, 0, -2a, 0) cancel horizontally and stand cos(a)
            # of the full reach tall, so a = acos(ty / reach)
            base_center = float(np.clip(target[0], -w, w))
            reach = float(sum(cfg.link_lengths))
            fold = math.acos(float(np.clip(target[1] / reach, -1.0, 1.0)))
            angle_center = np.array([fold, 0.0, -2.0 * fold, 0.0])
        else:
            base_center = nom.base_x
            angle_center = np.asarray(nom.joint_angles, dtype=float)
        ub = rng.uniform()
        base_x = _lerp_box(base_center, -w, w, level, ub)
        ua = rng.uniform(size=4)
        angles = wrap_angles(
            np.array(
                [
                    _lerp_box(angle_center[i], -math.pi, math.pi, level, ua[i])
                    for i in range(4)
                ]
            )
        )
        jv = level * INIT_SPEED_RANGE * rng.uniform(-1.0, 1.0, size=4)
        bs = level * INIT_SPEED_RANGE * float(rng.uniform(-1.0, 1.0))
        robot = ArticulatedRobotState(base_x, bs, angles, jv)

    world = WorldState(robot, target)
    _sample_entities(task, level, rng, world)
    return world


def _spawn_valid(task: Task, world: WorldState) -> bool:
    cfg = task.cfg
    for obs in world.obstacles:
        if obstacle_clearance(world, cfg, obs) <= OBSTACLE_SPAWN_MARGIN:
            return False
    if world.door is not None:
        gap = point_segment_distance(
            world.target_position, world.door.segment[0], world.door.segment[1]
        )
        if gap <= cfg.target_radius + cfg.robot_radius + SPAWN_MARGIN:
            return False
    return True


def reset(
    task: Task, random_level: float, rng: np.random.Generator, mode: str = "cl"
) -> WorldState:
    """Sample an initial world.  At level 0 this is exactly the nominal
    configuration; at level 1 the whole workspace, identically for both
    curriculum modes.  Never spawns the robot touching an obstacle or the
    target on the door."""
    if not 0.0 <= random_level <= 1.0:
        raise ValueError(f"random_level must be in [0, 1], got {random_level}")
    if mode not in ("cl", "rcl"):
        raise ValueError(f"unknown curriculum mode {mode!r}")
    for _ in range(MAX_RESET_TRIES):
        world = _sample_world(task, random_level, rng, mode)
        if _spawn_valid(task, world):
            return world
    raise InfeasibleTaskError(
        f"no valid spawn after {MAX_RESET_TRIES} tries at level {random_level}"
    )


# ---------------------------------------------------------------------------
# environment step

def step_task(
    task: Task, world: WorldState, action: np.ndarray
) -> tuple[WorldState, list[float], bool, list[str]]:
    """Advance one control step.

    Returns (next world, per-attribute rewards in cascade order, done, events).
    Rewards are evaluated on the post-step world, so "touching" refers to
    the configuration the action produced.
    """
    cfg = task.cfg
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (task.action_dim,):
        raise DimensionError(
            f"expected action ({task.action_dim},), got {action.shape}"
        )
    limits = action_limits(task.robot, cfg)
    commanded = np.clip(action, -limits, limits)

    effective = commanded
    for spec in task.specs:
        if spec.dynamics_effect is not None:
            effective = spec.dynamics_effect(world, effective)

    if task.robot == "point":
        robot = point_integrate(world.robot, effective, cfg)
    else:
        robot = arm_integrate(world.robot, effective, cfg)

    nxt = WorldState(
        robot=robot,
        target_position=world.target_position,
        time=world.time + cfg.dt,
        step_index=world.step_index + 1,
        obstacles=[advance_obstacle(o, cfg.dt, cfg.workspace) for o in world.obstacles],
        door=world.door,
        speed_profile=world.speed_profile,
        disturbance=world.disturbance,
    )

    rewards = [spec.reward(nxt, commanded) for spec in task.specs]

    events: list[str] = []
    if rewards[0] == 1.0:
        events.append("reached_target")
    for spec, r in zip(task.addons, rewards[1:]):
        if spec.kind == "obstacle" and r < 0.0:
            events.append(f"touched_obstacle_{spec.entity_index}")
        elif spec.kind == "door" and r < 0.0:
            events.append("touched_door")
        elif spec.kind == "speed" and r < 0.0:
            events.append("speed_violation")

    done = rewards[0] == 1.0 or nxt.step_index >= cfg.horizon
    return nxt, rewards, done, events
