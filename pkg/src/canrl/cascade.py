"""Cascaded policies: a base reaching policy plus per-attribute add-on
modules.

Each module sees its attribute's minimal view concatenated with the
action proposed so far, emits a compensation, and the stack's action is
the weighted, actuator-clamped sum.  Modules trained once can be
re-bound to other entities of the same kind (a second obstacle, say)
with no further training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attributes import AttributeSpec, make_attribute
from .dynamics import SimConfig, WorldState, action_dim, action_limits
from .errors import DimensionError, TaskConfigError
from .nets import DenseNet, GaussianPolicy

DEFAULT_PENALTY_COEFF = 0.01
INITIAL_MODULE_WEIGHT = 0.1


@dataclass
class BaseModule:
    """Reaching policy and its critic."""

    robot: str
    policy: GaussianPolicy
    value_net: DenseNet
    frozen: bool = False


@dataclass
class AttributeModule:
    """Compensation network for one attribute, plus its training critic.

    The critic sees base view + attribute view; it exists only for
    training and is carried along so checkpoints can resume.
    """

    robot: str
    kind: str
    comp_policy: GaussianPolicy  # input: attribute view + incoming action
    value_net: DenseNet
    weight: float = INITIAL_MODULE_WEIGHT
    penalty_coeff: float = DEFAULT_PENALTY_COEFF
    entity_index: int = 0


@dataclass
class CascadePolicy:
    base: BaseModule
    base_spec: AttributeSpec
    modules: list[AttributeModule]
    module_specs: list[AttributeSpec]
    cfg: SimConfig

    @property
    def robot(self) -> str:
        return self.base.robot


@dataclass
class CascadeStepRecord:
    """Everything observed while producing one cascade action."""

    base_view: np.ndarray
    base_action: np.ndarray
    base_log_prob: float
    views: list[np.ndarray] = field(default_factory=list)
    comp_inputs: list[np.ndarray] = field(default_factory=list)
    comp_actions: list[np.ndarray] = field(default_factory=list)
    comp_log_probs: list[float] = field(default_factory=list)
    stack_actions: list[np.ndarray] = field(default_factory=list)

    @property
    def final_action(self) -> np.ndarray:
        return self.stack_actions[-1] if self.stack_actions else self.base_action


def base_act(
    base: BaseModule,
    view: np.ndarray,
    rng: np.random.Generator | None = None,
    stochastic: bool = True,
) -> tuple[np.ndarray, float]:
    if stochastic:
        if rng is None:
            raise ValueError("stochastic action needs an rng")
        return base.policy.sample(view, rng)
    mean = base.policy.mean(view)
    return mean, base.policy.log_prob(view, mean)


def compensate(
    module: AttributeModule,
    view: np.ndarray,
    incoming_action: np.ndarray,
    rng: np.random.Generator | None = None,
    stochastic: bool = True,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Returns (comp input, compensation action, its log prob)."""
    comp_in = np.concatenate([view, incoming_action])
    if comp_in.shape[0] != module.comp_policy.state_dim:
        raise DimensionError(
            f"module expects input ({module.comp_policy.state_dim},), "
            f"got ({comp_in.shape[0]},)"
        )
    if stochastic:
        if rng is None:
            raise ValueError("stochastic action needs an rng")
        action, lp = module.comp_policy.sample(comp_in, rng)
    else:
        action = module.comp_policy.mean(comp_in)
        lp = module.comp_policy.log_prob(comp_in, action)
    return comp_in, action, lp


def combine(
    incoming: np.ndarray, compensation: np.ndarray, weight: float, limits: np.ndarray
) -> np.ndarray:
    """Weighted additive correction, clamped to actuator limits."""
    return np.clip(incoming + weight * compensation, -limits, limits)


def weight_schedule(iteration: int, ramp_iterations: int, start: float = INITIAL_MODULE_WEIGHT) -> float:
    """Linear ramp from `start` to 1 over the first `ramp_iterations`."""
    if ramp_iterations <= 0:
        return 1.0
    frac = min(max(iteration, 0) / ramp_iterations, 1.0)
    return start + (1.0 - start) * frac


def compensation_penalty(comp_action: np.ndarray, coeff: float) -> float:
    """Reward shaping that keeps modules quiet when their attribute is idle."""
    return -coeff * float(comp_action @ comp_action)


def cascade_act(
    cascade: CascadePolicy,
    world: WorldState,
    rng: np.random.Generator | None = None,
    stochastic: bool = True,
) -> tuple[np.ndarray, CascadeStepRecord]:
    """Run the whole stack once.  With no modules this is exactly base_act."""
    base_view = cascade.base_spec.extract(world)
    a, lp = base_act(cascade.base, base_view, rng, stochastic)
    rec = CascadeStepRecord(base_view, a, lp)
    limits = action_limits(cascade.robot, cascade.cfg)
    current = a
    for module, spec in zip(cascade.modules, cascade.module_specs):
        view = spec.extract(world)
        comp_in, comp, clp = compensate(module, view, current, rng, stochastic)
        current = combine(current, comp, module.weight, limits)
        rec.views.append(view)
        rec.comp_inputs.append(comp_in)
        rec.comp_actions.append(comp)
        rec.comp_log_probs.append(clp)
        rec.stack_actions.append(current)
    return current, rec


def make_cascade(
    base: BaseModule, modules: list[AttributeModule], cfg: SimConfig
) -> CascadePolicy:
    """Bind modules to entities and sanity-check every interface width."""
    robot = base.robot
    adim = action_dim(robot)
    base_spec = make_attribute("reach", 0, robot, cfg)
    if base.policy.state_dim != base_spec.state_dim:
        raise TaskConfigError(
            f"base policy expects view {base.policy.state_dim}, "
            f"robot {robot!r} has {base_spec.state_dim}"
        )
    if base.policy.action_dim != adim:
        raise TaskConfigError("base policy action width does not fit the robot")
    specs = []
    for i, m in enumerate(modules):
        if m.robot != robot:
            raise TaskConfigError(
                f"module {i} was trained for {m.robot!r}, base drives {robot!r}"
            )
        spec = make_attribute(m.kind, i + 1, robot, cfg, entity_index=m.entity_index)
        want = spec.state_dim + adim
        if m.comp_policy.state_dim != want:
            raise TaskConfigError(
                f"module {i} expects input {m.comp_policy.state_dim}, "
                f"attribute view + action is {want}"
            )
        if m.comp_policy.action_dim != adim:
            raise TaskConfigError("module action width does not fit the robot")
        specs.append(spec)
    return CascadePolicy(base, base_spec, list(modules), specs, cfg)


# ---------------------------------------------------------------------------
# checkpoint payloads

def base_module_to_dict(base: BaseModule) -> dict:
    return {
        "kind": "base",
        "robot": base.robot,
        "policy": base.policy.to_dict(),
        "value": base.value_net.to_dict(),
    }


def base_module_from_dict(d: dict) -> BaseModule:
    if d.get("kind") != "base":
        raise TaskConfigError(f"not a base checkpoint: kind={d.get('kind')!r}")
    return BaseModule(
        robot=d["robot"],
        policy=GaussianPolicy.from_dict(d["policy"]),
        value_net=DenseNet.from_dict(d["value"]),
        frozen=True,
    )


def attribute_module_to_dict(module: AttributeModule) -> dict:
    return {
        "kind": "attribute_module",
        "robot": module.robot,
        "attribute": module.kind,
        "policy": module.comp_policy.to_dict(),
        "value": module.value_net.to_dict(),
        "weight": module.weight,
        "penalty_coeff": module.penalty_coeff,
    }


def attribute_module_from_dict(d: dict, entity_index: int = 0) -> AttributeModule:
    if d.get("kind") != "attribute_module":
        raise TaskConfigError(
            f"not an attribute module checkpoint: kind={d.get('kind')!r}"
        )
    return AttributeModule(
        robot=d["robot"],
        kind=d["attribute"],
        comp_policy=GaussianPolicy.from_dict(d["policy"]),
        value_net=DenseNet.from_dict(d["value"]),
        weight=float(d["weight"]),
        penalty_coeff=float(d["penalty_coeff"]),
        entity_index=entity_index,
    )
