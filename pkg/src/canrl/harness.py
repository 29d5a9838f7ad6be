"""Run-level plumbing: checkpoints, evaluation, assembly, comparisons.

Everything here writes plain text.  Floats go through repr so a file read
back with json/float() reproduces the exact bits that were written.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .attributes import Task, obstacle_clearance, reset, step_task
from .cascade import (
    AttributeModule,
    BaseModule,
    CascadePolicy,
    attribute_module_from_dict,
    attribute_module_to_dict,
    base_module_from_dict,
    base_module_to_dict,
    cascade_act,
    make_cascade,
)
from .curriculum import CurriculumConfig
from .errors import TaskConfigError
from .ppo import (
    EVAL_STREAM,
    IterationLog,
    PPOConfig,
    TrainResult,
    episode_rng,
    train_attribute,
    train_base,
    train_flat,
)
from .taskio import LoadedTask

LOG_COLUMNS = (
    "iteration",
    "episodes",
    "random_level",
    "mean_ep_reward",
    "policy_loss",
    "value_loss",
    "entropy",
    "kl",
)


# ---------------------------------------------------------------------------
# writers

def format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise TaskConfigError(f"{path}: not valid JSON ({exc})") from exc


def write_csv(path: str | Path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
    return path


def write_training_log(path: str | Path, log: list[IterationLog]) -> Path:
    rows = [
        (
            r.iteration,
            r.episodes,
            r.random_level,
            r.mean_ep_reward,
            r.policy_loss,
            r.value_loss,
            r.entropy,
            r.kl,
        )
        for r in log
    ]
    return write_csv(path, LOG_COLUMNS, rows)


def log_path_for(out_path: str | Path) -> Path:
    """Training log lives next to the checkpoint unless CAN_LOG_DIR says else."""
    out_path = Path(out_path)
    name = out_path.stem + ".train.csv"
    override = os.environ.get("CAN_LOG_DIR")
    if override:
        return Path(override) / name
    return out_path.parent / name


# ---------------------------------------------------------------------------
# checkpoints

def save_base(path: str | Path, base: BaseModule) -> Path:
    return write_json(path, base_module_to_dict(base))


def save_module(path: str | Path, module: AttributeModule) -> Path:
    return write_json(path, attribute_module_to_dict(module))


def load_base(path: str | Path) -> BaseModule:
    return base_module_from_dict(read_json(path))


def load_module(path: str | Path, entity_index: int = 0) -> AttributeModule:
    return attribute_module_from_dict(read_json(path), entity_index)


# ---------------------------------------------------------------------------
# evaluation

VIOLATION_EVENTS = ("touched_obstacle", "touched_door", "speed_violation")


def _violation(event: str) -> bool:
    return event.startswith(VIOLATION_EVENTS)


def _robot_record(world) -> dict:
    if world.robot_kind == "point":
        return {
            "position": [float(v) for v in world.robot.position],
            "velocity": [float(v) for v in world.robot.velocity],
        }
    return {
        "base_x": float(world.robot.base_x),
        "base_speed": float(world.robot.base_speed),
        "joint_angles": [float(v) for v in world.robot.joint_angles],
        "joint_velocities": [float(v) for v in world.robot.joint_velocities],
    }


def evaluate_policy(
    act_fn: Callable[[object, np.random.Generator], np.ndarray],
    task: Task,
    episodes: int,
    seed: int,
    level: float = 1.0,
    mode: str = "cl",
    trajectory_path: str | Path | None = None,
) -> dict:
    """Roll deterministic episodes and tally outcomes.

    An episode succeeds when the target is reached and no penalty event
    fired along the way.  Episode k draws from the eval stream at index
    k, so reports are reproducible and independent of each other.
    """
    reached = 0
    successes = 0
    lengths = []
    totals = []
    violations: dict[str, int] = {}
    sink = None
    if trajectory_path is not None:
        Path(trajectory_path).parent.mkdir(parents=True, exist_ok=True)
        sink = open(trajectory_path, "w")
    try:
        for k in range(episodes):
            rng = episode_rng(seed, EVAL_STREAM, k)
            world = reset(task, level, rng, mode)
            done = False
            clean = True
            got_there = False
            total = 0.0
            steps = 0
            while not done:
                action = act_fn(world, rng)
                world, rewards, done, events = step_task(task, world, action)
                total += float(sum(rewards))
                steps += 1
                for ev in events:
                    if ev == "reached_target":
                        got_there = True
                    elif _violation(ev):
                        clean = False
                        violations[ev] = violations.get(ev, 0) + 1
                if sink is not None:
                    rec = {
                        "episode": k,
                        "t": world.time,
                        "robot": _robot_record(world),
                        "action": [float(v) for v in np.asarray(action)],
                        "rewards": [float(r) for r in rewards],
                        "total_reward": float(sum(rewards)),
                        "events": list(events),
                    }
                    sink.write(json.dumps(rec, sort_keys=True) + "\n")
            reached += int(got_there)
            successes += int(got_there and clean)
            lengths.append(steps)
            totals.append(total)
    finally:
        if sink is not None:
            sink.close()
    return {
        "episodes": episodes,
        "level": level,
        "seed": seed,
        "success_rate": successes / episodes,
        "reached": reached,
        "mean_episode_reward": float(np.mean(totals)),
        "mean_episode_length": float(np.mean(lengths)),
        "violations": violations,
    }


def cascade_actor(cascade: CascadePolicy) -> Callable:
    def act(world, rng):
        action, _ = cascade_act(cascade, world, rng, stochastic=False)
        return action

    return act


def base_actor(base: BaseModule, task: Task) -> Callable:
    from .cascade import base_act

    def act(world, rng):
        view = task.base.extract(world)
        action, _ = base_act(base, view, rng, stochastic=False)
        return action

    return act


def compensation_profile(
    cascade: CascadePolicy,
    task: Task,
    episodes: int,
    seed: int,
    level: float = 1.0,
    clearance_factor: float = 3.0,
) -> dict:
    """How much the last module pushes when obstacles are far away.

    A step counts as far when every obstacle's surface gap exceeds
    clearance_factor times its own contact range.  A module that learned
    a local dodge should be near-silent on those steps.
    """
    if not cascade.modules:
        raise TaskConfigError("profile needs at least one module")
    contact = (
        task.cfg.robot_radius if task.robot == "point" else task.cfg.link_radius
    )
    base_norms = []
    comp_norms = []
    total_steps = 0
    for k in range(episodes):
        rng = episode_rng(seed, EVAL_STREAM, k)
        world = reset(task, level, rng, mode="cl")
        done = False
        while not done:
            action, rec = cascade_act(cascade, world, rng, stochastic=False)
            total_steps += 1
            far = all(
                obstacle_clearance(world, task.cfg, obs)
                > clearance_factor * (obs.radius + contact)
                for obs in world.obstacles
            )
            if far and world.obstacles:
                base_norms.append(float(np.linalg.norm(rec.base_action)))
                comp_norms.append(float(np.linalg.norm(rec.comp_actions[-1])))
            world, _, done, _ = step_task(task, world, action)
    if not base_norms:
        raise TaskConfigError("no far-from-obstacle steps observed")
    mean_base = float(np.mean(base_norms))
    mean_comp = float(np.mean(comp_norms))
    return {
        "episodes": episodes,
        "steps_total": total_steps,
        "steps_far": len(base_norms),
        "mean_base_norm": mean_base,
        "mean_comp_norm": mean_comp,
        "comp_to_base_ratio": mean_comp / mean_base,
    }


# ---------------------------------------------------------------------------
# cascade descriptors

def write_cascade_descriptor(
    path: str | Path,
    base_checkpoint: str,
    modules: list[dict],
) -> Path:
    payload = {
        "kind": "cascade",
        "base_checkpoint": base_checkpoint,
        "modules": modules,
    }
    return write_json(path, payload)


def load_cascade(descriptor_path: str | Path, task: Task) -> CascadePolicy:
    """Rebuild a stack from a descriptor; paths resolve next to the file."""
    descriptor_path = Path(descriptor_path)
    d = read_json(descriptor_path)
    if d.get("kind") != "cascade":
        raise TaskConfigError(f"not a cascade descriptor: kind={d.get('kind')!r}")
    root = descriptor_path.parent
    base = load_base(root / d["base_checkpoint"])
    n_obstacles = sum(1 for a in task.addon_setups if a.kind == "obstacle")
    modules = []
    for i, entry in enumerate(d.get("modules", [])):
        binding = int(entry.get("entity_binding", 0))
        module = load_module(root / entry["checkpoint"], binding)
        if module.kind == "obstacle" and binding >= n_obstacles:
            raise TaskConfigError(
                f"module {i} bound to obstacle {binding}, "
                f"task defines {n_obstacles}"
            )
        if "weight" in entry:
            module.weight = float(entry["weight"])
        modules.append(module)
    return make_cascade(base, modules, task.cfg)


# ---------------------------------------------------------------------------
# training runs

@dataclass
class RunConfig:
    seed: int = 0
    max_iterations: int = 500
    n_workers: int = 1
    # keep training after the curriculum tops out; the extra iterations
    # polish the policy at full spread instead of stopping at first touch
    stop_at_terminal: bool = True
    ppo: PPOConfig = None

    def __post_init__(self):
        if self.ppo is None:
            self.ppo = PPOConfig()


def _progress_printer(tag: str, emit: Callable[[str], None] | None):
    if emit is None:
        return None

    def show(row: IterationLog) -> None:
        emit(
            f"[{tag}] iter {row.iteration:4d}  level {row.random_level:.4f}  "
            f"reward {row.mean_ep_reward:8.3f}  kl {row.kl:.4f}"
        )

    return show


def run_train_base(
    loaded: LoadedTask,
    out_path: str | Path,
    run: RunConfig,
    emit: Callable[[str], None] | None = None,
) -> TrainResult:
    result = train_base(
        loaded.task,
        run.ppo,
        loaded.curriculum,
        seed=run.seed,
        max_iterations=run.max_iterations,
        n_workers=run.n_workers,
        progress=_progress_printer("base", emit),
        stop_at_terminal=run.stop_at_terminal,
    )
    save_base(out_path, result.base)
    write_training_log(log_path_for(out_path), result.log)
    return result


def run_train_attribute(
    base_path: str | Path,
    loaded: LoadedTask,
    out_path: str | Path,
    run: RunConfig,
    emit: Callable[[str], None] | None = None,
) -> TrainResult:
    base = load_base(base_path)
    result = train_attribute(
        base,
        loaded.task,
        run.ppo,
        loaded.curriculum,
        seed=run.seed,
        max_iterations=run.max_iterations,
        n_workers=run.n_workers,
        progress=_progress_printer("attr", emit),
        stop_at_terminal=run.stop_at_terminal,
    )
    save_module(out_path, result.module)
    write_training_log(log_path_for(out_path), result.log)
    return result


# ---------------------------------------------------------------------------
# curriculum comparison

COMPARE_ARMS = ("can", "scratch_cl", "scratch_rcl")


def _arm_curriculum(cur: CurriculumConfig, mode: str) -> CurriculumConfig:
    return dataclasses.replace(cur, mode=mode)


def run_compare(
    loaded: LoadedTask,
    base_path: str | Path,
    out_dir: str | Path,
    run: RunConfig,
    emit: Callable[[str], None] | None = None,
) -> dict:
    """Race module training against two from-scratch baselines.

    Every arm gets the same task, seed, and iteration budget.  The can
    arm trains one compensation module over the frozen base; the scratch
    arms train a monolithic policy on the concatenated views, one with
    plain spread-out resets and one with resets centred on the target.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = load_base(base_path)
    summary: dict = {"task": loaded.raw.get("name", "?"), "seed": run.seed,
                     "budget": run.max_iterations, "arms": {}}
    for arm in COMPARE_ARMS:
        if emit is not None:
            emit(f"--- arm {arm}")
        try:
            if arm == "can":
                result = train_attribute(
                    base, loaded.task, run.ppo,
                    _arm_curriculum(loaded.curriculum, "cl"),
                    seed=run.seed, max_iterations=run.max_iterations,
                    n_workers=run.n_workers,
                    progress=_progress_printer(arm, emit),
                )
            else:
                mode = "cl" if arm == "scratch_cl" else "rcl"
                result = train_flat(
                    loaded.task, run.ppo,
                    _arm_curriculum(loaded.curriculum, mode),
                    seed=run.seed, max_iterations=run.max_iterations,
                    n_workers=run.n_workers,
                    progress=_progress_printer(arm, emit),
                )
        except Exception as exc:  # noqa: BLE001 - a diverging arm is a result
            summary["arms"][arm] = {"error": f"{type(exc).__name__}: {exc}"}
            continue
        write_training_log(out_dir / f"{arm}.train.csv", result.log)
        summary["arms"][arm] = {
            "iterations_to_terminal": result.iterations_to_terminal,
            "iterations_run": len(result.log),
            "episodes_used": result.episodes_used,
            "final_level": result.curriculum.random_level,
            "final_mean_reward": result.log[-1].mean_ep_reward if result.log else None,
        }
    write_json(out_dir / "summary.json", summary)
    return summary
