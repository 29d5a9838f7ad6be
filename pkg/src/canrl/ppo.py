"""PPO with generalized advantage estimation, on top of the hand-rolled
nets.  One trainer core drives three fronts: the base reaching policy,
one attribute module at a time on top of a frozen stack, and flat
from-scratch baselines over the concatenated view.

Episodes draw their randomness from a stream keyed by (seed, stream id,
episode index), so a rollout's content does not depend on how many
workers collected it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .attributes import Task, full_view, full_view_dim, reset, step_task
from .cascade import (
    AttributeModule,
    BaseModule,
    CascadePolicy,
    base_act,
    compensate,
    combine,
    compensation_penalty,
    make_cascade,
    weight_schedule,
)
from .dynamics import action_limits
from .curriculum import (
    CurriculumConfig,
    CurriculumState,
    curriculum_update,
    effective_reset_level,
)
from .errors import DimensionError, DivergenceError
from .nets import (
    SIGMA_MAX,
    SIGMA_MIN,
    AdamState,
    DenseNet,
    GaussianPolicy,
    adam_step,
    gaussian_log_prob,
)

TRAIN_STREAM = 1
EVAL_STREAM = 2
SHUFFLE_STREAM = 3
INIT_STREAM = 4

HIDDEN = (64, 64)


def episode_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream, index]))


@dataclass(frozen=True)
class PPOConfig:
    clip_epsilon: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    lr: float = 1e-4
    epochs_per_iteration: int = 20
    minibatch_size: int = 256
    rollout_steps: int = 2048
    entropy_coeff: float = 0.01
    value_coeff: float = 0.5
    kl_limit: float = 0.05
    max_episodes: int = 10_000
    init_std: float = 0.5
    weight_ramp_fraction: float = 0.3
    checkpoint_every: int = 0  # iterations; 0 disables


@dataclass
class Transition:
    policy_input: np.ndarray
    action: np.ndarray  # the trainable head's sample
    env_action: np.ndarray
    log_prob: float
    critic_input: np.ndarray
    reward: float = 0.0
    done: bool = False


@dataclass
class Rollout:
    policy_inputs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    critic_inputs: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    episode_rewards: list[float]
    episode_lengths: list[int]
    values: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return len(self.rewards)

    @property
    def n_episodes(self) -> int:
        return len(self.episode_rewards)


class Actor:
    """Something that maps a world to a Transition; exposes the trainable
    policy/critic pair."""

    policy: GaussianPolicy
    value_net: DenseNet

    def act(self, world, rng, stochastic: bool = True) -> Transition:
        raise NotImplementedError


class FlatActor(Actor):
    """A single Gaussian policy over one view function."""

    def __init__(self, policy: GaussianPolicy, value_net: DenseNet, view_fn: Callable):
        self.policy = policy
        self.value_net = value_net
        self.view_fn = view_fn

    def act(self, world, rng, stochastic=True) -> Transition:
        view = self.view_fn(world)
        if stochastic:
            a, lp = self.policy.sample(view, rng)
        else:
            a = self.policy.mean(view)
            lp = self.policy.log_prob(view, a)
        return Transition(view, a, a, lp, view)


class CascadeTailActor(Actor):
    """Full cascade forward; the trainable head is the last module.

    The frozen parts of the stack run at their mean actions so the tail
    explores a stationary environment; only its own Gaussian samples.
    """

    def __init__(self, cascade: CascadePolicy):
        if not cascade.modules:
            raise ValueError("cascade has no module to train")
        self.cascade = cascade
        self.module = cascade.modules[-1]
        self.policy = self.module.comp_policy
        self.value_net = self.module.value_net

    def act(self, world, rng, stochastic=True) -> Transition:
        cascade = self.cascade
        base_view = cascade.base_spec.extract(world)
        current, _ = base_act(cascade.base, base_view, None, stochastic=False)
        limits = action_limits(cascade.robot, cascade.cfg)
        tail = len(cascade.modules) - 1
        for i, (module, spec) in enumerate(
            zip(cascade.modules, cascade.module_specs)
        ):
            view = spec.extract(world)
            comp_in, comp, clp = compensate(
                module, view, current, rng, stochastic and i == tail
            )
            current = combine(current, comp, module.weight, limits)
        critic_in = np.concatenate([base_view, view])
        return Transition(comp_in, comp, current, clp, critic_in)


def _run_episode(actor: Actor, task: Task, level: float, mode: str, rng, penalty_coeff: float):
    world = reset(task, level, rng, mode)
    transitions: list[Transition] = []
    total = 0.0
    done = False
    while not done:
        tr = actor.act(world, rng, stochastic=True)
        world, rewards, done, _events = step_task(task, world, tr.env_action)
        r = float(sum(rewards))
        if penalty_coeff > 0.0:
            r += compensation_penalty(tr.action, penalty_coeff)
        tr.reward = r
        tr.done = done
        transitions.append(tr)
        total += r
    return transitions, total


def collect_rollouts(
    actor: Actor,
    task: Task,
    level: float,
    n_steps: int,
    seed: int,
    episode_offset: int = 0,
    mode: str = "cl",
    penalty_coeff: float = 0.0,
    n_workers: int = 1,
    max_new_episodes: int | None = None,
) -> Rollout:
    """Whole episodes until at least n_steps transitions are banked."""
    episodes: list[tuple[list[Transition], float]] = []
    steps = 0
    k = 0

    def room() -> bool:
        if max_new_episodes is not None and k >= max_new_episodes:
            return False
        return steps < n_steps

    if n_workers <= 1:
        while room():
            rng = episode_rng(seed, TRAIN_STREAM, episode_offset + k)
            ep = _run_episode(actor, task, level, mode, rng, penalty_coeff)
            episodes.append(ep)
            steps += len(ep[0])
            k += 1
    else:
        def job(index: int):
            rng = episode_rng(seed, TRAIN_STREAM, episode_offset + index)
            return _run_episode(actor, task, level, mode, rng, penalty_coeff)

        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            while room():
                wave = list(pool.map(job, range(k, k + n_workers)))
                for ep in wave:
                    episodes.append(ep)
                    steps += len(ep[0])
                k += n_workers

    trs = [t for ep, _ in episodes for t in ep]
    return Rollout(
        policy_inputs=np.stack([t.policy_input for t in trs]),
        actions=np.stack([t.action for t in trs]),
        log_probs=np.array([t.log_prob for t in trs]),
        critic_inputs=np.stack([t.critic_input for t in trs]),
        rewards=np.array([t.reward for t in trs]),
        dones=np.array([float(t.done) for t in trs]),
        episode_rewards=[total for _, total in episodes],
        episode_lengths=[len(ep) for ep, _ in episodes],
    )


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    discount: float,
    lam: float,
    last_value: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Reverse-scan advantages and returns.  `dones` cuts the recursion;
    `last_value` bootstraps a trailing unfinished episode."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not (rewards.shape == values.shape == dones.shape):
        raise DimensionError("rewards/values/dones must share a shape")
    n = len(rewards)
    adv = np.zeros(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        cont = 1.0 - dones[t]
        next_value = values[t + 1] if t + 1 < n else last_value
        delta = rewards[t] + discount * next_value * cont - values[t]
        acc = delta + discount * lam * cont * acc
        adv[t] = acc
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_loss(
    batch: dict,
    policy: GaussianPolicy,
    value_net: DenseNet,
    cfg: PPOConfig,
) -> tuple[float, list[np.ndarray], list[np.ndarray], dict]:
    """Clipped surrogate + value MSE + entropy bonus, with gradients for
    every policy and critic parameter."""
    x = batch["policy_inputs"]
    u = batch["actions"]
    lp_old = batch["log_probs"]
    adv = batch["advantages"]
    ret = batch["returns"]
    xv = batch["critic_inputs"]
    n = x.shape[0]

    mean, acts = policy.mean_net.forward_cached(x)
    sigma = policy.std()
    z = (u - mean) / sigma
    lp_new = gaussian_log_prob(mean, sigma, u)
    ratio = np.exp(lp_new - lp_old)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv
    surrogate = np.minimum(unclipped, clipped)
    policy_loss = -float(np.mean(surrogate))

    # gradient flows through the unclipped branch wherever it is the min
    active = (unclipped <= clipped).astype(np.float64)
    d_lp = -(adv * ratio * active) / n
    d_mean = d_lp[:, None] * (z / sigma)
    mean_grads, _ = policy.mean_net.backward_cached(acts, d_mean)

    # sigma clamp stops the log-std gradient outside (SIGMA_MIN, SIGMA_MAX)
    raw_sigma = np.exp(policy.log_std)
    clamp_open = ((raw_sigma > SIGMA_MIN) & (raw_sigma < SIGMA_MAX)).astype(np.float64)
    d_log_std = (d_lp[:, None] * (z * z - 1.0)).sum(axis=0)

    entropy = policy.entropy()
    entropy_loss = -cfg.entropy_coeff * entropy
    d_log_std = (d_log_std - cfg.entropy_coeff) * clamp_open

    v, v_acts = value_net.forward_cached(xv)
    v = v[:, 0]
    diff = v - ret
    value_mse = float(np.mean(diff * diff))
    value_loss = cfg.value_coeff * value_mse
    d_v = (2.0 * cfg.value_coeff / n) * diff
    value_grads, _ = value_net.backward_cached(v_acts, d_v[:, None])

    loss = policy_loss + value_loss + entropy_loss
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss!r}")

    stats = {
        "policy_loss": policy_loss,
        "value_loss": value_mse,
        "entropy": entropy,
        "kl": float(np.mean(lp_old - lp_new)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_epsilon)),
    }
    return loss, [*mean_grads, d_log_std], value_grads, stats


# ---------------------------------------------------------------------------
# training

@dataclass
class IterationLog:
    iteration: int
    episodes: int
    random_level: float
    mean_ep_reward: float
    policy_loss: float
    value_loss: float
    entropy: float
    kl: float


@dataclass
class TrainResult:
    log: list[IterationLog]
    curriculum: CurriculumState
    iterations_to_terminal: int | None
    episodes_used: int
    base: BaseModule | None = None
    module: AttributeModule | None = None
    policy: GaussianPolicy | None = None


def _train_loop(
    actor: Actor,
    task: Task,
    ppo_cfg: PPOConfig,
    cur_cfg: CurriculumConfig,
    seed: int,
    max_iterations: int,
    penalty_coeff: float = 0.0,
    n_workers: int = 1,
    on_iteration: Callable[[int], None] | None = None,
    progress: Callable[[IterationLog], None] | None = None,
    stop_at_terminal: bool = True,
) -> tuple[list[IterationLog], CurriculumState, int | None, int]:
    params = [*actor.policy.parameters(), *actor.value_net.parameters()]
    n_pol = len(actor.policy.parameters())
    adam = AdamState.for_params(params, lr=ppo_cfg.lr)
    cur = CurriculumState.from_config(cur_cfg)
    shuffle_rng = episode_rng(seed, SHUFFLE_STREAM, 0)
    log: list[IterationLog] = []
    episodes_used = 0
    iters_to_terminal: int | None = None

    for it in range(max_iterations):
        if on_iteration is not None:
            on_iteration(it)
        level = effective_reset_level(cur)
        roll = collect_rollouts(
            actor,
            task,
            level,
            ppo_cfg.rollout_steps,
            seed,
            episode_offset=episodes_used,
            mode=cur_cfg.mode,
            penalty_coeff=penalty_coeff,
            n_workers=n_workers,
            max_new_episodes=ppo_cfg.max_episodes - episodes_used,
        )
        episodes_used += roll.n_episodes
        values = actor.value_net.forward(roll.critic_inputs)[:, 0]
        roll.values = values
        adv, ret = compute_gae(
            roll.rewards, values, roll.dones, ppo_cfg.discount, ppo_cfg.gae_lambda
        )
        nadv = normalize_advantages(adv)

        n = roll.n_steps
        stats_acc: list[dict] = []
        for _epoch in range(ppo_cfg.epochs_per_iteration):
            order = shuffle_rng.permutation(n)
            epoch_kls = []
            for lo in range(0, n, ppo_cfg.minibatch_size):
                idx = order[lo : lo + ppo_cfg.minibatch_size]
                batch = {
                    "policy_inputs": roll.policy_inputs[idx],
                    "actions": roll.actions[idx],
                    "log_probs": roll.log_probs[idx],
                    "advantages": nadv[idx],
                    "returns": ret[idx],
                    "critic_inputs": roll.critic_inputs[idx],
                }
                _loss, pol_grads, val_grads, stats = ppo_loss(
                    batch, actor.policy, actor.value_net, ppo_cfg
                )
                params = adam_step(params, [*pol_grads, *val_grads], adam)
                actor.policy.set_parameters(params[:n_pol])
                actor.value_net.set_parameters(params[n_pol:])
                stats_acc.append(stats)
                epoch_kls.append(stats["kl"])
            if float(np.mean(epoch_kls)) > ppo_cfg.kl_limit:
                break

        mean_ep = float(np.mean(roll.episode_rewards))
        row = IterationLog(
            iteration=it,
            episodes=roll.n_episodes,
            random_level=cur.random_level,
            mean_ep_reward=mean_ep,
            policy_loss=float(np.mean([s["policy_loss"] for s in stats_acc])),
            value_loss=float(np.mean([s["value_loss"] for s in stats_acc])),
            entropy=float(np.mean([s["entropy"] for s in stats_acc])),
            kl=float(np.mean([s["kl"] for s in stats_acc])),
        )
        log.append(row)
        if progress is not None:
            progress(row)

        if iters_to_terminal is None:
            cur, _increased, terminal = curriculum_update(cur, mean_ep)
            if terminal:
                iters_to_terminal = it + 1
                if stop_at_terminal:
                    break
        if episodes_used >= ppo_cfg.max_episodes:
            break

    return log, cur, iters_to_terminal, episodes_used


def train_base(
    task: Task,
    ppo_cfg: PPOConfig,
    cur_cfg: CurriculumConfig,
    seed: int,
    max_iterations: int,
    n_workers: int = 1,
    progress: Callable[[IterationLog], None] | None = None,
    stop_at_terminal: bool = True,
) -> TrainResult:
    """Train the reaching policy on a bare task; returns a frozen base."""
    if task.addons:
        raise ValueError("base training expects a task with no add-ons")
    rng = episode_rng(seed, INIT_STREAM, 0)
    policy = GaussianPolicy.create(
        task.base.state_dim, task.action_dim, rng, HIDDEN, ppo_cfg.init_std
    )
    value = DenseNet.create([task.base.state_dim, *HIDDEN, 1], rng)
    actor = FlatActor(policy, value, task.base.extract)
    log, cur, itt, eps = _train_loop(
        actor, task, ppo_cfg, cur_cfg, seed, max_iterations,
        n_workers=n_workers, progress=progress, stop_at_terminal=stop_at_terminal,
    )
    base = BaseModule(task.robot, policy, value, frozen=True)
    return TrainResult(log, cur, itt, eps, base=base, policy=policy)


def train_attribute(
    base: BaseModule,
    task: Task,
    ppo_cfg: PPOConfig,
    cur_cfg: CurriculumConfig,
    seed: int,
    max_iterations: int,
    n_workers: int = 1,
    progress: Callable[[IterationLog], None] | None = None,
    stop_at_terminal: bool = True,
) -> TrainResult:
    """Train one compensation module on top of a frozen base.

    The module's weight ramps linearly over the first
    `weight_ramp_fraction` of the iteration budget; its action-magnitude
    penalty joins the reward stream.  The base is verified bitwise
    unchanged afterwards.
    """
    if not base.frozen:
        raise ValueError("attribute training needs a frozen base module")
    if len(task.addons) != 1:
        raise ValueError("attribute training expects exactly one add-on")
    spec = task.addons[0]
    rng = episode_rng(seed, INIT_STREAM, 1)
    adim = task.action_dim
    comp = GaussianPolicy.create(
        spec.state_dim + adim, adim, rng, HIDDEN, ppo_cfg.init_std
    )
    critic = DenseNet.create(
        [task.base.state_dim + spec.state_dim, *HIDDEN, 1], rng
    )
    module = AttributeModule(
        task.robot,
        spec.kind,
        comp,
        critic,
        entity_index=spec.entity_index,
    )
    cascade = make_cascade(base, [module], task.cfg)
    actor = CascadeTailActor(cascade)
    snapshot = [p.copy() for p in base.policy.parameters()]
    ramp = max(1, math.ceil(ppo_cfg.weight_ramp_fraction * max_iterations))

    def set_weight(it: int) -> None:
        module.weight = weight_schedule(it, ramp)

    log, cur, itt, eps = _train_loop(
        actor, task, ppo_cfg, cur_cfg, seed, max_iterations,
        penalty_coeff=module.penalty_coeff, n_workers=n_workers,
        on_iteration=set_weight, progress=progress,
        stop_at_terminal=stop_at_terminal,
    )
    for now, before in zip(base.policy.parameters(), snapshot):
        if now.tobytes() != before.tobytes():
            raise RuntimeError("frozen base changed during attribute training")
    return TrainResult(log, cur, itt, eps, module=module)


def train_flat(
    task: Task,
    ppo_cfg: PPOConfig,
    cur_cfg: CurriculumConfig,
    seed: int,
    max_iterations: int,
    n_workers: int = 1,
    progress: Callable[[IterationLog], None] | None = None,
    stop_at_terminal: bool = True,
) -> TrainResult:
    """From-scratch baseline: one policy over the concatenated views."""
    rng = episode_rng(seed, INIT_STREAM, 2)
    dim = full_view_dim(task)
    policy = GaussianPolicy.create(dim, task.action_dim, rng, HIDDEN, ppo_cfg.init_std)
    value = DenseNet.create([dim, *HIDDEN, 1], rng)
    actor = FlatActor(policy, value, lambda w: full_view(task, w))
    log, cur, itt, eps = _train_loop(
        actor, task, ppo_cfg, cur_cfg, seed, max_iterations,
        n_workers=n_workers, progress=progress, stop_at_terminal=stop_at_terminal,
    )
    return TrainResult(log, cur, itt, eps, policy=policy)
