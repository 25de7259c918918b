"""Two-phase training: imitation from ORCA demonstrations, then TD learning.

Demonstration episodes drive the robot with ORCA and label every step with
a Monte-Carlo discounted return; the temporal-difference phase explores
epsilon-greedily and replays stored transitions, recomputing one-step
bootstrap targets from the current network at sampling time.
"""

from __future__ import annotations

import pickle
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import orca
from .env import CrowdEnv, transform_to_robot_frame
from .net.checkpoint import save_checkpoint
from .net.network import (
    HIDDEN,
    NetworkParameters,
    backward_batch,
    forward_batch,
    gru_cell,
    gru_seq_forward,
)
from .net.optim import SgdMomentum
from .net.policy import NetworkPolicy
from .sim import ScenarioSpec, generate_scenario


class DivergenceError(RuntimeError):
    """Value estimates blew up during TD training."""


# During TD training the stored memories are replayed with the current
# parameters every this many episodes (every epoch during imitation).
HIDDEN_REFRESH_EVERY = 50


@dataclass
class Transition:
    """One step of experience with its observation-frame tensors.

    The stored robot-GRU hidden snapshot is replayed as the memory context
    so transitions stay independently sampleable. next_* fields are only
    populated for TD transitions (they allow target recomputation).
    """

    humans: np.ndarray        # (n, 7)
    robot: np.ndarray         # (5,)
    hidden: np.ndarray        # (20,) memory entering this step
    value_target: float
    action_index: int
    terminal: bool
    reward: float = 0.0
    next_humans: np.ndarray | None = None
    next_robot: np.ndarray | None = None
    next_hidden: np.ndarray | None = None


class ReplayBuffer:
    """Bounded FIFO store of transitions."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.entries: deque[Transition] = deque(maxlen=capacity)

    def push(self, t: Transition) -> None:
        self.entries.append(t)

    def sample(self, rng: np.random.Generator, k: int) -> list[Transition]:
        idx = rng.integers(0, len(self.entries), size=k)
        return [self.entries[i] for i in idx]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        payload = {"capacity": self.capacity, "entries": list(self.entries)}
        if meta is not None:
            payload["meta"] = meta
        with open(path, "wb") as fh:
            pickle.dump(payload, fh, protocol=4)

    @classmethod
    def load(cls, path: str | Path) -> "ReplayBuffer":
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
        buf = cls(payload["capacity"])
        for t in payload["entries"]:
            buf.push(t)
        return buf


@dataclass
class TrainConfig:
    demo_episodes: int = 3000
    imitation_epochs: int = 400
    imitation_lr: float = 0.01
    rl_episodes: int = 10000
    rl_lr: float = 0.001
    gamma: float = 0.9
    eps_start: float = 0.5
    eps_end: float = 0.1
    eps_decay_episodes: int = 4000
    batch_size: int = 100
    warmup_episodes: int = 1000
    buffer_capacity: int = 100000
    seed: int = 0
    momentum: float = 0.9
    ce_weight: float = 0.1
    v_norm: float = 1.0
    checkpoint_every: int = 500

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.eps_start < self.eps_end:
            raise ValueError("eps_start must be >= eps_end")

    def discount_step(self, dt: float) -> float:
        return self.gamma ** (dt * self.v_norm)


def mc_value_targets(rewards: list[float], gamma_step: float) -> np.ndarray:
    """Discounted return-to-go for each step, by backward recurrence."""
    y = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma_step * acc
        y[t] = acc
    return y


def epsilon_schedule(episode: int, config: TrainConfig) -> float:
    """Linear decay from eps_start to eps_end, then constant."""
    if episode < 0:
        raise ValueError("episode must be non-negative")
    frac = min(episode / config.eps_decay_episodes, 1.0)
    return config.eps_start + (config.eps_end - config.eps_start) * frac


def _nearest_action_index(actions, v_frame: np.ndarray) -> int:
    vels = np.stack([a.velocity for a in actions])
    return int(np.argmin(np.linalg.norm(vels - v_frame, axis=1)))


def run_demonstrations(
    config: TrainConfig,
    scenario_spec: ScenarioSpec,
    env: CrowdEnv,
    params: NetworkParameters,
    buffer: ReplayBuffer | None = None,
    episode_log: list[dict] | None = None,
) -> ReplayBuffer:
    """ORCA-driven episodes labelled with Monte-Carlo value targets.

    params only supplies the robot-GRU used to evolve the stored memory
    snapshots; demonstrations do not query the value head. When given,
    episode_log collects one summary dict per episode.
    """
    from .env import action_space, goal_angle, rotate

    if buffer is None:
        buffer = ReplayBuffer(config.buffer_capacity)
    robot_gru = params.gru("robot_gru")

    for ep in range(config.demo_episodes):
        world = generate_scenario(replace(scenario_spec, seed=scenario_spec.seed + ep))
        actions = action_space(world.robot.v_pref)
        gamma_step = config.discount_step(world.dt)
        h = np.zeros(HIDDEN)
        steps: list[Transition] = []
        rewards: list[float] = []
        event = "none"
        while event == "none":
            joint = transform_to_robot_frame(world)
            robot_vec = joint.robot.flatten()
            h_prev = h
            h = gru_cell(robot_gru, robot_vec, h)

            v_world = orca.orca_policy(world, orca.ROBOT, env.orca)
            v_frame = rotate(v_world, -goal_angle(world))
            a_idx = _nearest_action_index(actions, v_frame)

            world, _, breakdown, event = env.step_velocity(world, v_world)
            steps.append(Transition(
                humans=joint.humans_array(),
                robot=robot_vec,
                hidden=h_prev,
                value_target=0.0,
                action_index=a_idx,
                terminal=event != "none",
            ))
            rewards.append(breakdown.total)
        targets = mc_value_targets(rewards, gamma_step)
        for t, y in zip(steps, targets):
            t.value_target = float(y)
            buffer.push(t)
        if episode_log is not None:
            episode_log.append({
                "episode": ep,
                "steps": len(steps),
                "outcome": event,
                "return": float(targets[0]) if len(targets) else 0.0,
            })
    return buffer


def _grouped_indices(batch: list[Transition]) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for i, t in enumerate(batch):
        groups.setdefault(t.humans.shape[0], []).append(i)
    return groups


def _batch_loss_and_grads(params: NetworkParameters, batch: list[Transition], config: TrainConfig):
    """Mean value MSE plus weighted policy cross-entropy, with gradients."""
    total = len(batch)
    grads = params.zeros_like()
    loss = 0.0
    for n, idxs in sorted(_grouped_indices(batch).items()):
        humans = np.stack([batch[i].humans for i in idxs]) if n else np.zeros((len(idxs), 0, 7))
        robot = np.stack([batch[i].robot for i in idxs])
        hidden = np.stack([batch[i].hidden for i in idxs])
        y = np.array([batch[i].value_target for i in idxs])
        a = np.array([batch[i].action_index for i in idxs])

        out = forward_batch(params, humans, robot, hidden)
        v, pi = out["V"], out["pi"]
        err = v - y
        onehot = np.zeros_like(pi)
        onehot[np.arange(len(idxs)), a] = 1.0
        log_pi = np.log(np.clip(pi[np.arange(len(idxs)), a], 1e-300, None))
        loss += float((err ** 2).sum() - config.ce_weight * log_pi.sum())

        d_v = 2.0 * err / total
        d_logits = config.ce_weight * (pi - onehot) / total
        g = backward_batch(params, out["trace"], d_v, d_logits)
        for name in grads:
            grads[name] += g[name]
    return loss / total, grads


def imitation_fit(
    params: NetworkParameters,
    buffer: ReplayBuffer,
    config: TrainConfig,
    log_cb=None,
) -> list[float]:
    """Epochwise shuffled minibatch regression onto the MC targets."""
    data = list(buffer)
    if not data:
        raise ValueError("replay buffer is empty")
    rng = np.random.default_rng(config.seed)
    opt = SgdMomentum(config.momentum)
    epoch_losses = []
    for epoch in range(config.imitation_epochs):
        refresh_hidden_states(params, buffer)
        order = rng.permutation(len(data))
        losses = []
        for start in range(0, len(data), config.batch_size):
            batch = [data[i] for i in order[start : start + config.batch_size]]
            loss, grads = _batch_loss_and_grads(params, batch, config)
            opt.step(params, grads, config.imitation_lr)
            losses.append(loss)
        epoch_losses.append(float(np.mean(losses)))
        if log_cb is not None:
            log_cb(epoch, epoch_losses[-1])
    return epoch_losses


def refresh_hidden_states(params: NetworkParameters, buffer: ReplayBuffer) -> None:
    """Recompute every stored robot-GRU memory with the current parameters.

    Stored memories were produced by whatever parameters were in effect when
    the transition was collected; as training updates the GRU they drift off
    the distribution the value head sees at execution time, which wrecks the
    greedy policy. Terminal flags delimit episodes in insertion order, so the
    memories are replayed from a zero state episode by episode.
    """
    layer = params.gru("robot_gru")
    episodes: list[list[Transition]] = []
    cur: list[Transition] = []
    for t in buffer:
        cur.append(t)
        if t.terminal:
            episodes.append(cur)
            cur = []
    if cur:
        episodes.append(cur)
    if not episodes:
        return
    h = np.zeros((len(episodes), HIDDEN))
    for k in range(max(len(e) for e in episodes)):
        idx = [i for i, e in enumerate(episodes) if len(e) > k]
        x = np.stack([episodes[i][k].robot for i in idx])[:, None, :]
        hs, _ = gru_seq_forward(*layer, x, h[idx])
        h_next = hs[:, 0, :]
        for j, i in enumerate(idx):
            t = episodes[i][k]
            t.hidden = h[i].copy()
            if t.next_hidden is not None:
                t.next_hidden = h_next[j].copy()
        h[idx] = h_next


def _refresh_td_targets(params: NetworkParameters, batch: list[Transition], gamma_step: float) -> None:
    """Recompute y = r + gamma_step * V(s') (y = r at terminal) in place.

    Transitions without next-state tensors (demonstrations) keep their
    stored Monte-Carlo targets.
    """
    td = [i for i, t in enumerate(batch) if t.next_robot is not None]
    open_idx = []
    for i in td:
        if batch[i].terminal:
            batch[i].value_target = batch[i].reward
        else:
            open_idx.append(i)
    if not open_idx:
        return
    by_n: dict[int, list[int]] = {}
    for i in open_idx:
        by_n.setdefault(batch[i].next_humans.shape[0], []).append(i)
    for n, sel in sorted(by_n.items()):
        humans = np.stack([batch[i].next_humans for i in sel]) if n else np.zeros((len(sel), 0, 7))
        robot = np.stack([batch[i].next_robot for i in sel])
        hidden = np.stack([batch[i].next_hidden for i in sel])
        v = forward_batch(params, humans, robot, hidden)["V"]
        for i, vi in zip(sel, v):
            batch[i].value_target = batch[i].reward + gamma_step * float(vi)


def _episode_seed(config: TrainConfig, stream: int, episode: int) -> int:
    """Per-episode RNG seed derived from (config seed, stream, episode).

    Keyed on the episode index, not on a shared generator's draw history,
    so a resumed run replays the same stream from any starting episode.
    """
    return int(np.random.SeedSequence([config.seed, stream, episode]).generate_state(1)[0])


def save_train_state(path: str | Path, buffer: ReplayBuffer, opt: SgdMomentum, episode: int) -> None:
    with open(path, "wb") as fh:
        pickle.dump(
            {"buffer": {"capacity": buffer.capacity, "entries": list(buffer.entries)},
             "velocity": opt.velocity, "momentum": opt.momentum, "episode": episode},
            fh, protocol=4,
        )


def load_train_state(path: str | Path) -> tuple[ReplayBuffer, SgdMomentum, int]:
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    buffer = ReplayBuffer(payload["buffer"]["capacity"])
    for t in payload["buffer"]["entries"]:
        buffer.push(t)
    opt = SgdMomentum(payload["momentum"])
    opt.velocity = payload["velocity"]
    return buffer, opt, payload["episode"]


def rl_train(
    params: NetworkParameters,
    config: TrainConfig,
    scenario_spec: ScenarioSpec,
    env: CrowdEnv,
    buffer: ReplayBuffer | None = None,
    out_dir: str | Path | None = None,
    log_cb=None,
    start_episode: int = 0,
    opt: SgdMomentum | None = None,
) -> list[dict]:
    """Epsilon-greedy episodes with experience replay; returns the episode log."""
    if buffer is None:
        buffer = ReplayBuffer(config.buffer_capacity)
    if opt is None:
        opt = SgdMomentum(config.momentum)
    log: list[dict] = []

    for ep in range(start_episode, config.rl_episodes):
        if ep % HIDDEN_REFRESH_EVERY == 0:
            refresh_hidden_states(params, buffer)
        eps = epsilon_schedule(ep, config)
        world = generate_scenario(
            replace(scenario_spec, seed=scenario_spec.seed + 10_000_000 + ep)
        )
        gamma_step = config.discount_step(world.dt)
        policy = NetworkPolicy(
            params, env, gamma=config.gamma, v_norm=config.v_norm,
            epsilon=eps, seed=_episode_seed(config, 1, ep),
        )
        policy.reset(world)

        episode: list[Transition] = []
        ep_return = 0.0
        abs_v = []
        event = "none"
        steps = 0
        while event == "none":
            action = policy.act(world)
            joint = policy.last_joint
            h_prev = policy.last_h_prev
            h_now = policy.h
            abs_v.append(abs(policy.last_value))
            world, next_joint, breakdown, event = env.step(world, action)
            episode.append(Transition(
                humans=joint.humans_array(),
                robot=joint.robot.flatten(),
                hidden=h_prev,
                value_target=breakdown.total,  # refreshed at sampling time
                action_index=action.index,
                terminal=event != "none",
                reward=breakdown.total,
                next_humans=next_joint.humans_array(),
                next_robot=next_joint.robot.flatten(),
                next_hidden=h_now,
            ))
            ep_return += gamma_step ** steps * breakdown.total
            steps += 1

        for t in episode:
            buffer.push(t)

        loss = None
        if ep >= config.warmup_episodes and len(buffer) > 0:
            sample_rng = np.random.default_rng(_episode_seed(config, 2, ep))
            batch = buffer.sample(sample_rng, config.batch_size)
            _refresh_td_targets(params, batch, gamma_step)
            loss, grads = _batch_loss_and_grads(params, batch, config)
            opt.step(params, grads, config.rl_lr)

        if abs_v and float(np.mean(abs_v)) > 1e3:
            raise DivergenceError(f"episode {ep}: running mean |V| exceeds 1e3")

        log.append({
            "episode": ep,
            "epsilon": eps,
            "return": ep_return,
            "outcome": event,
            "steps": steps,
            "loss": loss,
        })
        if log_cb is not None:
            log_cb(log[-1])
        if out_dir is not None and (ep + 1) % config.checkpoint_every == 0:
            save_checkpoint(params, Path(out_dir) / f"ckpt_ep{ep + 1}.mesa")
            save_train_state(Path(out_dir) / f"ckpt_ep{ep + 1}.state.pkl", buffer, opt, ep + 1)
    return log
