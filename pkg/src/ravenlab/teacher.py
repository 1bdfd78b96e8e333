"""DDPG teacher: maps the student's learning history to a category mixture.

The actor emits C logits; a softmax puts them on the probability simplex,
and exploration noise is added to the logits before that softmax. The critic
scores (state, action) pairs. Both have slowly tracking target copies.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyBuffer, EmptyValidationSet, ShapeMismatch
from .tensor import MLP, Adam, Tensor, concat, dumps_checkpoint, loads_checkpoint, mse, softmax

DEFAULT_LOSS_CAP = 2.0 * math.log(8.0)


@dataclass
class DdpgConfig:
    n_classes: int = 4
    history: int = 10
    actor_hidden: tuple = (128, 128)
    critic_hidden: tuple = (128, 128)
    gamma: float = 0.9
    tau: float = 0.01
    capacity: int = 10_000
    batch: int = 64
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    sigma_start: float = 0.5
    sigma_decay: float = 0.995
    sigma_floor: float = 0.05
    loss_cap: float = DEFAULT_LOSS_CAP
    episode_length: int = 100
    terminal_reward_only: bool = False

    def __post_init__(self):
        self.actor_hidden = tuple(self.actor_hidden)
        self.critic_hidden = tuple(self.critic_hidden)
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.n_classes < 1 or self.history < 1 or self.capacity < 1 or self.batch < 1:
            raise ValueError("n_classes, history, capacity and batch must be positive")
        if self.loss_cap <= 0 or self.episode_length < 1:
            raise ValueError("loss_cap and episode_length must be positive")

    @property
    def state_dim(self):
        C, N = self.n_classes, self.history
        return 2 * C * N + 5 * C + 2


@dataclass
class StepRecord:
    """What the harness observed during one teacher step.

    ``class_counts`` are raw sample counts of the last batch; every other
    per-class field is a length-C vector. Classes absent from the batch keep
    the training loss they last had (the harness carries it forward).
    """

    train_loss: np.ndarray
    val_accuracy: np.ndarray
    val_loss: np.ndarray
    prob_correct: np.ndarray
    class_counts: np.ndarray
    action: np.ndarray
    mean_train_loss: float


def _scaled(loss, cap):
    return np.clip(np.asarray(loss, dtype=np.float64), 0.0, cap) / cap


def build_state(history, t, config):
    """Feature vector of length ``config.state_dim``; pure in its arguments.

    Layout: the last N per-class training losses, then the last N per-class
    validation accuracies (each oldest first, zero padded in front), then
    for the latest step: mean probability of the correct answer, validation
    loss and validation accuracy per class, the average training loss over
    the whole history, the batch composition, the last action and t / T.
    Losses are clipped to [0, cap] and divided by cap; batch counts are
    divided by the batch size.
    """
    C, N, cap = config.n_classes, config.history, config.loss_cap
    recent = list(history)[-N:]
    long_loss = np.zeros((N, C))
    long_acc = np.zeros((N, C))
    for i, rec in enumerate(recent):
        row = N - len(recent) + i
        long_loss[row] = _scaled(rec.train_loss, cap)
        long_acc[row] = rec.val_accuracy
    near = np.zeros(5 * C + 1)
    if recent:
        last = recent[-1]
        counts = np.asarray(last.class_counts, dtype=np.float64)
        total = counts.sum()
        near = np.concatenate([
            last.prob_correct,
            _scaled(last.val_loss, cap),
            last.val_accuracy,
            [float(np.mean([_scaled(r.mean_train_loss, cap) for r in history]))],
            counts / total if total > 0 else counts,
            last.action,
        ])
    time = min(max(t / config.episode_length, 0.0), 1.0)
    state = np.concatenate([long_loss.ravel(), long_acc.ravel(), near, [time]])
    assert state.shape == (config.state_dim,), state.shape
    return state


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool = False

    def __post_init__(self):
        if not 0.0 <= self.reward <= 1.0:
            raise ValueError(f"reward must be a validation accuracy in [0, 1], got {self.reward}")


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling (with replacement)."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items = []
        self._next = 0

    def __len__(self):
        return len(self._items)

    def store(self, transition):
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def items(self):
        """Stored transitions, oldest first."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._next:] + self._items[:self._next]

    def sample(self, n, rng):
        if not self._items:
            raise EmptyBuffer("cannot sample from an empty replay buffer")
        idx = rng.integers(0, len(self._items), size=n)
        return [self._items[i] for i in idx]


def soft_update(online, target, tau):
    """target <- tau * online + (1 - tau) * target, parameter by parameter."""
    src = online.parameters()
    dst = target.parameters()
    if len(src) != len(dst):
        raise ShapeMismatch(f"{len(src)} online parameters vs {len(dst)} target parameters")
    for a, b in zip(src, dst):
        if a.shape != b.shape:
            raise ShapeMismatch(f"parameter shapes differ: {a.shape} vs {b.shape}")
    for a, b in zip(src, dst):
        b.data = a.data.copy() if tau == 1 else tau * a.data + (1.0 - tau) * b.data
    return target


def reward(correct):
    """Fraction of validation puzzles answered correctly."""
    correct = np.asarray(correct, dtype=bool).ravel()
    if correct.size == 0:
        raise EmptyValidationSet("reward needs at least one validation puzzle")
    return float(correct.mean())


def _copy_into(src, dst):
    for a, b in zip(src.parameters(), dst.parameters()):
        b.data = a.data.copy()


class DdpgTeacher:
    def __init__(self, config=None, seed=0):
        self.config = config or DdpgConfig()
        cfg = self.config
        init_rng = np.random.default_rng([seed, 0])
        self.rng = np.random.default_rng([seed, 1])
        S, C = cfg.state_dim, cfg.n_classes
        self.actor = MLP([S, *cfg.actor_hidden, C], init_rng, zero_last=True)
        self.critic = MLP([S + C, *cfg.critic_hidden, 1], init_rng)
        self.target_actor = MLP([S, *cfg.actor_hidden, C], init_rng, zero_last=True)
        self.target_critic = MLP([S + C, *cfg.critic_hidden, 1], init_rng)
        _copy_into(self.actor, self.target_actor)
        _copy_into(self.critic, self.target_critic)
        self.actor_opt = Adam(self.actor.parameters(), cfg.actor_lr)
        self.critic_opt = Adam(self.critic.parameters(), cfg.critic_lr)
        self.buffer = ReplayBuffer(cfg.capacity)
        self.explored = 0

    @property
    def sigma(self):
        cfg = self.config
        return max(cfg.sigma_floor, cfg.sigma_start * cfg.sigma_decay ** self.explored)

    def _check_state(self, state):
        state = np.asarray(state, dtype=np.float64)
        if state.shape[-1] != self.config.state_dim:
            raise DimensionMismatch(f"state has {state.shape[-1]} features, expected {self.config.state_dim}")
        return state

    def select_action(self, state, explore=False):
        """Point on the C-simplex; with ``explore`` the logits get Gaussian noise and sigma decays."""
        state = self._check_state(state)
        logits = self.actor(Tensor(state)).data
        if explore:
            logits = logits + self.sigma * self.rng.standard_normal(logits.shape)
            self.explored += 1
        z = np.exp(logits - logits.max(axis=-1, keepdims=True))
        return z / z.sum(axis=-1, keepdims=True)

    def observe(self, transition):
        self.buffer.store(transition)

    def sample_minibatch(self):
        return self.buffer.sample(self.config.batch, self.rng)

    def critic_target(self, rewards, next_states, terminal):
        """r + gamma * Q'(s', mu'(s')) from the target networks, as a plain array."""
        cfg = self.config
        rewards = np.asarray(rewards, dtype=np.float64)
        if cfg.gamma == 0:
            return rewards.copy()
        next_actions = softmax(self.target_actor(Tensor(next_states))).data
        q_next = self.target_critic(Tensor(np.concatenate([next_states, next_actions], axis=-1))).data[:, 0]
        return rewards + cfg.gamma * (1.0 - np.asarray(terminal, dtype=np.float64)) * q_next

    def critic_loss(self, states, actions, targets):
        q = self.critic(concat([Tensor(states), Tensor(actions)], axis=-1))
        return mse(q, np.asarray(targets, dtype=np.float64)[:, None])

    def actor_objective(self, states):
        """Mean Q(s, mu(s)); differentiable in the actor (and critic) parameters."""
        s = Tensor(states)
        return self.critic(concat([s, softmax(self.actor(s))], axis=-1)).mean()

    def update(self, minibatch=None):
        """One critic regression step, one actor ascent step, then target tracking."""
        if minibatch is None:
            minibatch = self.sample_minibatch()
        if not minibatch:
            raise EmptyBuffer("update needs a nonempty minibatch")
        states = np.stack([t.state for t in minibatch])
        actions = np.stack([t.action for t in minibatch])
        next_states = np.stack([t.next_state for t in minibatch])
        rewards = np.array([t.reward for t in minibatch])
        terminal = np.array([t.terminal for t in minibatch])
        self._check_state(states)

        targets = self.critic_target(rewards, next_states, terminal)
        self.critic_opt.zero_grad()
        loss = self.critic_loss(states, actions, targets)
        loss.backward()
        self.critic_opt.step()

        self.actor_opt.zero_grad()
        objective = self.actor_objective(states)
        (-objective).backward()
        self.actor_opt.step()
        self.critic.zero_grad()

        soft_update(self.actor, self.target_actor, self.config.tau)
        soft_update(self.critic, self.target_critic, self.config.tau)
        return loss.item(), objective.item()

    # persistence ---------------------------------------------------------
    def state_dict(self, include_buffer=False):
        out = {}
        for prefix, net in (("actor", self.actor), ("critic", self.critic),
                            ("target_actor", self.target_actor), ("target_critic", self.target_critic)):
            out.update({f"{prefix}.{k}": v for k, v in net.state_dict().items()})
        out["explored"] = np.array([self.explored], dtype=np.float64)
        if include_buffer and len(self.buffer):
            items = self.buffer.items()
            out["buffer.state"] = np.stack([t.state for t in items])
            out["buffer.action"] = np.stack([t.action for t in items])
            out["buffer.reward"] = np.array([t.reward for t in items])
            out["buffer.next_state"] = np.stack([t.next_state for t in items])
            out["buffer.terminal"] = np.array([float(t.terminal) for t in items])
        return out

    def load_state_dict(self, state):
        for prefix, net in (("actor", self.actor), ("critic", self.critic),
                            ("target_actor", self.target_actor), ("target_critic", self.target_critic)):
            net.load_state_dict({k[len(prefix) + 1:]: v for k, v in state.items() if k.startswith(prefix + ".")})
        self.explored = int(state["explored"][0])
        if "buffer.state" in state:
            self.buffer = ReplayBuffer(self.config.capacity)
            for i in range(len(state["buffer.reward"])):
                self.buffer.store(Transition(state["buffer.state"][i], state["buffer.action"][i],
                                             float(state["buffer.reward"][i]), state["buffer.next_state"][i],
                                             bool(state["buffer.terminal"][i])))

    def dumps(self, include_buffer=False):
        return dumps_checkpoint(self.state_dict(include_buffer))

    def loads(self, blob):
        self.load_state_dict(loads_checkpoint(blob))


def write_action_log(path, rows):
    """Rows of (step, action vector, reward) as CSV with a header."""
    rows = list(rows)
    n = len(rows[0][1]) if rows else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", *(f"a{i}" for i in range(n)), "reward"])
        for step, action, r in rows:
            w.writerow([step, *(repr(float(a)) for a in action), repr(float(r))])
