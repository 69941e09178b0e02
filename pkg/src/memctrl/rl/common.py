"""Pieces shared by every trainer: reward, replay, target updates, logs and the
tracking environment."""
from __future__ import annotations

import copy
import csv
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..fmc import ErrorHistory, apply_increment
from ..nn.layers import ShapeError
from ..nn.optim import TrainingError


def reward(p_t, p_d, scale=1000.0, norm=1.0):
    """``-scale * ((p_t - p_d) / norm)**2``."""
    d = (p_t - p_d) / norm
    return -scale * d * d


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: object
    r: float
    s_next: np.ndarray
    done: bool = False


class BufferNotReady(RuntimeError):
    pass


class ReplayBuffer:
    """Bounded FIFO replay store, sampled uniformly with replacement.

    Storage is columnar so a batch is a handful of fancy-indexing ops.
    """

    def __init__(self, capacity: int, state_dim: int, action_dim: int = 1, seed=0,
                 discrete=False):
        self.capacity = int(capacity)
        self.rng = np.random.default_rng(seed)
        self.s = np.zeros((self.capacity, state_dim))
        self.s_next = np.zeros((self.capacity, state_dim))
        self.a = np.zeros(self.capacity, dtype=np.int64) if discrete else \
            np.zeros((self.capacity, action_dim))
        self.r = np.zeros(self.capacity)
        self.done = np.zeros(self.capacity)
        self.discrete = discrete
        self._next = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s_next, done=False):
        if not math.isfinite(r):
            raise ValueError(f"reward must be finite, got {r}")
        s = np.asarray(s, dtype=float)
        s_next = np.asarray(s_next, dtype=float)
        if s.shape != s_next.shape or s.shape != self.s.shape[1:]:
            raise ShapeError("state shapes disagree with the buffer")
        i = self._next
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.done[i] = float(done)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def store(self, tr: Transition):
        self.add(tr.s, tr.a, tr.r, tr.s_next, tr.done)

    def sample_indices(self, n: int) -> np.ndarray:
        if self.size == 0:
            raise BufferNotReady("replay buffer is empty")
        return self.rng.integers(0, self.size, size=n)

    def sample(self, n: int):
        """Columns ``(s, a, r, s_next, done)`` for ``n`` uniform draws."""
        idx = self.sample_indices(n)
        return self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx]

    def sample_transitions(self, n: int) -> list[Transition]:
        idx = self.sample_indices(n)
        a = self.a[idx]
        return [Transition(self.s[i].copy(), a[j] if self.discrete else a[j].copy(),
                           float(self.r[i]), self.s_next[i].copy(), bool(self.done[i]))
                for j, i in enumerate(idx)]


def replay_sample(buf: ReplayBuffer, n: int) -> list[Transition]:
    return buf.sample_transitions(n)


def soft_update(main, target, tau: float):
    """In place ``target <- tau * main + (1 - tau) * target``; networks or array lists."""
    src = main.params() if hasattr(main, "params") else main
    dst = target.params() if hasattr(target, "params") else target
    if len(src) != len(dst) or any(a.shape != b.shape for a, b in zip(src, dst)):
        raise ShapeError("soft update between differently shaped parameter sets")
    if tau == 1.0:
        for d, s in zip(dst, src):
            d[...] = s
        return target
    for d, s in zip(dst, src):
        d *= 1.0 - tau
        d += tau * s
    return target


def hard_update(main, target):
    return soft_update(main, target, 1.0)


DEFAULT_ACTION_SET = (-5.0, -2.0, -0.5, 0.0, 0.5, 2.0, 5.0)


@dataclass
class TrainerConfig:
    gamma: float = 0.95
    tau: float = 0.01
    episodes: int = 150
    steps_per_episode: int = 400
    batch_size: int = 64
    seed: int = 0
    reward_scale: float = 1000.0
    k: int = 4
    out_scale: float = 5.0
    error_norm: float = 2.0    # degrees per unit of network input
    buffer_capacity: int = 50_000
    warmup: int = 500
    gradient_steps: int = 1
    lr_actor: float = 3e-3
    lr_critic: float = 1e-3
    critic_hidden: int = 64
    # DDPG exploration, in units of out_scale
    noise_start: float = 0.2
    noise_end: float = 0.02
    # DQN
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.5
    target_period: int = 200
    action_set: tuple = DEFAULT_ACTION_SET
    dqn_hidden: int = 32
    dqn_value_scale: float = 100.0   # Q-learning runs on r / dqn_value_scale
    # SAC
    alpha_ent: float = 0.05
    sac_init_std: float = 0.2
    std_floor: float = 1e-3
    # three-layer baselines
    baseline_hidden: int = 64
    baseline_obs: str = "errors"
    # divergence guard
    weight_bound: float = 1e4

    def __post_init__(self):
        self.action_set = tuple(float(f) for f in self.action_set)
        self.validate()

    def validate(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.target_period < 1:
            raise ValueError("target_period (C) must be >= 1")
        F = np.asarray(self.action_set)
        if F.size < 2 or np.any(np.diff(F) <= 0):
            raise ValueError("action_set must be strictly increasing with at least 2 entries")
        if self.episodes < 0 or self.steps_per_episode < 1 or self.batch_size < 1:
            raise ValueError("episodes, steps_per_episode and batch_size must be positive")
        if not self.dqn_value_scale > 0:
            raise ValueError("dqn_value_scale must be > 0")
        if self.baseline_obs not in ("errors", "positions"):
            raise ValueError("baseline_obs must be 'errors' or 'positions'")
        return self

    def to_dict(self):
        d = asdict(self)
        d["action_set"] = list(self.action_set)
        return d

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class TrainLog:
    """Per-episode record of a training run.

    ``snapshot_flags`` follows the literal rule (improvement over the previous
    episode); ``best_index`` tracks the best mean reward so far, which is what
    evaluation uses.
    """
    mean_rewards: list = field(default_factory=list)
    critic_loss: list = field(default_factory=list)
    actor_loss: list = field(default_factory=list)
    snapshot_flags: list = field(default_factory=list)
    snapshot_index: int | None = None
    best_index: int | None = None
    snapshot: object = None
    best: object = None
    best_history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.mean_rewards)

    def rows(self):
        for n, (m, c, a, f) in enumerate(zip(self.mean_rewards, self.critic_loss,
                                             self.actor_loss, self.snapshot_flags)):
            yield n + 1, m, c, a, int(f)


def snapshot_if_improved(log: TrainLog, mean_reward: float, candidate, critic_loss=float("nan"),
                         actor_loss=float("nan")) -> bool:
    """Record one finished episode and snapshot ``candidate`` (deep copy).

    The literal snapshot fires iff the mean reward beats the previous
    episode's, so it stays ``None`` until the first improvement. The
    best-so-far snapshot is seeded by the first episode.
    """
    prev = log.mean_rewards[-1] if log.mean_rewards else None
    log.mean_rewards.append(float(mean_reward))
    log.critic_loss.append(float(critic_loss))
    log.actor_loss.append(float(actor_loss))
    n = len(log.mean_rewards) - 1
    fired = prev is not None and mean_reward > prev
    log.snapshot_flags.append(fired)
    if fired:
        log.snapshot = copy.deepcopy(candidate)
        log.snapshot_index = n
    if log.best_index is None or mean_reward > log.mean_rewards[log.best_index]:
        log.best = copy.deepcopy(candidate)
        log.best_index = n
        log.best_history.append(float(mean_reward))
    return fired


class TrackingEnv:
    """Incremental-actuation tracking task on a plant.

    State is the error history ``[e_t, ..., e_{t-k}] / error_norm``
    (``error_norm`` defaults to ``theta_max``), or ``[theta_t, theta_ref_t] /
    theta_max`` with ``obs="positions"``.
    Actions are increments in kPa. The reward of a transition is computed on
    the error after the step.
    """

    def __init__(self, plant, reference, k=4, reward_scale=1000.0, obs="errors",
                 steps_per_episode=None, error_norm=None):
        self.plant = plant
        self.ref = np.asarray(reference, dtype=float)
        self.k = k
        self.reward_scale = reward_scale
        if obs not in ("errors", "positions"):
            raise ValueError(f"unknown observation kind {obs!r}")
        self.obs = obs
        self.norm = error_norm or plant.theta_max
        self.steps = steps_per_episode or (self.ref.size - 1)
        if self.ref.size < self.steps + 1:
            raise ValueError("reference is shorter than the episode")

    @property
    def state_dim(self):
        return self.k + 1 if self.obs == "errors" else 2

    def _state(self):
        if self.obs == "errors":
            return self.history.state_vector() / self.norm
        return np.array([self.theta, self.ref[self.t]]) / self.plant.theta_max

    def reset(self):
        self.theta = self.plant.reset().theta
        self.t = 0
        self.u = 0.0
        self.history = ErrorHistory(self.k)
        self.history.push(self.theta - self.ref[0])
        return self._state()

    def step(self, delta_u: float):
        if not math.isfinite(delta_u):
            raise TrainingError("non-finite action", {"t": self.t})
        self.u = apply_increment(self.u, delta_u, (self.plant.u_min, self.plant.u_max))
        self.theta = self.plant.step(self.u).theta
        self.t += 1
        e = self.theta - self.ref[self.t]
        self.history.push(e)
        r = reward(self.theta, self.ref[self.t], self.reward_scale, self.plant.theta_max)
        done = self.t >= self.steps
        return self._state(), r, done


def check_divergence(nets, loss, bound, episode):
    if not math.isfinite(loss):
        raise TrainingError("non-finite loss", {"episode": episode, "loss": loss})
    for net in nets:
        for name, p, _ in net.named_params():
            m = float(np.max(np.abs(p)))
            if not m <= bound:
                raise TrainingError(f"weights exceeded bound in {name}",
                                    {"episode": episode, "parameter": name, "max_abs": m,
                                     "bound": bound})


def linear_schedule(start, end, frac_done):
    frac_done = min(max(frac_done, 0.0), 1.0)
    return start + (end - start) * frac_done


TRAINLOG_COLUMNS = ("episode", "mean_reward", "critic_loss_mean", "actor_loss_mean",
                    "snapshot_flag")


def write_trainlog_csv(path, log: TrainLog, header: dict | None = None):
    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(TRAINLOG_COLUMNS)
        for n, m, c, a, f in log.rows():
            w.writerow((n, repr(m), repr(c), repr(a), f))
    return path


def read_trainlog_csv(path) -> TrainLog:
    with open(path) as fh:
        rows = list(csv.reader(ln for ln in fh if not ln.startswith("#")))
    if tuple(rows[0]) != TRAINLOG_COLUMNS:
        raise ValueError(f"unexpected train log columns {rows[0]}")
    log = TrainLog()
    for _, m, c, a, f in rows[1:]:
        log.mean_rewards.append(float(m))
        log.critic_loss.append(float(c))
        log.actor_loss.append(float(a))
        log.snapshot_flags.append(bool(int(f)))
    return log
