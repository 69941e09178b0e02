"""Deep Q-learning over a discrete set of actuation increments."""
from __future__ import annotations

import numpy as np

from ..fmc import ErrorHistory, apply_increment
from ..nn import Adam, Network, mlp
from .common import (ReplayBuffer, TrackingEnv, TrainLog, check_divergence, hard_update,
                     linear_schedule, snapshot_if_improved)
from .ddpg import as_columns


def td_target_dqn(batch, qnet_target: Network, gamma: float):
    """``y = r`` for terminal transitions, else ``r + gamma * max_a Qbar(s', a)``."""
    _, _, r, s2, d = as_columns(batch)
    if gamma == 0.0:
        return r.copy()
    q2 = qnet_target(s2).max(axis=1)
    return np.where(d > 0.0, r, r + gamma * q2)


def greedy(qnet: Network, s) -> int:
    return int(np.argmax(qnet(s)))


def epsilon_greedy(qnet: Network, s, eps: float, rng, n_actions: int) -> int:
    if rng.uniform() < eps:
        return int(rng.integers(n_actions))
    return greedy(qnet, s)


def fmc_qnet(k, n_actions, hidden, rng) -> Network:
    """Q-network over the error memory: one sigmoid hidden layer."""
    return mlp([k + 1, hidden, n_actions], "sigmoid", "linear", rng=rng)


def run_dqn(env: TrackingEnv, qnet: Network, cfg, rng, log_name="dqn"):
    F = np.asarray(cfg.action_set)
    qnet_t = qnet.copy()
    opt = Adam(cfg.lr_critic)
    buf = ReplayBuffer(cfg.buffer_capacity, env.state_dim, seed=rng.integers(2**63),
                       discrete=True)
    log = TrainLog()
    total = max(cfg.episodes * cfg.steps_per_episode, 1)
    decay_steps = max(cfg.eps_decay_frac * total, 1.0)
    step_count = 0
    N = cfg.batch_size
    rows = np.arange(N)
    action_counts = np.zeros(F.size, dtype=np.int64)
    for ep in range(cfg.episodes):
        s = env.reset()
        R = 0.0
        losses = []
        for _ in range(cfg.steps_per_episode):
            eps = linear_schedule(cfg.eps_start, cfg.eps_end, step_count / decay_steps)
            a = epsilon_greedy(qnet, s, eps, rng, F.size)
            action_counts[a] += 1
            s2, r, done = env.step(F[a])
            # a positive rescaling leaves the greedy policy unchanged
            buf.add(s, a, r / cfg.dqn_value_scale, s2, done)
            R += r
            s = s2
            step_count += 1
            if step_count % cfg.target_period == 0:
                hard_update(qnet, qnet_t)
            if len(buf) < cfg.warmup:
                continue
            for _ in range(cfg.gradient_steps):
                batch = buf.sample(N)
                y = td_target_dqn(batch, qnet_t, cfg.gamma)
                q, tape = qnet.forward(batch[0])
                diff = q[rows, batch[1]] - y
                losses.append(float(diff @ diff) / N)
                dq = np.zeros_like(q)
                dq[rows, batch[1]] = (2.0 / N) * diff
                qnet.zero_grad()
                qnet.backward(tape, dq)
                opt(qnet)
        cl = float(np.mean(losses)) if losses else float("nan")
        if losses:
            check_divergence([qnet], cl, cfg.weight_bound, ep)
        snapshot_if_improved(log, R / cfg.steps_per_episode, qnet, cl)
    log.diagnostics.update(algorithm=log_name, steps=step_count,
                           action_counts=action_counts.tolist())
    return log


def train_fmc_dqn(plant, ref_traj, cfg):
    """Returns ``(DqnPolicy, TrainLog)`` with the best-so-far Q-network."""
    rng = np.random.default_rng(cfg.seed)
    env = TrackingEnv(plant, ref_traj, cfg.k, cfg.reward_scale,
                      steps_per_episode=cfg.steps_per_episode, error_norm=cfg.error_norm)
    qnet = fmc_qnet(cfg.k, len(cfg.action_set), cfg.dqn_hidden, rng)
    log = run_dqn(env, qnet, cfg, rng, "fmc-dqn")
    best = log.best if log.best is not None else qnet
    return DqnPolicy(best, cfg.action_set, cfg.k, cfg.error_norm), log


class DqnPolicy:
    """Greedy increment policy read off a Q-network over the error memory."""

    def __init__(self, qnet: Network, action_set, k: int, error_norm: float):
        self.qnet = qnet
        self.action_set = np.asarray(action_set, dtype=float)
        self.k = k
        self.error_norm = error_norm

    def increment(self, history: ErrorHistory) -> float:
        return float(self.action_set[greedy(self.qnet, history.state_vector() / self.error_norm)])


class DqnController:
    uses_measurement = True

    def __init__(self, policy: DqnPolicy, u_min=0.0, u_max=200.0, name="fmc-dqn"):
        self.policy, self.u_min, self.u_max, self.name = policy, u_min, u_max, name
        self.reset()

    def reset(self):
        self.history = ErrorHistory(self.policy.k)
        self.u = 0.0

    def act(self, obs):
        self.history.push(obs.theta - obs.ref)
        self.u = apply_increment(self.u, self.policy.increment(self.history),
                                 (self.u_min, self.u_max))
        return self.u
