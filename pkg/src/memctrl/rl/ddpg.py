"""Deterministic policy gradient training of FMC and multi-layer actors."""
from __future__ import annotations

import numpy as np

from ..fmc import FmcWeights
from ..nn import Adam, Dense, Network, mlp
from .common import (ReplayBuffer, TrackingEnv, TrainLog, check_divergence, linear_schedule,
                     snapshot_if_improved, soft_update)


def as_columns(batch):
    """Accept a list of Transitions or an ``(s, a, r, s_next, done)`` tuple."""
    if isinstance(batch, tuple) and len(batch) == 5 and isinstance(batch[0], np.ndarray):
        return batch
    s = np.array([tr.s for tr in batch], dtype=float)
    a = np.array([tr.a for tr in batch])
    if a.dtype.kind == "f" and a.ndim == 1:
        a = a[:, None]
    r = np.array([tr.r for tr in batch], dtype=float)
    s2 = np.array([tr.s_next for tr in batch], dtype=float)
    d = np.array([float(tr.done) for tr in batch])
    return s, a, r, s2, d


def td_target_ddpg(batch, critic_target: Network, actor_target: Network, gamma: float):
    """``y = r + gamma * Qbar(s', mubar(s'))`` using target networks only."""
    _, _, r, s2, _ = as_columns(batch)
    if gamma == 0.0:
        return r.copy()
    a2 = actor_target(s2)
    q2 = critic_target(np.concatenate([s2, a2], axis=1))[:, 0]
    return r + gamma * q2


def fmc_actor(k: int, activation: str = "tanh", rng=None) -> Network:
    """Single weighted-sum unit without bias over the k+1 stored errors."""
    return Network([Dense(k + 1, 1, activation, bias=False, rng=rng)])


def actor_to_fmc(actor: Network, error_norm: float, out_scale: float) -> FmcWeights:
    layer = actor.layers[0]
    # the actor sees errors divided by error_norm
    return FmcWeights(layer.W[0] / error_norm, layer.activation, out_scale)


def critic_net(state_dim: int, hidden: int, rng) -> Network:
    return mlp([state_dim + 1, hidden, hidden, 1], "relu", "linear", rng=rng)


def run_ddpg(env: TrackingEnv, actor: Network, cfg, rng, log_name="ddpg"):
    """Generic DDPG loop. Returns the TrainLog; snapshots hold actor copies."""
    critic = critic_net(env.state_dim, cfg.critic_hidden, rng)
    actor_t, critic_t = actor.copy(), critic.copy()
    opt_a, opt_c = Adam(cfg.lr_actor), Adam(cfg.lr_critic)
    buf = ReplayBuffer(cfg.buffer_capacity, env.state_dim, 1, seed=rng.integers(2**63))
    log = TrainLog()
    total = max(cfg.episodes * cfg.steps_per_episode, 1)
    step_count = 0
    N = cfg.batch_size
    for ep in range(cfg.episodes):
        s = env.reset()
        R = 0.0
        closses, alosses = [], []
        for _ in range(cfg.steps_per_episode):
            sigma = linear_schedule(cfg.noise_start, cfg.noise_end, step_count / total)
            a = float(actor(s)[0]) + sigma * rng.standard_normal()
            a = min(max(a, -1.0), 1.0)
            s2, r, done = env.step(cfg.out_scale * a)
            buf.add(s, a, r, s2, done)
            R += r
            s = s2
            step_count += 1
            if len(buf) < cfg.warmup:
                continue
            for _ in range(cfg.gradient_steps):
                bs, ba, br, bs2, bd = buf.sample(N)
                y = td_target_ddpg((bs, ba, br, bs2, bd), critic_t, actor_t, cfg.gamma)
                q, tape = critic.forward(np.concatenate([bs, ba], axis=1))
                diff = q[:, 0] - y
                closses.append(float(diff @ diff) / N)
                critic.zero_grad()
                critic.backward(tape, (2.0 / N) * diff[:, None])
                opt_c(critic)

                mu, atape = actor.forward(bs)
                qa, ctape = critic.forward(np.concatenate([bs, mu], axis=1))
                alosses.append(-float(qa.mean()))
                dx = critic.backward(ctape, np.full((N, 1), -1.0 / N))
                critic.zero_grad()
                actor.zero_grad()
                actor.backward(atape, dx[:, -1:])
                opt_a(actor)

                soft_update(critic, critic_t, cfg.tau)
                soft_update(actor, actor_t, cfg.tau)
        cl = float(np.mean(closses)) if closses else float("nan")
        al = float(np.mean(alosses)) if alosses else float("nan")
        if closses:
            check_divergence([actor, critic], cl, cfg.weight_bound, ep)
        snapshot_if_improved(log, R / cfg.steps_per_episode, actor, cl, al)
    log.diagnostics.update(algorithm=log_name, steps=step_count)
    return log


def train_fmc_ddpg(plant, ref_traj, cfg):
    """Train a tanh FMC with DDPG. Returns best-so-far weights and the log."""
    rng = np.random.default_rng(cfg.seed)
    env = TrackingEnv(plant, ref_traj, cfg.k, cfg.reward_scale,
                      steps_per_episode=cfg.steps_per_episode, error_norm=cfg.error_norm)
    actor = fmc_actor(cfg.k, "tanh", rng)
    log = run_ddpg(env, actor, cfg, rng, "fmc-ddpg")
    best = log.best if log.best is not None else actor
    return actor_to_fmc(best, cfg.error_norm, cfg.out_scale), log
