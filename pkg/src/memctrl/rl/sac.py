"""Soft actor-critic with a state-value network and its slow target copy.

Per gradient step, with fresh reparameterized actions ``a~ = mu(s) + sigma*eps``:

* V regresses onto ``min_i Q_i(s, a~) - alpha * log pi(a~|s)``
* each Q regresses onto ``r + gamma * Vbar(s')``
* the policy minimizes ``alpha * log pi(a~|s) - min_i Q_i(s, a~)``
* ``Vbar <- tau * V + (1 - tau) * Vbar``

The policy is Gaussian with a state-independent learned log-std, floored at
``std_floor``. Actions are unsquashed, in units of ``out_scale``.
"""
from __future__ import annotations

import math

import numpy as np

from ..nn import Adam, Dense, Network, ParamSet, mlp
from .common import (ReplayBuffer, TrackingEnv, TrainLog, check_divergence,
                     snapshot_if_improved, soft_update)
from .ddpg import actor_to_fmc, critic_net

LOG_2PI = math.log(2.0 * math.pi)


class GaussianPolicy:
    def __init__(self, mean_net: Network, init_std: float, std_floor: float):
        self.mean = mean_net
        self.std_floor = std_floor
        self.log_std = ParamSet(log_std=[math.log(max(init_std, std_floor))])

    @property
    def std(self) -> float:
        return max(math.exp(self.log_std["log_std"][0]), self.std_floor)

    def sample(self, s, rng):
        return float(self.mean(s)[0]) + self.std * rng.standard_normal()

    def deterministic(self, s) -> float:
        return float(self.mean(s)[0])


def fmc_gaussian_policy(k, cfg, rng) -> GaussianPolicy:
    return GaussianPolicy(Network([Dense(k + 1, 1, "linear", bias=False, rng=rng)]),
                          cfg.sac_init_std, cfg.std_floor)


def run_sac(env: TrackingEnv, policy: GaussianPolicy, cfg, rng, log_name="sac"):
    sd = env.state_dim
    q1 = critic_net(sd, cfg.critic_hidden, rng)
    q2 = critic_net(sd, cfg.critic_hidden, rng)
    v = mlp([sd, cfg.critic_hidden, cfg.critic_hidden, 1], "relu", "linear", rng=rng)
    v_t = v.copy()
    opt_pi, opt_q, opt_v = Adam(cfg.lr_actor), Adam(cfg.lr_critic), Adam(cfg.lr_critic)
    buf = ReplayBuffer(cfg.buffer_capacity, sd, 1, seed=rng.integers(2**63))
    log = TrainLog()
    N = cfg.batch_size
    alpha = cfg.alpha_ent
    log_floor = math.log(cfg.std_floor)
    ls = policy.log_std["log_std"]
    step_count = 0
    stds = []
    for ep in range(cfg.episodes):
        s = env.reset()
        R = 0.0
        closses, alosses = [], []
        for _ in range(cfg.steps_per_episode):
            a = policy.sample(s, rng)
            s2, r, done = env.step(cfg.out_scale * a)
            buf.add(s, a, r, s2, done)
            R += r
            s = s2
            step_count += 1
            if len(buf) < cfg.warmup:
                continue
            for _ in range(cfg.gradient_steps):
                bs, ba, br, bs2, _ = buf.sample(N)
                sigma = policy.std
                at_floor = math.exp(ls[0]) <= cfg.std_floor
                mu, mtape = policy.mean.forward(bs)
                eps = rng.standard_normal((N, 1))
                a_new = mu + sigma * eps
                logp = -0.5 * eps * eps - math.log(sigma) - 0.5 * LOG_2PI
                sa_new = np.concatenate([bs, a_new], axis=1)
                qa1, t1 = q1.forward(sa_new)
                qa2, t2 = q2.forward(sa_new)
                use1 = qa1 <= qa2
                qmin = np.where(use1, qa1, qa2)

                # value network
                v_target = qmin - alpha * logp
                vv, vtape = v.forward(bs)
                dv = vv - v_target
                v.zero_grad()
                v.backward(vtape, (2.0 / N) * dv)
                opt_v(v)

                # policy, through the reparameterized action
                alosses.append(float(np.mean(alpha * logp - qmin)))
                q1.zero_grad()
                q2.zero_grad()
                g1 = q1.backward(t1, np.where(use1, -1.0 / N, 0.0))[:, -1:]
                g2 = q2.backward(t2, np.where(use1, 0.0, -1.0 / N))[:, -1:]
                dJ_da = g1 + g2
                policy.mean.zero_grad()
                policy.mean.backward(mtape, dJ_da)
                opt_pi(policy.mean)
                policy.log_std.zero_grad()
                if not at_floor:
                    # d(alpha*logp)/dlog_std = -alpha; da/dlog_std = sigma*eps
                    policy.log_std.grad("log_std")[0] = -alpha + float(np.sum(dJ_da * sigma * eps))
                    opt_pi(policy.log_std)
                    if ls[0] < log_floor:
                        ls[0] = log_floor

                # twin Q regression onto r + gamma * Vbar(s')
                y = br + cfg.gamma * v_t(bs2)[:, 0]
                sa = np.concatenate([bs, ba], axis=1)
                cl = 0.0
                for q in (q1, q2):
                    qq, qtape = q.forward(sa)
                    d = qq[:, 0] - y
                    cl += float(d @ d) / N
                    q.zero_grad()
                    q.backward(qtape, (2.0 / N) * d[:, None])
                    opt_q(q)
                closses.append(0.5 * cl)
                soft_update(v, v_t, cfg.tau)
        stds.append(policy.std)
        c = float(np.mean(closses)) if closses else float("nan")
        al = float(np.mean(alosses)) if alosses else float("nan")
        if closses:
            check_divergence([policy.mean, q1, q2, v], c, cfg.weight_bound, ep)
        snapshot_if_improved(log, R / cfg.steps_per_episode, policy, c, al)
    log.diagnostics.update(algorithm=log_name, steps=step_count, policy_std=stds)
    return log


def train_fmc_sac(plant, ref_traj, cfg):
    """Train a linear FMC as the mean of a Gaussian SAC policy."""
    rng = np.random.default_rng(cfg.seed)
    env = TrackingEnv(plant, ref_traj, cfg.k, cfg.reward_scale,
                      steps_per_episode=cfg.steps_per_episode, error_norm=cfg.error_norm)
    policy = fmc_gaussian_policy(cfg.k, cfg, rng)
    log = run_sac(env, policy, cfg, rng, "fmc-sac")
    best = log.best if log.best is not None else policy
    return actor_to_fmc(best.mean, cfg.error_norm, cfg.out_scale), log
