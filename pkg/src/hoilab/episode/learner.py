"""Rollout collection and the per-epoch update shared by every task.

Environments are vectorized: ``reset(rng)`` returns ``(n_envs, obs_size)``
observations and ``step(actions, rng)`` returns ``(obs, rewards, terminal,
truncated, info)``. Finished environments restart inside ``step``; their
last observation before the restart is ``info["final_obs"][i]`` and any
per-step extras (for example ``r_phys``) are arrays in ``info``.
"""
from dataclasses import dataclass

import numpy as np

from ..policy import Adam, GaussianPolicy, Mlp, RolloutBatch, ppo_update


@dataclass
class EpochStats:
    epoch: int
    mean_reward: float
    mean_len: float
    phys_mean: float
    episodes: int
    update: dict
    mean_return: float = float("nan")
    f_res_mean: float = 0.0


class Learner:
    """Policy, critic, their optimizers and the random stream of one run."""

    def __init__(self, obs_size, act_size, config, rng=None):
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.policy = GaussianPolicy(obs_size, act_size, config.policy_hidden, config.sigma,
                                     rng=self.rng)
        self.value = Mlp([obs_size, *config.value_hidden, 1], rng=self.rng)
        self.pol_opt = Adam(self.policy.net.n_params, config.policy_lr)
        self.val_opt = Adam(self.value.n_params, config.value_lr)
        self._obs = None
        self._ep_len = None
        self._ep_ret = None

    def _values(self, obs_n):
        return self.value.forward(obs_n)[:, 0]

    def collect(self, env, n_steps):
        """At least ``n_steps`` transitions (whole multiples of ``env.n_envs``).

        Episodes continue across calls; the collection window boundary is
        marked truncated and bootstraps from the critic.
        """
        n_env = env.n_envs
        T = -(-n_steps // n_env)
        if self._obs is None:
            self._obs = env.reset(self.rng)
            self._ep_len = np.zeros(n_env, dtype=int)
            self._ep_ret = np.zeros(n_env)
        shp = (T, n_env)
        obs_b = np.zeros((T, n_env, self.policy.obs_size))
        raw_b = np.zeros((T, n_env, self.policy.obs_size))
        act_b = np.zeros((T, n_env, self.policy.act_size))
        logp, rew, val, nval = (np.zeros(shp) for _ in range(4))
        term, trunc = np.zeros(shp, bool), np.zeros(shp, bool)
        phys = np.ones(shp)
        fres = np.zeros(shp)
        lens, rets = [], []
        for t in range(T):
            raw_b[t] = self._obs
            a, lp, obs_n = self.policy.act(self._obs, self.rng)
            obs_b[t], act_b[t], logp[t] = obs_n, a, lp
            val[t] = self._values(obs_n)
            nxt, r, te, tr, info = env.step(a, self.rng)
            rew[t], term[t], trunc[t] = r, te, tr
            if "r_phys" in info:
                phys[t] = info["r_phys"]
            if "f_res" in info:
                fres[t] = info["f_res"]
            self._ep_len += 1
            self._ep_ret += r
            done = te | tr
            if np.any(tr):
                fin = self.policy.norm.normalize(info["final_obs"][tr])
                nval[t, tr] = self._values(fin)
            for i in np.flatnonzero(done):
                lens.append(int(self._ep_len[i]))
                rets.append(float(self._ep_ret[i]))
                self._ep_len[i] = 0
                self._ep_ret[i] = 0.0
            self._obs = nxt
        # close the window
        open_ = ~(term[-1] | trunc[-1])
        trunc[-1] |= open_
        if np.any(open_):
            nval[-1, open_] = self._values(self.policy.norm.normalize(self._obs[open_]))

        def flat(x):
            return np.swapaxes(x, 0, 1).reshape(T * n_env, *x.shape[2:])

        batch = RolloutBatch(flat(obs_b), flat(act_b), flat(logp), flat(rew), flat(val),
                             flat(term), flat(trunc), flat(nval))
        info = {"raw_obs": flat(raw_b), "lens": lens, "returns": rets,
                "phys_mean": float(phys.mean()), "mean_reward": float(rew.mean()),
                "f_res_mean": float(fres.mean())}
        return batch, info

    def update(self, batch, raw_obs=None):
        stats = ppo_update(self.policy, self.value, batch, self.config, self.pol_opt,
                           self.val_opt, self.rng)
        if raw_obs is not None:
            self.policy.norm.update(raw_obs)
        return stats

    def epoch(self, env, index):
        batch, info = self.collect(env, self.config.batch_size)
        stats = self.update(batch, info["raw_obs"])
        done = bool(info["lens"])
        mean_len = float(np.mean(info["lens"])) if done else float("nan")
        mean_ret = float(np.mean(info["returns"])) if done else float("nan")
        return EpochStats(index, info["mean_reward"], mean_len, info["phys_mean"],
                          len(info["lens"]), stats, mean_ret, info["f_res_mean"])

    def reset_episodes(self):
        """Forget in-flight episodes; the next collection starts from ``env.reset``."""
        self._obs = None
