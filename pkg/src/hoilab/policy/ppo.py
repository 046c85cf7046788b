"""PPO update with a clipped surrogate, plus the plain score-function gradient."""
from dataclasses import dataclass, fields

import numpy as np

from .optim import clip_grad
from .returns import gae_advantages, td_lambda_returns


@dataclass
class RolloutBatch:
    """Flat on-policy samples.

    ``obs`` holds the observations exactly as the policy saw them (already
    normalized). ``logp`` is the behavior log-density, ``values`` the
    critic's estimate at collection time. Flags follow
    :mod:`hoilab.policy.returns`.
    """
    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    terminal: np.ndarray
    truncated: np.ndarray
    next_values: np.ndarray

    def __len__(self):
        return self.rewards.shape[0]

    @classmethod
    def concat(cls, parts):
        return cls(*(np.concatenate([getattr(p, f.name) for p in parts]) for f in fields(cls)))


def surrogate_gradient(policy, obs_n, actions, logp_old, adv, clip):
    """Ascent direction of ``mean(min(rho A, clip(rho, 1-eps, 1+eps) A))``.

    Returns ``(gradient, surrogate, ratios)``.
    """
    mu, cache = policy.mean(obs_n, keep=True)
    logp = policy.log_prob_from_mean(mu, actions)
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    surr = np.minimum(ratio * adv, clipped * adv)
    # gradient flows through rho * A wherever it is the selected branch
    live = (ratio * adv <= clipped * adv) | ((ratio >= 1.0 - clip) & (ratio <= 1.0 + clip))
    n = len(adv)
    w = np.where(live, adv * ratio, 0.0) / n
    g = w[:, None] * (np.asarray(actions) - mu) / policy.sigma ** 2
    return policy.net.backward(cache, g), float(surr.mean()), ratio


def ppo_update(policy, value_net, batch, config, pol_opt, val_opt, rng):
    """Several passes of minibatch PPO over ``batch``.

    Advantages come from GAE, value targets from TD(lambda); advantages are
    normalized per batch. On a non-finite loss or gradient every parameter
    and optimizer moment is restored and ``stats["aborted"]`` is set.
    """
    adv = gae_advantages(batch.rewards, batch.values, batch.terminal, batch.truncated,
                         batch.next_values, config.gamma, config.lam)
    ret = td_lambda_returns(batch.rewards, batch.values, batch.terminal, batch.truncated,
                            batch.next_values, config.gamma, config.lam)
    adv_n = (adv - adv.mean()) / (adv.std() + 1e-8)

    saved = (policy.net.params.copy(), value_net.params.copy(), pol_opt.state(), val_opt.state())
    n = len(batch)
    mb = max(1, n // config.minibatches)
    stats = {"aborted": False, "reason": "", "first_ratio_max_dev": None,
             "policy_surrogate": 0.0, "value_loss": 0.0, "clip_fraction": 0.0,
             "policy_grad_norm": 0.0, "value_grad_norm": 0.0, "updates": 0}
    for _ in range(config.passes):
        perm = rng.permutation(n)
        for k in range(config.minibatches):
            idx = perm[k * mb:(k + 1) * mb] if k < config.minibatches - 1 else perm[k * mb:]
            if len(idx) == 0:
                continue
            gp, surr, ratio = surrogate_gradient(policy, batch.obs[idx], batch.actions[idx],
                                                 batch.logp[idx], adv_n[idx], config.clip)
            if stats["first_ratio_max_dev"] is None:
                stats["first_ratio_max_dev"] = float(np.max(np.abs(ratio - 1.0)))
            v, cache = value_net.forward(batch.obs[idx], keep=True)
            err = v[:, 0] - ret[idx]
            vloss = float(np.mean(err * err))
            gv = value_net.backward(cache, (2.0 / len(idx)) * err[:, None])
            if not (np.isfinite(surr) and np.isfinite(vloss)
                    and np.all(np.isfinite(gp)) and np.all(np.isfinite(gv))):
                policy.net.params[...] = saved[0]
                value_net.params[...] = saved[1]
                pol_opt.load_state(saved[2])
                val_opt.load_state(saved[3])
                stats.update(aborted=True, reason="non-finite loss or gradient")
                return stats
            gp, gpn = clip_grad(gp, config.grad_clip)
            gv, gvn = clip_grad(gv, config.grad_clip)
            pol_opt.step(policy.net.params, -gp)
            val_opt.step(value_net.params, gv)
            stats["policy_surrogate"] += surr
            stats["value_loss"] += vloss
            stats["clip_fraction"] += float(np.mean(np.abs(ratio - 1.0) > config.clip))
            stats["policy_grad_norm"] += gpn
            stats["value_grad_norm"] += gvn
            stats["updates"] += 1
    u = max(stats["updates"], 1)
    for key in ("policy_surrogate", "value_loss", "clip_fraction", "policy_grad_norm",
                "value_grad_norm"):
        stats[key] /= u
    return stats


def reinforce_gradient(trajectories, policy):
    """Score-function estimate ``mean_i (sum_t grad log pi(a_t|s_t)) (sum_t r_t)``.

    ``trajectories`` is a list of ``(obs_normalized, actions, rewards)``
    triples, one per complete episode.
    """
    if not trajectories:
        raise ValueError("reinforce_gradient needs at least one trajectory")
    total = np.zeros(policy.net.n_params)
    for obs_n, actions, rewards in trajectories:
        ret = float(np.sum(rewards))
        total += policy.score(obs_n, actions, np.full(len(actions), ret))
    return total / len(trajectories)
