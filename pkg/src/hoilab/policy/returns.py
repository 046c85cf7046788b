"""GAE(lambda) advantages and TD(lambda) returns over flat rollout buffers.

A buffer is a concatenation of episode segments. ``terminal[t]`` marks a
true end (the successor value is zero); ``truncated[t]`` marks a cut (time
limit or end of the collection window) and bootstraps from
``next_values[t]``, the critic's estimate for the state after step ``t``.
Neither recursion reads across a flagged step.
"""
import numpy as np


def _prep(rewards, values, terminal, truncated, next_values):
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    n = r.shape[0]
    term = np.zeros(n, bool) if terminal is None else np.asarray(terminal, bool)
    trunc = np.zeros(n, bool) if truncated is None else np.asarray(truncated, bool)
    nv = np.zeros(n) if next_values is None else np.asarray(next_values, dtype=float)
    if not (v.shape == term.shape == trunc.shape == nv.shape == (n,)):
        raise ValueError("rewards, values, flags and next_values must share one length")
    if n and not (term[-1] or trunc[-1]):
        raise ValueError("the last step of a buffer must be terminal or truncated")
    return r, v, term, trunc, nv


def _successor(v, term, trunc, nv, t):
    if term[t]:
        return 0.0
    if trunc[t]:
        return nv[t]
    return v[t + 1]


def gae_advantages(rewards, values, terminal=None, truncated=None, next_values=None,
                   gamma=0.95, lam=0.95):
    r, v, term, trunc, nv = _prep(rewards, values, terminal, truncated, next_values)
    adv = np.zeros_like(r)
    running = 0.0
    for t in range(r.shape[0] - 1, -1, -1):
        delta = r[t] + gamma * _successor(v, term, trunc, nv, t) - v[t]
        if term[t] or trunc[t]:
            running = 0.0
        running = delta + gamma * lam * running
        adv[t] = running
    return adv


def td_lambda_returns(rewards, values, terminal=None, truncated=None, next_values=None,
                      gamma=0.95, lam=0.95):
    """``G_t = r_t + gamma ((1 - lam) V(s_t+1) + lam G_t+1)``, cut at flags."""
    r, v, term, trunc, nv = _prep(rewards, values, terminal, truncated, next_values)
    ret = np.zeros_like(r)
    g_next = 0.0
    for t in range(r.shape[0] - 1, -1, -1):
        succ = _successor(v, term, trunc, nv, t)
        if term[t] or trunc[t]:
            ret[t] = r[t] + gamma * succ
        else:
            ret[t] = r[t] + gamma * ((1.0 - lam) * succ + lam * g_next)
        g_next = ret[t]
    return ret
