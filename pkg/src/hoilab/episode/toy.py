"""1-D point-mass target tracking, the learner's smoke-test task.

A 1 kg mass on a line is pushed by ``force_scale * clip(a, -1, 1)``
newtons and must follow ``A sin(w t + phase)`` with a random amplitude,
frequency and phase per episode. The per-step reward is
``exp(-k |x - x_target|)``. Observations are the tracking error, the
velocity error and the target acceleration (the feed-forward term),
each scaled to order one.
"""
import numpy as np


class PointMassTracking:
    obs_size = 3
    act_size = 1

    def __init__(self, n_envs=64, horizon=200, dt=1.0 / 30.0, force_scale=10.0, k=5.0,
                 amplitude=(0.2, 0.5), freq_hz=(0.2, 0.6), start_noise=0.02):
        self.n_envs = int(n_envs)
        self.horizon = int(horizon)
        self.dt = float(dt)
        self.force_scale = float(force_scale)
        self.k = float(k)
        self.amplitude = amplitude
        self.freq = freq_hz
        self.start_noise = float(start_noise)
        n = self.n_envs
        self.x = np.zeros(n)
        self.v = np.zeros(n)
        self.t = np.zeros(n, dtype=int)
        self.A = np.zeros(n)
        self.w = np.zeros(n)
        self.phase = np.zeros(n)

    def _target(self, t):
        s = self.w * t * self.dt + self.phase
        return (self.A * np.sin(s), self.A * self.w * np.cos(s),
                -self.A * self.w ** 2 * np.sin(s))

    def _restart(self, mask, rng):
        m = int(mask.sum())
        self.A[mask] = rng.uniform(*self.amplitude, m)
        self.w[mask] = 2 * np.pi * rng.uniform(*self.freq, m)
        self.phase[mask] = rng.uniform(0, 2 * np.pi, m)
        self.t[mask] = 0
        x, v, _ = self._target(0)
        self.x[mask] = x[mask] + rng.normal(0, self.start_noise, m)
        self.v[mask] = v[mask]

    def _obs(self):
        x, v, a = self._target(self.t)
        return np.column_stack([(self.x - x) / 0.05, (self.v - v) / 0.2, a / self.force_scale])

    def reset(self, rng):
        self._restart(np.ones(self.n_envs, bool), rng)
        return self._obs()

    def step(self, actions, rng):
        f = self.force_scale * np.clip(np.asarray(actions, float).reshape(self.n_envs), -1, 1)
        # semi-implicit Euler
        self.v = self.v + f * self.dt
        self.x = self.x + self.v * self.dt
        self.t += 1
        xt, _, _ = self._target(self.t)
        r = np.exp(-self.k * np.abs(self.x - xt))
        trunc = self.t >= self.horizon
        term = np.zeros(self.n_envs, bool)
        obs = self._obs()
        info = {"final_obs": obs.copy()}
        if np.any(trunc):
            self._restart(trunc, rng)
            obs = self._obs()
        return obs, r, term, trunc, info
