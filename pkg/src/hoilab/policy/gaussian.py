import numpy as np

from .mlp import Mlp
from .optim import RunningNorm

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class GaussianPolicy:
    """Diagonal Gaussian around an MLP mean with a fixed standard deviation.

    Observations pass through a running normalizer before the network.
    ``act`` samples during training; ``mean_action`` is the inference path.
    """

    def __init__(self, obs_size, act_size, hidden, sigma=0.1, rng=None, out_scale=0.01):
        self.obs_size = int(obs_size)
        self.act_size = int(act_size)
        self.sigma = float(sigma)
        self.net = Mlp([obs_size, *hidden, act_size], rng=rng, out_scale=out_scale)
        self.norm = RunningNorm(obs_size)

    def mean(self, obs_n, keep=False):
        """Network mean for already-normalized observations."""
        return self.net.forward(obs_n, keep=keep)

    def mean_action(self, obs):
        return self.mean(self.norm.normalize(obs))

    def log_prob_from_mean(self, mu, actions):
        z = (np.asarray(actions, dtype=float) - mu) / self.sigma
        return -0.5 * np.sum(z * z, axis=-1) - self.act_size * (np.log(self.sigma) + _LOG_SQRT_2PI)

    def log_prob(self, obs, actions, normalized=False):
        obs_n = obs if normalized else self.norm.normalize(obs)
        return self.log_prob_from_mean(self.mean(obs_n), actions)

    def act(self, obs, rng):
        """Sample actions for a batch of raw observations.

        Returns ``(actions, log_probs, normalized_observations)``.
        """
        obs_n = self.norm.normalize(obs)
        mu = self.mean(obs_n)
        a = mu + self.sigma * rng.standard_normal(mu.shape)
        return a, self.log_prob_from_mean(mu, a), obs_n

    def score(self, obs_n, actions, weights):
        """Gradient of ``sum_t weights[t] * log pi(a_t | s_t)`` in the parameters."""
        mu, cache = self.mean(obs_n, keep=True)
        w = np.asarray(weights, dtype=float)
        g = w[..., None] * (np.asarray(actions, float) - mu) / self.sigma ** 2
        return self.net.backward(cache, g)
