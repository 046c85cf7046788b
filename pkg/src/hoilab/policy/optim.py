import numpy as np


class Adam:
    """Adam on a flat parameter vector, updated in place."""

    def __init__(self, n, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state(self):
        return {"t": self.t, "m": self.m.copy(), "v": self.v.copy()}

    def load_state(self, state):
        self.t = int(state["t"])
        self.m = np.array(state["m"], dtype=float)
        self.v = np.array(state["v"], dtype=float)


def clip_grad(grad, max_norm):
    """Scale ``grad`` down to ``max_norm`` (no-op when ``max_norm`` <= 0)."""
    norm = float(np.linalg.norm(grad))
    if max_norm > 0 and norm > max_norm:
        grad = grad * (max_norm / norm)
    return grad, norm


class RunningNorm:
    """Per-feature running mean and variance (parallel-merge update).

    ``normalize`` returns ``clip((x - mean) / sqrt(var + eps))``. Freeze it
    for inference by simply not calling :meth:`update`.
    """

    def __init__(self, size, clip=10.0, eps=1e-8):
        self.mean = np.zeros(size)
        self.var = np.ones(size)
        self.count = 0.0
        self.clip = float(clip)
        self.eps = float(eps)

    def update(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.mean.shape[0])
        n = x.shape[0]
        if n == 0:
            return
        bm = x.mean(axis=0)
        bv = x.var(axis=0)
        if self.count == 0:
            self.mean, self.var, self.count = bm, bv, float(n)
            return
        tot = self.count + n
        d = bm - self.mean
        self.mean = self.mean + d * n / tot
        self.var = (self.var * self.count + bv * n + d * d * self.count * n / tot) / tot
        self.count = tot

    def normalize(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / np.sqrt(self.var + self.eps)
        return np.clip(z, -self.clip, self.clip)

    def state(self):
        return {"mean": self.mean.tolist(), "var": self.var.tolist(), "count": self.count,
                "clip": self.clip, "eps": self.eps}

    @classmethod
    def from_state(cls, d):
        out = cls(len(d["mean"]), d.get("clip", 10.0), d.get("eps", 1e-8))
        out.mean = np.array(d["mean"], dtype=float)
        out.var = np.array(d["var"], dtype=float)
        out.count = float(d["count"])
        return out
