"""Multilayer perceptron with GeLU hidden units and a hand-written backward pass.

Parameters live in one flat float64 vector. For layer ``k`` (input width
``n_in``, output width ``n_out``) the vector holds ``W_k`` as an
``n_out x n_in`` row-major block followed by ``b_k``; layers follow in
input-to-output order. ``Mlp.layers`` exposes writable views.
"""
import numpy as np

_C = np.sqrt(2.0 / np.pi)
_BLOCK = 16


def _tanh_arg(x):
    u = np.asarray(x * x)
    u *= 0.044715
    u += 1.0
    u *= x
    u *= _C
    return np.tanh(u, out=u)


def gelu(x):
    """GeLU, tanh form: ``0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))``."""
    x = np.asarray(x, dtype=float)
    return _gelu_from(x, _tanh_arg(x))


def _gelu_from(x, t):
    h = t + 1.0
    h *= x
    h *= 0.5
    return h


def gelu_grad(x, t=None):
    """Derivative of :func:`gelu`; ``t`` is the cached tanh term if known."""
    x = np.asarray(x, dtype=float)
    if t is None:
        t = _tanh_arg(x)
    # written with in-place updates: fresh temporaries of this size are
    # dominated by page faults
    d = t * t
    np.subtract(1.0, d, out=d)
    w = x * x
    w *= 3 * 0.044715
    w += 1.0
    w *= x
    w *= 0.5 * _C
    d *= w
    d += 0.5
    w[...] = t
    w *= 0.5
    d += w
    return d


def _affine(x, W, b):
    # Rows are multiplied in fixed-size zero-padded blocks so that a row's
    # output does not depend on which other rows share the call (BLAS picks
    # different kernels for different shapes). Keeps PPO ratios exactly 1
    # right after a rollout.
    n = x.shape[0]
    m = -(-n // _BLOCK) * _BLOCK
    if m != n:
        xp = np.zeros((m, x.shape[1]))
        xp[:n] = x
    else:
        xp = x
    y = np.matmul(xp.reshape(m // _BLOCK, _BLOCK, x.shape[1]), W.T).reshape(m, W.shape[0])
    return y[:n] + b


class Mlp:
    """Fully connected network ``sizes[0] -> ... -> sizes[-1]``.

    Hidden layers use GeLU; the output layer is linear. With two sizes the
    network is a single affine map.
    """

    def __init__(self, sizes, rng=None, out_scale=1.0, params=None):
        self.sizes = [int(s) for s in sizes]
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"invalid layer sizes {sizes}")
        self.shapes = [(o, i) for i, o in zip(self.sizes[:-1], self.sizes[1:])]
        self.n_params = sum(o * i + o for o, i in self.shapes)
        if params is not None:
            params = np.asarray(params, dtype=float)
            if params.shape != (self.n_params,):
                raise ValueError(f"expected {self.n_params} parameters, got {params.shape}")
            self.params = params.copy()
        else:
            self.params = np.zeros(self.n_params)
        self._bind()
        if params is None and rng is not None:
            self.init(rng, out_scale)

    def _bind(self):
        self.layers = []
        k = 0
        for o, i in self.shapes:
            W = self.params[k:k + o * i].reshape(o, i)
            k += o * i
            b = self.params[k:k + o]
            k += o
            self.layers.append((W, b))

    def init(self, rng, out_scale=1.0):
        """LeCun-normal weights and zero biases; the last layer is scaled by ``out_scale``."""
        for n, (W, b) in enumerate(self.layers):
            W[...] = rng.normal(0.0, np.sqrt(1.0 / W.shape[1]), W.shape)
            if n == len(self.layers) - 1:
                W *= out_scale
            b[...] = 0.0

    def set_params(self, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        self.params[...] = flat

    def copy(self):
        return Mlp(self.sizes, params=self.params)

    def forward(self, x, keep=False):
        """Outputs for a batch ``x`` of shape ``(B, sizes[0])`` (or one vector).

        With ``keep=True`` also returns the cache needed by :meth:`backward`.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ValueError(f"input has shape {x.shape}, expected (*, {self.sizes[0]})")
        pre = []
        tanhs = []
        acts = [x]
        h = x
        last = len(self.layers) - 1
        for n, (W, b) in enumerate(self.layers):
            z = _affine(h, W, b)
            if n < last:
                t = _tanh_arg(z)
                h = _gelu_from(z, t)
                if keep:
                    pre.append(z)
                    tanhs.append(t)
                    acts.append(h)
            else:
                h = z
        out = h[0] if single else h
        if keep:
            return out, (acts, pre, tanhs, single)
        return out

    def backward(self, cache, grad_out, want_input=False):
        """Flat parameter gradient of ``sum(grad_out * output)``.

        ``grad_out`` matches the forward output's shape. With
        ``want_input=True`` the input gradient is returned as well.
        """
        acts, pre, tanhs, single = cache
        g = np.asarray(grad_out, dtype=float)
        if single:
            g = g[None, :]
        if g.shape != (acts[0].shape[0], self.sizes[-1]):
            raise ValueError(f"output gradient has shape {g.shape}")
        grad = np.empty(self.n_params)
        k_end = self.n_params
        for n in range(len(self.layers) - 1, -1, -1):
            W, b = self.layers[n]
            o, i = W.shape
            grad[k_end - o:k_end] = g.sum(axis=0)
            grad[k_end - o - o * i:k_end - o] = (g.T @ acts[n]).ravel()
            k_end -= o * i + o
            g = g @ W
            if n > 0:
                g *= gelu_grad(pre[n - 1], tanhs[n - 1])
        if want_input:
            return grad, (g[0] if single else g)
        return grad
