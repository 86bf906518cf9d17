"""ELU, ReLU, batch normalization and convolution layers with explicit backprop."""

from dataclasses import dataclass, field

import numpy as np

from .tensor import Filter, conv2d_backward, conv2d_forward


@dataclass(frozen=True)
class EluParams:
    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"ELU alpha must be positive, got {self.alpha}")


def elu_forward(x, p=EluParams()):
    neg = p.alpha * np.expm1(np.minimum(x, 0))
    return np.where(x > 0, x, neg).astype(x.dtype, copy=False)


def elu_backward(x, grad_out, p=EluParams()):
    # derivative at exactly 0 is taken from the positive branch
    if x.shape != grad_out.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {grad_out.shape}")
    slope = np.where(x >= 0, 1.0, p.alpha * np.exp(np.minimum(x, 0)))
    return (grad_out * slope).astype(grad_out.dtype, copy=False)


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(x, grad_out):
    return grad_out * (x > 0)


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta_bn: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps_bn: float = 1e-5
    stat_momentum: float = 0.1
    mode: str = "train"

    @classmethod
    def create(cls, channels, dtype=np.float32, **kw):
        return cls(
            gamma=np.ones(channels, dtype),
            beta_bn=np.zeros(channels, dtype),
            running_mean=np.zeros(channels, dtype),
            running_var=np.ones(channels, dtype),
            **kw,
        )

    @property
    def channels(self):
        return self.gamma.shape[0]


@dataclass
class BatchNormCache:
    x_hat: np.ndarray
    inv_std: np.ndarray


def batchnorm_forward(x, s):
    """Normalize per channel, scale and shift.

    In train mode the batch statistics are used and the running statistics
    are updated in place; the returned cache feeds ``batchnorm_backward``.
    Returns ``(out, cache)``; cache is None in eval mode.
    """
    if x.shape[1] != s.channels:
        raise ValueError(f"input has {x.shape[1]} channels, batch norm expects {s.channels}")
    shape = (1, -1, 1, 1)
    if s.mode == "train":
        m = x.shape[0] * x.shape[2] * x.shape[3]
        if m < 2:
            raise ValueError("batch norm needs at least 2 values per channel in train mode")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        mom = s.stat_momentum
        s.running_mean[...] = (1 - mom) * s.running_mean + mom * mean
        s.running_var[...] = (1 - mom) * s.running_var + mom * var
    elif s.mode == "eval":
        mean, var = s.running_mean, s.running_var
    else:
        raise ValueError(f"unknown batch norm mode {s.mode!r}")
    inv_std = 1.0 / np.sqrt(var + s.eps_bn)
    x_hat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
    out = (x_hat * s.gamma.reshape(shape) + s.beta_bn.reshape(shape)).astype(x.dtype, copy=False)
    cache = BatchNormCache(x_hat, inv_std) if s.mode == "train" else None
    return out, cache


def batchnorm_backward(grad_out, cache, s):
    """Gradient through train-mode batch statistics.

    Returns ``(grad_x, grad_gamma, grad_beta)``.
    """
    if s.mode != "train" or cache is None:
        raise RuntimeError("batchnorm_backward requires a train-mode forward cache")
    shape = (1, -1, 1, 1)
    x_hat = cache.x_hat
    m = grad_out.shape[0] * grad_out.shape[2] * grad_out.shape[3]
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    grad_gamma = (grad_out * x_hat).sum(axis=(0, 2, 3))
    g_hat = grad_out * s.gamma.reshape(shape)
    grad_x = (
        cache.inv_std.reshape(shape)
        / m
        * (
            m * g_hat
            - (s.gamma * grad_beta).reshape(shape)
            - x_hat * (s.gamma * grad_gamma).reshape(shape)
        )
    )
    return grad_x.astype(grad_out.dtype, copy=False), grad_gamma, grad_beta


def msra_init(filter_shape, seed, dtype=np.float32):
    """He/MSRA normal initialization: std sqrt(2 / fan_in), zero bias."""
    c_out, c_in, kh, kw = filter_shape
    rng = np.random.default_rng(seed)
    std = np.sqrt(2.0 / (c_in * kh * kw))
    w = rng.normal(0.0, std, size=filter_shape).astype(dtype)
    return Filter(w, np.zeros(c_out, dtype))


# Layer objects: each keeps the cache from its last train forward and the
# gradients from its last backward.


class Conv:
    def __init__(self, f, name):
        self.filter = f
        self.name = name
        self.grads = {}
        self._x = None

    @property
    def params(self):
        return {f"{self.name}.weight": self.filter.weights, f"{self.name}.bias": self.filter.bias}

    def forward(self, x, train=False):
        if train:
            self._x = x
        return conv2d_forward(x, self.filter)

    def backward(self, grad_out):
        if self._x is None:
            raise RuntimeError(f"{self.name}: backward called without a cached forward")
        grad_in, gf = conv2d_backward(self._x, self.filter, grad_out)
        self.grads = {f"{self.name}.weight": gf.weights, f"{self.name}.bias": gf.bias}
        return grad_in


class Elu:
    def __init__(self, alpha):
        self.p = EluParams(alpha)
        self.params = {}
        self.grads = {}
        self._x = None

    def forward(self, x, train=False):
        if train:
            self._x = x
        return elu_forward(x, self.p)

    def backward(self, grad_out):
        if self._x is None:
            raise RuntimeError("elu: backward called without a cached forward")
        return elu_backward(self._x, grad_out, self.p)


class BatchNorm:
    def __init__(self, state, name):
        self.state = state
        self.name = name
        self.grads = {}
        self._cache = None

    @property
    def params(self):
        return {f"{self.name}.gamma": self.state.gamma, f"{self.name}.beta": self.state.beta_bn}

    @property
    def buffers(self):
        return {
            f"{self.name}.running_mean": self.state.running_mean,
            f"{self.name}.running_var": self.state.running_var,
        }

    def forward(self, x, train=False):
        self.state.mode = "train" if train else "eval"
        out, self._cache = batchnorm_forward(x, self.state)
        return out

    def backward(self, grad_out):
        grad_x, gg, gb = batchnorm_backward(grad_out, self._cache, self.state)
        self.grads = {f"{self.name}.gamma": gg, f"{self.name}.beta": gb}
        return grad_x


@dataclass
class Sequential:
    layers: list = field(default_factory=list)

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad
