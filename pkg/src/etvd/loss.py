"""Total-variation regularized residual L2 loss and SGD with momentum."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TvL2Config:
    beta: float = 1e-4
    beta_late: float = 5e-4
    switch_epoch: int = 30
    tv_eps: float = 1e-3

    def __post_init__(self):
        if self.beta < 0 or self.beta_late < 0:
            raise ValueError("TV weights must be nonnegative")
        if not self.tv_eps > 0:
            raise ValueError("tv_eps must be positive")

    def beta_at(self, epoch):
        return self.beta if epoch < self.switch_epoch else self.beta_late


def _grads(u):
    # forward differences, zero in the last column / row (replicate boundary)
    dx = np.zeros_like(u)
    dy = np.zeros_like(u)
    dx[..., :, :-1] = u[..., :, 1:] - u[..., :, :-1]
    dy[..., :-1, :] = u[..., 1:, :] - u[..., :-1, :]
    return dx, dy


def tv_value(u, eps=0.0):
    """Isotropic TV of one image (c, h, w) or (1, c, h, w), summed over channels.

    ``eps > 0`` gives the smoothed surrogate sum(sqrt(dx^2 + dy^2 + eps^2)).
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 4:
        if u.shape[0] != 1:
            raise ValueError("tv_value takes a single image; use tv_per_sample for batches")
        u = u[0]
    return float(_magnitude(u, eps).sum())


def tv_per_sample(u, eps=0.0):
    return _magnitude(np.asarray(u, dtype=np.float64), eps).sum(axis=(1, 2, 3))


def _magnitude(u, eps):
    dx, dy = _grads(u)
    if eps == 0:
        return np.hypot(dx, dy)  # no underflow for tiny differences
    return np.sqrt(dx * dx + dy * dy + eps * eps)


def tv_grad(u, eps):
    """Gradient of the smoothed TV with respect to ``u`` (any leading dims)."""
    dx, dy = _grads(u)
    mag = np.sqrt(dx * dx + dy * dy + eps * eps)
    px, py = dx / mag, dy / mag
    g = np.zeros_like(u)
    g[..., :, :-1] -= px[..., :, :-1]
    g[..., :, 1:] += px[..., :, :-1]
    g[..., :-1, :] -= py[..., :-1, :]
    g[..., 1:, :] += py[..., :-1, :]
    return g


def _check(r, y, x):
    if not (r.shape == y.shape == x.shape) or r.ndim != 4:
        raise ValueError(f"shape mismatch: R {r.shape}, y {y.shape}, x {x.shape}")


def loss_forward(r, y, x, cfg, epoch, smoothed=False):
    """L = 1/(2N) sum ||R_i - (y_i - x_i)||^2 + beta(epoch)/N sum TV(y_i - R_i).

    The TV term is exact unless ``smoothed`` is set, in which case the
    eps-smoothed surrogate (the one ``loss_backward`` differentiates) is used.
    """
    _check(r, y, x)
    n = r.shape[0]
    r64 = np.asarray(r, dtype=np.float64)
    resid = r64 - (np.asarray(y, np.float64) - np.asarray(x, np.float64))
    data = 0.5 * np.sum(resid * resid) / n
    beta = cfg.beta_at(epoch)
    if beta == 0:
        return float(data)
    eps = cfg.tv_eps if smoothed else 0.0
    tv = tv_per_sample(np.asarray(y, np.float64) - r64, eps).sum()
    return float(data + beta * tv / n)


def loss_backward(r, y, x, cfg, epoch):
    """dL/dR with the TV term replaced by its eps-smoothed surrogate."""
    _check(r, y, x)
    n = r.shape[0]
    grad = (r - (y - x)) / n
    beta = cfg.beta_at(epoch)
    if beta != 0:
        # u = y - R, so dTV/dR = -dTV/du
        grad = grad - (beta / n) * tv_grad(y - r, cfg.tv_eps)
    return grad.astype(np.asarray(r).dtype, copy=False)


@dataclass
class SgdState:
    lr: float = 1e-3
    lr_late: float = 1e-4
    switch_epoch: int = 30
    momentum: float = 0.9
    weight_decay: float = 1e-4
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.lr > 0 and self.lr_late > 0):
            raise ValueError("learning rates must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be nonnegative")

    def lr_at(self, epoch):
        return self.lr if epoch < self.switch_epoch else self.lr_late


def sgd_step(params, grads, s, epoch, decayed=None):
    """In-place momentum SGD update.

    ``decayed`` names the parameters that receive weight decay; by default
    every name ending in ``.weight`` (convolution filters).
    """
    lr = s.lr_at(epoch)
    if decayed is None:
        decayed = {k for k in params if k.endswith(".weight")}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        if name in decayed and s.weight_decay:
            g = g + s.weight_decay * p
        v = s.velocity.get(name)
        if v is None:
            v = s.velocity[name] = np.zeros_like(p)
        v *= s.momentum
        v += g
        p -= lr * v
    return params
