"""Central finite-difference checks of every hand-written backward pass."""

from dataclasses import dataclass

import numpy as np

from .layers import (
    BatchNormState,
    EluParams,
    batchnorm_backward,
    batchnorm_forward,
    elu_backward,
    elu_forward,
)
from .loss import TvL2Config, loss_backward, loss_forward
from .network import NetworkConfig, ResidualDenoiser
from .tensor import Filter, conv2d_backward, conv2d_forward

H = 1e-5
FLOOR = 1e-3


def rel_error(analytic, numeric, floor=FLOOR):
    """max |a - n| / max(|a|, |n|, floor) over all entries.

    The floor keeps entries whose true value is 0 (e.g. a bias feeding batch
    norm) from turning finite-difference roundoff into a huge ratio.
    """
    a = np.asarray(analytic, np.float64)
    n = np.asarray(numeric, np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def numeric_grad(fn, x, h=H):
    """d fn / d x by central differences; ``fn`` returns a scalar, ``x`` is perturbed in place."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = fn()
        flat[i] = old - h
        fm = fn()
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self):
        return self.max_rel_error <= self.tolerance

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: max rel err {self.max_rel_error:.3e} (tol {self.tolerance:.0e})"


def _probe(rng, shape):
    # random projection turns a tensor output into a scalar objective
    return rng.standard_normal(shape)


def check_conv(seed, k=3, shape=(2, 3, 8, 8), c_out=2, corrupt=False):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    f = Filter(rng.standard_normal((c_out, shape[1], k, k)), rng.standard_normal(c_out))
    g = _probe(rng, (shape[0], c_out, shape[2], shape[3]))

    def obj():
        return float(np.sum(conv2d_forward(x, f) * g))

    gx, gf = conv2d_backward(x, f, g)
    if corrupt:
        gx = gx * 1.01
    errs = [
        rel_error(gx, numeric_grad(obj, x)),
        rel_error(gf.weights, numeric_grad(obj, f.weights)),
        rel_error(gf.bias, numeric_grad(obj, f.bias)),
    ]
    return max(errs)


def check_elu(seed, shape=(2, 3, 8, 8), alpha=1.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    # keep samples away from the kink at 0
    x = np.where(np.abs(x) < 1e-3, 1e-2, x)
    p = EluParams(alpha)
    g = _probe(rng, shape)
    # elementwise map: differentiate every entry at once
    numeric = (elu_forward(x + H, p) - elu_forward(x - H, p)) / (2 * H) * g
    return rel_error(elu_backward(x, g, p), numeric)


def check_batchnorm(seed, shape=(2, 3, 4, 4)):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape) * 2 + 0.5
    s = BatchNormState.create(shape[1], np.float64)
    s.gamma[...] = rng.uniform(0.5, 1.5, shape[1])
    s.beta_bn[...] = rng.standard_normal(shape[1])
    g = _probe(rng, shape)

    def obj():
        out, _ = batchnorm_forward(x, s)
        return float(np.sum(out * g))

    _, cache = batchnorm_forward(x, s)
    gx, gg, gb = batchnorm_backward(g, cache, s)
    return max(
        rel_error(gx, numeric_grad(obj, x)),
        rel_error(gg, numeric_grad(obj, s.gamma)),
        rel_error(gb, numeric_grad(obj, s.beta_bn)),
    )


def check_network(seed, blocks=1, channels=3, shape=(2, 1, 6, 6)):
    """Every parameter gradient of a small head + block(s) + tail network."""
    rng = np.random.default_rng(seed)
    # random tail: a zero tail would zero every upstream gradient
    cfg = NetworkConfig(blocks=blocks, channels=channels, in_channels=shape[1], seed=seed, zero_tail=False)
    net = ResidualDenoiser(cfg, dtype=np.float64)
    for layer in net.layers():
        if hasattr(layer, "state"):
            layer.state.gamma[...] = rng.uniform(0.5, 1.5, channels)
            layer.state.beta_bn[...] = rng.standard_normal(channels) * 0.1
    y = rng.standard_normal(shape)
    g = _probe(rng, shape)

    def obj():
        return float(np.sum(net.forward(y, "train") * g))

    net.forward(y, "train")
    grads = net.backward(g)
    errs = []
    for name, p in net.parameters().items():
        errs.append(rel_error(grads[name], numeric_grad(obj, p)))
    return max(errs)


def check_loss(seed, shape=(1, 1, 5, 5), beta=0.3, tv_eps=1e-3):
    rng = np.random.default_rng(seed)
    r = rng.standard_normal(shape)
    y = rng.standard_normal(shape)
    x = rng.standard_normal(shape)
    cfg = TvL2Config(beta=beta, beta_late=beta, tv_eps=tv_eps)

    def obj():
        return loss_forward(r, y, x, cfg, 0, smoothed=True)

    return rel_error(loss_backward(r, y, x, cfg, 0), numeric_grad(obj, r))


SUITES = {
    "layer": [
        ("conv3x3", lambda s: check_conv(s, 3), 1e-5),
        ("conv1x1", lambda s: check_conv(s, 1), 1e-5),
        ("elu", check_elu, 1e-7),
        ("batchnorm", check_batchnorm, 1e-5),
    ],
    "network": [("block", check_network, 1e-5)],
    "loss": [("tv_l2", check_loss, 1e-5)],
}


def run(scope="all", seeds=range(10), corrupt=False):
    """Run the selected suites over ``seeds``; returns a list of CheckResult."""
    scopes = list(SUITES) if scope == "all" else [scope]
    results = []
    for sc in scopes:
        for name, fn, tol in SUITES[sc]:
            worst = max(fn(s) for s in seeds)
            results.append(CheckResult(name, worst, tol))
    if corrupt:
        results.append(CheckResult("conv3x3-corrupted", max(check_conv(s, 3, corrupt=True) for s in seeds), 1e-5))
    return results
