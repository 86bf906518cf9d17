"""The residual denoiser: Conv+ELU head, Conv3x3-ELU-Conv1x1-BN blocks, Conv tail.

The network predicts the noise R; the clean estimate is ``y - R``.
"""

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .layers import BatchNorm, BatchNormState, Conv, Elu, Sequential, msra_init
from .tensor import check_finite

MAGIC = b"ETVD"
FORMAT_VERSION = 1


@dataclass
class NetworkConfig:
    blocks: int = 15
    channels: int = 64
    in_channels: int = 1
    alpha: float = 1.0
    seed: int = 0
    # Both keep plain momentum SGD at lr 1e-3 stable. gamma=1 diverges. With
    # an MSRA tail, the DC offset mode (tail bias, last BN shift, tail
    # weights) has curvature ~ pixels * (1 + sum_c (sum_taps w_c)^2), which
    # can exceed the 2 (1 + momentum) / lr limit at init.
    bn_gamma_init: float = 0.025
    zero_tail: bool = True

    def __post_init__(self):
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.in_channels not in (1, 3):
            raise ValueError("in_channels must be 1 (gray) or 3 (color)")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


class ResidualDenoiser:
    def __init__(self, cfg, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        seeds = np.random.SeedSequence(cfg.seed).spawn(2 + 2 * cfg.blocks)
        seeds = iter(seeds)
        c, ic = cfg.channels, cfg.in_channels

        def conv(shape, name):
            return Conv(msra_init(shape, next(seeds), self.dtype), name)

        self.head = Sequential([conv((c, ic, 3, 3), "head.conv"), Elu(cfg.alpha)])
        self.body = []
        for b in range(cfg.blocks):
            self.body.append(
                Sequential(
                    [
                        conv((c, c, 3, 3), f"block{b}.conv3"),
                        Elu(cfg.alpha),
                        conv((c, c, 1, 1), f"block{b}.conv1"),
                        BatchNorm(self._bn_state(), f"block{b}.bn"),
                    ]
                )
            )
        self.tail = Sequential([conv((ic, c, 3, 3), "tail.conv")])
        if cfg.zero_tail:
            self.tail.layers[0].filter.weights[...] = 0
        self._ran_train = False

    def _bn_state(self):
        s = BatchNormState.create(self.cfg.channels, self.dtype)
        s.gamma[...] = self.cfg.bn_gamma_init
        return s

    @property
    def stages(self):
        return [self.head, *self.body, self.tail]

    def layers(self):
        for stage in self.stages:
            yield from stage.layers

    def conv_layers(self):
        return [layer for layer in self.layers() if isinstance(layer, Conv)]

    def parameters(self):
        """Learnable arrays by name, in a fixed order."""
        out = {}
        for layer in self.layers():
            out.update(layer.params)
        return out

    def buffers(self):
        out = {}
        for layer in self.layers():
            if isinstance(layer, BatchNorm):
                out.update(layer.buffers)
        return out

    def state_dict(self):
        return {**self.parameters(), **self.buffers()}

    def decayed(self):
        """Names of parameters subject to weight decay (conv weights only)."""
        return {name for name in self.parameters() if name.endswith(".weight")}

    def forward(self, y, mode="eval"):
        if y.ndim != 4 or y.shape[1] != self.cfg.in_channels:
            raise ValueError(f"input shape {y.shape} does not match in_channels={self.cfg.in_channels}")
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode {mode!r}")
        train = mode == "train"
        x = np.asarray(y, dtype=self.dtype)
        for stage in self.stages:
            x = stage.forward(x, train)
        self._ran_train = train
        return check_finite(x, "network output")

    def backward(self, grad_r):
        """Backpropagate dL/dR; returns parameter gradients keyed like ``parameters()``."""
        if not self._ran_train:
            raise RuntimeError("backward requires a preceding train-mode forward")
        g = np.asarray(grad_r, dtype=self.dtype)
        for stage in reversed(self.stages):
            g = stage.backward(g)
        grads = {}
        for layer in self.layers():
            grads.update(layer.grads)
        return grads

    def __call__(self, y, mode="eval"):
        return self.forward(y, mode)


def denoise(net, y):
    """Clean estimate ``clamp(y - R, 0, 1)`` using eval-mode statistics."""
    r = net.forward(y, "eval")
    return np.clip(np.asarray(y, dtype=net.dtype) - r, 0.0, 1.0)


def count_conv_layers(net):
    return len(net.conv_layers())


# checkpoint layout (little-endian):
#   b"ETVD" | u32 version | u32 len + JSON header | u32 count |
#   per record: u32 name len, name, u32 ndim, u32 dims..., float32 payload


def save_checkpoint(path, net, extra=None, records=None):
    """Write all learnable state and buffers, plus optional extra arrays.

    ``extra`` is a JSON-serializable dict stored next to the network config.
    ``records`` adds further named arrays (e.g. optimizer velocity).
    """
    header = {"network": asdict(net.cfg), "extra": extra or {}}
    arrays = dict(net.state_dict())
    for name, arr in (records or {}).items():
        arrays[name] = arr
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        blob = json.dumps(header, sort_keys=True).encode()
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            raw = name.encode()
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


class CheckpointError(ValueError):
    pass


def read_checkpoint(path):
    """Return ``(header, arrays)`` from a checkpoint file."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not an ETVD checkpoint")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    (version,) = take("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    (hlen,) = take("<I")
    header = json.loads(data[pos : pos + hlen])
    pos += hlen
    (count,) = take("<I")
    arrays = {}
    for _ in range(count):
        (nlen,) = take("<I")
        name = data[pos : pos + nlen].decode()
        pos += nlen
        (ndim,) = take("<I")
        shape = take(f"<{ndim}I")
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated payload for {name}")
        arrays[name] = np.frombuffer(data, "<f4", count=nbytes // 4, offset=pos).reshape(shape).copy()
        pos += nbytes
    return header, arrays


def load_checkpoint(path, dtype=np.float32):
    """Rebuild a ``ResidualDenoiser`` from a checkpoint.

    Returns ``(net, header, extra_records)`` where ``extra_records`` holds
    arrays not belonging to the network.
    """
    header, arrays = read_checkpoint(path)
    net = ResidualDenoiser(NetworkConfig(**header["network"]), dtype=dtype)
    state = net.state_dict()
    missing = set(state) - set(arrays)
    if missing:
        raise CheckpointError(f"{path}: missing records {sorted(missing)}")
    for name, target in state.items():
        src = arrays.pop(name)
        if src.shape != target.shape:
            raise CheckpointError(f"{path}: {name} has shape {src.shape}, expected {target.shape}")
        target[...] = src
    return net, header, arrays
