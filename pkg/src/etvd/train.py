"""Training loop and patch-level evaluation."""

import time
from dataclasses import asdict, dataclass

import numpy as np

from .data import make_batches
from .loss import SgdState, TvL2Config, loss_backward, loss_forward, sgd_step
from .network import denoise, save_checkpoint
from .texture import psnr


class DivergenceError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 128
    switch_epoch: int = 30
    lr: float = 1e-3
    lr_late: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    beta: float = 1e-4
    beta_late: float = 5e-4
    tv_eps: float = 1e-3
    patch_size: int = 40
    stride: int = 10
    max_patches: int = 0  # 0 means no cap
    seed: int = 0

    def tv(self):
        return TvL2Config(self.beta, self.beta_late, self.switch_epoch, self.tv_eps)

    def sgd(self):
        return SgdState(self.lr, self.lr_late, self.switch_epoch, self.momentum, self.weight_decay)


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    lr: float
    beta: float
    steps: int
    seconds: float

    def line(self):
        return (f"epoch={self.epoch} loss={self.mean_loss:.6f} lr={self.lr:g} "
                f"beta={self.beta:g} steps={self.steps} time={self.seconds:.2f}s")


def velocity_records(sgd):
    return {f"velocity/{k}": v for k, v in sgd.velocity.items()}


def train(net, pairs, cfg, log=print, checkpoint=None, sgd=None, start_epoch=0):
    """Run epochs ``start_epoch .. cfg.epochs - 1`` of SGD on (noisy, clean) pairs.

    Writes ``checkpoint`` after every epoch when given. Returns the list of
    EpochRecord. Raises DivergenceError on a non-finite loss.
    """
    tv = cfg.tv()
    sgd = sgd or cfg.sgd()
    params = net.parameters()
    decayed = net.decayed()
    history = []
    step = 0
    for epoch in range(start_epoch, cfg.epochs):
        t0 = time.perf_counter()
        losses = []
        for y, x in make_batches(pairs, cfg.batch_size, cfg.seed, epoch, net.dtype):
            r = net.forward(y, "train")
            loss = loss_forward(r, y, x, tv, epoch)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, step {step}")
            grads = net.backward(loss_backward(r, y, x, tv, epoch))
            sgd_step(params, grads, sgd, epoch, decayed)
            losses.append(loss)
            log(f"step={step} epoch={epoch} loss={loss:.6f}")
            step += 1
        rec = EpochRecord(epoch, float(np.mean(losses)) if losses else float("nan"),
                          sgd.lr_at(epoch), tv.beta_at(epoch), len(losses), time.perf_counter() - t0)
        history.append(rec)
        log(rec.line())
        if checkpoint is not None:
            save_checkpoint(checkpoint, net, extra={"epoch": epoch, "train": asdict(cfg)},
                            records=velocity_records(sgd))
    return history


def evaluate_pairs(net, pairs, batch_size=64):
    """Mean PSNR of noisy inputs and of denoised outputs against the clean patches."""
    noisy_db, out_db = [], []
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start : start + batch_size]
        y = np.stack([p[0] for p in chunk]).astype(net.dtype)
        xhat = denoise(net, y)
        for k, (yk, xk) in enumerate(chunk):
            noisy_db.append(psnr(yk, xk))
            out_db.append(psnr(xhat[k], xk))
    return float(np.mean(noisy_db)), float(np.mean(out_db))
