"""Co-occurrence energy (ASM) of residual maps, and PSNR."""

import csv
from dataclasses import dataclass

import numpy as np

from .data import NoiseSpec, add_gaussian_noise
from .layers import EluParams, elu_forward, relu_forward
from .tensor import Filter, conv2d_forward, rotate180


@dataclass(frozen=True)
class GlcmConfig:
    levels: int = 64
    offset: tuple = (0, 1)
    symmetric: bool = True
    normalize: bool = True

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("levels must be >= 2")
        if tuple(self.offset) == (0, 0):
            raise ValueError("offset must be nonzero")


def quantize_levels(u, levels):
    """Min-max rescale to [0, levels-1] and floor; constant input maps to bin 0."""
    u = np.asarray(u, dtype=np.float64)
    lo, hi = u.min(), u.max()
    if hi == lo:
        return np.zeros(u.shape, dtype=np.int64)
    q = np.floor((u - lo) * (levels - 1) / (hi - lo)).astype(np.int64)
    return np.clip(q, 0, levels - 1)


def compute_glcm(u, cfg=GlcmConfig()):
    """Gray-level co-occurrence matrix of a 2D real image."""
    u = np.asarray(u)
    if u.ndim != 2:
        raise ValueError(f"expected a 2D single-channel image, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("image contains NaN or Inf")
    dy, dx = cfg.offset
    h, w = u.shape
    if abs(dy) >= h or abs(dx) >= w:
        raise ValueError(f"image {h}x{w} is too small for offset {cfg.offset}")
    q = quantize_levels(u, cfg.levels)
    i0, i1 = max(0, -dy), h - max(0, dy)
    j0, j1 = max(0, -dx), w - max(0, dx)
    a = q[i0:i1, j0:j1]
    b = q[i0 + dy : i1 + dy, j0 + dx : j1 + dx]
    L = cfg.levels
    p = np.bincount((a * L + b).ravel(), minlength=L * L).reshape(L, L).astype(np.float64)
    if cfg.symmetric:
        p = p + p.T
    if cfg.normalize:
        p /= p.sum()
    return p


def asm(p):
    """Angular second moment (energy) of a normalized co-occurrence matrix."""
    return float(np.sum(np.square(p)))


def single_filter_residual(y, f, activation="elu", alpha=0.1):
    """Single-filter residual: rot180(f) applied to phi(f applied to y).

    ``y`` is a 2D image or a (1, 1, h, w) tensor; returns the same layout.
    ``activation`` is "elu", "relu", "identity" or a callable.
    """
    y = np.asarray(y, dtype=np.float64)
    squeeze = y.ndim == 2
    t = y[None, None] if squeeze else y
    if not isinstance(f, Filter):
        f = Filter(np.asarray(f, np.float64).reshape(1, 1, 3, 3), np.zeros(1))
    if f.weights.shape != (1, 1, 3, 3):
        raise ValueError(f"expected a single-channel 3x3 filter, got {f.weights.shape}")
    if callable(activation):
        phi = activation
    elif activation == "elu":
        p = EluParams(alpha)
        phi = lambda z: elu_forward(z, p)  # noqa: E731
    elif activation == "relu":
        phi = relu_forward
    elif activation == "identity":
        phi = lambda z: z  # noqa: E731
    else:
        raise ValueError(f"unknown activation {activation!r}")
    inner = conv2d_forward(t, f)
    v = conv2d_forward(phi(inner), rotate180(f))
    return v[0, 0] if squeeze else v


@dataclass(frozen=True)
class AsmExperimentConfig:
    sigma: float = 25.0
    filter_size: int = 3
    alpha: float = 0.1
    trials_per_image: int = 20
    seed: int = 0
    lam: float = 1.0
    filter_range: float = 0.5
    glcm: GlcmConfig = GlcmConfig()

    def __post_init__(self):
        if self.trials_per_image < 1:
            raise ValueError("trials_per_image must be >= 1")
        if self.filter_size != 3:
            raise ValueError("only 3x3 filters are supported")


@dataclass
class AsmTrial:
    image: str
    trial: int
    sigma: float
    asm_elu: float
    asm_relu: float

    @property
    def elu_lower(self):
        return self.asm_elu < self.asm_relu


@dataclass
class AsmSummary:
    count_elu_lower: int
    count_elu_higher: int
    ties: int
    trials: list

    @property
    def total(self):
        return self.count_elu_lower + self.count_elu_higher + self.ties

    @property
    def fraction(self):
        return self.count_elu_lower / self.total


def asm_experiment(images, cfg=AsmExperimentConfig(), names=None, arms=("elu", "relu")):
    """Compare ASM of ELU and ReLU residuals over random 3x3 filters.

    Each image gets one noisy observation at ``cfg.sigma`` and
    ``cfg.trials_per_image`` filters drawn uniformly from
    [-filter_range, filter_range], all from an RNG stream keyed by
    (seed, image index). ``arms`` can be overridden for control runs.
    """
    images = list(images)
    if not images:
        raise ValueError("asm_experiment needs at least one image")
    names = names or [str(i) for i in range(len(images))]
    trials = []
    lower = higher = ties = 0
    for idx, img in enumerate(images):
        img = np.asarray(img, dtype=np.float64)
        if img.ndim == 3:
            if img.shape[0] != 1:
                raise ValueError("asm_experiment expects grayscale images")
            img = img[0]
        noise = NoiseSpec("fixed", sigma=cfg.sigma, seed=cfg.seed).for_index(idx)
        y, sigma = add_gaussian_noise(img, noise)
        rng = np.random.default_rng([cfg.seed, idx, 1])
        for t in range(cfg.trials_per_image):
            w = rng.uniform(-cfg.filter_range, cfg.filter_range, size=(3, 3))
            f = Filter(w.reshape(1, 1, 3, 3), np.zeros(1))
            a = asm(compute_glcm(cfg.lam * single_filter_residual(y, f, arms[0], cfg.alpha), cfg.glcm))
            b = asm(compute_glcm(cfg.lam * single_filter_residual(y, f, arms[1], cfg.alpha), cfg.glcm))
            trials.append(AsmTrial(names[idx], t, sigma, a, b))
            if a < b:
                lower += 1
            elif a > b:
                higher += 1
            else:
                ties += 1
    return AsmSummary(lower, higher, ties, trials)


def write_asm_csv(path, summary):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["image_path", "trial", "sigma", "asm_elu", "asm_relu", "elu_lower"])
        for t in summary.trials:
            wr.writerow([t.image, t.trial, f"{t.sigma:g}", repr(t.asm_elu), repr(t.asm_relu), int(t.elu_lower)])
        wr.writerow(["SUMMARY", summary.total, "", summary.count_elu_lower, summary.count_elu_higher,
                     f"{summary.fraction:.6f}"])


def psnr(a, b, peak=1.0):
    """PSNR in dB; ``inf`` when the images are identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))

