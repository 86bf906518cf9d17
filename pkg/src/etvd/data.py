"""Image I/O, grayscale conversion, patch extraction and Gaussian noise synthesis.

Images are float arrays of shape (c, h, w) with intensities in [0, 1].
Noise levels are given on the 0-255 scale, as usually quoted.
"""

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np


class PnmError(ValueError):
    pass


def _header_tokens(data, count):
    """Parse ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the byte after the single whitespace
    that terminates the last token.
    """
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PnmError("malformed header: unexpected end of file")
        tokens.append(data[start:pos])
    if pos >= n or not data[pos : pos + 1].isspace():
        raise PnmError("malformed header: missing whitespace before raster")
    return tokens, pos + 1


def decode_pnm(data):
    tokens, offset = _header_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise PnmError(f"unsupported magic {magic!r}; only binary P5/P6 are read")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise PnmError("malformed header: non-integer field") from None
    if w <= 0 or h <= 0:
        raise PnmError(f"invalid dimensions {w}x{h}")
    if maxval != 255:
        raise PnmError(f"unsupported maxval {maxval}; only 8-bit (255) is supported")
    c = 1 if magic == b"P5" else 3
    need = w * h * c
    raster = data[offset : offset + need]
    if len(raster) < need:
        raise PnmError(f"truncated raster: expected {need} bytes, got {len(raster)}")
    pix = np.frombuffer(raster, np.uint8).reshape(h, w, c).transpose(2, 0, 1)
    return pix.astype(np.float64) / 255.0


def encode_pnm(img):
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[None]
    c, h, w = img.shape
    if c not in (1, 3):
        raise ValueError(f"images must have 1 or 3 channels, got {c}")
    q = quantize(img)
    magic = b"P5" if c == 1 else b"P6"
    return magic + f"\n{w} {h}\n255\n".encode() + q.transpose(1, 2, 0).tobytes()


def quantize(img):
    return np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def read_image(path):
    return decode_pnm(Path(path).read_bytes())


def write_image(path, img):
    Path(path).write_bytes(encode_pnm(img))


def to_gray(img):
    if img.shape[0] != 3:
        raise ValueError("to_gray expects a 3-channel image")
    return (0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2])[None]


@dataclass(frozen=True)
class NoiseSpec:
    mode: str = "fixed"
    sigma: float = 25.0
    lo: float = 0.0
    hi: float = 55.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("fixed", "randomized"):
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if self.sigma < 0 or self.lo < 0:
            raise ValueError("noise levels must be nonnegative")
        if self.lo > self.hi:
            raise ValueError("noise range must satisfy lo <= hi")

    def for_index(self, index):
        """Same spec with a seed derived from (seed, index)."""
        child = np.random.SeedSequence([self.seed, index]).generate_state(2, np.uint64)
        return replace(self, seed=int(child[0]))


def box_muller(rng, size):
    """Standard normal draws from pairs of uniforms."""
    count = int(np.prod(size, dtype=np.int64))
    m = (count + 1) // 2
    u1 = 1.0 - rng.random(m)  # (0, 1], keeps log finite
    u2 = rng.random(m)
    rad = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([rad * np.cos(2 * math.pi * u2), rad * np.sin(2 * math.pi * u2)])
    return z[:count].reshape(size)


def add_gaussian_noise(img, spec):
    """Return ``(noisy, sigma_used)``. The result is not clamped."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if spec.mode == "randomized":
        sigma = float(spec.lo + (spec.hi - spec.lo) * rng.random())
    else:
        sigma = float(spec.sigma)
    img = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return img.copy(), sigma
    return img + (sigma / 255.0) * box_muller(rng, img.shape), sigma


def extract_patches(img, size, stride, seed=None):
    """Grid patches of ``size`` x ``size`` every ``stride`` pixels.

    With a seed the order is shuffled deterministically.
    """
    _, h, w = img.shape
    if size > min(h, w):
        raise ValueError(f"patch size {size} exceeds image size {h}x{w}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    patches = [
        img[:, i : i + size, j : j + size].copy()
        for i in range(0, h - size + 1, stride)
        for j in range(0, w - size + 1, stride)
    ]
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(patches))
        patches = [patches[k] for k in order]
    return patches


def make_batches(pairs, batch_size, seed, epoch=0, dtype=np.float32):
    """Yield ``(y_batch, x_batch)`` tensors for one epoch.

    ``pairs`` is a sequence of (noisy, clean) (c, h, w) arrays. The shuffle is
    keyed by (seed, epoch); a trailing partial batch is dropped.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not len(pairs):
        raise ValueError("no training pairs")
    order = np.random.default_rng([seed, epoch]).permutation(len(pairs))
    for b in range(len(pairs) // batch_size):
        idx = order[b * batch_size : (b + 1) * batch_size]
        y = np.stack([pairs[i][0] for i in idx]).astype(dtype)
        x = np.stack([pairs[i][1] for i in idx]).astype(dtype)
        yield y, x


def read_manifest(path):
    """Image paths listed one per line; blank lines and '#' comments ignored.

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    out = []
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            p = Path(line)
            out.append(p if p.is_absolute() else path.parent / p)
    return out


def write_manifest(path, paths):
    Path(path).write_text("".join(f"{p}\n" for p in paths))


def check_disjoint(train_paths, eval_paths):
    overlap = {Path(p).resolve() for p in train_paths} & {Path(p).resolve() for p in eval_paths}
    if overlap:
        raise ValueError(f"train and eval manifests overlap: {sorted(map(str, overlap))[:5]}")


def load_gray(path):
    img = read_image(path)
    return to_gray(img) if img.shape[0] == 3 else img


def make_pairs(images, patch_size, stride, noise, seed=0, limit=None):
    """Noisy/clean patch pairs with per-patch noise seeds derived from ``noise``."""
    clean = []
    for k, img in enumerate(images):
        clean.extend(extract_patches(img, patch_size, stride, seed=None if seed is None else [seed, k]))
    if limit is not None:
        if seed is not None:
            order = np.random.default_rng(seed).permutation(len(clean))
            clean = [clean[i] for i in order]
        clean = clean[:limit]
    pairs = []
    for i, x in enumerate(clean):
        y, _ = add_gaussian_noise(x, noise.for_index(i))
        pairs.append((y, x))
    return pairs
