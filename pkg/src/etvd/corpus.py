"""Natural-image tiles cut from the photographs bundled with scikit-image.

Used where a test or experiment needs real photographic content but no
dataset is at hand. Everything is offline and deterministic.
"""

from pathlib import Path

import numpy as np

from .data import to_gray, write_image, write_manifest

# photographs only; synthetic targets (chessboard, phantom, logo) are excluded
PHOTOS = (
    "astronaut",
    "camera",
    "chelsea",
    "coffee",
    "coins",
    "moon",
    "rocket",
    "hubble_deep_field",
    "retina",
    "immunohistochemistry",
    "grass",
    "gravel",
    "brick",
    "clock",
    "cell",
    "page",
    "text",
)


def load_photo(name):
    """A bundled photograph as a (1, h, w) gray image in [0, 1]."""
    from skimage import data as skdata

    img = np.asarray(getattr(skdata, name)())
    if img.ndim == 3:
        img = to_gray(img[..., :3].transpose(2, 0, 1).astype(np.float64))[0]
    img = img.astype(np.float64)
    if img.max() > 1.0:
        img = img / 255.0
    return img[None]


def tiles(size=180, stride=90, min_std=0.03, photos=PHOTOS):
    """Yield ``(name, tile)`` for every textured size x size window.

    Windows with standard deviation below ``min_std`` (flat background) are
    skipped.
    """
    for photo in photos:
        img = load_photo(photo)
        _, h, w = img.shape
        for i in range(0, h - size + 1, stride):
            for j in range(0, w - size + 1, stride):
                t = img[:, i : i + size, j : j + size]
                if t.std() >= min_std:
                    yield f"{photo}_{i}_{j}", t.copy()


def split_photos(holdout=("camera", "coins", "moon", "page")):
    """Disjoint photo lists for training and held-out evaluation."""
    train = tuple(p for p in PHOTOS if p not in holdout)
    return train, tuple(holdout)


def write_corpus(out_dir, size=180, stride=90, photos=PHOTOS, limit=None):
    """Write tiles as 8-bit PGM files plus ``manifest.txt``; return the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, t in tiles(size, stride, photos=photos):
        if limit is not None and len(paths) >= limit:
            break
        p = out / f"{name}.pgm"
        write_image(p, t)
        paths.append(p.name)
    manifest = out / "manifest.txt"
    write_manifest(manifest, paths)
    return manifest
