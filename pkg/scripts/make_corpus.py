"""Write the bundled-photo tile corpus as PGM files with train/holdout manifests.

    python3 scripts/make_corpus.py data/
"""

import argparse
from pathlib import Path

from etvd import corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    ap.add_argument("--size", type=int, default=180)
    ap.add_argument("--stride", type=int, default=90)
    args = ap.parse_args()

    train, holdout = corpus.split_photos()
    for name, photos in (("train", train), ("holdout", holdout), ("all", corpus.PHOTOS)):
        manifest = corpus.write_corpus(args.out / name, args.size, args.stride, photos=photos)
        n = sum(1 for line in manifest.read_text().splitlines() if line.strip())
        print(f"{name}: {n} tiles -> {manifest}")


if __name__ == "__main__":
    main()
