"""Desk-scale training run: small network, ~2000 gray 40x40 patches at sigma 25.

Trains on tiles from the training photos, reports held-out patch PSNR from the
holdout photos and writes the checkpoint.

    python3 scripts/toy_train.py --out runs/toy
"""

import argparse
import time
from pathlib import Path

from etvd import corpus
from etvd.data import NoiseSpec, make_pairs
from etvd.network import NetworkConfig, ResidualDenoiser
from etvd.train import TrainConfig, evaluate_pairs, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--blocks", type=int, default=3)
    ap.add_argument("--channels", type=int, default=16)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--switch-epoch", type=int, default=6)
    ap.add_argument("--patches", type=int, default=31 * 64)
    ap.add_argument("--sigma", type=float, default=25.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/toy"))
    args = ap.parse_args()

    train_photos, holdout_photos = corpus.split_photos()
    train_tiles = [t for _, t in corpus.tiles(photos=train_photos)]
    hold_tiles = [t for _, t in corpus.tiles(photos=holdout_photos)]
    pairs = make_pairs(train_tiles, 40, 20, NoiseSpec(sigma=args.sigma, seed=args.seed), seed=args.seed,
                       limit=args.patches)
    held = make_pairs(hold_tiles, 40, 40, NoiseSpec(sigma=args.sigma, seed=args.seed + 100), seed=args.seed,
                      limit=300)
    print(f"train patches={len(pairs)} held-out patches={len(held)}")

    net = ResidualDenoiser(NetworkConfig(blocks=args.blocks, channels=args.channels, seed=args.seed))
    cfg = TrainConfig(epochs=args.epochs, batch_size=64, switch_epoch=args.switch_epoch, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    train(net, pairs, cfg, log=lambda line: line.startswith("epoch") and print(line, flush=True),
          checkpoint=args.out / "model.etvd")
    noisy_db, out_db = evaluate_pairs(net, held)
    print(f"held-out PSNR noisy={noisy_db:.2f} dB denoised={out_db:.2f} dB gain={out_db - noisy_db:+.2f} dB "
          f"({time.perf_counter() - t0:.0f}s)")


if __name__ == "__main__":
    main()
