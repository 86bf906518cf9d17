"""ELU vs ReLU residual ASM comparison over the tile corpus, with a sigma sweep.

    python3 scripts/run_asm_bench.py --sigmas 15 25 50 --out runs/asm
"""

import argparse
import time
from pathlib import Path

from etvd import corpus
from etvd.texture import AsmExperimentConfig, asm_experiment, write_asm_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sigmas", type=float, nargs="+", default=[25.0])
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/asm"))
    args = ap.parse_args()

    named = list(corpus.tiles())
    images = [t for _, t in named]
    names = [n for n, _ in named]
    args.out.mkdir(parents=True, exist_ok=True)
    print(f"{len(images)} tiles")
    for sigma in args.sigmas:
        cfg = AsmExperimentConfig(sigma=sigma, alpha=args.alpha, trials_per_image=args.trials, seed=args.seed)
        t0 = time.perf_counter()
        s = asm_experiment(images, cfg, names=names)
        write_asm_csv(args.out / f"asm_sigma{sigma:g}.csv", s)
        print(f"sigma={sigma:g} trials={s.total} elu_lower={s.count_elu_lower} elu_higher={s.count_elu_higher} "
              f"ties={s.ties} fraction={s.fraction:.3f} ({time.perf_counter() - t0:.0f}s)")


if __name__ == "__main__":
    main()
