"""Command line: train, denoise, eval, asm-bench, gradcheck.

Exit codes: 0 success, 1 usage error, 2 runtime or numerical failure.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as configmod
from . import gradcheck
from .data import (
    NoiseSpec,
    add_gaussian_noise,
    check_disjoint,
    make_pairs,
    read_image,
    read_manifest,
    to_gray,
    write_image,
)
from .network import ResidualDenoiser, denoise, load_checkpoint
from .tensor import NonFiniteError
from .texture import asm_experiment, psnr, write_asm_csv
from .train import DivergenceError, train

EXIT_USAGE = 1
EXIT_FAILURE = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt_db(v):
    return "inf" if v == float("inf") else f"{v:.4f}"


def _match_channels(img, channels, path):
    if img.shape[0] == channels:
        return img
    if channels == 1 and img.shape[0] == 3:
        return to_gray(img)
    raise UsageError(f"{path}: image has {img.shape[0]} channel(s), model expects {channels}")


def load_run_config(args):
    cfg = configmod.load(args.config) if args.config else configmod.RunConfig()
    if args.seed is not None:
        cfg.reseed(args.seed)
    if args.out is not None:
        configmod.override(cfg, "paths", out=args.out)
    return cfg


def cmd_train(args, out=print):
    cfg = load_run_config(args)
    configmod.override(cfg, "paths", train_manifest=args.train_manifest, eval_manifest=args.eval_manifest,
                       checkpoint=args.checkpoint)
    configmod.override(cfg, "train", epochs=args.epochs, batch_size=args.batch_size,
                       switch_epoch=args.switch_epoch, max_patches=args.max_patches)
    configmod.override(cfg, "network", blocks=args.blocks, channels=args.channels,
                       in_channels=3 if args.color else None)
    configmod.override(cfg, "noise", sigma=args.sigma, mode="randomized" if args.randomized else None)
    p, tc = cfg.paths, cfg.train
    if not p.train_manifest:
        raise UsageError("train needs a training manifest (--train-manifest or [paths] train_manifest)")
    train_paths = read_manifest(p.train_manifest)
    if not train_paths:
        raise UsageError(f"{p.train_manifest}: empty manifest")
    if p.eval_manifest:
        try:
            check_disjoint(train_paths, read_manifest(p.eval_manifest))
        except ValueError as e:
            raise UsageError(str(e)) from None
    outdir = Path(p.out)
    outdir.mkdir(parents=True, exist_ok=True)
    ckpt = Path(p.checkpoint) if p.checkpoint else outdir / "model.etvd"
    (outdir / "config.ini").write_text(configmod.dumps(cfg))

    images = [_match_channels(read_image(path), cfg.network.in_channels, path) for path in train_paths]
    pairs = make_pairs(images, tc.patch_size, tc.stride, cfg.noise, seed=tc.seed, limit=tc.max_patches or None)
    out(f"pairs={len(pairs)} patch={tc.patch_size} batch={tc.batch_size} epochs={tc.epochs}")

    sgd = None
    start = 0
    if args.resume and ckpt.exists():
        net, header, records = load_checkpoint(ckpt)
        sgd = tc.sgd()
        sgd.velocity = {k.split("/", 1)[1]: v.astype(net.dtype) for k, v in records.items()
                        if k.startswith("velocity/")}
        start = header["extra"].get("epoch", -1) + 1
        out(f"resume from epoch {start}")
    else:
        net = ResidualDenoiser(cfg.network)

    log_path = outdir / "train.log"
    with open(log_path, "a") as log_fh:
        def log(line):
            out(line)
            log_fh.write(line + "\n")

        train(net, pairs, tc, log=log, checkpoint=ckpt, sgd=sgd, start_epoch=start)
    out(f"checkpoint={ckpt}")
    return 0


def cmd_denoise(args, out=print):
    net, _, _ = load_checkpoint(args.checkpoint)
    c = net.cfg.in_channels
    img = read_image(args.input)
    if img.shape[0] != c:
        raise UsageError(f"{args.input}: image has {img.shape[0]} channel(s), model expects {c}")
    xhat = denoise(net, img[None])[0]
    write_image(args.output, xhat)
    if args.side_by_side:
        write_image(args.side_by_side, np.concatenate([np.clip(img, 0, 1), xhat], axis=2))
    out(f"wrote {args.output}")
    if args.reference:
        ref = read_image(args.reference)
        # compare in the model's precision so an exact reconstruction reads as inf
        out(f"psnr_input={_fmt_db(psnr(img, ref))} psnr_output={_fmt_db(psnr(xhat, ref.astype(xhat.dtype)))}")
    return 0


def cmd_eval(args, out=print):
    cfg = load_run_config(args)
    net, _, _ = load_checkpoint(args.checkpoint)
    paths = read_manifest(args.manifest)
    if not paths:
        raise UsageError(f"{args.manifest}: empty manifest")
    sigma = cfg.noise.sigma if args.sigma is None else args.sigma
    base = NoiseSpec("fixed", sigma=sigma, seed=cfg.seed)
    rows = []
    out("image\tpsnr_noisy\tpsnr_denoised")
    for i, path in enumerate(paths):
        x = _match_channels(read_image(path), net.cfg.in_channels, path)
        y, _ = add_gaussian_noise(x, base.for_index(i))
        xhat = denoise(net, y[None])[0]
        noisy_db, out_db = psnr(y, x), psnr(xhat, x.astype(xhat.dtype))
        rows.append((noisy_db, out_db))
        out(f"{path}\t{_fmt_db(noisy_db)}\t{_fmt_db(out_db)}")
    mean = np.mean(np.array(rows), axis=0)
    out(f"mean\t{_fmt_db(mean[0])}\t{_fmt_db(mean[1])}")
    return 0


def cmd_asm_bench(args, out=print):
    cfg = load_run_config(args)
    configmod.override(cfg, "asm", trials_per_image=args.trials, sigma=args.sigma, alpha=args.alpha)
    paths = read_manifest(args.manifest)
    if not paths:
        raise UsageError(f"{args.manifest}: empty manifest")
    images = [_match_channels(read_image(p), 1, p) for p in paths]
    summary = asm_experiment(images, cfg.asm, names=[str(p) for p in paths])
    outdir = Path(cfg.paths.out)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "asm_bench.csv"
    write_asm_csv(csv_path, summary)
    out(f"images={len(images)} trials={summary.total} elu_lower={summary.count_elu_lower} "
        f"elu_higher={summary.count_elu_higher} ties={summary.ties} fraction={summary.fraction:.4f}")
    out(f"csv={csv_path}")
    return 0


def cmd_gradcheck(args, out=print):
    results = gradcheck.run(args.scope, seeds=range(args.seeds), corrupt=args.corrupt)
    for r in results:
        out(r.line())
    return 0 if all(r.passed for r in results) else EXIT_FAILURE


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-style run configuration file")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")

    parser = _Parser(prog="etvd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", parents=[common], help="train a denoiser")
    p.add_argument("--train-manifest")
    p.add_argument("--eval-manifest", help="held-out manifest; must not overlap the training one")
    p.add_argument("--checkpoint")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--switch-epoch", type=int)
    p.add_argument("--max-patches", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--color", action="store_true", help="3-channel model")
    p.add_argument("--sigma", type=float)
    p.add_argument("--randomized", action="store_true", help="sigma drawn from [lo, hi] per patch")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", parents=[common], help="denoise one PGM/PPM image")
    p.add_argument("checkpoint")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--reference", help="clean image for PSNR")
    p.add_argument("--side-by-side", help="also write [input | output] here")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("eval", parents=[common], help="mean PSNR over a manifest")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--sigma", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("asm-bench", parents=[common], help="ELU vs ReLU residual ASM comparison")
    p.add_argument("manifest")
    p.add_argument("--trials", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_asm_bench)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    p.add_argument("--scope", choices=["layer", "network", "loss", "all"], default="all")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"etvd: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, NonFiniteError, FloatingPointError) as e:
        print(f"etvd: numerical failure: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except (OSError, ValueError) as e:
        print(f"etvd: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
