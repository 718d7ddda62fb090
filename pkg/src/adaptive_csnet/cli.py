"""Command-line entry point: ``adaptive-csnet <command> ...``.

Exit codes: 0 success, 2 usage or parameter error, 3 data/format error,
4 numerical abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import adaptive_cs_net as net
from . import classical_cs, data, metrics, mri_model, training
from .errors import FormatError, NumericalError, ParameterError, PreconditionError
from .prng import derive_key
from .transforms import fft2c

logger = logging.getLogger("adaptive_csnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
METHODS = ("zero-filled", "ista", "fista", "adaptive")


class UsageError(Exception):
    pass


def version_string() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_manifest(path: Path, args: argparse.Namespace, started: float, seeds: dict) -> None:
    flags = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": args.command,
        "flags": flags,
        "seeds": seeds,
        "version": version_string(),
        "started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _volume_mask(size: int, accel: float, center_frac: float | None, seed: int, volume: int):
    return mri_model.make_mask(size, accel, center_frac, seed=derive_key(seed, volume))


def _fmt(v: float) -> str:
    return repr(float(v))


# commands ------------------------------------------------------------------


def cmd_generate(args) -> int:
    started = time.time()
    if args.size not in data.SUPPORTED_SIZES:
        raise ParameterError(f"unsupported --size {args.size}; supported sizes are {', '.join(map(str, data.SUPPORTED_SIZES))}")
    if args.volumes < 1 or args.slices < 1:
        raise ParameterError("--volumes and --slices must be >= 1")
    vols = data.generate_volumes(args.volumes, args.slices, args.size, args.seed)
    data.save_dataset(args.out, vols)
    write_manifest(Path(str(args.out) + ".manifest.json"), args, started, {"seed": args.seed})
    print(f"wrote {len(vols)} volumes to {args.out}")
    return EXIT_OK


def _load_checkpoint(path, theta):
    if not Path(path).is_file():
        raise UsageError(f"checkpoint {path} does not exist")
    cfg, weights = net.load_checkpoint(path)
    if theta is not None:
        cfg = dataclasses.replace(cfg, bg_theta=theta)
    return cfg, weights


def _adaptive_volume(vol, mask, cfg, weights) -> np.ndarray:
    if vol.size % 2**cfg.scales:
        raise net.CheckpointError(f"image size {vol.size} incompatible with a {cfg.scales}-scale network")
    gt = vol.complex_slices()
    recs = []
    for start in range(0, vol.num_slices, 6):
        items = []
        for c in range(start, min(start + 6, vol.num_slices)):
            idx = net.stack_indices(vol.num_slices, c, cfg.slice_neighbors)
            items.append((fft2c(gt[idx]) * mask.sampled, mask))
        recs.append(np.abs(net.reconstruct(net.StackBatch.from_kspace(items), cfg, weights)))
    return np.concatenate(recs)


def cmd_recon(args) -> int:
    started = time.time()
    if args.method == "adaptive" and args.checkpoint is None:
        raise UsageError("--method adaptive requires --checkpoint")
    vols = data.load_dataset(args.input)
    cfg = weights = None
    if args.method == "adaptive":
        cfg, weights = _load_checkpoint(args.checkpoint, args.bg_theta)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    solver = classical_cs.SolverConfig(
        lam=args.lam, max_iters=args.iters, accelerated=args.method == "fista", wavelet_levels=args.wavelet_levels
    )
    recons, rows = [], []
    k = 0
    for v, vol in enumerate(vols):
        mask = _volume_mask(vol.size, args.accel, args.center_frac, args.seed, v)
        gt = vol.complex_slices()
        if args.method == "adaptive":
            mags = _adaptive_volume(vol, mask, cfg, weights)
        else:
            mags = []
            for s in range(vol.num_slices):
                b = mri_model.measure(gt[s], mask)
                if args.method == "zero-filled":
                    rec = mri_model.zero_filled(b)
                else:
                    rec, trace = classical_cs.ista_solve(b, solver)
                    (out_dir / "traces").mkdir(exist_ok=True)
                    classical_cs.write_trace_csv(out_dir / "traces" / f"slice_{k + s:04d}.csv", trace)
                mags.append(np.abs(rec))
            mags = np.stack(mags)
        for s in range(vol.num_slices):
            t = vol.slices[s]
            rows.append((k, metrics.ssim(t, mags[s]), metrics.nmse(t, mags[s]), metrics.psnr(t, mags[s])))
            k += 1
        recons.append(mags)
    np.save(out_dir / "recon.npy", np.concatenate(recons))
    with open(out_dir / "metrics.csv", "w") as fh:
        fh.write("slice,ssim,nmse,psnr\n")
        for r in rows:
            fh.write(f"{r[0]},{_fmt(r[1])},{_fmt(r[2])},{_fmt(r[3])}\n")
    write_manifest(out_dir / "manifest.json", args, started, {"mask_seed": args.seed})
    ssims = np.array([r[1] for r in rows])
    print(f"{args.method}: {len(rows)} slices, mean SSIM {ssims.mean():.4f}")
    return EXIT_OK


def split_volumes(vols, val_fraction: float):
    n_val = int(np.ceil(val_fraction * len(vols))) if val_fraction > 0 else 0
    n_val = min(n_val, len(vols) - 1)
    return vols[: len(vols) - n_val], vols[len(vols) - n_val :]


def cmd_train(args) -> int:
    started = time.time()
    vols = data.load_dataset(args.data)
    if not vols:
        raise FormatError("dataset holds no volumes", 12)
    train_vols, val_vols = split_volumes(vols, args.val_fraction)
    cfg = net.ModelConfig(
        num_blocks=args.blocks,
        base_channels=args.base_channels,
        scales=args.scales,
        slice_neighbors=args.neighbors,
        seed=args.seed,
        bg_theta=args.bg_theta if args.bg_theta is not None else net.DEFAULT_BG_THETA,
    )
    weights, log = training.train(
        train_vols,
        val_vols,
        cfg,
        epochs=args.epochs,
        fine_tune_epochs=args.fine_tune_epochs,
        batch_size=args.batch,
        lr=args.lr,
        lr_decay=args.lr_decay,
        seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net.save_checkpoint(out / "checkpoint.acsnw", cfg, weights)
    training.write_metrics_csv(out / "metrics.csv", log)
    write_manifest(out / "manifest.json", args, started, {"seed": args.seed})
    print(f"trained {len(log)} epochs on {len(train_vols)} volumes; checkpoint in {out}")
    return EXIT_OK


def _mean_std(a) -> str:
    a = np.asarray(a)
    return f"{a.mean():.4f} ± {a.std():.4f}"


def cmd_eval(args) -> int:
    vols = data.load_dataset(args.data)
    cfg, weights = _load_checkpoint(args.checkpoint, args.bg_theta)
    for accel in args.accel:
        ev = training.evaluate(vols, cfg, weights, accel, args.seed)
        print(
            f"accel {accel:g}x  zero-filled SSIM {_mean_std(ev['zf_ssim'])}  NMSE {_mean_std(ev['zf_nmse'])}"
            f"  |  adaptive SSIM {_mean_std(ev['ssim'])}  NMSE {_mean_std(ev['nmse'])}"
        )
        if args.ista:
            tune = data.load_dataset(args.tune_data) if args.tune_data else vols
            lam, _ = training.tune_lambda(tune, accel, args.seed, args.iters)
            ista = training.evaluate_ista(vols, classical_cs.SolverConfig(lam=lam, max_iters=args.iters), accel, args.seed)
            print(f"accel {accel:g}x  ista (lambda={lam:g}) SSIM {_mean_std(ista['ssim'])}  NMSE {_mean_std(ista['nmse'])}")
    return EXIT_OK


def normalize_to_uint8(img: np.ndarray) -> np.ndarray:
    lo, hi = float(img.min()), float(img.max())
    if hi - lo <= 0:
        return np.zeros(img.shape, dtype=np.uint8)
    return np.round((img - lo) / (hi - lo) * 255.0).astype(np.uint8)


def cmd_export_png(args) -> int:
    from PIL import Image

    try:
        arr = np.load(args.input)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read {args.input}: {exc}", 0) from exc
    out = Path(args.out)
    if arr.ndim == 2:
        Image.fromarray(normalize_to_uint8(arr), mode="L").save(out, optimize=False)
        written = 1
    elif arr.ndim == 3:
        out.mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(arr):
            Image.fromarray(normalize_to_uint8(img), mode="L").save(out / f"slice_{i:04d}.png", optimize=False)
        written = arr.shape[0]
    else:
        raise FormatError(f"expected a 2-D or 3-D array, got {arr.ndim} dimensions", 0)
    print(f"wrote {written} PNG image(s) to {out}")
    return EXIT_OK


# parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptive-csnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic phantom dataset")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--volumes", type=int, default=10)
    g.add_argument("--slices", type=int, default=8)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("recon", help="reconstruct every slice of a dataset")
    r.add_argument("--in", dest="input", type=Path, required=True)
    r.add_argument("--method", choices=METHODS, default="zero-filled")
    r.add_argument("--accel", type=float, default=4.0)
    r.add_argument("--center-frac", type=float, default=None, help="default: 0.32 / accel")
    r.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    r.add_argument("--iters", type=int, default=200)
    r.add_argument("--wavelet-levels", type=int, default=3)
    r.add_argument("--checkpoint", type=Path)
    r.add_argument("--bg-theta", type=float, default=None)
    r.add_argument("--seed", type=int, default=0, help="mask seed")
    r.add_argument("--out-dir", type=Path, required=True)
    r.set_defaults(func=cmd_recon)

    t = sub.add_parser("train", help="train the unrolled network")
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--epochs", type=int, default=4)
    t.add_argument("--fine-tune-epochs", type=int, default=2)
    t.add_argument("--blocks", type=int, default=5)
    t.add_argument("--base-channels", type=int, default=16)
    t.add_argument("--scales", type=int, default=2)
    t.add_argument("--neighbors", type=int, default=1)
    t.add_argument("--batch", type=int, default=6)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--lr-decay", type=float, default=0.95)
    t.add_argument("--val-fraction", type=float, default=0.2)
    t.add_argument("--bg-theta", type=float, default=None)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", type=Path, required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint against zero-filled (and ISTA)")
    e.add_argument("--data", type=Path, required=True)
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--accel", type=float, nargs="+", default=[4.0, 8.0])
    e.add_argument("--ista", action="store_true", help="also report the lambda-tuned ISTA baseline")
    e.add_argument("--tune-data", type=Path, help="held-out set for the lambda grid search (default: --data)")
    e.add_argument("--iters", type=int, default=200)
    e.add_argument("--bg-theta", type=float, default=None)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("export-png", help="write 8-bit grayscale PNGs from a .npy array")
    x.add_argument("--in", dest="input", type=Path, required=True)
    x.add_argument("--out", type=Path, required=True)
    x.set_defaults(func=cmd_export_png)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, net.CheckpointError, PreconditionError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
