"""``lunet`` command line: train, eval, sample, interpolate, diagnose.

Exit codes: 0 ok, 2 config, 3 data, 4 numeric failure, 5 I/O.
"""
from __future__ import annotations

import argparse
import contextlib
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .activation import NoConvergence
from .config import ConfigError, ExperimentConfig, load_config, save_config
from .data import (
    DataError,
    LabeledImages,
    MixtureSpec,
    Pipeline,
    deprocess,
    filter_class,
    gaussian_mixture,
    load_csv,
    load_idx,
    preprocess,
    save_csv,
    synthetic_blobs,
    tile_grid,
    write_pgm,
)
from .diagnostics import condition_report, normality_histogram, projection_normality
from .model import NonFinite, init_net, interpolate, sample
from .train import Diverged, Unit, evaluate_nll, fit, per_sample_nll
from .trilinalg import NearSingularDiagonal

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4, 5
NUMERIC_ERRORS = (Diverged, NearSingularDiagonal, NonFinite, NoConvergence)
CHECKPOINT_NAME = "model.lunet"


@dataclass
class DataBundle:
    vectors: np.ndarray
    correction: np.ndarray | None = None
    images: LabeledImages | None = None

    @property
    def is_image(self) -> bool:
        return self.images is not None


def _limit(images: LabeledImages, limit: int) -> LabeledImages:
    if limit and limit < len(images):
        return LabeledImages(images.images[:limit], images.labels[:limit], images.height, images.width)
    return images


def _image_bundle(images: LabeledImages, pipeline: Pipeline, first_index: int = 0) -> DataBundle:
    pre = preprocess(images, pipeline, first_index=first_index)
    return DataBundle(pre.vectors, pre.logdet_correction, images)


def experiment_data(cfg: ExperimentConfig) -> tuple[DataBundle, DataBundle]:
    """(train, test) bundles described by the [data] section."""
    d = cfg.data
    if d.kind == "mixture":
        train, test = gaussian_mixture(MixtureSpec(d.centers, d.sigma, d.n_total, d.train_fraction, d.seed))
        return DataBundle(train), DataBundle(test)
    pipeline = Pipeline(d.scale_denominator, d.clamp_eps, d.noise_seed)
    if d.kind == "blobs":
        imgs = synthetic_blobs(d.n_train + d.n_test, seed=d.seed)
        train = _limit(imgs, d.n_train)
        test = LabeledImages(imgs.images[d.n_train:], imgs.labels[d.n_train:], imgs.height, imgs.width)
    else:
        train = load_idx(d.train_images, d.train_labels)
        test = load_idx(d.test_images, d.test_labels) if d.test_images else None
        if d.class_id >= 0:
            train = filter_class(train, d.class_id)
            test = filter_class(test, d.class_id) if test is not None else None
        train = _limit(train, d.limit_train)
        test = _limit(test, d.limit_test) if test is not None else train
    return _image_bundle(train, pipeline), _image_bundle(test, pipeline, first_index=len(train))


def _data_from_args(args) -> DataBundle:
    if args.csv:
        return DataBundle(load_csv(args.csv))
    if args.idx_images:
        if not args.idx_labels:
            raise DataError("--idx-images needs --idx-labels")
        imgs = load_idx(args.idx_images, args.idx_labels)
        if args.class_id is not None:
            imgs = filter_class(imgs, args.class_id)
        imgs = _limit(imgs, args.limit or 0)
        return _image_bundle(imgs, Pipeline(noise_seed=args.noise_seed))
    if args.config:
        cfg = load_config(args.config)
        train, test = experiment_data(cfg)
        bundle = train if args.split == "train" else test
        if args.limit:
            bundle = DataBundle(bundle.vectors[:args.limit],
                                None if bundle.correction is None else bundle.correction[:args.limit],
                                None if bundle.images is None else _limit(bundle.images, args.limit))
        return bundle
    raise DataError("no data given: use --csv, --idx-images/--idx-labels, or --config")


def _load_checkpoint(path):
    return checkpoint.load(path)


def _check_dim(net, bundle: DataBundle):
    if bundle.vectors.shape[1] != net.dim:
        raise DataError(f"data dimension {bundle.vectors.shape[1]} does not match checkpoint D = {net.dim}")


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["train.seed"] = str(args.seed)
        overrides["model.seed"] = str(args.seed)
    if args.out:
        overrides["output.run_dir"] = args.out
    cfg = load_config(args.config, overrides)
    train, test = experiment_data(cfg)

    net = init_net(cfg.model.layers, train.vectors.shape[1], cfg.model.seed, cfg.model.init,
                   cfg.model.alpha, cfg.model.sigma_init)
    run_dir = Path(cfg.output.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir / "config.ini")

    with open(run_dir / "metrics.csv", "w") as metrics:
        metrics.write("epoch,lr,train_nll_nats,wallclock_s\n")

        def hook(stats):
            metrics.write(f"{stats.epoch},{stats.lr!r},{stats.train_nll!r},{stats.wallclock:.3f}\n")
            metrics.flush()
            print(f"epoch {stats.epoch:3d}  lr {stats.lr:.4g}  train NLL {stats.train_nll:.4f} nats", flush=True)

        fit(net, train.vectors, cfg.train, hooks=hook)

    checkpoint.save(run_dir / CHECKPOINT_NAME, net, cfg.train.gamma, cfg.model.seed)
    mean, std = evaluate_nll(net, test.vectors)
    print(f"test NLL {mean:.4f} +- {std:.4f} nats")
    if test.is_image:
        bpd, bstd = evaluate_nll(net, test.vectors, Unit.BITS_PER_PIXEL, test.correction)
        raw, rstd = evaluate_nll(net, test.vectors, Unit.BITS_PER_PIXEL)
        print(f"test NLL {bpd:.4f} +- {bstd:.4f} bits/pixel (dequantized pixels), "
              f"{raw:.4f} +- {rstd:.4f} bits/pixel (logit space)")
    if cfg.output.emit_samples:
        xs = sample(net, cfg.output.emit_samples, seed=cfg.train.seed)
        if test.is_image:
            write_pgm(run_dir / "samples.pgm", tile_grid(deprocess(xs), test.images.height, test.images.width),
                      *_grid_shape(cfg.output.emit_samples, test.images))
        else:
            save_csv(run_dir / "samples.csv", xs)
    return EXIT_OK


def _grid_shape(n: int, images: LabeledImages, cols: int = 10) -> tuple[int, int]:
    cols = min(cols, max(n, 1))
    rows = max(1, -(-n // cols))
    return rows * images.height, cols * images.width


def cmd_eval(args) -> int:
    net, _ = _load_checkpoint(args.checkpoint)
    bundle = _data_from_args(args)
    _check_dim(net, bundle)
    out = _out_dir(args, ".")
    nats = per_sample_nll(net, bundle.vectors)
    mean, std = float(nats.mean()), float(nats.std())
    print(f"NLL {mean:.4f} +- {std:.4f} nats  (N = {nats.size})")
    columns = [-nats]
    header = "log_density"
    if args.bits_per_pixel:
        raw = per_sample_nll(net, bundle.vectors, Unit.BITS_PER_PIXEL)
        print(f"NLL {raw.mean():.4f} +- {raw.std():.4f} bits/pixel (logit space)")
        columns.append(raw)
        header += ",bpd_raw"
        if bundle.correction is not None:
            corrected = per_sample_nll(net, bundle.vectors, Unit.BITS_PER_PIXEL, bundle.correction)
            print(f"NLL {corrected.mean():.4f} +- {corrected.std():.4f} bits/pixel (dequantized pixels)")
            columns.append(corrected)
            header += ",bpd_corrected"
    save_csv(out / "log_density.csv", np.column_stack(columns), header)
    return EXIT_OK


def cmd_sample(args) -> int:
    net, _ = _load_checkpoint(args.checkpoint)
    out = _out_dir(args, ".")
    xs = sample(net, args.n, seed=args.seed if args.seed is not None else 0)
    if args.image:
        side = int(round(math.sqrt(net.dim)))
        if side * side != net.dim:
            raise DataError(f"--image needs a square dimension, checkpoint has D = {net.dim}")
        pixels = deprocess(xs)
        for i, img in enumerate(pixels):
            write_pgm(out / f"sample_{i:04d}.pgm", img, side, side)
        if args.n:
            dummy = LabeledImages(pixels[:1], np.zeros(1), side, side)
            write_pgm(out / "samples_grid.pgm", tile_grid(pixels, side, side), *_grid_shape(args.n, dummy))
    else:
        save_csv(out / "samples.csv", xs)
    print(f"wrote {args.n} samples to {out}")
    return EXIT_OK


def cmd_interpolate(args) -> int:
    net, _ = _load_checkpoint(args.checkpoint)
    bundle = _data_from_args(args)
    _check_dim(net, bundle)
    n = bundle.vectors.shape[0]
    for idx in (args.idx_a, args.idx_b):
        if not 0 <= idx < n:
            raise DataError(f"index {idx} out of range for {n} samples")
    path = interpolate(net, bundle.vectors[args.idx_a], bundle.vectors[args.idx_b], args.steps)
    out = _out_dir(args, ".")
    if bundle.is_image:
        h, w = bundle.images.height, bundle.images.width
        for i, frame in enumerate(deprocess(path)):
            write_pgm(out / f"frame_{i:03d}.pgm", frame, h, w)
    else:
        save_csv(out / "interpolation.csv", path)
    print(f"wrote {args.steps} frames to {out}")
    return EXIT_OK


def _seeds(args) -> list[int]:
    if args.seeds:
        return [int(s) for s in args.seeds.split(",") if s.strip()]
    return list(range(args.num_seeds))


def cmd_diagnose(args) -> int:
    net, header = _load_checkpoint(args.checkpoint)
    bundle = _data_from_args(args)
    _check_dim(net, bundle)
    out = _out_dir(args, ".")
    report = condition_report(net, checkpoint_id=str(args.checkpoint))
    save_csv(out / "condition.csv", report.rows(), "layer,kappa_U,kappa_L,singular")
    for c in report.layers:
        flag = "  SINGULAR" if c.singular else ""
        print(f"layer {c.layer}: kappa(U) = {c.kappa_U:.4g}  kappa(L) = {c.kappa_L:.4g}{flag}")

    baseline = _load_checkpoint(args.baseline)[0] if args.baseline else None
    wins = 0
    seeds = _seeds(args)
    for s in seeds:
        test = projection_normality(net, bundle.vectors, seed=s)
        save_csv(out / f"projection_seed{s}.csv", test.values[:, None], "z")
        save_csv(out / f"histogram_seed{s}.csv", normality_histogram(test, args.bins),
                 "bin_center,count,normal_density")
        line = f"seed {s}: KS = {test.ks_statistic:.4f}"
        if baseline is not None:
            base = projection_normality(baseline, bundle.vectors, seed=s)
            wins += test.ks_statistic < base.ks_statistic
            line += f"  baseline KS = {base.ks_statistic:.4f}"
        print(line)
    if baseline is not None:
        print(f"checkpoint KS below baseline for {wins} of {len(seeds)} directions")
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser, config_required: bool = False) -> None:
    p.add_argument("--config", required=config_required, help="experiment config (INI)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--threads", type=int, default=None, help="BLAS thread limit")


def _add_data(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--csv", help="CSV of input vectors, one per row")
    g.add_argument("--idx-images", help="IDX image file (optionally gzip-compressed)")
    g.add_argument("--idx-labels", help="IDX label file")
    g.add_argument("--class-id", type=int, default=None)
    g.add_argument("--noise-seed", type=int, default=0, help="dequantization noise seed")
    g.add_argument("--split", choices=("train", "test"), default="test", help="split when using --config data")
    g.add_argument("--limit", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lunet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a net from a config")
    _add_common(p, config_required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="per-sample log-densities and mean NLL")
    p.add_argument("checkpoint")
    p.add_argument("--bits-per-pixel", action="store_true")
    _add_common(p)
    _add_data(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="draw samples through the inverse net")
    p.add_argument("checkpoint")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--image", action="store_true", help="write PGM images instead of CSV")
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("interpolate", help="decode a straight line between two latents")
    p.add_argument("checkpoint")
    p.add_argument("--idx-a", type=int, required=True)
    p.add_argument("--idx-b", type=int, required=True)
    p.add_argument("--steps", type=int, default=10)
    _add_common(p)
    _add_data(p)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("diagnose", help="condition numbers and projection normality tests")
    p.add_argument("checkpoint")
    p.add_argument("--seeds", default=None, help="comma-separated direction seeds")
    p.add_argument("--num-seeds", type=int, default=10)
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--baseline", default=None, help="checkpoint to compare KS statistics against")
    _add_common(p)
    _add_data(p)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "sample" and args.n < 0:
        parser.error("--n must be non-negative")
    if getattr(args, "command", None) == "interpolate" and args.steps < 2:
        parser.error("--steps must be at least 2")
    limits = contextlib.nullcontext()
    if args.threads:
        from threadpoolctl import threadpool_limits
        limits = threadpool_limits(limits=args.threads)
    try:
        with limits:
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NUMERIC_ERRORS as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (checkpoint.CheckpointError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
