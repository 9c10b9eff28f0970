"""Command-line front end: fit, score, train, probe and debug dumps.

Config precedence is flags > ``PERCEPTIQ_*`` environment variables >
built-in defaults.  Every command prints a run header with the effective
settings so reports are self-describing, and all output is deterministic
for identical inputs, flags and seeds.

Exit codes: 0 success, 1 hard error (bad input or config), 2 partial
success (a report where some per-image rows carry errors).
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

from .forest import ForestParams, forest_train, load_forest, load_training_table, save_forest
from .image_io import list_images, load_gray, save_pgm
from .loss import (
    PRESET_ROWS,
    LossSpecError,
    ProbeAbortedError,
    parse_loss_spec,
    preset_spec,
    probe_descent,
    trace_csv,
)
from .msd import msd_features
from .niqe import (
    NssConfig,
    corpus_features,
    fit_mvg,
    load_model,
    save_model,
)
from .nss import WEIGHTINGS, InsufficientTextureError
from .scoring import batch_report, report_csv, report_json

ENV_PREFIX = "PERCEPTIQ_"


def _env(name: str, cast, fallback):
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None or raw.strip() == "":
        return fallback
    try:
        return cast(raw)
    except ValueError:
        raise ValueError(f"bad value for {ENV_PREFIX}{name}: {raw!r}") from None


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _print_header(command: str, pairs: dict) -> None:
    print(_header_line(command, pairs))


def _header_line(command: str, pairs: dict) -> str:
    body = " ".join(f"{k}={v}" for k, v in pairs.items())
    return f"# perceptiq {command} {body}"


def _write_text(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="perceptiq",
        description="Explicit perceptual quality metrics and a loss-descent probe.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    patch_default = _env("PATCH", int, 96)
    window_default = _env("WINDOW", int, 7)
    threshold_default = _env("THRESHOLD", float, 0.75)
    weighting_default = _env("WEIGHTING", str, "gaussian")
    msd_patch_default = _env("MSD_PATCH", int, 32)
    seed_default = _env("SEED", int, 0)
    workers_default = _env("WORKERS", int, 1)

    p = sub.add_parser(
        "fit-niqe",
        help="fit a natural-image model from a directory of clean images",
        formatter_class=fmt,
    )
    p.add_argument("corpus", help="directory of clean images")
    p.add_argument("--output", required=True, help="model file to write")
    p.add_argument("--patch", type=int, default=patch_default, help="patch side")
    p.add_argument("--window", type=int, default=window_default, help="odd window side")
    p.add_argument(
        "--threshold",
        type=float,
        default=threshold_default,
        help="sharpness threshold as a fraction of the sharpest tile",
    )
    p.add_argument(
        "--weighting", choices=WEIGHTINGS, default=weighting_default,
        help="local-stats window weighting",
    )
    p.add_argument(
        "--multiscale", action="store_true",
        help="add half-scale features (descriptor doubles to 36)",
    )
    p.add_argument("--corpus-note", default="", help="free-form corpus description")
    p.set_defaults(func=cmd_fit_niqe)

    p = sub.add_parser(
        "score",
        help="score a directory of images, optionally against references",
        formatter_class=fmt,
    )
    p.add_argument("images", help="directory of images to score")
    p.add_argument("--model", required=True, help="natural-image model file")
    p.add_argument("--forest", help="forest regressor file (enables ma + perceptual)")
    p.add_argument("--hr", help="directory of reference images (enables rmse + region)")
    p.add_argument("--crop", type=int, default=0, help="pixels to shave per side for rmse")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", help="report file (default: stdout)")
    p.add_argument("--workers", type=int, default=workers_default, help="parallel image workers")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser(
        "train-forest",
        help="train the regressor from a CSV of feature columns plus a target column",
        formatter_class=fmt,
    )
    p.add_argument("table", help="CSV file, last column is the target")
    p.add_argument("--output", required=True, help="forest file to write")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=0, help="0 means unlimited")
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--no-bootstrap", action="store_true", help="train every tree on all rows")
    p.add_argument("--seed", type=int, default=seed_default)
    p.set_defaults(func=cmd_train_forest)

    p = sub.add_parser(
        "probe",
        help="finite-difference descent of a composite loss on a small image",
        formatter_class=fmt,
    )
    p.add_argument("init", help="starting image (at most 64x64)")
    p.add_argument("hr", help="reference image, same size")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument(
        "--spec",
        help="loss as comma-separated term:weight "
        "(terms: mse, niqe, ma-ref, ma-forest)",
    )
    g.add_argument(
        "--preset",
        help=f"named weight preset, combo1..combo{len(PRESET_ROWS)}",
    )
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--step-size", type=float, default=0.1)
    p.add_argument("--fd-epsilon", type=float, default=0.5)
    p.add_argument("--msd-patch", type=int, default=msd_patch_default,
                   help="tile side for the reference spectrum term")
    p.add_argument("--niqe-model", help="natural-image model (needed by the niqe term)")
    p.add_argument("--forest", help="forest file (needed by the ma-forest term)")
    p.add_argument("--output-prefix", default="probe",
                   help="writes <prefix>_trace.csv and <prefix>_final.pgm")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser(
        "msd-features",
        help="dump per-tile singular value spectra of one image as CSV",
        formatter_class=fmt,
    )
    p.add_argument("image")
    p.add_argument("--patch", type=int, default=msd_patch_default, help="tile side")
    p.add_argument("--pooled", action="store_true", help="dump only the mean spectrum")
    p.add_argument("--output", help="CSV file (default: stdout)")
    p.set_defaults(func=cmd_msd_features)

    return parser


def cmd_fit_niqe(args) -> int:
    config = NssConfig(
        patch=args.patch,
        window=args.window,
        threshold=args.threshold,
        weighting=args.weighting,
        multiscale=args.multiscale,
    )
    paths = list_images(args.corpus)
    feats, used, skipped = corpus_features(paths, config)
    if feats.shape[0] < 2:
        raise InsufficientTextureError(
            f"corpus yielded {feats.shape[0]} patch descriptors, need at least 2"
        )
    model = fit_mvg(feats, config, args.corpus_note)
    save_model(model, args.output)
    _print_header(
        "fit-niqe",
        {
            "patch": config.patch,
            "window": config.window,
            "threshold": config.threshold,
            "weighting": config.weighting,
            "multiscale": config.multiscale,
        },
    )
    print(f"images used: {used} (skipped: {skipped})")
    print(f"patches: {feats.shape[0]}")
    print(f"model written: {args.output}")
    return 0


def cmd_score(args) -> int:
    natural = load_model(args.model)
    forest = load_forest(args.forest) if args.forest else None
    rows, aggregate = batch_report(
        args.images,
        natural,
        forest=forest,
        hr_dir=args.hr,
        crop=args.crop,
        workers=args.workers,
    )
    header = {
        "model": args.model,
        "patch": natural.config.patch,
        "window": natural.config.window,
        "threshold": natural.config.threshold,
        "weighting": natural.config.weighting,
        "multiscale": natural.config.multiscale,
        "crop": args.crop,
    }
    if forest is not None:
        header["forest"] = args.forest
        header["msd_patch"] = forest.n_features
    if args.format == "csv":
        text = report_csv(rows, aggregate, [_header_line("score", header)[2:]])
    else:
        text = report_json(rows, aggregate, header)
    _write_text(text, args.output)
    return 2 if aggregate["errors"] else 0


def cmd_train_forest(args) -> int:
    X, y = load_training_table(args.table)
    params = ForestParams(
        n_trees=args.trees,
        max_depth=args.max_depth,
        min_leaf=args.min_leaf,
        bootstrap=not args.no_bootstrap,
        seed=args.seed,
    )
    model = forest_train(X, y, params)
    save_forest(model, args.output)
    _print_header(
        "train-forest",
        {
            "trees": params.n_trees,
            "max_depth": params.max_depth,
            "min_leaf": params.min_leaf,
            "bootstrap": params.bootstrap,
            "seed": params.seed,
        },
    )
    print(f"rows: {model.meta['rows']} features: {model.n_features}")
    print(f"training rmse: {model.meta['train_rmse']!r}")
    print(f"forest written: {args.output}")
    return 0


def cmd_probe(args) -> int:
    if args.spec is not None:
        spec = parse_loss_spec(args.spec)
    else:
        spec = preset_spec(args.preset)
    init = load_gray(args.init)
    hr = load_gray(args.hr)
    natural = load_model(args.niqe_model) if args.niqe_model else None
    forest = load_forest(args.forest) if args.forest else None
    trace_path = f"{args.output_prefix}_trace.csv"
    final_path = f"{args.output_prefix}_final.pgm"
    _print_header(
        "probe",
        {
            "spec": args.spec if args.spec is not None else args.preset,
            "steps": args.steps,
            "step_size": args.step_size,
            "fd_epsilon": args.fd_epsilon,
            "msd_patch": args.msd_patch,
        },
    )
    try:
        trace = probe_descent(
            init,
            hr,
            spec,
            steps=args.steps,
            step_size=args.step_size,
            fd_epsilon=args.fd_epsilon,
            natural=natural,
            forest=forest,
            msd_patch=args.msd_patch,
        )
    except ProbeAbortedError as exc:
        Path(trace_path).write_text(trace_csv(exc.trace), encoding="utf-8")
        save_pgm(exc.trace.final, final_path)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    Path(trace_path).write_text(trace_csv(trace), encoding="utf-8")
    save_pgm(trace.final, final_path)
    print(f"initial total loss: {trace.iterations[0].total!r}")
    print(f"final total loss: {trace.iterations[-1].total!r}")
    return 0


def cmd_msd_features(args) -> int:
    img = load_gray(args.image)
    feat = msd_features(img, args.patch)
    buf = io.StringIO()
    buf.write(_header_line("msd-features", {"patch": feat.patch, "grid": f"{feat.grid[0]}x{feat.grid[1]}"}) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    if args.pooled:
        writer.writerow([f"s{k + 1}" for k in range(feat.patch)])
        writer.writerow([repr(v) for v in feat.pooled.tolist()])
    else:
        writer.writerow(
            ["tile_row", "tile_col"] + [f"s{k + 1}" for k in range(feat.patch)]
        )
        rows, cols = feat.grid
        for t in range(rows * cols):
            writer.writerow(
                [t // cols, t % cols] + [repr(v) for v in feat.per_patch[t].tolist()]
            )
    _write_text(buf.getvalue(), args.output)
    return 0


def main(argv=None) -> int:
    try:
        parser = build_parser()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0
    try:
        return args.func(args)
    except (ValueError, OSError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
