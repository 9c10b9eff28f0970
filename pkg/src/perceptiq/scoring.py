"""Combined perceptual score, RMSE region classification, batch reports."""

from __future__ import annotations

import csv
import enum
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .forest import ForestModel, forest_predict
from .image_io import GrayImage, crop_border, list_images, load_gray, rmse
from .msd import msd_features
from .niqe import MvgModel, niqe_score


class Region(enum.IntEnum):
    """RMSE evaluation strata; ordered, with everything past the last bound
    kept distinct rather than folded into region 3."""

    R1 = 1
    R2 = 2
    R3 = 3
    OUT_OF_RANGE = 4

    def __str__(self) -> str:
        if self is Region.OUT_OF_RANGE:
            return "out-of-range"
        return str(int(self))


def region_of(rmse_value: float) -> Region:
    """Classify an RMSE value: <= 11.5 is region 1, <= 12.5 region 2,
    <= 16 region 3, above that out-of-range."""
    if not np.isfinite(rmse_value) or rmse_value < 0:
        raise ValueError(f"rmse must be finite and >= 0, got {rmse_value}")
    if rmse_value <= 11.5:
        return Region.R1
    if rmse_value <= 12.5:
        return Region.R2
    if rmse_value <= 16.0:
        return Region.R3
    return Region.OUT_OF_RANGE


def perceptual_score(ma: float, niqe: float) -> float:
    """((10 - ma) + niqe) / 2; lower means better perceived quality."""
    if not (np.isfinite(ma) and np.isfinite(niqe)):
        raise ValueError(f"scores must be finite, got ma={ma}, niqe={niqe}")
    return ((10.0 - ma) + niqe) / 2.0


def ma_score(img: GrayImage, model: ForestModel, patch: int | None = None) -> float:
    """Regressor prediction on the image's pooled spectrum, clamped to [0, 10].

    The pooled spectrum length must equal the forest's expected feature
    count, so ``patch`` defaults to exactly that.
    """
    if patch is None:
        patch = model.n_features
    pooled = msd_features(img, patch).pooled
    return float(np.clip(forest_predict(model, pooled), 0.0, 10.0))


@dataclass(frozen=True)
class ImageReport:
    """Per-image scoring result; fields stay None when their inputs were
    absent, and ``error`` carries the message when scoring failed."""

    image: str
    niqe: float | None = None
    ma: float | None = None
    perceptual: float | None = None
    rmse: float | None = None
    region: Region | None = None
    error: str | None = None


def _score_one(
    path: Path,
    hr_path: Path | None,
    natural: MvgModel,
    forest: ForestModel | None,
    crop: int,
) -> ImageReport:
    name = path.name
    try:
        img = load_gray(path)
        niqe_v = niqe_score(img, natural)
        ma_v = None
        perceptual = None
        if forest is not None:
            ma_v = ma_score(img, forest)
            perceptual = perceptual_score(ma_v, niqe_v)
        rmse_v = None
        region = None
        if hr_path is not None:
            hr = load_gray(hr_path)
            a = crop_border(img, crop)
            b = crop_border(hr, crop)
            rmse_v = rmse(a, b)
            region = region_of(rmse_v)
        return ImageReport(
            image=name,
            niqe=niqe_v,
            ma=ma_v,
            perceptual=perceptual,
            rmse=rmse_v,
            region=region,
        )
    except (ValueError, OSError) as exc:
        return ImageReport(image=name, error=str(exc))


def _mean_or_none(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def batch_report(
    sr_dir: str | os.PathLike,
    natural: MvgModel,
    forest: ForestModel | None = None,
    hr_dir: str | os.PathLike | None = None,
    crop: int = 0,
    workers: int = 1,
) -> tuple[list[ImageReport], dict]:
    """Score every image in a directory, optionally against references.

    With ``hr_dir`` given, the two directories must hold exactly the same
    filenames; that mismatch is a hard error, while per-image problems (bad
    file, texture too flat, size mismatch) become error rows and the batch
    continues.  Rows are ordered by filename; the aggregate holds means over
    the rows that produced each value.
    """
    sr_files = list_images(sr_dir)
    hr_for: dict[str, Path] = {}
    if hr_dir is not None:
        hr_files = list_images(hr_dir)
        sr_names = [p.name for p in sr_files]
        hr_names = [p.name for p in hr_files]
        if sr_names != hr_names:
            only_sr = sorted(set(sr_names) - set(hr_names))
            only_hr = sorted(set(hr_names) - set(sr_names))
            raise ValueError(
                f"directories do not pair one-to-one: only in sr {only_sr}, "
                f"only in hr {only_hr}"
            )
        hr_for = {p.name: p for p in hr_files}

    def work(path: Path) -> ImageReport:
        return _score_one(path, hr_for.get(path.name), natural, forest, crop)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(work, sr_files))
    else:
        rows = [work(p) for p in sr_files]

    aggregate = {
        "images": len(rows),
        "errors": sum(1 for r in rows if r.error is not None),
        "niqe_mean": _mean_or_none([r.niqe for r in rows if r.niqe is not None]),
        "ma_mean": _mean_or_none([r.ma for r in rows if r.ma is not None]),
        "perceptual_mean": _mean_or_none(
            [r.perceptual for r in rows if r.perceptual is not None]
        ),
        "rmse_mean": _mean_or_none([r.rmse for r in rows if r.rmse is not None]),
    }
    return rows, aggregate


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def report_csv(
    rows: list[ImageReport], aggregate: dict, header_lines: list[str] | None = None
) -> str:
    """Render a report as CSV; full-precision floats, one trailing aggregate
    comment line, and any header lines as leading comments."""
    buf = io.StringIO()
    for line in header_lines or []:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image", "niqe", "ma", "perceptual", "rmse", "region", "error"])
    for r in rows:
        writer.writerow(
            [
                r.image,
                _fmt(r.niqe),
                _fmt(r.ma),
                _fmt(r.perceptual),
                _fmt(r.rmse),
                "" if r.region is None else str(r.region),
                r.error or "",
            ]
        )
    agg = " ".join(f"{k}={_fmt(v) if isinstance(v, float) or v is None else v}"
                   for k, v in aggregate.items())
    buf.write(f"# aggregate {agg}\n")
    return buf.getvalue()


def report_json(
    rows: list[ImageReport], aggregate: dict, header: dict | None = None
) -> str:
    """Render a report as a JSON document equivalent to the CSV form."""
    doc = {
        "config": header or {},
        "images": [
            {
                "image": r.image,
                "niqe": r.niqe,
                "ma": r.ma,
                "perceptual": r.perceptual,
                "rmse": r.rmse,
                "region": None if r.region is None else str(r.region),
                "error": r.error,
            }
            for r in rows
        ],
        "aggregate": aggregate,
    }
    return json.dumps(doc, indent=1) + "\n"
