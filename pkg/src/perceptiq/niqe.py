"""Multivariate-Gaussian quality model over patch features.

A corpus of clean images is summarized by the mean and covariance of its
patch descriptors.  A test image is scored by fitting the same summary to
its own patches and taking a covariance-weighted distance between the two;
larger distances mean statistics further from the corpus, i.e. worse.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import kernels, nss
from .image_io import GrayImage
from .nss import InsufficientTextureError, MscnField, NssConfig

MODEL_FORMAT_VERSION = 1

#: Ridge scale applied to the pooled covariance before solving.
RIDGE_SCALE = 1e-6


class ModelMismatchError(ValueError):
    """Two models were built with different extraction settings."""


@dataclass(frozen=True, eq=False)
class MvgModel:
    """Mean vector and covariance of patch descriptors, plus the settings
    they were extracted with.  ``corpus_note`` is a free-form description of
    the fitting corpus and never participates in compatibility checks."""

    nu: np.ndarray
    sigma: np.ndarray
    config: NssConfig
    corpus_note: str = ""

    def __post_init__(self):
        nu = np.ascontiguousarray(self.nu, dtype=np.float64)
        sigma = np.ascontiguousarray(self.sigma, dtype=np.float64)
        if nu.ndim != 1:
            raise ValueError(f"nu must be 1-d, got shape {nu.shape}")
        if sigma.shape != (nu.size, nu.size):
            raise ValueError(
                f"sigma shape {sigma.shape} does not match nu of length {nu.size}"
            )
        if nu.size != self.config.dim:
            raise ValueError(
                f"descriptor length {nu.size} does not match config dim {self.config.dim}"
            )
        if not (np.isfinite(nu).all() and np.isfinite(sigma).all()):
            raise ValueError("model parameters contain non-finite values")
        if not np.allclose(sigma, sigma.T, atol=1e-9, rtol=0.0):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.nu.size


def _downsample2(a: np.ndarray) -> np.ndarray:
    """2x2 block mean; trailing odd row/column dropped."""
    h = (a.shape[0] // 2) * 2
    w = (a.shape[1] // 2) * 2
    b = a[:h, :w]
    return 0.25 * (b[0::2, 0::2] + b[0::2, 1::2] + b[1::2, 0::2] + b[1::2, 1::2])


def _field_for(data: np.ndarray, config: NssConfig) -> MscnField:
    k = nss._weight_kernel(config.window, config.weighting)
    if config.window > min(data.shape):
        raise ValueError(
            f"window {config.window} does not fit image of shape {data.shape}"
        )
    mu, sigma = kernels.local_stats(data, k)
    coeff = (data - mu) / (sigma + 1.0)
    return MscnField(coeff=coeff, mu=mu, sigma=sigma)


def _features_from_array(data: np.ndarray, config: NssConfig) -> np.ndarray:
    field = _field_for(data, config)
    origins = nss.select_patches(field, config.patch, config.threshold)
    rows = nss.feature_rows(field, origins, config.patch)
    if config.multiscale:
        down = _downsample2(data)
        if config.window > min(down.shape):
            raise ValueError(
                f"window {config.window} does not fit downsampled shape {down.shape}"
            )
        field2 = _field_for(down, config)
        half = config.patch // 2
        origins2 = [(r // 2, c // 2) for r, c in origins]
        rows = np.hstack([rows, nss.feature_rows(field2, origins2, half)])
    return rows


def extract_features(img: GrayImage, config: NssConfig) -> np.ndarray:
    """Descriptor matrix of shape (patches, dim) for one image.

    Patches are chosen by :func:`perceptiq.nss.select_patches` with the
    settings in ``config``; with ``multiscale`` the rows carry the full-scale
    and half-scale descriptors side by side.
    """
    return _features_from_array(img.data, config)


def fit_mvg(
    features, config: NssConfig | None = None, corpus_note: str = ""
) -> MvgModel:
    """Fit the Gaussian summary of a set of patch descriptors.

    ``features`` is an (n, dim) array or a list of
    :class:`perceptiq.nss.PatchFeature18`.  Uses the n-1 normalization, so at
    least two descriptors are required.
    """
    if isinstance(features, np.ndarray):
        f = np.ascontiguousarray(features, dtype=np.float64)
    else:
        items = list(features)
        if items and isinstance(items[0], nss.PatchFeature18):
            f = np.stack([p.as_array() for p in items])
        else:
            f = np.ascontiguousarray(items, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError(f"features must be 2-d, got shape {f.shape}")
    n = f.shape[0]
    if n < 2:
        raise InsufficientTextureError(
            f"need at least 2 patch descriptors to fit, got {n}"
        )
    if config is None:
        config = NssConfig()
    nu = f.mean(axis=0)
    centered = f - nu
    sigma = centered.T @ centered / (n - 1)
    sigma = 0.5 * (sigma + sigma.T)
    return MvgModel(nu=nu, sigma=sigma, config=config, corpus_note=corpus_note)


def mvg_distance(a: MvgModel, b: MvgModel) -> float:
    """Covariance-weighted distance between two fitted models.

    The two covariances are pooled by simple average and stabilized with a
    small ridge (1e-6 of the mean diagonal) before solving; no matrix is ever
    inverted explicitly.  Models fitted with different extraction settings do
    not live in the same feature space, so that is a hard error.
    """
    if a.config != b.config:
        raise ModelMismatchError(
            f"extraction settings differ: {a.config} vs {b.config}"
        )
    d = a.nu - b.nu
    c = 0.5 * (a.sigma + b.sigma)
    dim = a.dim
    lam = RIDGE_SCALE * float(np.trace(c)) / dim
    y = np.linalg.solve(c + lam * np.eye(dim), d)
    q = float(d @ y)
    return float(np.sqrt(q)) if q > 0.0 else 0.0


def corpus_features(
    corpus: Iterable, config: NssConfig
) -> tuple[np.ndarray, int, int]:
    """Pool patch descriptors over a corpus of images or image file paths.

    Images without enough texture are skipped rather than failing the whole
    fit.  Returns ``(features, images_used, images_skipped)``.
    """
    from .image_io import load_gray

    rows = []
    used = 0
    skipped = 0
    for item in corpus:
        img = item if isinstance(item, GrayImage) else load_gray(item)
        try:
            rows.append(extract_features(img, config))
            used += 1
        except InsufficientTextureError:
            skipped += 1
    if not rows:
        raise InsufficientTextureError(
            "insufficient texture: no image in the corpus had textured patches"
        )
    return np.vstack(rows), used, skipped


def fit_natural_model(
    corpus: Iterable,
    config: NssConfig | None = None,
    corpus_note: str = "",
) -> MvgModel:
    """Fit the clean-corpus model from pooled descriptors of every image.

    ``corpus`` is an iterable of :class:`perceptiq.image_io.GrayImage` or
    file paths, processed in the given order (the fit itself is
    order-invariant).
    """
    if config is None:
        config = NssConfig()
    feats, _used, _skipped = corpus_features(corpus, config)
    if feats.shape[0] < 2:
        raise InsufficientTextureError(
            f"corpus yielded {feats.shape[0]} patch descriptors, need at least 2"
        )
    return fit_mvg(feats, config, corpus_note)


def _score_array(data: np.ndarray, natural: MvgModel) -> float:
    feats = _features_from_array(data, natural.config)
    if feats.shape[0] < 2:
        raise InsufficientTextureError(
            f"need at least 2 textured patches to score, found {feats.shape[0]}"
        )
    test = fit_mvg(feats, natural.config)
    return mvg_distance(test, natural)


def niqe_score(img: GrayImage, natural: MvgModel) -> float:
    """Distance of one image's patch statistics from the clean-corpus model.

    Lower is better; the scale is unbounded above.  Extraction runs with the
    settings stored in ``natural``.
    """
    return _score_array(img.data, natural)


def save_model(model: MvgModel, path: str | os.PathLike) -> None:
    """Write a model as JSON (full float precision, row-major covariance)."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "niqe",
        "config": {
            "patch": model.config.patch,
            "window": model.config.window,
            "threshold": model.config.threshold,
            "weighting": model.config.weighting,
            "multiscale": model.config.multiscale,
        },
        "corpus_note": model.corpus_note,
        "dim": model.dim,
        "nu": model.nu.tolist(),
        "sigma": model.sigma.tolist(),
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path: str | os.PathLike) -> MvgModel:
    """Read a model written by :func:`save_model`."""
    with open(path, "r", encoding="ascii") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or doc.get("kind") != "niqe":
        raise ValueError(f"not a quality-model file: {path}")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(
            f"unsupported model format version {doc.get('format_version')!r}: {path}"
        )
    try:
        config = NssConfig(**doc["config"])
        model = MvgModel(
            nu=np.asarray(doc["nu"], dtype=np.float64),
            sigma=np.asarray(doc["sigma"], dtype=np.float64),
            config=config,
            corpus_note=str(doc.get("corpus_note", "")),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed model file: {path}") from exc
    return model
