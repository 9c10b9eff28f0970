"""Natural scene statistics: normalized coefficients and their fit parameters.

The pipeline is: local mean/deviation normalization of a grayscale image
(:func:`compute_mscn`), selection of textured patches on a fixed tile grid
(:func:`select_patches`), then per-patch distribution fits
(:func:`patch_features`).  A patch is summarized by 18 numbers: a symmetric
fit of the coefficients themselves plus asymmetric fits of the four
neighbour-product fields.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .image_io import GrayImage

#: Neighbour-product orientations, in feature order.
ORIENTATIONS = ("horizontal", "vertical", "diag_main", "diag_anti")

#: Fewest samples a distribution fit will accept.
MIN_FIT_SAMPLES = 16

WEIGHTINGS = ("gaussian", "box")


class InsufficientTextureError(ValueError):
    """Raised when an image yields too few textured patches to score."""


@dataclass(frozen=True)
class NssConfig:
    """Feature-extraction settings, stored alongside any fitted model.

    ``threshold`` is the fraction of the sharpest tile's deviation sum a
    tile must exceed to be kept.  With ``multiscale`` set, features are also
    computed on a 2x downsampled image at half the patch size and the
    descriptor doubles to 36 numbers.
    """

    patch: int = 96
    window: int = 7
    threshold: float = 0.75
    weighting: str = "gaussian"
    multiscale: bool = False

    def __post_init__(self):
        if self.patch < 5:
            raise ValueError(f"patch must be >= 5, got {self.patch}")
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 3, got {self.window}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(
                f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}"
            )
        if self.multiscale and self.patch % 2:
            raise ValueError("multiscale extraction needs an even patch size")

    @property
    def dim(self) -> int:
        """Length of the per-patch descriptor."""
        return 36 if self.multiscale else 18


@dataclass(frozen=True)
class GgdParams:
    """Symmetric generalized-Gaussian fit: shape ``alpha``, scale ``beta``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be positive and finite, got {self.beta}")


@dataclass(frozen=True)
class AggdParams:
    """Asymmetric fit: shape ``gamma``, side scales, and the mean term ``eta``."""

    gamma: float
    beta_l: float
    beta_r: float
    eta: float

    def __post_init__(self):
        for name in ("gamma", "beta_l", "beta_r"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not np.isfinite(self.eta):
            raise ValueError(f"eta must be finite, got {self.eta}")


@dataclass(frozen=True)
class PatchFeature18:
    """Fit parameters of one patch, flattening to a fixed 18-slot layout.

    Order: ``[alpha, beta]`` for the coefficients, then ``(gamma, beta_l,
    beta_r, eta)`` for each orientation in :data:`ORIENTATIONS`.
    """

    ggd: GgdParams
    aggd: tuple[AggdParams, AggdParams, AggdParams, AggdParams]

    def as_array(self) -> np.ndarray:
        out = np.empty(18)
        out[0] = self.ggd.alpha
        out[1] = self.ggd.beta
        for i, p in enumerate(self.aggd):
            k = 2 + 4 * i
            out[k] = p.gamma
            out[k + 1] = p.beta_l
            out[k + 2] = p.beta_r
            out[k + 3] = p.eta
        return out

    @classmethod
    def from_array(cls, vec: np.ndarray) -> "PatchFeature18":
        v = np.asarray(vec, dtype=np.float64)
        if v.shape != (18,):
            raise ValueError(f"expected 18 values, got shape {v.shape}")
        ggd = GgdParams(float(v[0]), float(v[1]))
        aggd = tuple(
            AggdParams(float(v[k]), float(v[k + 1]), float(v[k + 2]), float(v[k + 3]))
            for k in range(2, 18, 4)
        )
        return cls(ggd, aggd)


@dataclass(frozen=True, eq=False)
class MscnField:
    """Normalized coefficients of one image plus the local stats behind them."""

    coeff: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    @property
    def height(self) -> int:
        return self.coeff.shape[0]

    @property
    def width(self) -> int:
        return self.coeff.shape[1]


def _weight_kernel(window: int, weighting: str) -> np.ndarray:
    if weighting == "gaussian":
        return kernels.gaussian_kernel(window)
    if weighting == "box":
        return kernels.box_kernel(window)
    raise ValueError(f"weighting must be one of {WEIGHTINGS}, got {weighting!r}")


def compute_mscn(
    img: GrayImage, window: int = 7, weighting: str = "gaussian"
) -> MscnField:
    """Divisively normalize an image by its local mean and deviation.

    Each sample becomes ``(I - mu) / (sigma + 1)`` where ``mu`` and ``sigma``
    are weighted local statistics over an odd square window (mirrored at the
    borders).  A constant image normalizes to all zeros.
    """
    if window > min(img.shape):
        raise ValueError(
            f"window {window} does not fit image of shape {img.shape}"
        )
    k = _weight_kernel(window, weighting)
    mu, sigma = kernels.local_stats(img.data, k)
    coeff = (img.data - mu) / (sigma + 1.0)
    return MscnField(coeff=coeff, mu=mu, sigma=sigma)


def fit_ggd(samples) -> GgdParams:
    """Fit a symmetric generalized Gaussian by moment matching.

    Raises ``ValueError`` for fewer than :data:`MIN_FIT_SAMPLES` values or an
    all-zero sample set; warns when the sample ratio falls off the shape grid
    and the nearest end is used.
    """
    x = np.ascontiguousarray(samples, dtype=np.float64).ravel()
    if x.size < MIN_FIT_SAMPLES:
        raise ValueError(f"need at least {MIN_FIT_SAMPLES} samples, got {x.size}")
    alpha, beta, clamped, status = kernels.ggd_fit(x)
    if status == kernels.FIT_DEGENERATE:
        raise ValueError("cannot fit: all samples are zero")
    if clamped:
        warnings.warn(
            "moment ratio outside the shape grid, clamped to the nearest end",
            RuntimeWarning,
            stacklevel=2,
        )
    return GgdParams(alpha, beta)


def fit_aggd(samples) -> AggdParams:
    """Fit an asymmetric generalized Gaussian by moment matching.

    Needs nonzero samples on both sides of zero; zeros count toward the
    overall moments but toward neither side's deviation.
    """
    x = np.ascontiguousarray(samples, dtype=np.float64).ravel()
    if x.size < MIN_FIT_SAMPLES:
        raise ValueError(f"need at least {MIN_FIT_SAMPLES} samples, got {x.size}")
    g, bl, br, eta, clamped, status = kernels.aggd_fit(x)
    if status != kernels.FIT_OK:
        raise ValueError("cannot fit: need nonzero samples on both sides of zero")
    if clamped:
        warnings.warn(
            "moment ratio outside the shape grid, clamped to the nearest end",
            RuntimeWarning,
            stacklevel=2,
        )
    return AggdParams(g, bl, br, eta)


def tile_sharpness(field: MscnField, patch: int) -> np.ndarray:
    """Per-tile sums of the local deviation map, on the non-overlapping grid."""
    th = field.height // patch
    tw = field.width // patch
    if th == 0 or tw == 0:
        raise ValueError(
            f"patch {patch} does not fit field of shape "
            f"({field.height}, {field.width})"
        )
    s = field.sigma[: th * patch, : tw * patch]
    return s.reshape(th, patch, tw, patch).sum(axis=(1, 3))


def select_patches(
    field: MscnField, patch: int, threshold: float
) -> list[tuple[int, int]]:
    """Pick textured tiles from the non-overlapping patch grid.

    Tiles are ranked by the sum of local deviation inside them; a tile is
    kept when that sum exceeds ``threshold`` times the sharpest tile's.
    Returns the top-left corners of kept tiles in row-major grid order.
    The relative cut is exposure-invariant, and any image with texture keeps
    at least its sharpest tile (for ``threshold <= 1``); a constant image
    keeps nothing and raises :class:`InsufficientTextureError`.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    sharp = tile_sharpness(field, patch)
    cut = threshold * float(sharp.max())
    out = []
    for ti in range(sharp.shape[0]):
        for tj in range(sharp.shape[1]):
            if sharp[ti, tj] > cut:
                out.append((ti * patch, tj * patch))
    if not out:
        raise InsufficientTextureError(
            "insufficient texture: no tile passes the sharpness threshold"
        )
    return out


def patch_features(
    field: MscnField, origin: tuple[int, int], patch: int
) -> PatchFeature18:
    """Fit parameters for the ``patch`` x ``patch`` block at ``origin``.

    ``origin`` is the (row, col) of the top-left corner.  The coefficients
    get the symmetric fit; the four neighbour-product fields (computed by
    slicing, nothing wraps around the block edge) get asymmetric fits.
    """
    r, c = origin
    if r < 0 or c < 0 or r + patch > field.height or c + patch > field.width:
        raise ValueError(
            f"patch at {origin} with size {patch} falls outside field of shape "
            f"({field.height}, {field.width})"
        )
    block = field.coeff[r : r + patch, c : c + patch]
    vec, status = kernels.patch_feature18(block)
    if status == kernels.FIT_DEGENERATE:
        raise ValueError(f"patch at {origin} has all-zero coefficients")
    if status == kernels.FIT_ONE_SIDED:
        raise ValueError(
            f"patch at {origin}: neighbour products all share one sign"
        )
    return PatchFeature18.from_array(vec)


def feature_rows(
    field: MscnField, origins: list[tuple[int, int]], patch: int
) -> np.ndarray:
    """Stack the 18-vectors of the given patches into an (n, 18) matrix."""
    out = np.empty((len(origins), 18))
    for i, (r, c) in enumerate(origins):
        block = field.coeff[r : r + patch, c : c + patch]
        vec, status = kernels.patch_feature18(block)
        if status != kernels.FIT_OK:
            raise InsufficientTextureError(
                f"degenerate coefficient statistics in patch at {(r, c)}"
            )
        out[i] = vec
    return out
