"""Per-tile singular value spectra as a sharpness descriptor.

The image is cut into non-overlapping square tiles (remainder rows and
columns dropped) and each tile's singular values are taken in descending
order.  Sharp, high-contrast structure keeps energy in the spectrum tail;
blur collapses it toward the leading values.  The spectra feed either a
direct comparison against a reference image or a learned regressor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image_io import GrayImage


@dataclass(frozen=True, eq=False)
class MsdFeature:
    """Singular-value spectra of one image's tile grid.

    ``per_patch`` has one row per tile (row-major tile order), each a
    descending spectrum of length ``patch``.
    """

    patch: int
    grid: tuple[int, int]
    per_patch: np.ndarray

    def __post_init__(self):
        if self.per_patch.shape != (self.grid[0] * self.grid[1], self.patch):
            raise ValueError(
                f"per_patch shape {self.per_patch.shape} does not match "
                f"grid {self.grid} with patch {self.patch}"
            )

    @property
    def flat(self) -> np.ndarray:
        """All spectra concatenated in tile order."""
        return self.per_patch.ravel()

    @property
    def pooled(self) -> np.ndarray:
        """Mean spectrum over tiles; this is what the regressor consumes."""
        return self.per_patch.mean(axis=0)


def _spectra(data: np.ndarray, patch: int) -> tuple[tuple[int, int], np.ndarray]:
    th = data.shape[0] // patch
    tw = data.shape[1] // patch
    if th == 0 or tw == 0:
        raise ValueError(
            f"patch {patch} does not fit image of shape {data.shape}"
        )
    tiles = (
        data[: th * patch, : tw * patch]
        .reshape(th, patch, tw, patch)
        .swapaxes(1, 2)
        .reshape(th * tw, patch, patch)
    )
    sv = np.linalg.svd(tiles, compute_uv=False)
    return (th, tw), sv


def msd_features(img: GrayImage, patch: int = 32) -> MsdFeature:
    """Tile the image and return each tile's descending singular values."""
    if patch < 2:
        raise ValueError(f"patch must be >= 2, got {patch}")
    grid, sv = _spectra(img.data, patch)
    return MsdFeature(patch=patch, grid=grid, per_patch=sv)


def msd_feature_loss(a: MsdFeature, b: MsdFeature) -> float:
    """Sum of squared spectrum differences over matching tiles."""
    if a.patch != b.patch or a.grid != b.grid:
        raise ValueError(
            f"feature layouts differ: patch {a.patch} grid {a.grid} "
            f"vs patch {b.patch} grid {b.grid}"
        )
    d = a.flat - b.flat
    return float(d @ d)


def tail_mass(feat: MsdFeature, start: int | None = None) -> float:
    """Mean over tiles of the spectrum mass from index ``start`` on.

    Defaults to the upper half of each spectrum.  A handy blur probe: the
    tail shrinks monotonically as an image is smoothed.
    """
    if start is None:
        start = feat.patch // 2
    if not 0 <= start < feat.patch:
        raise ValueError(f"start must be in [0, {feat.patch}), got {start}")
    return float(feat.per_patch[:, start:].sum(axis=1).mean())
