"""Grayscale image container and rigid resampling.

Pixel centers sit at integer coordinates; pixel (x, y) = column x of row y.
The optional mask marks valid pixels (transformed images get invalid
borders).  The geometric image center, used as the default rotation pivot,
is ((W-1)/2, (H-1)/2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Image:
    """2-D intensity grid, nominal range [0, 1], plus optional validity mask."""

    intensities: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        arr = np.asarray(self.intensities, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"intensities must be a non-empty 2-D array, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("intensities contain non-finite values")
        object.__setattr__(self, "intensities", arr)
        if self.mask is not None:
            m = np.asarray(self.mask)
            if m.shape != arr.shape:
                raise ValueError(f"mask shape {m.shape} != image shape {arr.shape}")
            object.__setattr__(self, "mask", m.astype(bool))

    @property
    def height(self) -> int:
        return self.intensities.shape[0]

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.intensities.shape

    def center(self) -> tuple[float, float]:
        """(cx, cy) of the pixel-center grid."""
        return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)

    def valid_mask(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.shape, dtype=bool)
        return self.mask


def joint_valid_mask(a: Image, b: Image) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")
    return a.valid_mask() & b.valid_mask()


def bilinear_sample(img: Image, xs: np.ndarray, ys: np.ndarray):
    """Sample intensities at subpixel points; returns (values, valid).

    Exact at integer coordinates.  A point is valid when it lies inside the
    pixel-center bounding box and every source pixel it interpolates is
    valid under the image mask.
    """
    arr = img.intensities
    h, w = arr.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inside = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)

    x0 = np.clip(np.floor(xs), 0, max(w - 2, 0)).astype(np.intp)
    y0 = np.clip(np.floor(ys), 0, max(h - 2, 0)).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(xs - x0, 0.0, 1.0)
    fy = np.clip(ys - y0, 0.0, 1.0)

    v00 = arr[y0, x0]
    v01 = arr[y0, x1]
    v10 = arr[y1, x0]
    v11 = arr[y1, x1]
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    values = top * (1.0 - fy) + bot * fy

    valid = inside
    if img.mask is not None:
        m = img.mask
        valid = valid & m[y0, x0] & m[y0, x1] & m[y1, x0] & m[y1, x1]
    return np.where(valid, values, 0.0), valid
