"""Synthetic image fixtures for benchmarks and tests."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .image import Image


def textured_image(size: int = 834, seed: int = 0, scales=(2.0, 4.0, 8.0, 16.0)) -> Image:
    """Seeded multi-scale smoothed noise with structure at every scale.

    Band-limited blobs at the given Gaussian scales are summed with equal
    energy, giving a texture rich in localized extrema at all feature
    sizes; intensities are min-max scaled to [0, 1].
    """
    rng = np.random.default_rng(seed)
    acc = np.zeros((size, size))
    for sigma in scales:
        layer = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma)
        std = layer.std()
        if std > 0:
            acc += layer / std
    lo, hi = acc.min(), acc.max()
    if hi == lo:
        return Image(np.full((size, size), 0.5))
    return Image((acc - lo) / (hi - lo))


def gaussian_blob(size: int, cx: float, cy: float, sigma: float, amplitude: float = 1.0):
    """Single isotropic Gaussian bump on a dark background."""
    ys, xs = np.mgrid[0:size, 0:size]
    blob = amplitude * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma**2))
    return Image(np.clip(blob, 0.0, 1.0))
