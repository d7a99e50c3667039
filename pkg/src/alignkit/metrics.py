"""Image similarity and distance measures, and Pearson correlation.

Pixelwise measures (MSE, correlation) and SSIM operate on two equal-size
grayscale images; when validity masks are present they restrict to the
jointly valid region (SSIM windows must be fully valid).  The level-set
distance combines intensity and spatial information through truncated
Euclidean distance transforms.  The Frechet distance compares two feature
populations through their Gaussian statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import NumericalError
from .image import Image, joint_valid_mask


@dataclass(frozen=True)
class SsimConfig:
    """Gaussian sliding-window SSIM parameters.

    c1 = (0.01 L)^2 and c2 = (0.03 L)^2 where L is the dynamic range.
    """

    window_size: int = 11
    gaussian_sigma: float = 1.5
    dynamic_range: float = 1.0

    def __post_init__(self):
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValueError("window_size must be odd and >= 3")
        if not (self.gaussian_sigma > 0):
            raise ValueError("gaussian_sigma must be positive")
        if not (self.dynamic_range > 0):
            raise ValueError("dynamic_range must be positive")

    @property
    def c1(self) -> float:
        return (0.01 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (0.03 * self.dynamic_range) ** 2

    def window(self) -> np.ndarray:
        """Normalized 1-D Gaussian window (outer product gives the 2-D window)."""
        half = self.window_size // 2
        xs = np.arange(-half, half + 1, dtype=np.float64)
        w = np.exp(-(xs**2) / (2.0 * self.gaussian_sigma**2))
        return w / w.sum()


def _joint_pixels(a: Image, b: Image):
    mask = joint_valid_mask(a, b)
    if not mask.any():
        raise ValueError("no jointly valid pixels to compare")
    return a.intensities[mask], b.intensities[mask]


def image_mse(a: Image, b: Image) -> float:
    """Mean squared intensity difference over jointly valid pixels."""
    va, vb = _joint_pixels(a, b)
    d = va - vb
    return float(np.mean(d * d))


def image_correlation(a: Image, b: Image) -> float:
    """Pearson correlation of the two pixel populations; affine-invariant."""
    va, vb = _joint_pixels(a, b)
    da = va - va.mean()
    db = vb - vb.mean()
    na = np.linalg.norm(da)
    nb = np.linalg.norm(db)
    if na == 0.0 or nb == 0.0:
        raise ValueError("correlation undefined: image constant over the valid region")
    return float(np.clip(np.dot(da, db) / (na * nb), -1.0, 1.0))


def image_ssim(a: Image, b: Image, cfg: SsimConfig | None = None) -> float:
    """Mean local structural similarity over fully-interior window positions.

    Local statistics are Gaussian-weighted window moments; the local value
    is ((2 mu_a mu_b + c1)(2 cov_ab + c2)) /
    ((mu_a^2 + mu_b^2 + c1)(var_a + var_b + c2)).  Windows must fit inside
    the image, and with masks must cover only valid pixels.
    """
    cfg = cfg or SsimConfig()
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")
    h, w = a.shape
    if h < cfg.window_size or w < cfg.window_size:
        raise ValueError(f"image {a.shape} smaller than SSIM window {cfg.window_size}")

    win = cfg.window()
    half = cfg.window_size // 2

    def smooth(x):
        y = ndimage.correlate1d(x, win, axis=0, mode="constant")
        y = ndimage.correlate1d(y, win, axis=1, mode="constant")
        return y[half : h - half, half : w - half]

    xa, xb = a.intensities, b.intensities
    mu_a = smooth(xa)
    mu_b = smooth(xb)
    var_a = smooth(xa * xa) - mu_a * mu_a
    var_b = smooth(xb * xb) - mu_b * mu_b
    cov = smooth(xa * xb) - mu_a * mu_b

    c1, c2 = cfg.c1, cfg.c2
    ssim_map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )

    if a.mask is None and b.mask is None:
        return float(ssim_map.mean())
    joint = joint_valid_mask(a, b)
    full = ndimage.minimum_filter(joint, size=cfg.window_size, mode="constant", cval=False)
    full = full[half : h - half, half : w - half]
    if not full.any():
        raise ValueError("no fully valid SSIM window positions")
    return float(ssim_map[full].mean())


def default_truncation(width: int, height: int) -> float:
    """Distance truncation scaled to the image: 40 px at a size of 834 px."""
    return 40.0 * max(width, height) / 834.0


def alpha_amd(
    a: Image,
    b: Image,
    alpha: float | None = None,
    levels: int = 8,
) -> float:
    """Symmetric average minimal distance between intensity level sets.

    Each image is cut into `levels` sets {pixels >= (k + 0.5) / levels}.
    For each cut and direction, every set point's exact Euclidean distance
    to the nearest same-cut point of the other image is truncated at alpha
    and averaged; cuts are weighted uniformly and the two directions
    averaged.  A cut that is empty on exactly one side contributes alpha;
    empty on both sides contributes zero.  Zero iff the quantized images
    (and masks) agree.
    """
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")
    for img, name in ((a, "a"), (b, "b")):
        vals = img.intensities
        if vals.min() < -1e-12 or vals.max() > 1.0 + 1e-12:
            raise ValueError(f"image {name} intensities must lie in [0, 1]")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    h, w = a.shape
    if alpha is None:
        alpha = default_truncation(w, h)
    if not (alpha > 0):
        raise ValueError("alpha must be positive")

    mask = joint_valid_mask(a, b)
    thresholds = (np.arange(levels) + 0.5) / levels

    def directed(src_sets, dst_sets):
        total = 0.0
        for src, dst in zip(src_sets, dst_sets):
            if not src.any():
                total += 0.0 if not dst.any() else alpha
            elif not dst.any():
                total += alpha
            else:
                dist = ndimage.distance_transform_edt(~dst)
                total += float(np.mean(np.minimum(dist[src], alpha)))
        return total / len(src_sets)

    sets_a = [(a.intensities >= t) & mask for t in thresholds]
    sets_b = [(b.intensities >= t) & mask for t in thresholds]
    return 0.5 * (directed(sets_a, sets_b) + directed(sets_b, sets_a))


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(matrix)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("non-finite eigenvalues in covariance square root")
    scale = max(float(vals.max()), 1.0)
    if vals.min() < -1e-10 * scale:
        raise NumericalError(
            f"covariance square root: eigenvalue {vals.min():.3e} below tolerance"
        )
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _feature_stats(features: np.ndarray):
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise ValueError("feature sets need at least 2 rows for covariance estimation")
    if not np.all(np.isfinite(f)):
        raise ValueError("feature set contains non-finite entries")
    mu = f.mean(axis=0)
    cov = np.atleast_2d(np.cov(f, rowvar=False, ddof=1))
    return mu, cov


def frechet_distance(features_a, features_b) -> float:
    """Frechet distance between the Gaussian statistics of two feature sets.

    ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2}),
    with unbiased sample statistics and symmetric-eigendecomposition matrix
    square roots.  The cross trace is evaluated as the nuclear norm of
    S_b^{1/2} S_a^{1/2} (the same quantity) to avoid squaring the spectrum,
    which would cost half the available precision.
    """
    mu_a, cov_a = _feature_stats(features_a)
    mu_b, cov_b = _feature_stats(features_b)
    if mu_a.shape != mu_b.shape:
        raise ValueError("feature dimensionality differs")
    cross = _psd_sqrt(cov_b) @ _psd_sqrt(cov_a)
    singular = np.linalg.svd(cross, compute_uv=False)
    if not np.all(np.isfinite(singular)):
        raise NumericalError("non-finite singular values in covariance cross term")
    diff = mu_a - mu_b
    return float(
        diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * float(singular.sum())
    )


def pixel_features(images) -> np.ndarray:
    """Flatten images into raw-pixel feature rows (self-contained stand-in
    for a learned feature extractor)."""
    rows = [np.asarray(img.intensities, dtype=np.float64).ravel() for img in images]
    arr = np.array(rows)
    if arr.ndim != 2:
        raise ValueError("images must share dimensions")
    return arr


def pcc(x, y) -> float:
    """Pearson correlation coefficient between two equal-length sequences."""
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.ndim != 1 or yv.ndim != 1 or xv.size != yv.size:
        raise ValueError("sequences must be 1-D and of equal length")
    if xv.size < 2:
        raise ValueError("need at least 2 observations")
    dx = xv - xv.mean()
    dy = yv - yv.mean()
    nx = np.linalg.norm(dx)
    ny = np.linalg.norm(dy)
    if nx == 0.0 or ny == 0.0:
        raise ValueError("correlation undefined for a constant sequence")
    return float(np.clip(np.dot(dx, dy) / (nx * ny), -1.0, 1.0))
