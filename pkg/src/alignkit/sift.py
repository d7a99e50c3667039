"""Difference-of-Gaussian keypoints, 4x4x8 gradient descriptors, ratio-test matching.

A from-scratch reimplementation of the classic scale-invariant feature
pipeline, organized around an octave range expressed in pixels: only
pyramid levels whose larger dimension falls inside
[octave_min_size, octave_max_size] are searched for extrema.  It is not
bit-compatible with any existing implementation.

Subpixel extremum refinement (3-D quadratic fit) is off by default and can
be enabled per config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# descriptor geometry: 4x4 spatial cells, 8 orientation bins, clamp at 0.2
DESC_CELLS = 4
DESC_BINS = 8
DESC_CLAMP = 0.2
DESC_SCALE_PER_CELL = 3.0

# orientation assignment
ORI_BINS = 36
ORI_SIGMA_FACTOR = 1.5
ORI_RADIUS_FACTOR = 3.0
ORI_PEAK_RATIO = 0.8

# pixels next to the image edge are not considered for extrema
DETECTION_BORDER = 5


@dataclass(frozen=True)
class SiftConfig:
    octave_min_size: int = 128
    octave_max_size: int = 1024
    steps_per_octave: int = 3
    initial_sigma: float = 1.6
    contrast_threshold: float = 0.03
    edge_threshold: float = 10.0
    ratio_test_threshold: float = 0.8
    assumed_blur: float = 0.5
    refine_extrema: bool = False

    def __post_init__(self):
        if self.octave_min_size < 16 or self.octave_max_size < self.octave_min_size:
            raise ValueError("octave size range must satisfy 16 <= min <= max")
        if self.steps_per_octave < 1:
            raise ValueError("steps_per_octave must be >= 1")
        for name in ("initial_sigma", "contrast_threshold", "edge_threshold",
                     "ratio_test_threshold"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Keypoint:
    """Detected feature: subpixel position, scale in pixels, orientation in radians."""

    x: float
    y: float
    scale: float
    orientation: float
    octave: int = 0
    level: float = 1.0

    def __post_init__(self):
        if not (self.scale > 0):
            raise ValueError("scale must be positive")


def _octave_sigmas(cfg: SiftConfig) -> np.ndarray:
    k = 2.0 ** (1.0 / cfg.steps_per_octave)
    return cfg.initial_sigma * k ** np.arange(cfg.steps_per_octave + 3)


def build_pyramid(image, cfg: SiftConfig):
    """Gaussian octave stacks: list of (stack (S+3, h, w), factor to original px)."""
    arr = np.ascontiguousarray(getattr(image, "intensities", image), dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D grayscale image")
    factor = 1.0
    while max(arr.shape) > cfg.octave_max_size:
        arr = ndimage.gaussian_filter(arr, 1.0)[::2, ::2]
        factor *= 2.0
    if cfg.initial_sigma > cfg.assumed_blur:
        arr = ndimage.gaussian_filter(
            arr, math.sqrt(cfg.initial_sigma**2 - cfg.assumed_blur**2)
        )
    sigmas = _octave_sigmas(cfg)
    increments = np.sqrt(sigmas[1:] ** 2 - sigmas[:-1] ** 2)
    octaves = []
    while max(arr.shape) >= cfg.octave_min_size and min(arr.shape) >= 2 * DETECTION_BORDER + 3:
        stack = [arr]
        for inc in increments:
            stack.append(ndimage.gaussian_filter(stack[-1], inc))
        octaves.append((np.stack(stack), factor))
        arr = stack[cfg.steps_per_octave][::2, ::2]
        factor *= 2.0
    return octaves


def _level_gradients(level_img: np.ndarray):
    gy, gx = np.gradient(level_img)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), 2.0 * math.pi)
    return mag, ang


def _refine_candidate(dog, l, y, x, cfg):
    """3-D quadratic fit around a DoG extremum; returns (l, y, x) offsets or None."""
    n_levels, h, w = dog.shape
    for _ in range(5):
        cube = dog[l - 1 : l + 2, y - 1 : y + 2, x - 1 : x + 2]
        g = 0.5 * np.array(
            [
                cube[2, 1, 1] - cube[0, 1, 1],
                cube[1, 2, 1] - cube[1, 0, 1],
                cube[1, 1, 2] - cube[1, 1, 0],
            ]
        )
        hll = cube[2, 1, 1] - 2 * cube[1, 1, 1] + cube[0, 1, 1]
        hyy = cube[1, 2, 1] - 2 * cube[1, 1, 1] + cube[1, 0, 1]
        hxx = cube[1, 1, 2] - 2 * cube[1, 1, 1] + cube[1, 1, 0]
        hly = 0.25 * (cube[2, 2, 1] - cube[2, 0, 1] - cube[0, 2, 1] + cube[0, 0, 1])
        hlx = 0.25 * (cube[2, 1, 2] - cube[2, 1, 0] - cube[0, 1, 2] + cube[0, 1, 0])
        hyx = 0.25 * (cube[1, 2, 2] - cube[1, 2, 0] - cube[1, 0, 2] + cube[1, 0, 0])
        hess = np.array([[hll, hly, hlx], [hly, hyy, hyx], [hlx, hyx, hxx]])
        try:
            offset = -np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            return None
        if np.all(np.abs(offset) < 0.5):
            value = cube[1, 1, 1] + 0.5 * float(g @ offset)
            if abs(value) < cfg.contrast_threshold:
                return None
            return float(offset[0]), float(offset[1]), float(offset[2])
        l += int(round(offset[0]))
        y += int(round(offset[1]))
        x += int(round(offset[2]))
        if (
            l < 1
            or l > n_levels - 2
            or y < DETECTION_BORDER
            or y >= h - DETECTION_BORDER
            or x < DETECTION_BORDER
            or x >= w - DETECTION_BORDER
        ):
            return None
    return None


def _orientation_histogram(mag, ang, x, y, sigma):
    h, w = mag.shape
    radius = int(round(ORI_RADIUS_FACTOR * ORI_SIGMA_FACTOR * sigma))
    xi, yi = int(round(x)), int(round(y))
    x0, x1 = max(xi - radius, 0), min(xi + radius, w - 1)
    y0, y1 = max(yi - radius, 0), min(yi + radius, h - 1)
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    d2 = (xs - x) ** 2 + (ys - y) ** 2
    weights = np.exp(-d2 / (2.0 * (ORI_SIGMA_FACTOR * sigma) ** 2))
    window_mag = mag[y0 : y1 + 1, x0 : x1 + 1]
    window_ang = ang[y0 : y1 + 1, x0 : x1 + 1]
    bins = np.floor(window_ang * (ORI_BINS / (2.0 * math.pi))).astype(int) % ORI_BINS
    hist = np.bincount(bins.ravel(), weights=(weights * window_mag).ravel(), minlength=ORI_BINS)
    for _ in range(2):
        hist = (np.roll(hist, 1) + 2.0 * hist + np.roll(hist, -1)) / 4.0
    return hist


def _dominant_orientations(hist):
    peak = hist.max()
    if peak <= 0:
        return []
    left = np.roll(hist, 1)
    right = np.roll(hist, -1)
    angles = []
    for b in np.nonzero((hist >= ORI_PEAK_RATIO * peak) & (hist > left) & (hist > right))[0]:
        denom = left[b] - 2.0 * hist[b] + right[b]
        offset = 0.5 * (left[b] - right[b]) / denom if denom != 0 else 0.0
        angles.append(((b + offset + 0.5) * (2.0 * math.pi / ORI_BINS)) % (2.0 * math.pi))
    return angles


def detect_keypoints(image, cfg: SiftConfig | None = None) -> list[Keypoint]:
    """DoG extrema over the configured octave range, with orientations.

    Constant or structureless images yield an empty list.  Deterministic.
    """
    cfg = cfg or SiftConfig()
    sigmas = _octave_sigmas(cfg)
    n_interior = cfg.steps_per_octave
    keypoints: list[Keypoint] = []
    for octave_index, (stack, factor) in enumerate(build_pyramid(image, cfg)):
        dog = stack[1:] - stack[:-1]
        dmax = ndimage.maximum_filter(dog, size=3)
        dmin = ndimage.minimum_filter(dog, size=3)
        cand = ((dog >= dmax) & (dog > cfg.contrast_threshold)) | (
            (dog <= dmin) & (dog < -cfg.contrast_threshold)
        )
        cand[0] = False
        cand[n_interior + 1 :] = False
        b = DETECTION_BORDER
        cand[:, :b, :] = False
        cand[:, -b:, :] = False
        cand[:, :, :b] = False
        cand[:, :, -b:] = False
        ls, ys, xs = np.nonzero(cand)
        if ls.size == 0:
            continue

        center = dog[ls, ys, xs]
        dxx = dog[ls, ys, xs + 1] + dog[ls, ys, xs - 1] - 2.0 * center
        dyy = dog[ls, ys + 1, xs] + dog[ls, ys - 1, xs] - 2.0 * center
        dxy = 0.25 * (
            dog[ls, ys + 1, xs + 1]
            - dog[ls, ys + 1, xs - 1]
            - dog[ls, ys - 1, xs + 1]
            + dog[ls, ys - 1, xs - 1]
        )
        tr = dxx + dyy
        det = dxx * dyy - dxy * dxy
        r = cfg.edge_threshold
        keep = (det > 0) & (tr * tr * r < det * (r + 1.0) ** 2)

        gradients = {}
        for l, y, x in zip(ls[keep], ys[keep], xs[keep]):
            dl = dy = dx = 0.0
            if cfg.refine_extrema:
                refined = _refine_candidate(dog, int(l), int(y), int(x), cfg)
                if refined is None:
                    continue
                dl, dy, dx = refined
            level = int(l)
            if level not in gradients:
                gradients[level] = _level_gradients(stack[level])
            mag, ang = gradients[level]
            sigma = float(cfg.initial_sigma * 2.0 ** ((l + dl) / cfg.steps_per_octave))
            px, py = x + dx, y + dy
            for angle in _dominant_orientations(
                _orientation_histogram(mag, ang, px, py, sigma)
            ):
                keypoints.append(
                    Keypoint(
                        x=px * factor,
                        y=py * factor,
                        scale=sigma * factor,
                        orientation=angle,
                        octave=octave_index,
                        level=float(l + dl),
                    )
                )
    return keypoints


def _descriptor_offsets(radius: int, cache={}):
    if radius not in cache:
        dy, dx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
        cache[radius] = (dy.ravel(), dx.ravel())
    return cache[radius]


def _describe_one(mag, ang, x, y, sigma, theta):
    h, w = mag.shape
    hist_width = DESC_SCALE_PER_CELL * sigma
    radius = int(round(hist_width * (DESC_CELLS + 1) * math.sqrt(2) / 2.0))
    xi, yi = int(round(x)), int(round(y))
    if xi - radius < 0 or xi + radius >= w or yi - radius < 0 or yi + radius >= h:
        return None  # support leaves the image
    dy, dx = _descriptor_offsets(radius)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    xr = (cos_t * dx + sin_t * dy) / hist_width
    yr = (-sin_t * dx + cos_t * dy) / hist_width
    rbin = yr + 0.5 * DESC_CELLS - 0.5
    cbin = xr + 0.5 * DESC_CELLS - 0.5
    keep = (rbin > -1.0) & (rbin < DESC_CELLS) & (cbin > -1.0) & (cbin < DESC_CELLS)
    if not np.any(keep):
        return None
    rbin, cbin = rbin[keep], cbin[keep]
    rows = yi + dy[keep]
    cols = xi + dx[keep]
    weight = (
        np.exp(-(xr[keep] ** 2 + yr[keep] ** 2) / (2.0 * (0.5 * DESC_CELLS) ** 2))
        * mag[rows, cols]
    )
    obin = np.mod(ang[rows, cols] - theta, 2.0 * math.pi) * (DESC_BINS / (2.0 * math.pi))

    r0 = np.floor(rbin).astype(int)
    c0 = np.floor(cbin).astype(int)
    o0 = np.floor(obin).astype(int)
    fr = rbin - r0
    fc = cbin - c0
    fo = obin - o0
    hist = np.zeros(DESC_CELLS * DESC_CELLS * DESC_BINS)
    for dr in (0, 1):
        rr = r0 + dr
        wr = weight * (fr if dr else 1.0 - fr)
        row_ok = (rr >= 0) & (rr < DESC_CELLS)
        for dc in (0, 1):
            cc = c0 + dc
            wc = wr * (fc if dc else 1.0 - fc)
            ok = row_ok & (cc >= 0) & (cc < DESC_CELLS)
            if not np.any(ok):
                continue
            base = (rr[ok] * DESC_CELLS + cc[ok]) * DESC_BINS
            for do in (0, 1):
                oo = (o0[ok] + do) % DESC_BINS
                wo = wc[ok] * (fo[ok] if do else 1.0 - fo[ok])
                hist += np.bincount(base + oo, weights=wo, minlength=hist.size)
    return hist


def _finalize_descriptor(vec):
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return None, None
    vec = np.minimum(vec / norm, DESC_CLAMP)
    prenorm = vec.copy()
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return None, None
    return vec / norm, prenorm


def compute_descriptors(
    image,
    keypoints,
    cfg: SiftConfig | None = None,
    return_prenorm: bool = False,
):
    """128-D descriptors for keypoints; returns (descriptors, kept_indices).

    Keypoints whose descriptor support extends outside the image (or whose
    support has no gradient energy) are skipped; kept_indices maps each
    descriptor row back to its keypoint.  With return_prenorm=True a third
    array holds clamped, not-yet-renormalized vectors.
    """
    cfg = cfg or SiftConfig()
    octaves = build_pyramid(image, cfg)
    gradients = {}
    rows = []
    prenorms = []
    kept = []
    for idx, kp in enumerate(keypoints):
        oi = kp.octave
        if oi < 0 or oi >= len(octaves):
            continue
        stack, factor = octaves[oi]
        level = int(round(kp.level))
        level = max(1, min(level, stack.shape[0] - 2))
        key = (oi, level)
        if key not in gradients:
            gradients[key] = _level_gradients(stack[level])
        mag, ang = gradients[key]
        vec = _describe_one(
            mag, ang, kp.x / factor, kp.y / factor, kp.scale / factor, kp.orientation
        )
        if vec is None:
            continue
        desc, prenorm = _finalize_descriptor(vec)
        if desc is None:
            continue
        rows.append(desc)
        prenorms.append(prenorm)
        kept.append(idx)
    n_dims = DESC_CELLS * DESC_CELLS * DESC_BINS
    descriptors = np.array(rows) if rows else np.empty((0, n_dims))
    kept_arr = np.array(kept, dtype=int)
    if return_prenorm:
        pre = np.array(prenorms) if prenorms else np.empty((0, n_dims))
        return descriptors, kept_arr, pre
    return descriptors, kept_arr


def match_descriptors(desc_a, desc_b, ratio: float = 0.8, block_size: int = 1024):
    """Nearest-neighbor matches from desc_a into desc_b under Lowe's ratio test.

    A row of desc_a keeps its nearest neighbor iff d1 < ratio * d2 (second
    nearest); with a single candidate in desc_b the nearest is kept
    unconditionally.  Ties break to the lower index.  Returns an (m, 2)
    int array of (index_a, index_b).
    """
    a = np.asarray(desc_a, dtype=np.float64)
    b = np.asarray(desc_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("descriptor sets must be non-empty 2-D arrays")
    if a.shape[1] != b.shape[1]:
        raise ValueError("descriptor dimensionality differs")

    sq_b = np.sum(b * b, axis=1)
    pairs = []
    for start in range(0, a.shape[0], block_size):
        blk = a[start : start + block_size]
        d2 = np.sum(blk * blk, axis=1)[:, None] + sq_b[None, :] - 2.0 * (blk @ b.T)
        np.maximum(d2, 0.0, out=d2)
        j1 = np.argmin(d2, axis=1)
        rows = np.arange(blk.shape[0])
        d1 = d2[rows, j1]
        if b.shape[0] == 1:
            keep = np.ones(blk.shape[0], dtype=bool)
        else:
            d2_masked = d2.copy()
            d2_masked[rows, j1] = np.inf
            dsecond = d2_masked.min(axis=1)
            keep = np.sqrt(d1) < ratio * np.sqrt(dsecond)
        for i in np.nonzero(keep)[0]:
            pairs.append((start + int(i), int(j1[i])))
    return np.array(pairs, dtype=int) if pairs else np.empty((0, 2), dtype=int)
