"""Rigid transforms, RANSAC estimation, and the registration benchmark protocol.

A rigid transform maps p -> R(theta) (p - center) + center + (tx, ty); the
pivot is stored explicitly so serialized transforms are unambiguous.  The
benchmark synthesizes rotated/translated test pairs from a source image,
registers them feature-based (SIFT + RANSAC), and scores the mean corner
displacement against a success threshold.

Direction convention: the ground-truth and estimated transforms map
fixed-image coordinates to moving-image coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import Image, bilinear_sample
from .sift import (
    SiftConfig,
    compute_descriptors,
    detect_keypoints,
    match_descriptors,
)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation by theta (radians) about (cx, cy), then translation (tx, ty)."""

    theta: float
    tx: float
    ty: float
    cx: float = 0.0
    cy: float = 0.0

    def __post_init__(self):
        for name in ("theta", "tx", "ty", "cx", "cy"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def matrix(self) -> np.ndarray:
        """3x3 homogeneous matrix of the point map."""
        r = self.rotation()
        center = np.array([self.cx, self.cy])
        shift = center + np.array([self.tx, self.ty]) - r @ center
        m = np.eye(3)
        m[:2, :2] = r
        m[:2, 2] = shift
        return m

    @classmethod
    def from_matrix(cls, m: np.ndarray, center=(0.0, 0.0)) -> "RigidTransform":
        theta = math.atan2(m[1, 0], m[0, 0])
        c, s = math.cos(theta), math.sin(theta)
        r = np.array([[c, -s], [s, c]])
        cx, cy = center
        cvec = np.array([cx, cy])
        t = m[:2, 2] - cvec + r @ cvec
        return cls(theta, float(t[0]), float(t[1]), float(cx), float(cy))

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        center = np.array([self.cx, self.cy])
        out = (pts - center) @ self.rotation().T + center + np.array([self.tx, self.ty])
        return out[0] if single else out

    def inverse(self) -> "RigidTransform":
        r_inv = self.rotation().T
        t = -(r_inv @ np.array([self.tx, self.ty]))
        return RigidTransform(-self.theta, float(t[0]), float(t[1]), self.cx, self.cy)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self.compose(other))(p) == self(other(p))."""
        return RigidTransform.from_matrix(self.matrix() @ other.matrix(), (self.cx, self.cy))

    def with_center(self, cx: float, cy: float) -> "RigidTransform":
        """Same point map, re-expressed about a different pivot."""
        return RigidTransform.from_matrix(self.matrix(), (cx, cy))

    def to_record(self) -> dict:
        return {
            "theta_rad": float(self.theta),
            "tx": float(self.tx),
            "ty": float(self.ty),
            "cx": float(self.cx),
            "cy": float(self.cy),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "RigidTransform":
        return cls(rec["theta_rad"], rec["tx"], rec["ty"], rec["cx"], rec["cy"])


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 1000
    inlier_threshold_px: float = 5.0
    min_inliers: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not (self.inlier_threshold_px > 0):
            raise ValueError("inlier_threshold_px must be positive")
        if self.min_inliers < 2:
            raise ValueError("min_inliers must be >= 2")


def _procrustes_rigid(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """Rotation angle and translation best mapping point set a onto b (no scale)."""
    ca = a.mean(axis=0)
    cb = b.mean(axis=0)
    da = a - ca
    db = b - cb
    num = float(np.sum(da[:, 0] * db[:, 1] - da[:, 1] * db[:, 0]))
    den = float(np.sum(da[:, 0] * db[:, 0] + da[:, 1] * db[:, 1]))
    theta = math.atan2(num, den)
    c, s = math.cos(theta), math.sin(theta)
    r = np.array([[c, -s], [s, c]])
    t = cb - r @ ca
    return theta, t


def ransac_rigid(
    points_a, points_b, cfg: RansacConfig
) -> tuple[RigidTransform | None, np.ndarray]:
    """Estimate the rigid map a -> b from matched 2-D points.

    Two-point hypotheses (rotation from the angle between the difference
    vectors, translation from the pair centroids) are scored by inlier
    count; the winner is refit on its consensus set by rotation-only
    Procrustes.  Returns (None, empty) when the best consensus is smaller
    than min_inliers.  Deterministic for a fixed seed.
    """
    a = np.asarray(points_a, dtype=np.float64)
    b = np.asarray(points_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 2:
        raise ValueError("points_a and points_b must be matched (n, 2) arrays")
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least 2 matches")

    rng = np.random.default_rng(cfg.seed)
    best_count = 0
    best_inliers = None
    thr2 = cfg.inlier_threshold_px**2
    for _ in range(cfg.iterations):
        i, j = rng.choice(n, size=2, replace=False)
        va = a[j] - a[i]
        vb = b[j] - b[i]
        na = math.hypot(va[0], va[1])
        nb = math.hypot(vb[0], vb[1])
        if na < 1e-12 or nb < 1e-12:
            continue  # coincident sample, no orientation information
        theta = math.atan2(va[0] * vb[1] - va[1] * vb[0], va[0] * vb[0] + va[1] * vb[1])
        c, s = math.cos(theta), math.sin(theta)
        r = np.array([[c, -s], [s, c]])
        t = (b[i] + b[j]) / 2.0 - r @ ((a[i] + a[j]) / 2.0)
        resid = a @ r.T + t - b
        d2 = np.sum(resid * resid, axis=1)
        count = int(np.count_nonzero(d2 <= thr2))
        if count > best_count:
            best_count = count
            best_inliers = np.nonzero(d2 <= thr2)[0]

    if best_inliers is None or best_count < cfg.min_inliers:
        return None, np.empty(0, dtype=int)

    theta, t = _procrustes_rigid(a[best_inliers], b[best_inliers])
    transform = RigidTransform(theta, float(t[0]), float(t[1]), 0.0, 0.0)
    return transform, best_inliers


def image_corners(width: int, height: int) -> np.ndarray:
    """The four pixel-center corners of a W x H image."""
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be positive")
    w, h = width - 1.0, height - 1.0
    return np.array([[0.0, 0.0], [w, 0.0], [0.0, h], [w, h]])


def registration_error(
    estimated: RigidTransform, ground_truth: RigidTransform, width: int, height: int
) -> float:
    """Mean displacement of the four image corners between the two transforms."""
    corners = image_corners(width, height)
    diff = estimated.apply(corners) - ground_truth.apply(corners)
    return float(np.mean(np.linalg.norm(diff, axis=1)))


def registration_success_rate(errors, threshold: float) -> float:
    """Percentage of errors strictly below the threshold (failures are +inf)."""
    errs = np.asarray(errors, dtype=np.float64)
    if errs.size == 0:
        raise ValueError("errors must be non-empty")
    return 100.0 * float(np.count_nonzero(errs < threshold)) / errs.size


def warp_rigid(img: Image, transform: RigidTransform) -> Image:
    """Resample img under the transform: out(p) = img(transform^{-1}(p)).

    Bilinear interpolation; pixels pulled from outside the source support
    (or from masked-out source pixels) are zero and marked invalid.
    """
    h, w = img.shape
    ys, xs = np.mgrid[0:h, 0:w]
    inv = transform.inverse()
    src = inv.apply(np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64))
    values, valid = bilinear_sample(img, src[:, 0], src[:, 1])
    return Image(values.reshape(h, w), valid.reshape(h, w))


def synthesize_test_pair(
    img: Image, max_theta_deg: float, max_translation_px: float, seed: int
) -> tuple[Image, RigidTransform]:
    """Draw a random rotation/translation (seeded) and resample the image.

    theta ~ U(-max, +max) degrees, then tx, ty ~ U(-max, +max) px; rotation
    about the image center.  Returns the moving image (with validity mask)
    and the exact transform used, mapping fixed to moving coordinates.
    """
    rng = np.random.default_rng(seed)
    theta = math.radians(rng.uniform(-max_theta_deg, max_theta_deg)) if max_theta_deg else 0.0
    if max_translation_px:
        tx = rng.uniform(-max_translation_px, max_translation_px)
        ty = rng.uniform(-max_translation_px, max_translation_px)
    else:
        tx = ty = 0.0
    cx, cy = img.center()
    transform = RigidTransform(theta, float(tx), float(ty), cx, cy)
    return warp_rigid(img, transform), transform


@dataclass(frozen=True)
class RegistrationDiagnostics:
    keypoints_fixed: int
    keypoints_moving: int
    described_fixed: int
    described_moving: int
    matches: int
    inliers: int
    failure_stage: str | None = None

    @property
    def success(self) -> bool:
        return self.failure_stage is None


def register_pair(
    fixed: Image,
    moving: Image,
    sift: SiftConfig | None = None,
    ransac: RansacConfig | None = None,
) -> tuple[RigidTransform | None, RegistrationDiagnostics]:
    """Feature-based rigid registration: detect, describe, match, RANSAC.

    Returns the estimated fixed->moving transform (pivot at the fixed image
    center) or None, plus stage diagnostics naming the first empty stage on
    failure.
    """
    sift = sift or SiftConfig()
    ransac = ransac or RansacConfig()

    kps_f = detect_keypoints(fixed, sift)
    kps_m = detect_keypoints(moving, sift)
    counts = dict(
        keypoints_fixed=len(kps_f),
        keypoints_moving=len(kps_m),
        described_fixed=0,
        described_moving=0,
        matches=0,
        inliers=0,
    )
    if not kps_f or not kps_m:
        return None, RegistrationDiagnostics(**counts, failure_stage="keypoints")

    desc_f, kept_f = compute_descriptors(fixed, kps_f, sift)
    desc_m, kept_m = compute_descriptors(moving, kps_m, sift)
    counts["described_fixed"] = len(kept_f)
    counts["described_moving"] = len(kept_m)
    if len(kept_f) == 0 or len(kept_m) == 0:
        return None, RegistrationDiagnostics(**counts, failure_stage="descriptors")

    matches = match_descriptors(desc_f, desc_m, sift.ratio_test_threshold)
    counts["matches"] = len(matches)
    if len(matches) < 2:
        return None, RegistrationDiagnostics(**counts, failure_stage="matches")

    pts_f = np.array([[kps_f[kept_f[i]].x, kps_f[kept_f[i]].y] for i, _ in matches])
    pts_m = np.array([[kps_m[kept_m[j]].x, kps_m[kept_m[j]].y] for _, j in matches])
    transform, inliers = ransac_rigid(pts_f, pts_m, ransac)
    counts["inliers"] = int(inliers.size)
    if transform is None:
        return None, RegistrationDiagnostics(**counts, failure_stage="consensus")

    cx, cy = fixed.center()
    return transform.with_center(cx, cy), RegistrationDiagnostics(**counts)
