"""Feature-based rigid registration on synthesized test pairs.

One textured image is randomly rotated/translated; the pipeline (keypoints,
descriptors, ratio-test matching, RANSAC, Procrustes refit) recovers the
transform, scored by mean corner displacement.

Run:  python3 demos/04_rigid_registration.py
"""

import numpy as np

from alignkit import (
    RansacConfig,
    SiftConfig,
    register_pair,
    registration_error,
    registration_success_rate,
    synthesize_test_pair,
    textured_image,
)

fixed = textured_image(256, seed=0)
sift = SiftConfig(octave_min_size=48, octave_max_size=512)
ransac = RansacConfig(iterations=1000, inlier_threshold_px=5.0, seed=0)

# --- 1. a single pair, end to end ------------------------------------------
moving, truth = synthesize_test_pair(fixed, max_theta_deg=25.0, max_translation_px=30.0, seed=3)
estimate, diag = register_pair(fixed, moving, sift, ransac)
print("single pair:")
print(f"  truth     theta={np.degrees(truth.theta):7.3f} deg  t=({truth.tx:7.2f}, {truth.ty:7.2f})")
print(f"  estimate  theta={np.degrees(estimate.theta):7.3f} deg  "
      f"t=({estimate.tx:7.2f}, {estimate.ty:7.2f})")
print(f"  keypoints {diag.keypoints_fixed}/{diag.keypoints_moving}, "
      f"matches {diag.matches}, inliers {diag.inliers}")
print(f"  corner error: {registration_error(estimate, truth, fixed.width, fixed.height):.3f} px")

# --- 2. a small benchmark over 12 seeded pairs ------------------------------
errors = []
for seed in range(12):
    moving, truth = synthesize_test_pair(fixed, 25.0, 30.0, seed=seed)
    estimate, diag = register_pair(fixed, moving, sift, ransac)
    err = (registration_error(estimate, truth, fixed.width, fixed.height)
           if estimate else float("inf"))
    errors.append(err)
    print(f"  pair {seed:2d}: error {err:8.3f} px  (inliers {diag.inliers})")

for threshold in (30.0, 5.0, 1.0):
    rsr = registration_success_rate(errors, threshold)
    print(f"success rate at {threshold:5.1f} px: {rsr:6.2f}%")
print(f"median error: {np.median(errors):.3f} px")
