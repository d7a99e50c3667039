"""Image similarity measures under increasing distortion.

A textured image is compared against noisier and noisier copies of itself;
pixelwise, structural, level-set and distribution distances all degrade,
each with its own character.

Run:  python3 demos/03_image_metrics.py
"""

import numpy as np

from alignkit import (
    Image,
    alpha_amd,
    frechet_distance,
    image_correlation,
    image_mse,
    image_ssim,
    pcc,
    pixel_features,
    textured_image,
)

rng = np.random.default_rng(2)
reference = textured_image(96, seed=5)

print(f"{'noise':>6s} {'mse':>9s} {'corr':>7s} {'ssim':>7s} {'amd':>7s} {'frechet':>9s}")
rows = []
for noise in (0.0, 0.05, 0.1, 0.2, 0.4):
    corrupted = Image(np.clip(reference.intensities + noise * rng.normal(size=reference.shape), 0, 1))
    # feature sets: rows of the images as raw-pixel features
    fa = pixel_features([Image(r[None, :]) for r in reference.intensities])
    fb = pixel_features([Image(r[None, :]) for r in corrupted.intensities])
    row = (
        noise,
        image_mse(reference, corrupted),
        image_correlation(reference, corrupted),
        image_ssim(reference, corrupted),
        alpha_amd(reference, corrupted, alpha=8.0),
        frechet_distance(fa, fb),
    )
    rows.append(row)
    print(f"{row[0]:6.2f} {row[1]:9.5f} {row[2]:7.4f} {row[3]:7.4f} {row[4]:7.4f} {row[5]:9.5f}")

# correlation between the distortion level and each measure
noise_levels = [r[0] for r in rows]
print("\nPCC of each measure against the injected noise level:")
for idx, name in ((1, "mse"), (2, "correlation"), (3, "ssim"), (4, "alpha_amd"), (5, "frechet")):
    series = [r[idx] for r in rows]
    print(f"  {name:12s} {pcc(noise_levels, series): .3f}")
