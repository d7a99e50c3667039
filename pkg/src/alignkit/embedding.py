"""Embedding-space forensics: pairwise dissimilarities, metric MDS under a
Sammon stress criterion, and singular-value spectra of embedding covariance
for dimensional-collapse detection.

The MDS objective is Stress = (1 / sum_{i<j} d_ij) *
sum_{i<j} (d_ij - dbar_ij)^2 / d_ij, where d are target dissimilarities and
dbar the Euclidean distances of the 2-D points; the 1/d weight emphasizes
small distances.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .contrastive import EmbeddingSet
from .errors import NumericalError
from .image import Image

ZERO_WEIGHT_SCALE = 1e-6  # replaces the 1/d weight denominator for d == 0


@dataclass(frozen=True)
class PooledLabels:
    """Bookkeeping for pooled two-modality populations (plot annotations)."""

    modality: list[str]
    pair_id: list[int]


@dataclass(frozen=True)
class MdsSolution:
    points: np.ndarray
    final_stress: float
    iterations_used: int
    stress_history: np.ndarray


@dataclass(frozen=True)
class SvSpectrum:
    """Singular values of an embedding covariance matrix, sorted nonincreasing."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("spectrum must be a non-empty 1-D sequence")
        if np.any(vals < 0) or np.any(np.diff(vals) > 0):
            raise ValueError("spectrum values must be nonnegative and nonincreasing")
        object.__setattr__(self, "values", vals)


def _item_rows(items) -> tuple[np.ndarray, str]:
    if isinstance(items, EmbeddingSet):
        return items.data, items.modality
    if isinstance(items, np.ndarray):
        if items.ndim != 2:
            raise ValueError("expected an (n, d) array of item rows")
        return np.asarray(items, dtype=np.float64), "A"
    rows = []
    for it in items:
        if not isinstance(it, Image):
            raise ValueError("sequence items must be Image instances")
        rows.append(it.intensities.ravel())
    if not rows:
        raise ValueError("empty item sequence")
    return np.array(rows), "A"


def dissimilarity_matrix(
    set_a, set_b=None, metric: str = "mse"
) -> tuple[np.ndarray, PooledLabels]:
    """Pairwise dissimilarities over the pooled items of one or two sets.

    metric="mse" is the mean squared difference per dimension/pixel,
    metric="euclidean" the plain L2 distance.  With two sets the items are
    pooled (modality labels retained, row i of each set shares pair id i).
    """
    rows_a, mod_a = _item_rows(set_a)
    if set_b is not None:
        rows_b, mod_b = _item_rows(set_b)
        if rows_b.shape[1] != rows_a.shape[1]:
            raise ValueError("item dimensionality differs between the two sets")
        if rows_b.shape[0] != rows_a.shape[0]:
            raise ValueError("paired sets must have equal item counts")
        if mod_b == mod_a:
            mod_a, mod_b = "A", "B"
        pooled = np.vstack([rows_a, rows_b])
        labels = PooledLabels(
            modality=[mod_a] * rows_a.shape[0] + [mod_b] * rows_b.shape[0],
            pair_id=list(range(rows_a.shape[0])) * 2,
        )
    else:
        pooled = rows_a
        labels = PooledLabels(
            modality=[mod_a] * rows_a.shape[0], pair_id=list(range(rows_a.shape[0]))
        )

    if metric == "mse":
        delta = cdist(pooled, pooled, "sqeuclidean") / pooled.shape[1]
    elif metric == "euclidean":
        delta = cdist(pooled, pooled, "euclidean")
    else:
        raise ValueError(f"unknown metric {metric!r}")
    np.fill_diagonal(delta, 0.0)
    return delta, labels


def _check_delta(delta: np.ndarray) -> np.ndarray:
    d = np.asarray(delta, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("dissimilarity matrix must be square")
    if not np.all(np.isfinite(d)):
        raise ValueError("dissimilarity matrix contains non-finite entries")
    if np.any(np.abs(np.diag(d)) > 0):
        raise ValueError("dissimilarity matrix must have a zero diagonal")
    if np.any(d < 0):
        raise ValueError("dissimilarities must be nonnegative")
    if not np.allclose(d, d.T, rtol=0, atol=1e-12):
        raise ValueError("dissimilarity matrix must be symmetric")
    return d


def _condensed_targets(delta: np.ndarray):
    """Upper-triangle targets, their normalizer, and zero-weight substitutes."""
    n = delta.shape[0]
    if n < 2:
        raise ValueError("need at least 2 items")
    iu = np.triu_indices(n, 1)
    d = delta[iu]
    total = float(d.sum())
    if total <= 0:
        raise ValueError("all dissimilarities are zero; stress is undefined")
    weights_den = d.copy()
    zero = d == 0
    if zero.any():
        warnings.warn(
            f"{int(zero.sum())} zero dissimilarities; weighting them by "
            f"{ZERO_WEIGHT_SCALE:g} * mean",
            stacklevel=3,
        )
        weights_den[zero] = ZERO_WEIGHT_SCALE * float(d.mean())
    return iu, d, weights_den, total


def sammon_stress(delta: np.ndarray, points: np.ndarray) -> float:
    """Weighted residual between target dissimilarities and 2-D distances."""
    d = _check_delta(delta)
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape != (d.shape[0], 2):
        raise ValueError(f"points must be ({d.shape[0]}, 2)")
    _, targets, weights_den, total = _condensed_targets(d)
    dbar = pdist(pts)
    resid = targets - dbar
    return float(np.sum(resid * resid / weights_den) / total)


def sammon_gradient(
    delta: np.ndarray, points: np.ndarray, diagnostics: dict | None = None
) -> np.ndarray:
    """Exact gradient of :func:`sammon_stress` wrt every 2-D coordinate.

    Pairs with coincident points but nonzero target dissimilarity have an
    undefined direction; their contribution is set to zero and counted in
    diagnostics["coincident_pairs"] when a dict is supplied.
    """
    d = _check_delta(delta)
    pts = np.asarray(points, dtype=np.float64)
    n = d.shape[0]
    if pts.shape != (n, 2):
        raise ValueError(f"points must be ({n}, 2)")
    iu, targets, weights_den, total = _condensed_targets(d)

    dbar_c = pdist(pts)
    coincident = dbar_c == 0
    n_coincident = int(np.count_nonzero(coincident & (targets > 0)))
    if diagnostics is not None:
        diagnostics["coincident_pairs"] = n_coincident

    # coefficient on (x_i - x_j): -2 (d - dbar) / (w_den * dbar * total)
    safe_dbar = np.where(coincident, 1.0, dbar_c)
    coeff_c = np.where(
        coincident, 0.0, -2.0 * (targets - dbar_c) / (weights_den * safe_dbar * total)
    )
    coeff = squareform(coeff_c)
    row_sums = coeff.sum(axis=1)
    return pts * row_sums[:, None] - coeff @ pts


def _classical_init(delta: np.ndarray) -> np.ndarray:
    n = delta.shape[0]
    sq = delta * delta
    j = np.eye(n) - np.full((n, n), 1.0 / n)
    b = -0.5 * j @ sq @ j
    vals, vecs = np.linalg.eigh((b + b.T) / 2.0)
    order = np.argsort(vals)[::-1][:2]
    top = np.clip(vals[order], 0.0, None)
    return vecs[:, order] * np.sqrt(top)


def mds_fit(
    delta: np.ndarray,
    max_iters: int = 2000,
    tol: float = 1e-9,
    seed: int = 0,
    init: str = "classical",
) -> MdsSolution:
    """Gradient descent on the Sammon stress with backtracking step control.

    The step is halved until a candidate does not increase the stress and
    grown by 1.05 after each accepted move; rejected steps are not
    recorded, so the stress history is nonincreasing by construction.
    Stops on max_iters, relative stress change below tol, or a vanishing
    step.
    """
    d = _check_delta(delta)
    n = d.shape[0]
    if init == "classical":
        points = _classical_init(d)
    elif init == "random":
        rng = np.random.default_rng(seed)
        iu = np.triu_indices(n, 1)
        scale = float(d[iu].mean()) or 1.0
        points = rng.standard_normal((n, 2)) * scale
    else:
        raise ValueError(f"unknown init {init!r}")

    stress = sammon_stress(d, points)
    if not np.isfinite(stress):
        raise NumericalError("initial stress is non-finite")
    history = [stress]
    step = 1.0
    iterations = 0
    for _ in range(max_iters):
        grad = sammon_gradient(d, points)
        if not np.all(np.isfinite(grad)):
            raise NumericalError("non-finite gradient during MDS fit")
        accepted = False
        while step > 1e-20:
            candidate = points - step * grad
            cand_stress = sammon_stress(d, candidate)
            if not np.isfinite(cand_stress):
                raise NumericalError("non-finite stress during MDS fit")
            if cand_stress <= stress:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        points = candidate
        prev = stress
        stress = cand_stress
        history.append(stress)
        iterations += 1
        step *= 1.05
        if prev - stress <= tol * max(prev, 1e-300):
            break
    return MdsSolution(points, float(stress), iterations, np.array(history))


def sv_spectrum(embeddings: np.ndarray) -> SvSpectrum:
    """Singular values of the sample covariance of the embedding rows."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need an (n >= 2, d) embedding matrix")
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    vals = np.linalg.eigvalsh(cov)[::-1]
    vals[np.abs(vals) < 1e-12 * max(float(vals.max()), 1.0)] = 0.0
    return SvSpectrum(np.clip(vals, 0.0, None))


def collapse_metrics(spectrum: SvSpectrum, epsilon_rel: float = 1e-6) -> dict:
    """Collapsed-dimension count and entropy-based effective rank.

    collapsed_dims counts values below epsilon_rel * max; effective_rank is
    exp(entropy) of the normalized squared-value distribution (0 for an
    all-zero spectrum).
    """
    vals = spectrum.values
    top = float(vals.max())
    if top == 0.0:
        return {"collapsed_dims": int(vals.size), "effective_rank": 0.0}
    collapsed = int(np.count_nonzero(vals < epsilon_rel * top))
    sq = vals * vals
    p = sq / sq.sum()
    nz = p[p > 0]
    entropy = float(-np.sum(nz * np.log(nz)))
    return {"collapsed_dims": collapsed, "effective_rank": float(np.exp(entropy))}
