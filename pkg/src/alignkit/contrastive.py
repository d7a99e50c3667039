"""InfoNCE contrastive losses over paired embeddings.

The similarity ("critic") functions, the temperature-scaled InfoNCE
objective in two negative-pairing modes, hand-derived gradients, and the
loss schedules that add supervision on a bottleneck level next to the
final level.

Conventions: an embedding set is n rows by d columns, one row per sample.
Two sets are *paired* when they share n and level and come from opposite
modalities; row i of each refers to the same underlying sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

CRITICS = ("gaussian_l2", "cosine", "l1")
PAIRINGS = ("diagonal", "cross_pair")
LEVELS = ("bottleneck", "final")
MODALITIES = ("A", "B")
SCHEDULES = ("baseline", "alternating", "summed", "pretraining")

# term names recorded in traces
TERM_FINAL = "L_C"
TERM_BN = "L_BN"


@dataclass(frozen=True)
class EmbeddingSet:
    """n samples by d dimensions at one network level for one modality."""

    level: str
    modality: str
    data: np.ndarray

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}, got {self.level!r}")
        if self.modality not in MODALITIES:
            raise ValueError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"data must be a non-empty 2-D matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("embedding data contains non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def assert_paired(set_a: EmbeddingSet, set_b: EmbeddingSet) -> None:
    """Raise unless the two sets form a positive-pair population."""
    if set_a.n != set_b.n:
        raise ValueError(f"sets are not paired: n differs ({set_a.n} vs {set_b.n})")
    if set_a.level != set_b.level:
        raise ValueError(f"sets are not paired: level differs ({set_a.level} vs {set_b.level})")
    if set_a.modality == set_b.modality:
        raise ValueError(f"sets are not paired: same modality {set_a.modality!r}")
    if set_a.dim != set_b.dim:
        raise ValueError(f"sets are not paired: dim differs ({set_a.dim} vs {set_b.dim})")


@dataclass(frozen=True)
class LossConfig:
    """Critic choice, temperature, and negative-pairing mode for one InfoNCE term."""

    critic: str = "gaussian_l2"
    temperature: float = 0.5
    pairing: str = "cross_pair"

    def __post_init__(self):
        if self.critic not in CRITICS:
            raise ValueError(f"critic must be one of {CRITICS}, got {self.critic!r}")
        if not (self.temperature > 0):
            raise ValueError("temperature must be positive")
        if self.pairing not in PAIRINGS:
            raise ValueError(f"pairing must be one of {PAIRINGS}, got {self.pairing!r}")


@dataclass(frozen=True)
class Schedule:
    """How the final-level and bottleneck-level losses are combined over training.

    kind = "baseline":    final-level loss only.
    kind = "alternating": the two losses take turns every iteration, each
                          scaled by `weight` (final level on even iterations).
    kind = "summed":      final + alpha * bottleneck, every iteration.
    kind = "pretraining": bottleneck only while epoch < split_epoch, then
                          final only.
    """

    kind: str = "baseline"
    weight: float = 1.0
    alpha: float = 0.5
    split_epoch: int = 50

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ValueError(f"kind must be one of {SCHEDULES}, got {self.kind!r}")
        if not (self.weight > 0):
            raise ValueError("weight must be positive")
        if not (self.alpha > 0):
            raise ValueError("alpha must be positive")
        if self.split_epoch < 1:
            raise ValueError("split_epoch must be >= 1")


def _check_vector(y, name: str) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite entries")
    return y


def critic(kind: str, y1, y2) -> float:
    """Similarity h(y1, y2) between two embedding vectors.

    gaussian_l2: -||y1 - y2||_2^2, cosine: <y1,y2>/(||y1|| ||y2||),
    l1: -||y1 - y2||_1.  All three are symmetric in their arguments.
    """
    if kind not in CRITICS:
        raise ValueError(f"unknown critic {kind!r}")
    y1 = _check_vector(y1, "y1")
    y2 = _check_vector(y2, "y2")
    if y1.shape != y2.shape:
        raise ValueError("y1 and y2 must have the same length")
    if kind == "gaussian_l2":
        d = y1 - y2
        return float(-np.dot(d, d))
    if kind == "l1":
        return float(-np.sum(np.abs(y1 - y2)))
    n1 = np.linalg.norm(y1)
    n2 = np.linalg.norm(y2)
    if n1 == 0.0 or n2 == 0.0:
        raise ValueError("cosine critic is undefined for zero-norm input")
    return float(np.dot(y1, y2) / (n1 * n2))


def _unit_rows(x: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0.0):
        raise ValueError(f"cosine critic is undefined for zero-norm rows in {what}")
    return x / norms[:, None], norms


def _critic_cross(kind: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full n x n matrix C[i, j] = h(a_i, b_j)."""
    if kind == "gaussian_l2":
        # overflow here surfaces as a non-finite loss, reported by callers
        with np.errstate(over="ignore", invalid="ignore"):
            sq_a = np.sum(a * a, axis=1)
            sq_b = np.sum(b * b, axis=1)
            d2 = sq_a[:, None] + sq_b[None, :] - 2.0 * (a @ b.T)
        return -np.maximum(d2, 0.0)
    if kind == "l1":
        return -np.sum(np.abs(a[:, None, :] - b[None, :, :]), axis=2)
    ua, _ = _unit_rows(a, "set A")
    ub, _ = _unit_rows(b, "set B")
    return ua @ ub.T


def _critic_diag(kind: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-row h(a_i, b_i)."""
    if kind == "gaussian_l2":
        d = a - b
        return -np.sum(d * d, axis=1)
    if kind == "l1":
        return -np.sum(np.abs(a - b), axis=1)
    ua, _ = _unit_rows(a, "set A")
    ub, _ = _unit_rows(b, "set B")
    return np.sum(ua * ub, axis=1)


def info_nce_loss(set_a: EmbeddingSet, set_b: EmbeddingSet, cfg: LossConfig) -> float:
    """Mean InfoNCE loss over the paired samples.

    With pairing="diagonal" the denominator for sample i sums the
    exponentiated scores of all positive pairs e^{h(a_j, b_j)/tau}; with
    pairing="cross_pair" it sums e^{h(a_i, b_j)/tau} over all j (standard
    cross-sample negatives).  Log-sum-exp is evaluated with
    max-subtraction, so large |h|/tau cannot overflow.
    """
    assert_paired(set_a, set_b)
    a, b = set_a.data, set_b.data
    tau = cfg.temperature
    if cfg.pairing == "diagonal":
        s = _critic_diag(cfg.critic, a, b) / tau
        return float(logsumexp(s) - np.mean(s))
    scores = _critic_cross(cfg.critic, a, b) / tau
    return float(np.mean(logsumexp(scores, axis=1) - np.diag(scores)))


def _pair_partials(kind, a, b, coeff):
    """Gradients of sum_i coeff_i * h(a_i, b_i) wrt a and b (row-aligned pairs)."""
    if kind == "gaussian_l2":
        d = a - b
        ga = -2.0 * coeff[:, None] * d
        return ga, -ga
    if kind == "l1":
        s = np.sign(a - b)
        ga = -coeff[:, None] * s
        return ga, -ga
    ua, na = _unit_rows(a, "set A")
    ub, nb = _unit_rows(b, "set B")
    h = np.sum(ua * ub, axis=1)
    ga = coeff[:, None] * (ub - h[:, None] * ua) / na[:, None]
    gb = coeff[:, None] * (ua - h[:, None] * ub) / nb[:, None]
    return ga, gb


def info_nce_gradient(
    set_a: EmbeddingSet, set_b: EmbeddingSet, cfg: LossConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic dL/da and dL/db for :func:`info_nce_loss`.

    Derivation sketch: with row-softmax P of the score matrix S, the loss
    depends on S only through (P - I)/n in cross_pair mode, and through
    softmax(s) - 1/n on the diagonal scores in diagonal mode; the critic
    Jacobians are then chained in closed form.
    """
    assert_paired(set_a, set_b)
    a, b = set_a.data, set_b.data
    n = set_a.n
    tau = cfg.temperature
    kind = cfg.critic

    if cfg.pairing == "diagonal":
        s = _critic_diag(kind, a, b) / tau
        coeff = (softmax(s) - 1.0 / n) / tau
        return _pair_partials(kind, a, b, coeff)

    scores = _critic_cross(kind, a, b) / tau
    w = (softmax(scores, axis=1) - np.eye(n)) / (n * tau)
    if kind == "gaussian_l2":
        row = w.sum(axis=1)
        col = w.sum(axis=0)
        ga = -2.0 * (a * row[:, None] - w @ b)
        gb = 2.0 * (w.T @ a - b * col[:, None])
        return ga, gb
    if kind == "l1":
        sgn = np.sign(a[:, None, :] - b[None, :, :])
        ga = -np.einsum("ij,ijd->id", w, sgn)
        gb = np.einsum("ij,ijd->jd", w, sgn)
        return ga, gb
    ua, na = _unit_rows(a, "set A")
    ub, nb = _unit_rows(b, "set B")
    c = ua @ ub.T
    ga = (w @ ub - np.sum(w * c, axis=1)[:, None] * ua) / na[:, None]
    gb = (w.T @ ua - np.sum(w * c, axis=0)[:, None] * ub) / nb[:, None]
    return ga, gb


def schedule_term_weights(schedule: Schedule, epoch: int, iteration: int) -> dict[str, float]:
    """Multiplicative weight of each loss term at (epoch, iteration); inactive terms absent."""
    if epoch < 0 or iteration < 0:
        raise ValueError("epoch and iteration must be non-negative")
    if schedule.kind == "baseline":
        return {TERM_FINAL: 1.0}
    if schedule.kind == "alternating":
        if iteration % 2 == 0:
            return {TERM_FINAL: schedule.weight}
        return {TERM_BN: schedule.weight}
    if schedule.kind == "summed":
        return {TERM_FINAL: 1.0, TERM_BN: schedule.alpha}
    if epoch < schedule.split_epoch:
        return {TERM_BN: 1.0}
    return {TERM_FINAL: 1.0}


def schedule_loss(
    final_a: EmbeddingSet,
    final_b: EmbeddingSet,
    bn_a: EmbeddingSet,
    bn_b: EmbeddingSet,
    cfg_final: LossConfig,
    cfg_bn: LossConfig,
    schedule: Schedule,
    epoch: int,
    iteration: int,
) -> tuple[float, frozenset[str]]:
    """Combined loss at one training step plus the set of active terms."""
    assert_paired(final_a, final_b)
    assert_paired(bn_a, bn_b)
    if final_a.level != "final" or bn_a.level != "bottleneck":
        raise ValueError("schedule_loss expects final-level and bottleneck-level sets")
    weights = schedule_term_weights(schedule, epoch, iteration)
    loss = 0.0
    if TERM_FINAL in weights:
        loss += weights[TERM_FINAL] * info_nce_loss(final_a, final_b, cfg_final)
    if TERM_BN in weights:
        loss += weights[TERM_BN] * info_nce_loss(bn_a, bn_b, cfg_bn)
    return loss, frozenset(weights)
