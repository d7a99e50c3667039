"""Desk-scale twin encoders trained with the contrastive schedules.

Two two-layer tanh encoders (one per modality, no shared weights) map
synthetic paired inputs to a bottleneck and a final embedding.  The
bottleneck feeds the final layer, so supervision applied early can leave
its mark on the final representation.  Training is plain SGD with
momentum, weight decay and global gradient-norm clipping, fully seeded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contrastive import (
    TERM_BN,
    TERM_FINAL,
    EmbeddingSet,
    LossConfig,
    Schedule,
    info_nce_gradient,
    info_nce_loss,
    schedule_term_weights,
)
from .errors import NumericalError


@dataclass(frozen=True)
class SyntheticPairDataset:
    """Paired inputs from a shared latent: X_j = Z @ M_j + noise, j in {A, B}."""

    latent_dim: int
    input_dim: int
    n: int
    seed: int
    noise_sigma: float
    inputs_a: np.ndarray
    inputs_b: np.ndarray

    @classmethod
    def generate(cls, n=256, input_dim=32, latent_dim=4, seed=0, noise_sigma=0.1):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((n, latent_dim))
        mix_a = rng.standard_normal((latent_dim, input_dim)) / np.sqrt(latent_dim)
        mix_b = rng.standard_normal((latent_dim, input_dim)) / np.sqrt(latent_dim)
        xa = z @ mix_a + noise_sigma * rng.standard_normal((n, input_dim))
        xb = z @ mix_b + noise_sigma * rng.standard_normal((n, input_dim))
        return cls(latent_dim, input_dim, n, seed, noise_sigma, xa, xb)


@dataclass(frozen=True)
class TwinEncoderParams:
    """Per-modality weights; bn = tanh(X @ w1), final = bn @ w2."""

    w1_a: np.ndarray
    w2_a: np.ndarray
    w1_b: np.ndarray
    w2_b: np.ndarray

    @classmethod
    def init(cls, input_dim: int, bn_dim: int, out_dim: int, rng: np.random.Generator):
        def draw(fan_in, fan_out):
            return rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)

        return cls(
            w1_a=draw(input_dim, bn_dim),
            w2_a=draw(bn_dim, out_dim),
            w1_b=draw(input_dim, bn_dim),
            w2_b=draw(bn_dim, out_dim),
        )

    def weights(self, modality: str) -> tuple[np.ndarray, np.ndarray]:
        if modality == "A":
            return self.w1_a, self.w2_a
        if modality == "B":
            return self.w1_b, self.w2_b
        raise ValueError(f"unknown modality {modality!r}")

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.w1_a, self.w2_a, self.w1_b, self.w2_b)

    @classmethod
    def from_arrays(cls, arrays) -> "TwinEncoderParams":
        return cls(*arrays)

    @classmethod
    def zeros_like(cls, other: "TwinEncoderParams") -> "TwinEncoderParams":
        return cls(*[np.zeros_like(a) for a in other.arrays()])


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 1e-5
    grad_clip_norm: float = 1.0
    epochs: int = 100
    iterations_per_epoch: int = 32
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate >= 0):
            raise ValueError("learning_rate must be >= 0")
        if not (0 <= self.momentum < 1):
            raise ValueError("momentum must be in [0, 1)")
        if not (self.grad_clip_norm > 0):
            raise ValueError("grad_clip_norm must be positive")
        if self.epochs < 1 or self.iterations_per_epoch < 1 or self.batch_size < 1:
            raise ValueError("epochs, iterations_per_epoch and batch_size must be >= 1")


@dataclass(frozen=True)
class TraceRecord:
    epoch: int
    iteration: int
    active_terms: tuple[str, ...]
    loss: float


@dataclass(frozen=True)
class TrainingTrace:
    records: list[TraceRecord]
    params: TwinEncoderParams
    bn_a: EmbeddingSet
    bn_b: EmbeddingSet
    final_a: EmbeddingSet
    final_b: EmbeddingSet


def forward(params: TwinEncoderParams, inputs: np.ndarray, modality: str):
    """Run one encoder; returns (bottleneck, final) embedding sets."""
    w1, w2 = params.weights(modality)
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != w1.shape[0]:
        raise ValueError(
            f"inputs shape {inputs.shape} does not match encoder input dim {w1.shape[0]}"
        )
    bn = np.tanh(inputs @ w1)
    final = bn @ w2
    return (
        EmbeddingSet("bottleneck", modality, bn),
        EmbeddingSet("final", modality, final),
    )


def backward(
    params: TwinEncoderParams,
    inputs: np.ndarray,
    grads_bn: np.ndarray,
    grads_final: np.ndarray,
    modality: str,
) -> tuple[np.ndarray, np.ndarray]:
    """Chain-rule gradients (dL/dw1, dL/dw2) for one encoder.

    grads_bn is the direct upstream gradient on the bottleneck output (from
    a bottleneck-level loss); grads_final the gradient on the final output.
    The final-layer path contributes to w1 through w2 and the tanh Jacobian.
    """
    w1, w2 = params.weights(modality)
    inputs = np.asarray(inputs, dtype=np.float64)
    bn = np.tanh(inputs @ w1)
    grads_bn = np.asarray(grads_bn, dtype=np.float64)
    grads_final = np.asarray(grads_final, dtype=np.float64)
    if grads_bn.shape != bn.shape:
        raise ValueError(f"grads_bn shape {grads_bn.shape} != bottleneck shape {bn.shape}")
    if grads_final.shape != (bn.shape[0], w2.shape[1]):
        raise ValueError("grads_final shape does not match final embedding shape")
    g_w2 = bn.T @ grads_final
    g_bn_total = grads_bn + grads_final @ w2.T
    g_pre = g_bn_total * (1.0 - bn * bn)
    g_w1 = inputs.T @ g_pre
    return g_w1, g_w2


def sgd_step(
    params: TwinEncoderParams,
    grads: TwinEncoderParams,
    state: TwinEncoderParams,
    cfg: OptimizerConfig,
) -> tuple[TwinEncoderParams, TwinEncoderParams]:
    """One SGD update: clip global grad norm, momentum, decoupled weight decay.

    v <- momentum * v + g;  p <- p - lr * (v + weight_decay * p)
    """
    g_arrays = [np.asarray(g, dtype=np.float64) for g in grads.arrays()]
    total = np.sqrt(sum(float(np.sum(g * g)) for g in g_arrays))
    if np.isfinite(cfg.grad_clip_norm) and total > cfg.grad_clip_norm:
        scale = cfg.grad_clip_norm / total
        g_arrays = [g * scale for g in g_arrays]
    new_vel = []
    new_params = []
    for p, g, v in zip(params.arrays(), g_arrays, state.arrays()):
        v_next = cfg.momentum * v + g
        new_vel.append(v_next)
        new_params.append(p - cfg.learning_rate * (v_next + cfg.weight_decay * p))
    return TwinEncoderParams.from_arrays(new_params), TwinEncoderParams.from_arrays(new_vel)


def _embedding_grads(final_a, final_b, bn_a, bn_b, cfg_final, cfg_bn, weights):
    """Upstream gradients on the four embedding blocks for the active terms."""
    gfa = np.zeros_like(final_a.data)
    gfb = np.zeros_like(final_b.data)
    gba = np.zeros_like(bn_a.data)
    gbb = np.zeros_like(bn_b.data)
    if TERM_FINAL in weights:
        ga, gb = info_nce_gradient(final_a, final_b, cfg_final)
        gfa += weights[TERM_FINAL] * ga
        gfb += weights[TERM_FINAL] * gb
    if TERM_BN in weights:
        ga, gb = info_nce_gradient(bn_a, bn_b, cfg_bn)
        gba += weights[TERM_BN] * ga
        gbb += weights[TERM_BN] * gb
    return gfa, gfb, gba, gbb


def run_training(
    dataset: SyntheticPairDataset,
    schedule: Schedule,
    cfg_final: LossConfig,
    cfg_bn: LossConfig,
    opt: OptimizerConfig,
    bn_dim: int = 8,
    out_dim: int = 8,
) -> TrainingTrace:
    """Train the twin encoders for epochs x iterations_per_epoch steps.

    Batches are consecutive blocks of a seeded within-epoch shuffle
    (reshuffled when exhausted).  Identical seeds and configs give a
    bit-identical trace.  A non-finite loss aborts with the offending step
    named.
    """
    if opt.batch_size > dataset.n:
        raise ValueError(f"batch_size {opt.batch_size} exceeds dataset size {dataset.n}")
    if schedule.kind == "pretraining" and schedule.split_epoch >= opt.epochs:
        raise ValueError(
            f"pretraining split_epoch {schedule.split_epoch} must be < epochs {opt.epochs}"
        )
    rng = np.random.default_rng(opt.seed)
    params = TwinEncoderParams.init(dataset.input_dim, bn_dim, out_dim, rng)
    velocity = TwinEncoderParams.zeros_like(params)
    records: list[TraceRecord] = []

    for epoch in range(opt.epochs):
        order = rng.permutation(dataset.n)
        pos = 0
        for iteration in range(opt.iterations_per_epoch):
            if pos + opt.batch_size > dataset.n:
                order = rng.permutation(dataset.n)
                pos = 0
            idx = order[pos : pos + opt.batch_size]
            pos += opt.batch_size

            xa = dataset.inputs_a[idx]
            xb = dataset.inputs_b[idx]
            weights = schedule_term_weights(schedule, epoch, iteration)
            try:
                bn_a, final_a = forward(params, xa, "A")
                bn_b, final_b = forward(params, xb, "B")
                loss = 0.0
                if TERM_FINAL in weights:
                    loss += weights[TERM_FINAL] * info_nce_loss(final_a, final_b, cfg_final)
                if TERM_BN in weights:
                    loss += weights[TERM_BN] * info_nce_loss(bn_a, bn_b, cfg_bn)
            except ValueError as exc:
                raise NumericalError(
                    f"training diverged at epoch {epoch} iteration {iteration}: {exc}"
                ) from exc
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch} iteration {iteration}"
                )

            gfa, gfb, gba, gbb = _embedding_grads(
                final_a, final_b, bn_a, bn_b, cfg_final, cfg_bn, weights
            )
            gw1_a, gw2_a = backward(params, xa, gba, gfa, "A")
            gw1_b, gw2_b = backward(params, xb, gbb, gfb, "B")
            grads = TwinEncoderParams(gw1_a, gw2_a, gw1_b, gw2_b)
            params, velocity = sgd_step(params, grads, velocity, opt)
            records.append(TraceRecord(epoch, iteration, tuple(sorted(weights)), float(loss)))

    bn_a, final_a = forward(params, dataset.inputs_a, "A")
    bn_b, final_b = forward(params, dataset.inputs_b, "B")
    return TrainingTrace(records, params, bn_a, bn_b, final_a, final_b)
