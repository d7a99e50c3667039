import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from alignkit.contrastive import (
    CRITICS,
    PAIRINGS,
    TERM_BN,
    TERM_FINAL,
    EmbeddingSet,
    LossConfig,
    Schedule,
    critic,
    info_nce_gradient,
    info_nce_loss,
    schedule_loss,
    schedule_term_weights,
)


def embset(level, modality, data):
    return EmbeddingSet(level, modality, np.asarray(data, dtype=float))


def random_pair(seed, n=4, d=3, level="final"):
    """Seeded paired sets kept away from l1 kinks and zero norms."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 1.0, (n, d))
    offset = rng.uniform(0.05, 0.6, (n, d)) * np.where(rng.random((n, d)) < 0.5, -1, 1)
    b = a + offset
    return embset(level, "A", a), embset(level, "B", b)


def naive_info_nce(a, b, kind, tau, pairing):
    """Direct evaluation with explicit exponentials, no stabilization."""
    n = a.shape[0]
    total = 0.0
    for i in range(n):
        num = math.exp(critic(kind, a[i], b[i]) / tau)
        if pairing == "diagonal":
            den = sum(math.exp(critic(kind, a[j], b[j]) / tau) for j in range(n))
        else:
            den = sum(math.exp(critic(kind, a[i], b[j]) / tau) for j in range(n))
        total += -math.log(num / den)
    return total / n


class TestCritic:
    def test_gaussian_l2_identical(self):
        assert critic("gaussian_l2", [1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_cosine_orthogonal(self):
        assert critic("cosine", [1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)

    def test_l1_example(self):
        assert critic("l1", [1.0, 2.0, 3.0], [0.0, 0.0, 0.0]) == pytest.approx(-6.0)

    @pytest.mark.parametrize("kind", CRITICS)
    def test_symmetry(self, kind):
        rng = np.random.default_rng(11)
        for _ in range(25):
            a = rng.normal(size=5)
            b = rng.normal(size=5)
            assert critic(kind, a, b) == pytest.approx(critic(kind, b, a), rel=1e-12)

    @pytest.mark.parametrize("kind", ["gaussian_l2", "l1"])
    def test_nonpositive_with_equality_iff_equal(self, kind):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.normal(size=4)
            b = rng.normal(size=4)
            assert critic(kind, a, b) < 0.0
            assert critic(kind, a, a.copy()) == 0.0

    def test_cosine_range(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            v = critic("cosine", rng.normal(size=6), rng.normal(size=6))
            assert -1.0 - 1e-12 <= v <= 1.0 + 1e-12

    def test_cosine_zero_vector_rejected(self):
        with pytest.raises(ValueError, match="zero-norm"):
            critic("cosine", [0.0, 0.0], [1.0, 0.0])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            critic("gaussian_l2", [np.nan, 0.0], [0.0, 0.0])
        with pytest.raises(ValueError):
            critic("l1", [0.0, 0.0], [np.inf, 0.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            critic("l1", [1.0], [1.0, 2.0])

    @settings(max_examples=60, deadline=None)
    @given(
        kind=st.sampled_from(CRITICS),
        a=arrays(np.float64, 4, elements=st.floats(-10, 10)),
        b=arrays(np.float64, 4, elements=st.floats(-10, 10)),
    )
    def test_symmetry_and_bounds_property(self, kind, a, b):
        if kind == "cosine" and (np.linalg.norm(a) < 1e-6 or np.linalg.norm(b) < 1e-6):
            return
        forward_value = critic(kind, a, b)
        assert forward_value == pytest.approx(critic(kind, b, a), rel=1e-12, abs=1e-12)
        if kind == "cosine":
            assert -1.0 - 1e-9 <= forward_value <= 1.0 + 1e-9
        else:
            assert forward_value <= 0.0


class TestInfoNceLoss:
    @pytest.mark.parametrize("pairing", PAIRINGS)
    @pytest.mark.parametrize("kind", CRITICS)
    def test_single_pair_is_zero(self, kind, pairing):
        a = embset("final", "A", [[0.3, -0.7]])
        b = embset("final", "B", [[1.1, 0.4]])
        cfg = LossConfig(kind, 0.5, pairing)
        assert info_nce_loss(a, b, cfg) == pytest.approx(0.0, abs=1e-15)

    def test_hand_evaluated_two_sample_case(self):
        a = embset("final", "A", [[1.0, 0.0], [0.0, 1.0]])
        b = embset("final", "B", [[1.0, 0.0], [0.0, 1.0]])
        cfg = LossConfig("cosine", 0.5, "cross_pair")
        expected = math.log(1.0 + math.exp(-2.0))  # 0.126928...
        assert info_nce_loss(a, b, cfg) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("pairing", PAIRINGS)
    @pytest.mark.parametrize("kind", CRITICS)
    @pytest.mark.parametrize("n", [2, 3, 5, 6])
    def test_matches_naive_evaluator(self, kind, pairing, n):
        sa, sb = random_pair(seed=n * 100 + len(kind), n=n, d=4)
        cfg = LossConfig(kind, 0.5, pairing)
        expected = naive_info_nce(sa.data, sb.data, kind, 0.5, pairing)
        assert info_nce_loss(sa, sb, cfg) == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize("pairing", PAIRINGS)
    @pytest.mark.parametrize("kind", CRITICS)
    def test_nonnegative(self, kind, pairing):
        for seed in range(10):
            sa, sb = random_pair(seed, n=5, d=3)
            assert info_nce_loss(sa, sb, LossConfig(kind, 0.5, pairing)) >= -1e-12

    @pytest.mark.parametrize("pairing", PAIRINGS)
    def test_permutation_invariance(self, pairing):
        sa, sb = random_pair(17, n=6, d=4)
        perm = np.random.default_rng(0).permutation(6)
        cfg = LossConfig("gaussian_l2", 0.5, pairing)
        permuted = info_nce_loss(
            embset("final", "A", sa.data[perm]), embset("final", "B", sb.data[perm]), cfg
        )
        assert permuted == pytest.approx(info_nce_loss(sa, sb, cfg), rel=1e-12)

    @pytest.mark.parametrize("pairing", PAIRINGS)
    def test_cosine_per_row_rescale_invariance(self, pairing):
        sa, sb = random_pair(23, n=5, d=3)
        rng = np.random.default_rng(1)
        cfg = LossConfig("cosine", 0.5, pairing)
        scaled_a = sa.data * rng.uniform(0.1, 9.0, (5, 1))
        scaled_b = sb.data * rng.uniform(0.1, 9.0, (5, 1))
        rescaled = info_nce_loss(
            embset("final", "A", scaled_a), embset("final", "B", scaled_b), cfg
        )
        assert rescaled == pytest.approx(info_nce_loss(sa, sb, cfg), rel=1e-12)

    def test_large_exponents_do_not_overflow(self):
        a = embset("final", "A", [[0.0, 0.0], [40.0, 0.0], [0.0, 70.0]])
        b = embset("final", "B", [[60.0, 60.0], [-40.0, 0.0], [0.1, 0.1]])
        cfg = LossConfig("gaussian_l2", 0.5, "cross_pair")
        assert np.isfinite(info_nce_loss(a, b, cfg))

    def test_unpaired_rejected(self):
        a = embset("final", "A", [[1.0, 2.0]])
        with pytest.raises(ValueError, match="not paired"):
            info_nce_loss(a, embset("final", "A", [[1.0, 2.0]]), LossConfig())
        with pytest.raises(ValueError, match="not paired"):
            info_nce_loss(a, embset("bottleneck", "B", [[1.0, 2.0]]), LossConfig())
        with pytest.raises(ValueError, match="not paired"):
            info_nce_loss(a, embset("final", "B", [[1.0, 2.0], [0.0, 1.0]]), LossConfig())


def finite_difference_gradient(sa, sb, cfg, eps=1e-6):
    def loss_with(a_data, b_data):
        return info_nce_loss(
            EmbeddingSet(sa.level, "A", a_data), EmbeddingSet(sb.level, "B", b_data), cfg
        )

    num_a = np.zeros_like(sa.data)
    num_b = np.zeros_like(sb.data)
    for i in range(sa.n):
        for j in range(sa.dim):
            up, down = sa.data.copy(), sa.data.copy()
            up[i, j] += eps
            down[i, j] -= eps
            num_a[i, j] = (loss_with(up, sb.data) - loss_with(down, sb.data)) / (2 * eps)
            up, down = sb.data.copy(), sb.data.copy()
            up[i, j] += eps
            down[i, j] -= eps
            num_b[i, j] = (loss_with(sa.data, up) - loss_with(sa.data, down)) / (2 * eps)
    return num_a, num_b


class TestInfoNceGradient:
    @pytest.mark.parametrize("pairing", PAIRINGS)
    @pytest.mark.parametrize("kind", CRITICS)
    def test_single_pair_gradient_zero(self, kind, pairing):
        a = embset("final", "A", [[0.5, -0.2]])
        b = embset("final", "B", [[1.0, 0.8]])
        ga, gb = info_nce_gradient(a, b, LossConfig(kind, 0.5, pairing))
        assert np.allclose(ga, 0.0) and np.allclose(gb, 0.0)

    def test_symmetric_gaussian_diagonal_configuration(self):
        rng = np.random.default_rng(9)
        data = rng.normal(size=(4, 3))
        sa = embset("final", "A", data)
        sb = embset("final", "B", data.copy())
        cfg = LossConfig("gaussian_l2", 0.5, "diagonal")
        ga, gb = info_nce_gradient(sa, sb, cfg)
        # all diagonal scores equal, so the softmax weights are uniform and
        # the critic Jacobian vanishes at zero difference
        assert np.allclose(ga, 0.0, atol=1e-12)
        assert np.allclose(gb, 0.0, atol=1e-12)
        num_a, num_b = finite_difference_gradient(sa, sb, cfg)
        assert np.allclose(ga, num_a, atol=1e-7)
        assert np.allclose(gb, num_b, atol=1e-7)

    @pytest.mark.parametrize("pairing", PAIRINGS)
    @pytest.mark.parametrize("kind", CRITICS)
    def test_matches_finite_differences(self, kind, pairing):
        seed = CRITICS.index(kind) * 10 + PAIRINGS.index(pairing)
        sa, sb = random_pair(seed=seed, n=4, d=3)
        cfg = LossConfig(kind, 0.5, pairing)
        ga, gb = info_nce_gradient(sa, sb, cfg)
        num_a, num_b = finite_difference_gradient(sa, sb, cfg)
        scale = max(np.abs(num_a).max(), np.abs(num_b).max(), 1e-12)
        assert np.abs(ga - num_a).max() / scale < 1e-5
        assert np.abs(gb - num_b).max() / scale < 1e-5


class TestSchedule:
    def make_sets(self, seed=0):
        fa, fb = random_pair(seed, n=3, d=4, level="final")
        ba, bb = random_pair(seed + 1, n=3, d=2, level="bottleneck")
        return fa, fb, ba, bb

    def test_baseline_active_terms(self):
        fa, fb, ba, bb = self.make_sets()
        cfg = LossConfig()
        for it in range(5):
            loss, active = schedule_loss(fa, fb, ba, bb, cfg, cfg, Schedule("baseline"), 0, it)
            assert active == frozenset({TERM_FINAL})
            assert loss == pytest.approx(info_nce_loss(fa, fb, cfg))

    def test_summed_matches_weighted_sum(self):
        fa, fb, ba, bb = self.make_sets(4)
        cfg = LossConfig()
        loss, active = schedule_loss(
            fa, fb, ba, bb, cfg, cfg, Schedule("summed", alpha=0.5), 2, 7
        )
        expected = info_nce_loss(fa, fb, cfg) + 0.5 * info_nce_loss(ba, bb, cfg)
        assert active == frozenset({TERM_FINAL, TERM_BN})
        assert loss == pytest.approx(expected, rel=1e-12)

    def test_pretraining_split(self):
        fa, fb, ba, bb = self.make_sets(8)
        cfg = LossConfig()
        sched = Schedule("pretraining", split_epoch=50)
        _, active_before = schedule_loss(fa, fb, ba, bb, cfg, cfg, sched, 49, 0)
        _, active_after = schedule_loss(fa, fb, ba, bb, cfg, cfg, sched, 50, 0)
        assert active_before == frozenset({TERM_BN})
        assert active_after == frozenset({TERM_FINAL})

    def test_alternating_strictly_alternates_over_100_iterations(self):
        sched = Schedule("alternating", weight=1.0)
        seen = [schedule_term_weights(sched, 0, it) for it in range(100)]
        for it, weights in enumerate(seen):
            expected = {TERM_FINAL} if it % 2 == 0 else {TERM_BN}
            assert set(weights) == expected
        assert all(set(a) != set(b) for a, b in zip(seen, seen[1:]))

    def test_alternating_weight_scales_loss(self):
        fa, fb, ba, bb = self.make_sets(2)
        cfg = LossConfig()
        loss_even, _ = schedule_loss(
            fa, fb, ba, bb, cfg, cfg, Schedule("alternating", weight=2.5), 0, 0
        )
        assert loss_even == pytest.approx(2.5 * info_nce_loss(fa, fb, cfg), rel=1e-12)
        loss_odd, _ = schedule_loss(
            fa, fb, ba, bb, cfg, cfg, Schedule("alternating", weight=2.5), 0, 1
        )
        assert loss_odd == pytest.approx(2.5 * info_nce_loss(ba, bb, cfg), rel=1e-12)

    def test_negative_epoch_rejected(self):
        with pytest.raises(ValueError):
            schedule_term_weights(Schedule("baseline"), -1, 0)

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            Schedule("nonsense")
        with pytest.raises(ValueError):
            Schedule("summed", alpha=0.0)
        with pytest.raises(ValueError):
            Schedule("pretraining", split_epoch=0)

    def test_wrong_levels_rejected(self):
        fa, fb, ba, bb = self.make_sets()
        cfg = LossConfig()
        with pytest.raises(ValueError, match="level"):
            schedule_loss(ba, bb, fa, fb, cfg, cfg, Schedule("baseline"), 0, 0)
