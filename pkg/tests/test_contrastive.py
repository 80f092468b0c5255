import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cograph.autodiff import Tape, Tensor, backward
from cograph.contrastive import (ContrastiveConfig, encoder_loss, info_nce,
                                 loss_equivalence_oracle, positive_pairs)
from cograph.errors import ShapeError, UsageError
from cograph.rng import stream

from oracles import fd_gradient, naive_info_nce, rel_err

IDENTITY_PAIR_LOSS = 2.0 * math.log(1.0 + math.exp(-1.0))  # = 0.626523...


class TestPositivePairs:
    def test_three_encoders_two_items(self):
        triples = positive_pairs(k=3, n=2, p=0)
        assert triples == [(0, 1, 0), (0, 2, 0), (1, 1, 1), (1, 2, 1)]

    def test_two_encoders_one_item(self):
        assert positive_pairs(k=2, n=1, p=1) == [(0, 0, 0)]

    @given(st.integers(2, 6), st.integers(1, 9))
    @settings(max_examples=30, deadline=None)
    def test_count_is_n_times_k_minus_one(self, k, n):
        for p in range(k):
            triples = positive_pairs(k, n, p)
            assert len(triples) == n * (k - 1)
            assert all(i == key and j != p for i, j, key in triples)

    def test_single_encoder_rejected(self):
        with pytest.raises(UsageError):
            positive_pairs(k=1, n=4, p=0)


class TestInfoNCE:
    def test_single_item_loss_is_zero(self):
        h = Tensor([[1.0, 2.0]])
        assert info_nce(h, h, temperature=0.5).data[0, 0] == 0.0

    def test_identity_embeddings_closed_form(self):
        eye = Tensor(np.eye(2))
        loss = info_nce(eye, eye, temperature=1.0)
        assert loss.data[0, 0] == pytest.approx(IDENTITY_PAIR_LOSS, abs=1e-12)
        assert loss.data[0, 0] == pytest.approx(0.626523, abs=1e-6)

    def test_matches_naive_double_loop(self):
        rng = stream(17, "naive")
        for trial in range(20):
            hp = rng.uniform(-1, 1, (8, 4))
            hq = rng.uniform(-1, 1, (8, 4))
            tau = float(rng.uniform(0.05, 2.0))
            ours = info_nce(Tensor(hp), Tensor(hq), tau).data[0, 0]
            assert abs(ours - naive_info_nce(hp, hq, tau)) < 1e-10

    def test_huge_temperature_approaches_uniform(self):
        rng = stream(18, "tau")
        hp = Tensor(rng.uniform(-1, 1, (4, 3)))
        hq = Tensor(rng.uniform(-1, 1, (4, 3)))
        loss = info_nce(hp, hq, temperature=1e6).data[0, 0]
        assert loss == pytest.approx(4.0 * math.log(4.0), rel=0.01)

    def test_temperature_must_be_positive(self):
        h = Tensor(np.eye(2))
        with pytest.raises(UsageError):
            info_nce(h, h, temperature=0.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            info_nce(Tensor(np.eye(2)), Tensor(np.eye(3)), temperature=1.0)

    def test_differentiable_through_both_sides(self):
        rng = stream(19, "grad")
        hp = Tensor(rng.uniform(-1, 1, (5, 3)), requires_grad=True)
        hq = Tensor(rng.uniform(-1, 1, (5, 3)), requires_grad=True)
        with Tape() as tape:
            loss = info_nce(hp, hq, temperature=0.3)
        backward(loss, tape)

        def f():
            return naive_info_nce(hp.data, hq.data, 0.3)

        assert rel_err(hp.grad, fd_gradient(f, hp.data)) < 1e-4
        assert rel_err(hq.grad, fd_gradient(f, hq.data)) < 1e-4

    def test_row_blocks_change_nothing(self):
        rng = stream(20, "blocks")
        hp = Tensor(rng.uniform(-1, 1, (7, 3)))
        hq = Tensor(rng.uniform(-1, 1, (7, 3)))
        full = info_nce(hp, hq, 0.4).data[0, 0]
        blocked = info_nce(hp, hq, 0.4, row_block=3).data[0, 0]
        assert abs(full - blocked) < 1e-12

    def test_scale_invariance_with_temperature(self):
        rng = stream(21, "scaleinv")
        hp = rng.uniform(-1, 1, (6, 4))
        hq = rng.uniform(-1, 1, (6, 4))
        base = info_nce(Tensor(hp), Tensor(hq), 0.7).data[0, 0]
        for c in (0.1, 3.0, 50.0):
            scaled = info_nce(Tensor(c * hp), Tensor(hq), c * 0.7).data[0, 0]
            assert abs(base - scaled) < 1e-10

    def test_translation_sensitivity_is_one_sided(self):
        # translating every key row shifts each score row by a constant,
        # which the row softmax cancels exactly; translating the query rows
        # perturbs scores per column and does change the loss
        rng = stream(29, "shift")
        hp = rng.uniform(-1, 1, (5, 3))
        hq = rng.uniform(-1, 1, (5, 3))
        v = np.array([1.0, -2.0, 0.5])
        base = info_nce(Tensor(hp), Tensor(hq), 0.5).data[0, 0]
        keys_shifted = info_nce(Tensor(hp), Tensor(hq + v), 0.5).data[0, 0]
        queries_shifted = info_nce(Tensor(hp + v), Tensor(hq), 0.5).data[0, 0]
        assert abs(base - keys_shifted) < 1e-10
        assert abs(base - queries_shifted) > 1e-6

    def test_cosine_similarity_flag(self):
        rng = stream(22, "cos")
        hp = rng.uniform(0.5, 1.5, (4, 3))
        hq = rng.uniform(0.5, 1.5, (4, 3))
        ours = info_nce(Tensor(hp), Tensor(hq), 0.5, similarity="cosine").data[0, 0]
        hp_n = hp / np.linalg.norm(hp, axis=1, keepdims=True)
        hq_n = hq / np.linalg.norm(hq, axis=1, keepdims=True)
        assert abs(ours - naive_info_nce(hp_n, hq_n, 0.5)) < 1e-10

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(1, 9)), int(rng.integers(1, 5))
        hp = Tensor(rng.uniform(-3, 3, (n, d)))
        hq = Tensor(rng.uniform(-3, 3, (n, d)))
        assert info_nce(hp, hq, float(rng.uniform(0.05, 5.0))).data[0, 0] >= 0.0


class TestEncoderLoss:
    def test_two_encoders_single_term(self):
        rng = stream(23, "two")
        reps = [Tensor(rng.uniform(-1, 1, (4, 3))) for _ in range(2)]
        total = encoder_loss(0, reps, 0.5).data[0, 0]
        single = info_nce(reps[0], reps[1], 0.5).data[0, 0]
        assert total == pytest.approx(single, abs=1e-12)

    def test_duplicate_keys_double_the_loss(self):
        rng = stream(24, "dup")
        hp = Tensor(rng.uniform(-1, 1, (4, 3)))
        key = Tensor(rng.uniform(-1, 1, (4, 3)))
        two = encoder_loss(0, [hp, key], 0.5).data[0, 0]
        three = encoder_loss(0, [hp, key, key], 0.5).data[0, 0]
        assert three == pytest.approx(2.0 * two, rel=1e-12)

    def test_detached_keys_get_no_gradient(self):
        rng = stream(25, "detach")
        hp = Tensor(rng.uniform(-1, 1, (4, 3)), requires_grad=True)
        hq = Tensor(rng.uniform(-1, 1, (4, 3)), requires_grad=True)
        with Tape() as tape:
            loss = encoder_loss(0, [hp, hq], 0.5)
        backward(loss, tape)
        assert hp.grad is not None and np.abs(hp.grad).max() > 0
        assert hq.grad is None or not np.abs(hq.grad).any()

    def test_joint_mode_reaches_keys(self):
        rng = stream(26, "joint")
        hp = Tensor(rng.uniform(-1, 1, (4, 3)), requires_grad=True)
        hq = Tensor(rng.uniform(-1, 1, (4, 3)), requires_grad=True)
        with Tape() as tape:
            loss = encoder_loss(0, [hp, hq], 0.5, detach_keys=False)
        backward(loss, tape)
        assert np.abs(hq.grad).max() > 0

    def test_single_encoder_rejected(self):
        with pytest.raises(UsageError):
            encoder_loss(0, [Tensor(np.eye(2))], 0.5)


class TestScoreMatrix:
    def test_values_match_definition(self):
        rng = stream(28, "scores")
        hp = rng.uniform(-1, 1, (4, 3))
        hq = rng.uniform(-1, 1, (4, 3))
        from cograph.contrastive import score_matrix
        s = score_matrix(hp, hq, 0.25)
        assert s.shape == (4, 4)
        assert s[1, 2] == pytest.approx(float(hp[1] @ hq[2]) / 0.25)

    def test_rejects_bad_temperature(self):
        from cograph.contrastive import score_matrix
        with pytest.raises(UsageError):
            score_matrix(np.eye(2), np.eye(2), -1.0)


class TestLossEquivalenceOracle:
    def test_random_inputs_agree(self):
        rng = stream(27, "oracle")
        for _ in range(20):
            hp = rng.uniform(-1, 1, (8, 4))
            hq = rng.uniform(-1, 1, (8, 4))
            assert loss_equivalence_oracle(hp, hq, 0.5) < 1e-10

    def test_identity_closed_form(self):
        eye = np.eye(2)
        assert loss_equivalence_oracle(eye, eye, 1.0) < 1e-12
        s = eye @ eye.T
        expanded = -sum(s[j, j] - np.log(np.exp(s[j]).sum()) for j in range(2))
        assert expanded == pytest.approx(IDENTITY_PAIR_LOSS, abs=1e-12)

    def test_single_item_both_zero(self):
        h = np.array([[2.0, 1.0]])
        assert loss_equivalence_oracle(h, h, 1.0) < 1e-15


class TestConfig:
    def test_temperature_validated(self):
        with pytest.raises(UsageError):
            ContrastiveConfig(temperature=-0.1)

    def test_mode_validated(self):
        with pytest.raises(UsageError):
            ContrastiveConfig(temperature=0.5, mode="pairwise")
