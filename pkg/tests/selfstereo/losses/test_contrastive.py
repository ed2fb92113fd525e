import math

import numpy as np
import pytest

from selfstereo.autodiff import Tensor, backward, grad_check, ops, precision, reset_tape
from selfstereo.losses import ContrastiveConfig, MemoryQueue, infonce_loss, queue_update, sample_pairs
from selfstereo.losses.contrastive import contrastive_loss


def _unit(rng, shape):
    v = rng.normal(size=shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _basis(dim, index):
    e = np.zeros(dim)
    e[index] = 1.0
    return e


class TestSamplePairs:
    def test_defaults(self):
        cfg = ContrastiveConfig()
        assert (cfg.negatives, cfg.temperature, cfg.positive_jitter, cfg.negative_window) == (60, 0.07, 1, 50)

    def test_shapes_and_constraints(self):
        cfg = ContrastiveConfig(anchor_count=64)
        features = np.zeros((4, 16, 32))
        pairs = sample_pairs(features, features, rng_seed=3, cfg=cfg)
        assert pairs.anchors.shape == (64, 2)
        assert pairs.negatives.shape == (64, 60, 2)

        jitter = pairs.positives - pairs.anchors
        assert np.abs(jitter).max() <= 1
        distance = np.abs(pairs.negatives - pairs.positives[:, None, :]).max(axis=-1)
        assert distance.min() > 2
        assert pairs.negatives[..., 0].max() < 16 and pairs.negatives[..., 1].max() < 32
        assert pairs.negatives.min() >= 0

    def test_negatives_stay_in_window(self):
        cfg = ContrastiveConfig(anchor_count=32, negative_window=8, negatives=10)
        pairs = sample_pairs(np.zeros((2, 40, 40)), np.zeros((2, 40, 40)), rng_seed=0, cfg=cfg)
        offset = pairs.negatives - pairs.anchors[:, None, :]
        assert offset.min() >= -4 and offset.max() <= 3

    def test_deterministic_in_seed(self):
        cfg = ContrastiveConfig(anchor_count=16)
        features = np.zeros((2, 12, 20))
        a = sample_pairs(features, features, 7, cfg)
        b = sample_pairs(features, features, 7, cfg)
        c = sample_pairs(features, features, 8, cfg)
        np.testing.assert_array_equal(a.negatives, b.negatives)
        assert not np.array_equal(a.negatives, c.negatives)

    def test_rejects_mismatched_features(self):
        with pytest.raises(ValueError):
            sample_pairs(np.zeros((2, 8, 8)), np.zeros((2, 8, 9)), 0, ContrastiveConfig())


class TestInfoNce:
    def test_uniform_logits_give_log_count(self):
        anchors = np.tile(_basis(4, 0), (3, 1))
        keys = np.tile(_basis(4, 1), (3, 1))
        negatives = np.tile(_basis(4, 1), (3, 5, 1))
        queue = np.tile(_basis(4, 2), (4, 1))
        loss = infonce_loss(Tensor(anchors), Tensor(keys), Tensor(negatives), queue, 0.07)
        assert loss.item() == pytest.approx(math.log(10), rel=1e-6)

    def test_hand_evaluated_case(self):
        anchors = Tensor(np.array([[1.0, 0.0]]))
        positives = Tensor(np.array([[1.0, 0.0]]))
        negatives = Tensor(np.array([[[0.0, 1.0]]]))
        loss = infonce_loss(anchors, positives, negatives, np.zeros((0, 2)), 1.0)
        assert loss.item() == pytest.approx(-math.log(math.e / (math.e + 1)), rel=1e-6)
        assert loss.item() == pytest.approx(0.3133, abs=1e-4)

    def test_rejects_unnormalized(self):
        anchors = Tensor(np.array([[2.0, 0.0]]))
        positives = Tensor(np.array([[1.0, 0.0]]))
        negatives = Tensor(np.array([[[0.0, 1.0]]]))
        with pytest.raises(ValueError):
            infonce_loss(anchors, positives, negatives, np.zeros((0, 2)), 0.07)

    def test_monotone_in_similarities(self):
        def loss_for(pos_angle, neg_angle):
            anchors = Tensor(np.array([[1.0, 0.0]]))
            positive = Tensor(np.array([[math.cos(pos_angle), math.sin(pos_angle)]]))
            negative = Tensor(np.array([[[math.cos(neg_angle), math.sin(neg_angle)]]]))
            return infonce_loss(anchors, positive, negative, np.zeros((0, 2)), 0.5).item()

        assert loss_for(0.1, 1.0) < loss_for(0.4, 1.0)
        assert loss_for(0.3, 0.5) > loss_for(0.3, 1.2)

    def test_keys_receive_no_gradient(self):
        reset_tape()
        rng = np.random.default_rng(0)
        anchors = Tensor(_unit(rng, (4, 3)), requires_grad=True)
        positives = Tensor(_unit(rng, (4, 3)), requires_grad=True)
        negatives = Tensor(_unit(rng, (4, 6, 3)), requires_grad=True)
        grads = backward(infonce_loss(anchors, positives, negatives, _unit(rng, (5, 3)), 0.07))
        assert anchors in grads
        assert positives not in grads and negatives not in grads

    def test_gradient(self):
        with precision(64):
            rng = np.random.default_rng(1)
            positives, negatives, queue = _unit(rng, (5, 4)), _unit(rng, (5, 7, 4)), _unit(rng, (6, 4))

            def fn(t):
                return infonce_loss(ops.l2_normalize(t, axis=-1), Tensor(positives), Tensor(negatives), queue, 0.5)

            report = grad_check(fn, rng.normal(size=(5, 4)))
        assert report.passed(), report

    def test_contrastive_loss_on_feature_maps(self):
        rng = np.random.default_rng(2)
        cfg = ContrastiveConfig(anchor_count=8, negatives=6, negative_window=8)
        query = Tensor(rng.normal(size=(4, 10, 12)), requires_grad=True)
        key = Tensor(rng.normal(size=(4, 10, 12)))
        loss = contrastive_loss(query, key, _unit(rng, (3, 4)), rng_seed=5, cfg=cfg)
        assert np.isfinite(loss.item()) and loss.item() > 0


class TestMemoryQueue:
    def test_overwrites_oldest(self):
        queue = MemoryQueue(capacity=4, dim=2)
        rng = np.random.default_rng(0)
        first = _unit(rng, (3, 2))
        second = _unit(rng, (3, 2))
        queue.enqueue(first)
        queue.enqueue(second)
        assert queue.fill == 4 and queue.cursor == 2
        np.testing.assert_allclose(queue.buffer[0], second[1], rtol=1e-6)
        np.testing.assert_allclose(queue.buffer[2], first[2], rtol=1e-6)

    def test_draw_is_clamped_to_fill(self):
        queue = MemoryQueue(capacity=16, dim=3)
        queue.enqueue(_unit(np.random.default_rng(1), (5, 3)))
        assert queue.draw(512, np.random.default_rng(0)).shape == (5, 3)
        assert MemoryQueue(4, 3).draw(2, np.random.default_rng(0)).shape == (0, 3)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            MemoryQueue(4, 2).enqueue(np.array([[3.0, 4.0]]))

    def test_queue_update_stores_unit_vectors(self):
        queue = MemoryQueue(capacity=10, dim=4)
        features = np.random.default_rng(2).normal(size=(4, 3, 5))
        for step in range(3):
            fill_before = queue.fill
            queue_update(queue, features, np.random.default_rng(step), count=4)
            assert queue.fill >= fill_before
        assert queue.fill == 10
        np.testing.assert_allclose(np.linalg.norm(queue.contents(), axis=1), 1.0, atol=1e-6)

    def test_restore_validates(self):
        queue = MemoryQueue(4, 2)
        with pytest.raises(ValueError):
            queue.restore(np.zeros((3, 2)), 0, 0)
        with pytest.raises(ValueError):
            queue.restore(np.zeros((4, 2)), 0, 5)
