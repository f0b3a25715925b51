import numpy as np
import pytest

from oracles import (dense_forward_oracle, finite_diff_grads, max_rel_err,
                     random_small_instance, topk_gap)
from sparsegate import moe
from sparsegate.tensor_core import Rng


def make_layer(n, k, in_dim, out_dim, seed=0, mode="inference"):
    layer = moe.init_layer(n, k, in_dim, out_dim, Rng(seed), mode=mode)
    return layer


class TestGate:
    def test_zero_init_uniform(self):
        layer = make_layer(4, 4, 6, 3)
        g = moe.gate(layer, Rng(1).standard_normal((5, 6)))
        np.testing.assert_allclose(g.G, 0.25, atol=1e-12)

    def test_derived_softmax_over_top2(self):
        layer = make_layer(4, 2, 4, 3)
        layer.W_g[...] = np.eye(4)  # logits equal the input
        g = moe.gate(layer, np.array([[2.0, 1.0, 0.0, -1.0]]))
        np.testing.assert_allclose(g.G[0], [0.7311, 0.2689, 0.0, 0.0], atol=5e-5)
        assert g.G[0, 2] == 0.0 and g.G[0, 3] == 0.0

    def test_k_equals_n_is_plain_softmax(self):
        layer = make_layer(5, 5, 6, 3, seed=2)
        layer.W_g[...] = Rng(3).standard_normal((6, 5))
        x = Rng(4).standard_normal((7, 6))
        from sparsegate.tensor_core import softmax
        np.testing.assert_allclose(moe.gate(layer, x).G,
                                   softmax(x @ layer.W_g, axis=1), atol=1e-12)

    def test_sparsity_rows(self):
        layer = make_layer(8, 3, 5, 2, seed=5)
        layer.W_g[...] = Rng(6).standard_normal((5, 8))
        g = moe.gate(layer, Rng(7).standard_normal((40, 5)))
        assert np.all((g.G > 0).sum(axis=1) == 3)
        np.testing.assert_allclose(g.G.sum(axis=1), 1.0, atol=1e-6)

    def test_train_mode_needs_rng(self):
        layer = make_layer(4, 2, 5, 3, mode="train")
        with pytest.raises(ValueError, match="rng"):
            moe.gate(layer, np.zeros((1, 5)))

    def test_k_greater_than_n_rejected(self):
        with pytest.raises(ValueError):
            make_layer(3, 4, 5, 2)

    def test_shift_invariance(self):
        layer = make_layer(5, 2, 5, 2, seed=8)
        layer.W_g[...] = Rng(9).standard_normal((5, 5))
        x = Rng(10).standard_normal((10, 5))
        g1 = moe.gate(layer, x).G
        layer.W_g += 3.7  # adds a constant to every logit in each row
        g2 = moe.gate(layer, x).G
        np.testing.assert_allclose(g1, g2, atol=1e-9)


class TestForward:
    def test_single_identity_expert(self):
        layer = make_layer(1, 1, 4, 4)
        layer.experts[0][...] = np.eye(4)
        x = Rng(11).standard_normal((6, 4))
        y, _ = moe.forward(layer, x)
        np.testing.assert_allclose(y, x, atol=1e-12)

    @pytest.mark.parametrize("k", [2, 6])
    def test_matches_dense_oracle(self, k):
        layer = make_layer(6, k, 5, 4, seed=12)
        layer.W_g[...] = Rng(13).standard_normal((5, 6))
        x = Rng(14).standard_normal((30, 5))
        y, g = moe.forward(layer, x)
        y_ref, g_ref = dense_forward_oracle(layer, x)
        np.testing.assert_allclose(y, y_ref, rtol=1e-5, atol=1e-12)
        np.testing.assert_allclose(g.G, g_ref, atol=1e-9)

    def test_inference_deterministic(self):
        layer = make_layer(6, 2, 5, 4, seed=15)
        x = Rng(16).standard_normal((8, 5))
        y1, _ = moe.forward(layer, x)
        y2, _ = moe.forward(layer, x)
        np.testing.assert_array_equal(y1, y2)

    def test_noise_replay_bit_for_bit(self):
        layer = make_layer(6, 2, 5, 4, seed=17, mode="train")
        layer.W_noise[...] = Rng(18).standard_normal((5, 6))
        x = Rng(19).standard_normal((8, 5))
        rec1 = moe.forward(layer, x, Rng(42), record=True)
        rec2 = moe.forward(layer, x, Rng(42), record=True)
        assert rec1.eps.tobytes() == rec2.eps.tobytes()
        assert rec1.y.tobytes() == rec2.y.tobytes()


class TestImportanceAndLoss:
    def test_uniform_rows(self):
        G = np.full((4, 4), 0.25)
        np.testing.assert_allclose(moe.importance(G), [1, 1, 1, 1])

    def test_one_hot_concentration(self):
        G = np.array([[1.0, 0.0], [1.0, 0.0]])
        np.testing.assert_allclose(moe.importance(G), [2.0, 0.0])

    def test_column_addition(self):
        G = np.array([[0.7311, 0.2689, 0, 0], [0.2689, 0.7311, 0, 0]])
        np.testing.assert_allclose(moe.importance(G), [1, 1, 0, 0])

    def test_uniform_importance_zero_loss(self):
        G = np.full((4, 4), 0.25)
        assert moe.load_balance_loss(G, 0.1).loss == 0.0

    def test_concentrated_importance(self):
        # importance [2,0,0,0]: mean 0.5, population std sqrt(0.75), cv^2 = 3
        G = np.array([[1.0, 0, 0, 0], [1.0, 0, 0, 0]])
        report = moe.load_balance_loss(G, 0.1)
        assert abs(report.loss - 0.3) < 1e-9
        assert abs(report.cv ** 2 - 3.0) < 1e-9

    def test_zero_weight(self):
        G = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert moe.load_balance_loss(G, 0.0).loss == 0.0

    def test_zero_mean_importance_rejected(self):
        with pytest.raises(ValueError):
            moe.load_balance_loss(np.zeros((2, 3)), 0.1)

    def test_importance_conservation(self):
        layer = make_layer(8, 3, 5, 2, seed=20)
        layer.W_g[...] = Rng(21).standard_normal((5, 8))
        g = moe.gate(layer, Rng(22).standard_normal((64, 5)))
        assert abs(moe.importance(g.G).sum() - 64) < 1e-6


class TestBackward:
    def test_zero_loss_zero_grads(self):
        layer, x, _, rng = random_small_instance(0)
        rec = moe.forward(layer, x, rng, record=True)
        grads = moe.backward(layer, rec, np.zeros_like(rec.y), w_importance=0.0)
        assert not np.any(grads.W_g)
        assert not np.any(grads.W_noise)
        assert not any(np.any(g) for g in grads.experts)
        assert not np.any(grads.x)

    def test_matches_finite_differences(self):
        checked = 0
        seed = 0
        while checked < 10:
            seed += 1
            layer, x, targets, rng = random_small_instance(seed)
            rec = moe.forward(layer, x, rng, record=True)
            if topk_gap(rec.gate.H, layer.k) < 1e-4:
                continue
            grads = moe.backward(layer, rec, 2 * (rec.y - targets) / rec.y.size,
                                 w_importance=0.1)
            fd = finite_diff_grads(layer, x, targets, rec.eps, 0.1)
            assert max_rel_err(fd["W_g"], grads.W_g) < 1e-4
            assert max_rel_err(fd["W_noise"], grads.W_noise) < 1e-4
            for ref, got in zip(fd["experts"], grads.experts):
                assert max_rel_err(ref, got) < 1e-4
            assert max_rel_err(fd["x"], grads.x) < 1e-4
            checked += 1

    def test_inactive_expert_zero_grad(self):
        # all-zero logits tie-break to the lowest indices, so experts 2 and 3
        # never enter any top-2 set
        layer, x, _, _ = random_small_instance(3)
        layer.mode = "inference"
        layer.W_g[...] = 0.0
        rec = moe.forward(layer, x, record=True)
        assert not np.any(rec.gate.active_indices >= 2)
        grads = moe.backward(layer, rec, np.ones_like(rec.y), w_importance=0.0)
        assert not np.any(grads.experts[2])
        assert not np.any(grads.experts[3])
        assert np.any(grads.experts[0])

    def test_requires_recorded_state(self):
        layer, x, _, rng = random_small_instance(4)
        rec = moe.forward(layer, x, rng, record=True)
        rec.y = None
        with pytest.raises(ValueError):
            moe.backward(layer, rec, np.zeros((x.shape[0], layer.out_dim)))


class TestTrainLite:
    def _setup(self, seed=0):
        rng = Rng(seed)
        layer = moe.init_layer(4, 2, 8, 4, rng.child(0))
        x, t = moe.make_regime_dataset(rng.child(1), 64, 8, 4)
        return layer, x, t, rng.child(2)

    def test_zero_epochs(self):
        layer, x, t, rng = self._setup()
        wg_before = layer.W_g.copy()
        trace = moe.train_lite(layer, x, t, 0, 0.1, 0.1, rng)
        assert len(trace) == 0
        np.testing.assert_array_equal(layer.W_g, wg_before)

    def test_zero_lr_leaves_params(self):
        layer, x, t, rng = self._setup(1)
        experts_before = [e.copy() for e in layer.experts]
        moe.train_lite(layer, x, t, 5, 0.0, 0.1, rng)
        for before, after in zip(experts_before, layer.experts):
            np.testing.assert_array_equal(before, after)

    def test_loss_decreases(self):
        layer, x, t, rng = self._setup(2)
        trace = moe.train_lite(layer, x, t, 200, 0.1, 0.1, rng)
        assert trace.task_loss[-1] < trace.task_loss[0]
        assert np.isfinite(trace.final_cv)
