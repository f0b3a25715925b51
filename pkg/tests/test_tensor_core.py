import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsegate.tensor_core import Rng, elu, matmul, softmax


class TestMatmul:
    def test_identity(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(matmul(x, np.eye(2)), x)

    def test_hand_arithmetic(self):
        out = matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))
        np.testing.assert_allclose(out, [[11.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            matmul(np.zeros((2, 3)), np.zeros((4, 2)))

    def test_associativity(self):
        rng = Rng(0)
        a = rng.standard_normal((8, 5))
        b = rng.standard_normal((5, 7))
        c = rng.standard_normal((7, 4))
        left = matmul(matmul(a, b), c)
        right = matmul(a, b @ c)
        np.testing.assert_allclose(left, right, rtol=1e-6)


class TestElu:
    def test_values(self):
        x = np.array([0.0, 2.0, -1.0])
        np.testing.assert_allclose(elu(x), [0.0, 2.0, np.exp(-1) - 1], atol=1e-12)

    @given(st.floats(-50, 50))
    def test_monotone_and_continuous(self, v):
        assert elu(np.array([v])) <= elu(np.array([v + 1e-3])) + 1e-15
        # continuity at 0
        assert abs(elu(np.array([1e-9]))[0] - elu(np.array([-1e-9]))[0]) < 1e-8


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5])

    def test_masked_entry_exact_zero(self):
        out = softmax(np.array([-np.inf, 0.0]))
        assert out[0] == 0.0 and out[1] == 1.0

    def test_derived_values(self):
        np.testing.assert_allclose(softmax(np.array([2.0, 1.0])),
                                   [0.7311, 0.2689], atol=5e-5)

    def test_all_neg_inf_rejected(self):
        with pytest.raises(ValueError):
            softmax(np.array([-np.inf, -np.inf]))

    @settings(max_examples=50)
    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=8),
           st.floats(-100, 100))
    def test_shift_invariance(self, vals, c):
        x = np.array(vals)
        np.testing.assert_allclose(softmax(x), softmax(x + c), atol=1e-9)

    def test_sums_to_one(self):
        x = Rng(3).standard_normal((50, 9))
        np.testing.assert_allclose(softmax(x, axis=1).sum(axis=1), 1.0, atol=1e-9)


class TestRng:
    def test_determinism(self):
        a = Rng(123).standard_normal(4)
        b = Rng(123).standard_normal(4)
        assert a.tobytes() == b.tobytes()

    def test_seed_sensitivity(self):
        assert not np.array_equal(Rng(1).standard_normal(4), Rng(2).standard_normal(4))

    def test_moments(self):
        samples = Rng(7).standard_normal(10**6)
        assert abs(samples.mean()) < 0.01
        assert abs(samples.var() - 1.0) < 0.01

    def test_split_reproducible_and_independent(self):
        kids = Rng(5).split(3)
        again = Rng(5).split(3)
        streams = [k.standard_normal(8) for k in kids]
        for s, s2 in zip(streams, (k.standard_normal(8) for k in again)):
            assert s.tobytes() == s2.tobytes()
        for i in range(3):
            for j in range(i + 1, 3):
                assert not np.array_equal(streams[i], streams[j])

    def test_split_leaves_parent_untouched(self):
        parent = Rng(9)
        before = Rng(9).standard_normal(4)
        parent.split(4)
        np.testing.assert_array_equal(parent.standard_normal(4), before)
