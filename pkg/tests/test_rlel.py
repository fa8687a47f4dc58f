import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from labelcode import codebook as cb
from labelcode import rlel
from labelcode.gradcheck import check_gradients
from labelcode.tensornet import NetGraph, OptimConfig, sgd_step, zero_grads


def make_head(seed=0, n_in=5, theta=3, m=6, n=8):
    return rlel.RlelHead(n_in, theta, m, n, np.random.default_rng(seed))


def phi_oracle(y, n):
    w = [math.exp(-abs(j - y)) for j in range(1, n + 1)]
    return [v / sum(w) for v in w]


class TestSoftTarget:
    def test_n3(self):
        np.testing.assert_allclose(rlel.soft_target(2.0, 3), [0.2119, 0.5761, 0.2119], atol=5e-5)

    def test_y1_decreasing(self):
        assert (np.diff(rlel.soft_target(1.0, 10)) < 0).all()

    @settings(max_examples=1000, deadline=None)
    @given(st.integers(2, 64).flatmap(lambda n: st.tuples(st.just(n), st.floats(1, n))))
    def test_matches_oracle_and_sums_to_one(self, args):
        n, y = args
        p = rlel.soft_target(y, n)
        assert abs(p.sum() - 1) <= 1e-12
        np.testing.assert_allclose(p, phi_oracle(y, n), rtol=1e-12)


class TestRegularisers:
    def test_r1_hand_example(self):
        assert float(rlel.r1_loss(np.zeros((2, 3)), [1, 3]).data) == 8.0

    def test_r1_equal_labels(self):
        z = np.random.default_rng(0).normal(size=(4, 3))
        assert float(rlel.r1_loss(z, [2, 2, 2, 2]).data) == 0.0

    def test_r1_satisfied_hinge(self):
        z = np.array([[0.0, 0.0], [3.0, 2.0]])
        assert float(rlel.r1_loss(z, [1, 3.5]).data) == 0.0

    def test_r1_bruteforce(self):
        rng = np.random.default_rng(1)
        z = rng.normal(size=(4, 3))
        y = rng.uniform(1, 8, 4)
        expected = sum(max(0.0, 2 * abs(y[i] - y[j]) - np.abs(z[i] - z[j]).sum()) for i in range(4) for j in range(4))
        assert float(rlel.r1_loss(z, y).data) == pytest.approx(expected, rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31))
    def test_r1_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.normal(size=(5, 3))
        y = rng.uniform(1, 6, 5)
        perm = rng.permutation(5)
        a = float(rlel.r1_loss(z, y).data)
        b = float(rlel.r1_loss(z[perm], y[perm]).data)
        assert a == pytest.approx(b, rel=1e-12)

    def test_r1_rejects_scale(self):
        with pytest.raises(ValueError):
            rlel.r1_loss(np.zeros((2, 2)), [1, 2], scale=0)

    def test_r2_examples(self):
        assert float(rlel.r2_loss(np.full((3, 5), 0.7)).data) == 0.0
        assert float(rlel.r2_loss(np.array([[0.0, 1.0, 0.0]])).data) == 2.0
        assert float(rlel.r2_loss(cb.unary_code(4).bits.T.astype(float)).data) == 3.0

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 6)), elements=st.integers(-2, 2)))
    def test_r2_zero_iff_rows_constant(self, D):
        constant = (D == D[:, :1]).all()
        assert (float(rlel.r2_loss(D).data) == 0.0) == constant

    def test_transitions_approx(self):
        assert rlel.transitions_approx([[0, 0], [1, 0], [1, 1]]) == 2.0


class TestHead:
    def test_theta_must_be_below_m(self):
        with pytest.raises(ValueError, match="theta"):
            rlel.RlelHead(4, 6, 6, 8, np.random.default_rng(0))

    def test_shapes_and_ranges(self):
        head = make_head()
        out = head(np.random.default_rng(1).normal(size=(7, 5)))
        assert out.Z.shape == (7, 6) and out.C.shape == (7, 8) and head.D.shape == (6, 8)
        np.testing.assert_allclose(out.C.data.sum(axis=1), 1.0, atol=1e-12)
        assert ((out.y_hat.data > 1) & (out.y_hat.data < 8)).all()

    def test_expectation(self):
        head = make_head()
        out = head(np.random.default_rng(2).normal(size=(3, 5)))
        np.testing.assert_allclose(out.y_hat.data, out.C.data @ np.arange(1, 9), rtol=1e-14)

    def test_uniform_c(self):
        head = make_head()
        head.D.data[:] = 0.0
        assert head(np.ones((2, 5))).y_hat.data == pytest.approx([4.5, 4.5])

    def test_dominant_column(self):
        head = make_head()
        head.D.data[:] = 0.0
        head.D.data[:, 2] = 50.0
        feats = np.random.default_rng(3).normal(size=(20, 5))
        z = head(feats).Z.data.sum(axis=1)
        y = head(feats).y_hat.data
        # column 3 wins wherever the code correlates positively with it
        np.testing.assert_allclose(y[z > 0.5], 3.0, atol=1e-6)

    def test_feature_mismatch(self):
        with pytest.raises(ValueError):
            make_head()(np.zeros((2, 4)))


class TestLoss:
    def test_plain_ce_when_unregularised(self):
        head = make_head()
        x = np.random.default_rng(4).normal(size=(4, 5))
        y = np.array([1.0, 2.5, 8.0, 4.0])
        out = head(x)
        loss = rlel.rlel_loss(out, head.D, y, rlel.RlelLossConfig(alpha=0, beta=0))
        p = out.C.data
        expected = -(rlel.soft_target(y, 8) * np.log(p)).sum()
        assert float(loss.data) == pytest.approx(expected, rel=1e-12)

    def test_full_loss_composition(self):
        head = make_head()
        x = np.random.default_rng(5).normal(size=(4, 5))
        y = np.array([1.0, 2.5, 8.0, 4.0])
        cfg = rlel.RlelLossConfig(alpha=0.3, beta=2.0)
        out = head(x)
        expected = (float(rlel.soft_ce(out.logits, y, 8).data) + 0.3 * float(rlel.r2_loss(head.D).data)
                    + 2.0 * float(rlel.r1_loss(out.Z, y).data))
        assert float(rlel.rlel_loss(out, head.D, y, cfg).data) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_full_loss_gradient(self, seed):
        rng = np.random.default_rng(seed)
        backbone = NetGraph.mlp([4, 6], ["tanh"], rng)
        head = rlel.RlelHead(6, 3, 5, 8, rng)
        model = rlel.RlelModel(backbone, head, rlel.RlelLossConfig(alpha=0.1, beta=1.0))
        x = rng.normal(size=(4, 4))
        y = rng.uniform(1, 8, 4)
        params = backbone.parameters() + head.parameters()
        errs = check_gradients(lambda: model.loss(x, y)[0], params)
        assert max(errs.values()) < 1e-4

    def test_non_finite(self):
        head = make_head()
        head.D.data[:] = np.nan
        with pytest.raises(rlel.NonFiniteLoss):
            rlel.rlel_loss(head(np.ones((2, 5))), head.D, [1, 2], rlel.RlelLossConfig())

    def test_ce_approaches_entropy_on_one_point(self):
        rng = np.random.default_rng(0)
        head = rlel.RlelHead(3, 2, 4, 5, rng)
        x = np.array([[0.5, -1.0, 0.3]])
        y = np.array([2.3])
        phi = rlel.soft_target(y, 5)
        entropy = float(-(phi * np.log(phi)).sum())
        groups = {"head": head.code_parameters(), "decoder": [head.D]}
        optim = OptimConfig(lr=0.05, group_multipliers={"decoder": 10.0})
        cfg = rlel.RlelLossConfig(alpha=0, beta=0)
        for _ in range(3000):
            zero_grads(groups)
            loss = rlel.rlel_loss(head(x), head.D, y, cfg)
            loss.backward()
            sgd_step(groups, optim)
        final = float(rlel.rlel_loss(head(x), head.D, y, cfg).data)
        assert entropy <= final < entropy + 1e-2


class TestLabelMap:
    def test_round_trip(self):
        lm = rlel.LabelMap(0.0, 100.0, 64)
        y = np.array([0.0, 13.7, 100.0])
        np.testing.assert_allclose(lm.to_raw(lm.to_levels(y)), y, atol=1e-12)
        assert lm.to_levels([0.0, 100.0]).tolist() == [1.0, 64.0]

    def test_quantize(self):
        lm = rlel.LabelMap(0.0, 1.0, 4)
        assert lm.quantize([1.0, 1.5, 2.49, 4.2, 0.1]).tolist() == [1, 2, 2, 4, 1]

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            rlel.LabelMap(1.0, 1.0, 4)


class TestEncoding:
    def test_mean_per_level(self):
        enc = rlel.extract_encoding([[1, 3], [3, 5], [7, 7]], [2, 2, 3], 3)
        assert enc.E[1].tolist() == [2, 4]
        assert enc.E[2].tolist() == [7, 7]
        assert np.isnan(enc.E[0]).all() and enc.populated.tolist() == [False, True, True]

    def test_diagnostics_hand(self):
        enc = rlel.extract_encoding([[0, 0], [1, 0], [1, 1]], [1, 2, 3], 3)
        d = rlel.encoding_diagnostics(enc)
        assert d.approx_transitions == 2.0
        assert d.binary_transitions == 2
        assert [(a, b, g) for a, b, g, _ in d.pairs] == [(1, 2, 1), (1, 3, 2), (2, 3, 1)]
        assert d.distance_corr == pytest.approx(1.0)

    def test_identical_rows_degenerate(self):
        enc = rlel.extract_encoding(np.ones((4, 3)), [1, 2, 3, 4], 4)
        d = rlel.encoding_diagnostics(enc)
        assert d.distance_corr is None and d.corr_flag == "degenerate"

    def test_empty_levels_excluded(self):
        # level 3 is empty, so the 2|4 boundary does not count as adjacent
        enc = rlel.extract_encoding([[0.0], [1.0], [5.0], [6.0]], [1, 2, 4, 5], 5)
        d = rlel.encoding_diagnostics(enc)
        assert d.approx_transitions == 2.0
        assert all(3 not in (a, b) for a, b, _, _ in d.pairs)

    def test_too_few_pairs(self):
        d = rlel.encoding_diagnostics(rlel.extract_encoding([[0.0], [1.0]], [1, 2], 4))
        assert d.corr_flag == "too_few_pairs"

    def test_needs_two_levels(self):
        with pytest.raises(ValueError):
            rlel.encoding_diagnostics(rlel.extract_encoding([[0.0], [1.0]], [2, 2], 4))
