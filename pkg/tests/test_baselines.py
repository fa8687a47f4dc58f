import numpy as np
import pytest

from labelcode import baselines as bl
from labelcode import codebook as cb
from labelcode.gradcheck import check_gradients
from labelcode.rlel import soft_target
from labelcode.tensornet import Dense, NetGraph


def backbone(rng, d=4, width=6):
    return NetGraph.mlp([d, width], ["tanh"], rng)


class TestDirect:
    def test_zero_loss_at_target(self):
        head = Dense(3, 1, "identity")
        head.W.data[:] = [[1.0], [0.0], [0.0]]
        x = np.array([[0.2, 5, 5], [0.7, -1, 2]])
        for kind in ("direct_l1", "direct_l2"):
            loss, pred = bl.direct_forward_loss(head, x, [0.2, 0.7], kind)
            assert float(loss.data) == 0.0
            np.testing.assert_allclose(pred, [0.2, 0.7])

    def test_l2_gradient_unit_residual(self):
        head = Dense(1, 1, "identity")
        head.W.data[:] = 0.0
        head.b.data[:] = 1.0
        loss, _ = bl.direct_forward_loss(head, np.zeros((3, 1)), np.zeros(3), "direct_l2")
        loss.backward()
        assert head.b.grad.tolist() == [6.0]  # 2 per sample

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            bl.direct_forward_loss(Dense(1, 1), np.zeros((1, 1)), [0.0], "huber")

    def test_scaled_space_raw_predictions(self):
        rng = np.random.default_rng(0)
        model = bl.DirectModel(backbone(rng), "direct_l2", 8, rng, label_scale=0.25)
        x = rng.normal(size=(5, 4))
        raw = model.head(model.backbone(x)).data.reshape(-1)
        np.testing.assert_allclose(model.predict(x), raw / 0.25)
        loss, pred = model.loss(x, np.arange(1.0, 6.0))
        expected = ((raw - 0.25 * np.arange(1.0, 6.0)) ** 2).sum()
        assert float(loss.data) == pytest.approx(expected)
        np.testing.assert_allclose(pred, raw / 0.25)

    def test_default_scale(self):
        rng = np.random.default_rng(0)
        assert bl.DirectModel(backbone(rng), "direct_l1", 64, rng).label_scale == 1 / 64


class TestMulticlass:
    def test_constant_logits_midpoint(self):
        head = Dense(3, 7, "identity")
        head.W.data[:] = 0.0
        _, pred = bl.multiclass_forward_loss(head, np.ones((2, 3)), [1, 7])
        np.testing.assert_allclose(pred, 4.0)

    def test_gibbs(self):
        y = 3.4
        phi = soft_target(y, 6)
        head = Dense(1, 6, "identity")
        head.W.data[:] = 0.0
        head.b.data[:] = np.log(phi)
        loss, _ = bl.multiclass_forward_loss(head, np.zeros((1, 1)), [y])
        entropy = -(phi * np.log(phi)).sum()
        assert float(loss.data) == pytest.approx(entropy, rel=1e-12)
        head.b.data[:] = np.log(phi) + np.random.default_rng(0).normal(size=6)
        assert float(bl.multiclass_forward_loss(head, np.zeros((1, 1)), [y])[0].data) > entropy


class TestBel:
    def test_perfect_bits_small_loss(self):
        code = cb.unary_code(5)
        head = NetGraph([Dense(5, 4, "identity")])
        head.layers[0].W.data = 40.0 * code.signed()
        head.layers[0].b.data[:] = 0.0
        loss, pred = bl.bel_forward_loss(head, np.eye(5), np.arange(1, 6), code)
        assert float(loss.data) < 1e-10
        np.testing.assert_allclose(pred, np.arange(1, 6), atol=0.2)

    @pytest.mark.parametrize("n", [2, 3, 8, 17, 32])
    def test_unary_perfect_bits_argmax(self, n):
        code = cb.unary_code(n)
        corr = (2.0 * code.bits - 1.0) @ bl.bel_decode_matrix(code)
        assert (np.argmax(corr, axis=1) == np.arange(n)).all()

    def test_decode_matrix_is_signed_code(self):
        code = cb.johnson_code(6)
        D = bl.bel_decode_matrix(code)
        assert D.shape == (3, 6)
        np.testing.assert_array_equal(D[:, 2], 2.0 * code.row(3) - 1.0)

    def test_kind_requires_code(self):
        with pytest.raises(ValueError):
            bl.BaselineKind("bel")
        with pytest.raises(ValueError):
            bl.BaselineKind("ridge")


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("method", ["direct_l1", "direct_l2", "multiclass", "bel"])
def test_gradients(method, seed):
    rng = np.random.default_rng(seed)
    bb = backbone(rng)
    n = 8
    if method.startswith("direct"):
        model = bl.DirectModel(bb, method, n, rng)
    elif method == "multiclass":
        model = bl.MulticlassModel(bb, n, rng, depth=2, hidden=5)
    else:
        model = bl.BelModel(bb, cb.johnson_code(n), rng, theta=3)
    x = rng.normal(size=(4, 4))
    y = rng.uniform(1, n, 4)
    params = [p for g in model.param_groups().values() for p in g]
    errs = check_gradients(lambda: model.loss(x, y)[0], params)
    assert max(errs.values()) < 1e-4, errs
