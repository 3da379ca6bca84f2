import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phsic.errors import DimensionError, StateError
from phsic.kernels import GroupingSpec
from phsic.network import (
    Network,
    NetworkConfig,
    ReadoutState,
    group_response,
    lrelu,
    lrelu_deriv,
    readout_forward,
    softmax_cross_entropy,
)
from phsic.numerics import make_rng


class TestLrelu:
    def test_positive(self):
        assert lrelu(5.0, 0.01) == 5.0

    def test_negative(self):
        assert lrelu(-2.0, 0.01) == pytest.approx(-0.02)

    def test_zero(self):
        assert lrelu(0.0, 0.01) == 0.0

    def test_derivative_tie_break_at_zero(self):
        assert lrelu_deriv(0.0, 0.01) == 1.0
        assert lrelu_deriv(-1e-12, 0.01) == 0.01
        assert lrelu_deriv(3.0, 0.01) == 1.0


class TestGroupResponse:
    def test_all_zero_activity(self):
        spec = GroupingSpec(2, exponent_p=0.2, smoothing_delta=1.0)
        u, v, zc = group_response(np.zeros(8), spec)
        np.testing.assert_allclose(u, 0.25)  # delta / members = 1/4
        np.testing.assert_allclose(v, 0.0, atol=1e-15)
        np.testing.assert_allclose(zc, 0.0)

    def test_single_group_hand_case(self):
        spec = GroupingSpec(1, exponent_p=0.2, smoothing_delta=1.0)
        u, v, zc = group_response(np.array([1.0, -1.0]), spec)
        np.testing.assert_allclose(zc, [1.0, -1.0])
        np.testing.assert_allclose(u, [1.5])  # 1/2 + mean(1, 1) = 0.5 + 1
        np.testing.assert_allclose(v, [0.0], atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_v_sums_to_zero_and_u_bounded(self, seed):
        rng = make_rng(seed)
        spec = GroupingSpec(4, exponent_p=0.3, smoothing_delta=0.7)
        z = rng.uniform(-1e3, 1e3, size=12)
        u, v, zc = group_response(z, spec)
        assert abs(v.sum()) < 1e-10 * max(1.0, np.abs(v).max())
        assert np.all(u >= 0.7 / 3)  # delta / members
        assert np.all(np.isfinite(v))

    def test_batch_axis(self):
        rng = make_rng(3)
        spec = GroupingSpec(2)
        z = rng.normal(size=(5, 6))
        u, v, zc = group_response(z, spec)
        assert u.shape == (5, 2) and v.shape == (5, 2) and zc.shape == (5, 6)
        u0, v0, zc0 = group_response(z[0], spec)
        np.testing.assert_allclose(u[0], u0)
        np.testing.assert_allclose(v[0], v0)


class TestForward:
    def test_identity_weights_hand_case(self):
        net = Network.build(NetworkConfig((2, 2), n_classes=2), make_rng(0))
        net.layers[0].W = np.eye(2)
        out = net.forward(np.array([1.0, -1.0]), mode="eval")
        np.testing.assert_allclose(out, [[1.0, -0.01]])

    def test_divnorm_constant_group_outputs_zero(self):
        spec = GroupingSpec(2, divisive_normalization=True)
        net = Network.build(NetworkConfig((4, 4), n_classes=2, grouping=spec),
                            make_rng(1))
        # weights that replicate the input so each group is constant
        net.layers[0].W = np.zeros((4, 4))
        net.layers[0].W[:, 0] = 1.0  # every unit sees x[0]
        out = net.forward(np.array([2.0, 0.0, 0.0, 0.0]), mode="eval")
        np.testing.assert_allclose(out, 0.0, atol=1e-15)

    def test_eval_deterministic_and_dropout_free(self):
        cfg = NetworkConfig((6, 8, 4), n_classes=3, dropout_rate=0.5)
        net = Network.build(cfg, make_rng(2))
        x = make_rng(3).normal(size=(4, 6))
        out1 = net.forward(x, mode="eval")
        out2 = net.forward(x, mode="eval")
        assert np.array_equal(out1, out2)
        assert net.layers[0].mask is None

    def test_train_dropout_masks_and_scaling(self):
        cfg = NetworkConfig((6, 50), n_classes=3, dropout_rate=0.4)
        net = Network.build(cfg, make_rng(4))
        x = make_rng(5).normal(size=(8, 6))
        net.forward(x, mode="train", rng=make_rng(6))
        mask = net.layers[0].mask
        assert mask is not None
        assert set(np.unique(mask)).issubset({0.0, 1.0 / 0.6})
        with pytest.raises(StateError):
            net.forward(x, mode="train")  # dropout needs an rng

    def test_grouping_off_equals_plain_composition(self):
        cfg = NetworkConfig((5, 7, 6), n_classes=2)
        net = Network.build(cfg, make_rng(7))
        x = make_rng(8).normal(size=(3, 5))
        out = net.forward(x, mode="eval")
        h = x
        for layer in net.layers:
            h = lrelu(h @ layer.W.T, cfg.nonlinearity_slope)
        np.testing.assert_allclose(out, h, rtol=0, atol=0)

    def test_forward_does_not_mutate_weights(self):
        net = Network.build(NetworkConfig((4, 5), n_classes=2), make_rng(9))
        before = net.layers[0].W.copy()
        net.forward(make_rng(10).normal(size=(3, 4)), mode="eval")
        assert np.array_equal(net.layers[0].W, before)

    def test_dimension_mismatch(self):
        net = Network.build(NetworkConfig((4, 5), n_classes=2), make_rng(11))
        with pytest.raises(DimensionError):
            net.forward(np.ones((2, 3)), mode="eval")

    def test_grouping_must_divide_width(self):
        with pytest.raises(Exception):
            NetworkConfig((4, 5), n_classes=2, grouping=GroupingSpec(2))

    def test_divnorm_routing_vs_plain_grouping(self):
        x = make_rng(12).normal(size=(3, 6))
        outs = {}
        for divnorm in (True, False):
            spec = GroupingSpec(2, divisive_normalization=divnorm)
            net = Network.build(
                NetworkConfig((6, 4, 4), n_classes=2, grouping=spec), make_rng(13))
            net.forward(x, mode="eval")
            outs[divnorm] = net.layers[1].inputs
            # the local quantities exist either way
            assert net.layers[0].v is not None and net.layers[0].r is not None
        assert not np.allclose(outs[True], outs[False])


class TestReadout:
    def test_zero_readout_uniform_softmax(self):
        readout = ReadoutState(W=np.zeros((5, 7)), bias=np.zeros(5))
        logits = readout_forward(readout, np.ones((3, 7)))
        loss, probs = softmax_cross_entropy(logits, np.array([0, 2, 4]))
        np.testing.assert_allclose(probs, 1.0 / 5.0)
        assert loss == pytest.approx(np.log(5.0), abs=1e-12)

    def test_confident_logits_drive_loss_to_zero(self):
        logits = np.array([[40.0, 0.0, 0.0]])
        loss, _ = softmax_cross_entropy(logits, np.array([0]))
        assert loss < 1e-12

    def test_cross_entropy_matches_direct_oracle(self):
        rng = make_rng(14)
        logits = rng.normal(size=(6, 4))
        labels = rng.integers(0, 4, size=6)
        loss, probs = softmax_cross_entropy(logits, labels)
        expv = np.exp(logits)
        ref_probs = expv / expv.sum(axis=1, keepdims=True)
        ref_loss = -np.log(ref_probs[np.arange(6), labels]).mean()
        assert loss == pytest.approx(ref_loss, rel=1e-12)
        np.testing.assert_allclose(probs, ref_probs, rtol=1e-12)

    def test_shape_mismatch(self):
        readout = ReadoutState(W=np.zeros((5, 7)), bias=np.zeros(5))
        with pytest.raises(DimensionError):
            readout_forward(readout, np.ones((3, 6)))
