import numpy as np
import pytest

from phsic.errors import KernelError, StateError
from phsic.kernels import GroupingSpec, KernelSpec, label_kernel, kernel_matrix, label_kernel_matrix
from phsic.network import Network, NetworkConfig
from phsic.numerics import make_rng
from phsic.online import (
    CircuitConfig,
    OnlineCircuitState,
    PairwiseStreamTrainer,
    SampleView,
    StreamMode,
    difference_kernel_taps,
    memory_ode_step,
    online_update_step,
    smoothing_kernel,
    temporal_difference,
    third_factor_stream,
)
from phsic.rules import pair_delta_w, two_point_update
from phsic.trainer import OptimizerState, TrainerConfig, train_batch

CFG = CircuitConfig(dt=0.01)


def layer_view(net, x) -> SampleView:
    net.forward(np.asarray(x)[None, :], mode="eval")
    layer = net.layers[0]
    return SampleView(
        x=layer.inputs[0].copy(), z=layer.z[0].copy(), g=layer.g[0].copy(),
        v=None if layer.v is None else layer.v[0].copy(),
        r=None if layer.r is None else layer.r[0].copy(),
    )


class TestSmoothingKernel:
    def test_zero_before_onset(self):
        assert smoothing_kernel(-0.5, 0.02, 25.0) == 0.0
        assert smoothing_kernel(-1e-9, 0.02, 25.0) == 0.0

    def test_zero_crossing_at_c1(self):
        assert smoothing_kernel(0.02, 0.02, 25.0) == 0.0

    def test_positive_then_negative(self):
        assert smoothing_kernel(0.01, 0.02, 25.0) > 0.0
        assert smoothing_kernel(0.05, 0.02, 25.0) < 0.0

    def test_taps_zero_sum_and_unit_step_peak(self):
        taps = difference_kernel_taps(CFG)
        assert abs(taps.sum()) < 1e-12
        step = np.concatenate([np.zeros(len(taps)), np.ones(3 * len(taps))])
        out = np.convolve(step, taps, mode="valid")
        assert abs(out.max() - 1.0) < 1e-6


class TestTemporalDifference:
    def test_constant_trace_zero(self):
        out = temporal_difference(np.full(400, -2.3), CFG)
        assert np.abs(out).max() < 1e-9

    def test_unit_step_peak(self):
        trace = np.concatenate([np.zeros(200), np.ones(200)])
        out = temporal_difference(trace, CFG)
        assert abs(out.max() - 1.0) < 0.02

    def test_two_steps_recovered(self):
        a, b, c = 0.5, 2.0, -1.0
        n = len(difference_kernel_taps(CFG))
        seg = 2 * n
        trace = np.concatenate([np.full(seg, a), np.full(seg, b), np.full(seg, c)])
        out = temporal_difference(trace, CFG)
        first = out[:2 * seg - n]
        second = out[2 * seg - n:]
        assert abs(first.max() - (b - a)) < 0.05 * abs(b - a)
        assert abs(second.min() - (c - b)) < 0.05 * abs(c - b)

    def test_linearity(self):
        rng = make_rng(0)
        x = rng.normal(size=300)
        y = rng.normal(size=300)
        lhs = temporal_difference(2.5 * x - 1.5 * y, CFG)
        rhs = 2.5 * temporal_difference(x, CFG) - 1.5 * temporal_difference(y, CFG)
        assert np.abs(lhs - rhs).max() < 1e-10

    def test_short_trace_rejected(self):
        with pytest.raises(StateError):
            temporal_difference(np.zeros(5), CFG)


class TestMemoryOde:
    def test_zero_deviation_no_change(self):
        assert memory_ode_step(1.7, 3.0, 3.0, c=0.0, dt=0.01) == 1.7

    def test_latches_cube_of_sustained_deviation(self):
        amplitude = 3.0  # |A|^3 = 27 >> 1
        omega = 0.0
        for _ in range(2000):
            omega = memory_ode_step(omega, amplitude, 0.0, c=0.0, dt=0.01)
        assert abs(omega - amplitude**3) / amplitude**3 < 0.01
        assert abs(np.cbrt(omega) - amplitude) < 0.01

    def test_leak_decay(self):
        omega = 5.0
        for _ in range(1000):
            omega = memory_ode_step(omega, 0.0, 0.0, c=0.5, dt=0.001)
        assert omega == pytest.approx(5.0 * np.exp(-0.5), rel=1e-3)

    def test_contracts_toward_cube(self):
        # update sign always points from omega toward (z - mu)^3
        for omega in (-10.0, 0.0, 5.0, 40.0):
            target = 27.0
            new = memory_ode_step(omega, 3.0, 0.0, c=0.0, dt=0.01)
            assert np.sign(new - omega) == np.sign(target - omega) or new == omega

    def test_dt_must_be_positive(self):
        with pytest.raises(StateError):
            memory_ode_step(0.0, 1.0, 0.0, c=0.0, dt=0.0)

    def test_negative_leak_rejected_in_config(self):
        with pytest.raises(StateError):
            CircuitConfig(dt=0.01, leak=-0.1)


class TestThirdFactorStream:
    def test_hand_case_zero_difference(self):
        state = OnlineCircuitState(CFG, KernelSpec.gaussian(2.0), gamma=2.0)
        state.set_centering(0.3)
        m = third_factor_stream(state, 1.0, np.zeros(4))
        # b1 = 0, kernel = 1, b2 = gamma - 2 = 0, M = -(0 - b3)/sigma^2
        assert state.b1 == 0.0
        assert state.b2 == 0.0
        assert m == pytest.approx(0.3 / 4.0, abs=1e-15)

    def test_uninitialized_state_rejected(self):
        state = OnlineCircuitState(CFG, KernelSpec.gaussian(2.0), gamma=2.0)
        with pytest.raises(StateError):
            third_factor_stream(state, 1.0, np.zeros(3))

    def test_b3_converges_geometrically(self):
        state = OnlineCircuitState(CFG, KernelSpec.gaussian(1.0), gamma=2.0)
        state.set_centering(0.0)
        delta = np.array([0.7, -0.2])
        errors = []
        for _ in range(6):
            third_factor_stream(state, 1.0, delta)
            errors.append(abs(state.b3 - state.b2))
        ratios = [errors[i + 1] / errors[i] for i in range(len(errors) - 1)]
        np.testing.assert_allclose(ratios, 1.0 - CFG.beta, rtol=1e-9)
        assert min(state.b2, 0.0) <= state.b3 <= max(state.b2, 0.0)

    def test_matches_batch_third_factor_with_exact_means(self):
        rng = make_rng(1)
        net = Network.build(NetworkConfig((6, 4), n_classes=3), make_rng(2))
        x = rng.normal(size=(2, 6))
        labels = np.array([0, 1])
        net.forward(x, mode="eval")
        layer = net.layers[0]
        spec = KernelSpec.gaussian(2.0)
        kz = kernel_matrix(spec, layer.z)
        ky = label_kernel_matrix(labels, 3)
        _, tf = two_point_update(spec, layer, (0, 1),
                                 label_kernel(0, 1, 3), 2.0, ky.mean, kz.mean)
        state = OnlineCircuitState(CFG, spec, gamma=2.0)
        state.set_centering(2.0 * ky.mean - 2.0 * kz.mean)
        m = third_factor_stream(state, label_kernel(0, 1, 3),
                                layer.z[0] - layer.z[1])
        assert m == pytest.approx(tf.scalar, rel=1e-12, abs=1e-15)


class TestOnlineModes:
    def test_pairwise_equals_two_point(self):
        grouping = GroupingSpec(2)
        spec = KernelSpec.gaussian(1.5, grouping)
        net = Network.build(NetworkConfig((5, 4), n_classes=3, grouping=grouping),
                            make_rng(3))
        rng = make_rng(4)
        s1, s2 = rng.normal(size=(2, 5))
        state = OnlineCircuitState(CFG, spec, gamma=2.0)
        assert online_update_step(state, layer_view(net, s1), 1.0,
                                  StreamMode.PAIRWISE) is None
        ky = label_kernel(0, 1, 3)
        dw_stream = online_update_step(state, layer_view(net, s2), ky,
                                       StreamMode.PAIRWISE)
        net.forward(np.stack([s2, s1]), mode="eval")
        layer = net.layers[0]
        diff = layer.v[0] - layer.v[1]
        kval = float(np.exp(-(diff @ diff) / (2.0 * spec.sigma**2)))
        dw_batch, _ = two_point_update(spec, layer, (0, 1), ky, 2.0,
                                       (1.0 + ky) / 2.0, (1.0 + kval) / 2.0)
        np.testing.assert_allclose(dw_stream, dw_batch, rtol=1e-12, atol=1e-15)

    def test_mean_mode_frozen_at_previous_reduces_to_pairwise(self):
        # slope-1 network so the Hebbian forms coincide exactly
        spec = KernelSpec.gaussian(2.0)
        net = Network.build(
            NetworkConfig((5, 4), n_classes=3, nonlinearity_slope=1.0),
            make_rng(5))
        rng = make_rng(6)
        s1, s2 = rng.normal(size=(2, 5))
        cfg = CircuitConfig(dt=0.01, mu_rate=0.0)  # freeze the mean traces
        state = OnlineCircuitState(cfg, spec, gamma=2.0)
        online_update_step(state, layer_view(net, s1), 1.0, StreamMode.MEAN)
        view2 = layer_view(net, s2)
        ky = label_kernel(0, 2, 3)
        diff = view2.z - state.mu_z
        kval = float(np.exp(-(diff @ diff) / (2.0 * spec.sigma**2)))
        state.b3 = 2.0 * (1.0 + ky) / 2.0 - 2.0 * (1.0 + kval) / 2.0
        dw_mean = online_update_step(state, view2, ky, StreamMode.MEAN)
        view1 = layer_view(net, s1)
        dw_pair, _ = pair_delta_w(spec, view2.z, view1.z, view2.g, view1.g,
                                  view2.x, view1.x, ky, 2.0,
                                  (1.0 + ky) / 2.0, (1.0 + kval) / 2.0)
        np.testing.assert_allclose(dw_mean, dw_pair, rtol=1e-12, atol=1e-15)

    def test_product_mode_frozen_at_previous_matches_pair_products(self):
        grouping = GroupingSpec(2)
        spec = KernelSpec.gaussian(1.5, grouping)
        net = Network.build(
            NetworkConfig((5, 4), n_classes=3, grouping=grouping,
                          nonlinearity_slope=1.0), make_rng(7))
        rng = make_rng(8)
        s1, s2 = rng.normal(size=(2, 5))
        cfg = CircuitConfig(dt=0.01, mu_rate=0.0)
        state = OnlineCircuitState(cfg, spec, gamma=2.0)
        online_update_step(state, layer_view(net, s1), 1.0, StreamMode.PRODUCT)
        view2 = layer_view(net, s2)
        ky = label_kernel(1, 1, 3)
        dv = view2.v - state.mu_v
        kval = float(np.exp(-(dv @ dv) / (2.0 * spec.sigma**2)))
        state.b3 = 2.0 * (1.0 + ky) / 2.0 - 2.0 * (1.0 + kval) / 2.0
        dw_prod = online_update_step(state, view2, ky, StreamMode.PRODUCT)
        view1 = layer_view(net, s1)
        dw_pair, _ = pair_delta_w(
            spec, view2.z, view1.z, view2.g, view1.g, view2.x, view1.x,
            ky, 2.0, (1.0 + ky) / 2.0, (1.0 + kval) / 2.0,
            v_i=view2.v, v_j=view1.v, r_i=view2.r, r_j=view1.r)
        np.testing.assert_allclose(dw_prod, dw_pair, rtol=1e-12, atol=1e-15)

    def test_separated_mode_middle_sample_identity(self):
        grouping = GroupingSpec(2)
        spec = KernelSpec.gaussian(1.5, grouping)
        net = Network.build(
            NetworkConfig((5, 4), n_classes=3, grouping=grouping,
                          nonlinearity_slope=1.0), make_rng(9))
        rng = make_rng(10)
        samples = rng.normal(size=(3, 5))
        labels = [0, 1, 1]
        cfg = CircuitConfig(dt=0.01, beta=0.5)
        state = OnlineCircuitState(cfg, spec, gamma=2.0)
        views = [layer_view(net, s) for s in samples]

        online_update_step(state, views[0], 1.0, StreamMode.SEPARATED)
        b3_before_21 = state.b3
        ky_21 = label_kernel(labels[1], labels[0], 3)
        assert online_update_step(state, views[1], ky_21,
                                  StreamMode.SEPARATED) is None
        b3_before_32 = state.b3
        ky_32 = label_kernel(labels[2], labels[1], 3)
        dw_middle = online_update_step(state, views[2], ky_32,
                                       StreamMode.SEPARATED)

        def pair_third(view_a, view_b, ky, b3):
            # means chosen so gamma*mean_y - 2*mean_z equals the stream's b3
            _, tf = pair_delta_w(
                spec, view_a.z, view_b.z, view_a.g, view_b.g, view_a.x,
                view_b.x, ky, 2.0, b3 / 2.0, 0.0,
                v_i=view_a.v, v_j=view_b.v, r_i=view_a.r, r_j=view_b.r)
            return tf.per_group()

        m21 = pair_third(views[1], views[0], ky_21, b3_before_21)
        m32 = pair_third(views[2], views[1], ky_32, b3_before_32)
        members = 4 // grouping.group_count
        scale = 2.0 * (1.0 - grouping.exponent_p) / members
        hebb_middle = views[1].r[:, None] * views[1].x[None, :]
        expected = scale * np.repeat(m21 - m32, members)[:, None] * hebb_middle
        np.testing.assert_allclose(dw_middle, expected, rtol=1e-12, atol=1e-15)

    def test_mode_kernel_mismatch_errors(self):
        plain = OnlineCircuitState(CFG, KernelSpec.gaussian(1.0), gamma=2.0)
        grouped = OnlineCircuitState(
            CFG, KernelSpec.gaussian(1.0, GroupingSpec(2)), gamma=2.0)
        view = SampleView(x=np.ones(3), z=np.ones(4), g=np.ones(4))
        with pytest.raises(KernelError):
            online_update_step(plain, view, 1.0, StreamMode.PRODUCT)
        with pytest.raises(KernelError):
            online_update_step(grouped, view, 1.0, StreamMode.MEAN)
        with pytest.raises(KernelError):
            OnlineCircuitState(CFG, KernelSpec.linear(), gamma=2.0)


class TestStreamingEqualsBatch:
    @pytest.mark.parametrize("grouped", [False, True])
    def test_trajectory_matches_m2_batches(self, grouped):
        rng = make_rng(11)
        grouping = GroupingSpec(4) if grouped else None
        dim, width, n_classes = 6, 8, 3
        samples = rng.normal(size=(31, dim))
        labels = rng.integers(0, n_classes, size=31)
        lr = 0.1
        spec = KernelSpec.gaussian(2.0, grouping)

        net_stream = Network.build(
            NetworkConfig((dim, width), n_classes=n_classes, grouping=grouping),
            make_rng(12))
        trainer = PairwiseStreamTrainer(net_stream, spec, n_classes, 2.0, lr)

        net_batch = Network.build(
            NetworkConfig((dim, width), n_classes=n_classes, grouping=grouping),
            make_rng(12))
        cfg = TrainerConfig(epochs=1, batch_size=2, gamma=2.0, local_lr=lr,
                            final_lr=0.0, momentum=0.0, weight_decay_local=0.0,
                            weight_decay_final=0.0, seed=0)
        opt = OptimizerState.for_network(net_batch)

        for t in range(31):
            trainer.step(samples[t], int(labels[t]))
            if t >= 1:
                xb = np.stack([samples[t], samples[t - 1]])
                yb = np.array([labels[t], labels[t - 1]])
                train_batch(net_batch, spec, xb, yb, n_classes, cfg, opt,
                            (lr, 0.0), None)
                for ls, lb in zip(net_stream.layers, net_batch.layers):
                    np.testing.assert_allclose(ls.W, lb.W, rtol=0, atol=1e-9)


class TestAccumulatorEnvelope:
    def test_b3_stays_inside_running_b2_envelope(self):
        state = OnlineCircuitState(CFG, KernelSpec.gaussian(1.5), gamma=2.0)
        state.set_centering(0.0)
        rng = make_rng(55)
        b2_seen = []
        for step in range(200):
            delta = rng.normal(size=3) * rng.uniform(0.1, 2.0)
            label = 1.0 if rng.random() < 0.5 else -1.0 / 9.0
            third_factor_stream(state, label, delta)
            b2_seen.append(state.b2)
            if step >= 5:  # warm-up
                assert min(b2_seen) - 1e-12 <= state.b3 <= max(b2_seen) + 1e-12
