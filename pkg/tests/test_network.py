"""Network assembly, forward semantics under both policies, training gradients."""

import numpy as np
import pytest

import spikemp.tensor as T
from spikemp.network import (
    Head,
    Linear,
    MaxPoolPoints,
    NetworkSpec,
    Norm,
    ShortcutBegin,
    ShortcutEnd,
    Spike,
    SpecError,
    batch_norm,
    build_network,
    depth_mlp_spec,
    forward,
    loss_and_grad,
    pointnet_tiny_spec,
    softmax_cross_entropy,
)
from spikemp.neuron import NeuronConfig, Policy, ThresholdMode
from spikemp.shortcuts import Kind, ShortcutKind
from spikemp.tensor import GradTape, Tensor, backward, check_gradients

AMP2 = NeuronConfig(policy=Policy.AMP2)
TWU = NeuronConfig(policy=Policy.TWU)


def minimal_spec(classes=2):
    return NetworkSpec(
        layers=[Linear(3, 8), Norm(), Spike(), MaxPoolPoints(), Head(classes)],
        neuron=AMP2,
    )


class TestSpecValidation:
    def test_minimal_builds_with_expected_params(self):
        net = build_network(minimal_spec(), np.random.default_rng(0))
        linear = net.runtime[0]
        assert linear.weight.shape == (3, 8) and linear.bias.shape == (8,)
        head = net.runtime[-1]
        assert head.weight.shape == (8, 2) and head.bias.shape == (2,)

    def test_depth_blocks_differ_only_in_block_count(self):
        s3 = depth_mlp_spec(4, AMP2, depth_blocks=3, width=16)
        s6 = depth_mlp_spec(4, AMP2, depth_blocks=6, width=16)
        per_block = 5  # shortcut begin, spike, linear, shortcut end, norm
        assert len(s6.layers) - len(s3.layers) == 3 * per_block

    def test_bad_chain_reports_index(self):
        spec = NetworkSpec(layers=[Linear(3, 8), Linear(9, 4), Head(2)], neuron=AMP2)
        with pytest.raises(SpecError, match="layer 1"):
            spec.validate()

    def test_head_required(self):
        spec = NetworkSpec(layers=[Linear(3, 8)], neuron=AMP2)
        with pytest.raises(SpecError):
            spec.validate()

    def test_amp2_requires_single_timestep(self):
        spec = minimal_spec()
        spec.timesteps = 4
        with pytest.raises(SpecError):
            spec.validate()

    def test_double_pool_rejected(self):
        spec = NetworkSpec(
            layers=[Linear(3, 8), MaxPoolPoints(), MaxPoolPoints(), Head(2)], neuron=AMP2
        )
        with pytest.raises(SpecError, match="layer 2"):
            spec.validate()


class TestBatchNorm:
    def test_train_mode_standardizes(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.standard_normal((256, 4)) * 3.0 + 1.0)
        gamma, beta = Tensor(np.ones(4)), Tensor(np.zeros(4))
        rm, rv = np.zeros(4), np.ones(4)
        out = batch_norm(x, gamma, beta, rm, rv, training=True)
        np.testing.assert_allclose(out.data.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.data.std(axis=0), 1.0, atol=1e-3)

    def test_eval_mode_uses_running_stats(self):
        x = Tensor(np.array([[2.0, 4.0]]))
        gamma, beta = Tensor(np.ones(2)), Tensor(np.zeros(2))
        rm, rv = np.array([1.0, 1.0]), np.array([4.0, 4.0])
        out = batch_norm(x, gamma, beta, rm, rv, training=False, eps=0.0)
        np.testing.assert_allclose(out.data, [[0.5, 1.5]])

    def test_train_gradients_match_finite_differences(self):
        rng = np.random.default_rng(2)
        xv = rng.standard_normal((6, 3))
        gamma, beta = Tensor(rng.uniform(0.5, 1.5, 3)), Tensor(rng.standard_normal(3))

        def f(x: Tensor) -> Tensor:
            rm, rv = np.zeros(3), np.ones(3)
            out = batch_norm(x, gamma, beta, rm, rv, training=True)
            return T.sum_all(T.mul(out, out))

        assert check_gradients(f, Tensor(xv), eps=1e-5) < 1e-4


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        logits = Tensor(np.zeros((4, 8)))
        loss = softmax_cross_entropy(logits, np.zeros(4, dtype=int))
        np.testing.assert_allclose(loss.item(), np.log(8.0), atol=1e-12)

    def test_confident_logits(self):
        logits = np.full((2, 4), -10.0)
        logits[:, 1] = 10.0
        loss = softmax_cross_entropy(Tensor(logits), np.array([1, 1]))
        assert loss.item() < 1e-6

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="label out of range"):
            softmax_cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        labels = np.array([0, 2, 1])

        def f(x: Tensor) -> Tensor:
            return softmax_cross_entropy(x, labels)

        assert check_gradients(f, Tensor(rng.standard_normal((3, 4))), eps=1e-5) < 1e-6


class TestForward:
    def test_zero_weight_amp2_is_seed_deterministic(self):
        spec = minimal_spec()
        net = build_network(spec, np.random.default_rng(4))
        for layer in net.runtime:
            if hasattr(layer, "weight"):
                layer.weight.data[:] = 0.0
                layer.bias.data[:] = 0.0
        batch = Tensor(np.random.default_rng(5).uniform(-1, 1, (2, 16, 3)))
        out1 = forward(net, batch, train_mode=False, rng=np.random.default_rng(6)).logits.data
        out2 = forward(net, batch, train_mode=False, rng=np.random.default_rng(6)).logits.data
        np.testing.assert_array_equal(out1, out2)
        # zero weights: logits must be exactly zero regardless of spikes
        np.testing.assert_array_equal(out1, np.zeros_like(out1))

    def test_trace_has_state_per_spike_layer(self):
        spec = depth_mlp_spec(4, AMP2, depth_blocks=3, width=8)
        net = build_network(spec, np.random.default_rng(7))
        batch = Tensor(np.random.default_rng(8).uniform(-1, 1, (2, 8, 3)))
        trace = forward(net, batch, train_mode=True, rng=np.random.default_rng(9))
        assert len(trace.states) == spec.spike_layer_count()
        assert len(trace.spike_ones) == spec.spike_layer_count()
        assert trace.logits.shape == (2, 4)

    def test_repeated_point_pool_symmetry(self):
        spec = minimal_spec()
        net = build_network(spec, np.random.default_rng(10))
        point = np.array([0.3, -0.2, 0.9])
        batch = Tensor(np.tile(point, (1, 12, 1)))
        trace = forward(net, batch, train_mode=False, rng=np.random.default_rng(11))
        single = Tensor(np.tile(point, (1, 1, 1)))
        trace_single = forward(net, single, train_mode=False, rng=np.random.default_rng(11))
        np.testing.assert_array_equal(trace.logits.data, trace_single.logits.data)

    def test_point_permutation_invariance_eval(self):
        for policy, cfg in ((Policy.AMP2, AMP2), (Policy.TWU, TWU)):
            spec = depth_mlp_spec(4, cfg, policy=policy, depth_blocks=2, width=8,
                                  use_rmp=policy is Policy.AMP2)
            net = build_network(spec, np.random.default_rng(12))
            rng_data = np.random.default_rng(13)
            batch = rng_data.uniform(-1, 1, (3, 32, 3))
            perm = np.random.default_rng(14).permutation(32)
            out = forward(net, Tensor(batch), False, np.random.default_rng(15)).logits.data
            out_p = forward(
                net, Tensor(batch[:, perm, :]), False, np.random.default_rng(15)
            ).logits.data
            np.testing.assert_array_equal(out, out_p)

    def test_twu_t1_matches_layerwise_sequence(self):
        # single linear+spike: T=1 network output equals run_twu_sequence
        from spikemp.neuron import run_twu_sequence

        spec = NetworkSpec(
            layers=[Linear(3, 8), Norm(), Spike(), MaxPoolPoints(), Head(2)],
            neuron=TWU,
            policy=Policy.TWU,
            timesteps=1,
        )
        net = build_network(spec, np.random.default_rng(16))
        batch = np.random.default_rng(17).uniform(-1, 1, (2, 4, 3))
        trace = forward(net, Tensor(batch), train_mode=False, rng=np.random.default_rng(18))

        rows = Tensor(batch.reshape(8, 3))
        h = net.runtime[0](rows)
        h = net.runtime[1](h, False)
        train, _ = run_twu_sequence(TWU, [h])
        np.testing.assert_array_equal(trace.states[0].u.data, h.data + 0.0)
        np.testing.assert_array_equal(
            trace.spike_ones[0], float(np.count_nonzero(train[0].data == 1.0))
        )

    def test_twu_timestep_replication_keeps_shapes(self):
        for t in (1, 2, 4):
            spec = depth_mlp_spec(
                3, TWU, policy=Policy.TWU, timesteps=t, depth_blocks=2, width=8, use_rmp=False
            )
            net = build_network(spec, np.random.default_rng(19))
            batch = Tensor(np.random.default_rng(20).uniform(-1, 1, (2, 8, 3)))
            trace = forward(net, batch, train_mode=False, rng=np.random.default_rng(21))
            assert trace.logits.shape == (2, 3)
            assert all(e == t * 2 * 8 * 8 for e in trace.spike_elems[:-1])

    def test_awp_off_equals_alpha_zero(self):
        # disabling the handoff must reproduce the pure-perturbation init
        cfg_a0 = NeuronConfig(alpha=0.0)
        spec_off = depth_mlp_spec(3, AMP2, depth_blocks=2, width=8, use_rmp=False, awp=False)
        spec_a0 = depth_mlp_spec(3, cfg_a0, depth_blocks=2, width=8, use_rmp=False, awp=True)
        rng_init = np.random.default_rng(22)
        net_off = build_network(spec_off, rng_init)
        net_a0 = build_network(spec_a0, np.random.default_rng(22))
        batch = Tensor(np.random.default_rng(23).uniform(-1, 1, (2, 8, 3)))
        out_off = forward(net_off, batch, False, np.random.default_rng(24)).logits.data
        out_a0 = forward(net_a0, batch, False, np.random.default_rng(24)).logits.data
        np.testing.assert_array_equal(out_off, out_a0)

    def test_rmp_changes_outputs(self):
        spec_with = depth_mlp_spec(3, AMP2, depth_blocks=2, width=8, use_rmp=True)
        spec_without = depth_mlp_spec(3, AMP2, depth_blocks=2, width=8, use_rmp=False)
        net_with = build_network(spec_with, np.random.default_rng(25))
        net_without = build_network(spec_without, np.random.default_rng(25))
        batch = Tensor(np.random.default_rng(26).uniform(-1, 1, (2, 8, 3)))
        out_with = forward(net_with, batch, False, np.random.default_rng(27)).logits.data
        out_without = forward(net_without, batch, False, np.random.default_rng(27)).logits.data
        assert not np.array_equal(out_with, out_without)


class TestLossAndGrad:
    def test_populates_all_parameter_grads(self):
        spec = depth_mlp_spec(4, AMP2, depth_blocks=2, width=8)
        net = build_network(spec, np.random.default_rng(28))
        batch = Tensor(np.random.default_rng(29).uniform(-1, 1, (4, 8, 3)))
        labels = np.array([0, 1, 2, 3])
        loss, _ = loss_and_grad(net, batch, labels, np.random.default_rng(30))
        assert np.isfinite(loss)
        for p in net.parameters():
            assert p.grad is not None and p.grad.shape == p.data.shape

    def test_label_out_of_range(self):
        spec = minimal_spec(classes=2)
        net = build_network(spec, np.random.default_rng(31))
        batch = Tensor(np.random.default_rng(32).uniform(-1, 1, (2, 4, 3)))
        with pytest.raises(ValueError):
            loss_and_grad(net, batch, np.array([0, 2]), np.random.default_rng(33))

    def test_parameter_gradients_match_finite_differences(self):
        # surrogate-substituted forward through a full flat-input network
        spec = depth_mlp_spec(
            3, AMP2, depth_blocks=2, width=6, in_features=5, pool_points=False
        )
        net = build_network(spec, np.random.default_rng(34))
        batch_np = np.random.default_rng(35).uniform(-1, 1, (4, 5))
        labels = np.array([0, 1, 2, 0])
        target = net.runtime[0]
        original = target.weight

        def f(w: Tensor) -> Tensor:
            target.weight = w
            trace = forward(
                net, Tensor(batch_np), train_mode=True,
                rng=np.random.default_rng(36), soft_spikes=True,
            )
            return softmax_cross_entropy(trace.logits, labels)

        try:
            err = check_gradients(f, Tensor(original.data.copy()), eps=1e-5)
        finally:
            target.weight = original
        assert err < 1e-4
