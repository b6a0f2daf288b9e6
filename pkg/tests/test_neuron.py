"""Neuron dynamics: hand-evaluated trajectories and surrogate properties."""

import numpy as np
import pytest

import spikemp.tensor as T
from spikemp.neuron import (
    HandoffMismatch,
    NeuronConfig,
    Policy,
    ThresholdMode,
    amp2_backward_factor,
    amp2_forward,
    g_prime_array,
    run_twu_sequence,
    surrogate_g,
    surrogate_g_prime,
    twu_step,
)
from spikemp.tensor import GradTape, ShapeMismatchError, Tensor, backward, check_gradients


CFG = NeuronConfig()  # k=5, c=0.5, beta=0.25, alpha=0.8, v_th=1.0


def central_diff_g(cfg: NeuronConfig, xs: np.ndarray, h: float) -> np.ndarray:
    """Central difference (g(x+h) - g(x-h)) / 2h, computed without cancellation.

    Uses tanh(a) - tanh(b) = sinh(a-b) / (cosh(a) cosh(b)), which is the same
    quantity to the last bit but does not subtract nearly-equal tanh values in
    the saturated tails. Independent of the analytic g' formula.
    """
    xp = xs + h
    xm = xs - h
    dx = xp - xm  # the step actually realized after rounding x +- h
    a = cfg.k * (xp - cfg.c)
    b = cfg.k * (xm - cfg.c)
    diff = np.sinh(cfg.k * dx) / (np.cosh(a) * np.cosh(b)) / (2.0 * np.tanh(cfg.k * cfg.c))
    return diff / dx


class TestConfig:
    def test_defaults(self):
        assert (CFG.k, CFG.c, CFG.beta, CFG.alpha, CFG.v_th) == (5.0, 0.5, 0.25, 0.8, 1.0)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"k": 0.0},
            {"c": 0.0},
            {"c": 1.5},
            {"beta": 1.0},
            {"beta": -0.1},
            {"alpha": 1.1},
            {"v_th": 0.0},
        ],
    )
    def test_rejects_bad_parameters(self, kwargs):
        with pytest.raises(ValueError):
            NeuronConfig(**kwargs)


class TestSurrogate:
    def test_anchor_points_exact(self):
        x = Tensor([0.0, CFG.c, 2 * CFG.c])
        np.testing.assert_allclose(surrogate_g(CFG, x).data, [0.0, 0.5, 1.0], atol=1e-12)

    def test_strictly_increasing(self):
        xs = np.linspace(-2.0, 3.0, 2001)
        g = surrogate_g(CFG, Tensor(xs)).data
        assert np.all(np.diff(g) > 0)

    def test_g_prime_value_at_center(self):
        # k / (2 tanh(k c)) with tanh(2.5) ~ 0.986614
        expected = 5.0 / (2.0 * np.tanh(2.5))
        np.testing.assert_allclose(surrogate_g_prime(CFG, Tensor([0.5])).data, [expected], rtol=1e-12)
        assert abs(expected - 2.5339) < 1e-4

    def test_g_prime_matches_central_differences(self):
        xs = np.linspace(-2.0, 3.0, 501)
        ana = g_prime_array(CFG, xs)
        np.testing.assert_allclose(ana, central_diff_g(CFG, xs, 1e-6), rtol=1e-6)

    def test_g_prime_matches_naive_differences_near_center(self):
        # plain float64 differencing is fine wherever g' is not vanishing
        xs = np.linspace(-0.5, 1.5, 201)
        h = 1e-6
        num = (
            surrogate_g(CFG, Tensor(xs + h)).data - surrogate_g(CFG, Tensor(xs - h)).data
        ) / (2 * h)
        np.testing.assert_allclose(g_prime_array(CFG, xs), num, rtol=1e-4)

    def test_vanishing_regime(self):
        far = surrogate_g_prime(CFG, Tensor([-4.0, 5.0])).data
        assert np.all(far < 1e-6)

    def test_small_kc_limit_is_half_over_c(self):
        # tanh(kc) ~ kc for small kc, so g'(c) -> 1 / (2c)
        cfg = NeuronConfig(k=1e-4, c=0.5)
        val = surrogate_g_prime(cfg, Tensor([0.5])).item()
        np.testing.assert_allclose(val, 1.0 / (2 * 0.5), rtol=1e-6)

    def test_explosion_monotone_in_c(self):
        peaks = [
            surrogate_g_prime(NeuronConfig(k=5.0, c=c), Tensor([c])).item()
            for c in (0.1, 0.25, 0.5, 1.0)
        ]
        assert all(a > b for a, b in zip(peaks, peaks[1:]))

    def test_g_gradient_check(self):
        err = check_gradients(
            lambda x: T.sum_all(surrogate_g(CFG, x)), Tensor(np.linspace(-1, 2, 9)), eps=1e-5
        )
        assert err < 1e-5


class TestTwuStep:
    def test_spiking_case(self):
        spikes, st = twu_step(CFG, Tensor([0.0]), Tensor([1.2]))
        assert spikes.item() == 1.0
        assert st.u.item() == 1.2
        assert st.h.item() == 1.0  # reset to v_th where fired

    def test_subthreshold_case(self):
        spikes, st = twu_step(CFG, Tensor([0.0]), Tensor([0.5]))
        assert spikes.item() == 0.0
        np.testing.assert_allclose(st.h.item(), 0.125)

    def test_zero_input(self):
        spikes, st = twu_step(CFG, Tensor([0.0]), Tensor([0.0]))
        assert spikes.item() == 0.0 and st.h.item() == 0.0

    def test_reset_invariant(self):
        rng = np.random.default_rng(0)
        h_prev = Tensor(rng.uniform(0, 1, 64))
        x = Tensor(rng.standard_normal(64))
        spikes, st = twu_step(CFG, h_prev, x)
        fired = spikes.data == 1.0
        np.testing.assert_array_equal(st.h.data[fired], CFG.v_th)
        np.testing.assert_allclose(st.h.data[~fired], CFG.beta * st.u.data[~fired], atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            twu_step(CFG, Tensor([0.0]), Tensor([0.0, 1.0]))


class TestTwuSequence:
    def test_t1_equals_single_step_threshold(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.standard_normal(32))
        train, _ = run_twu_sequence(CFG, [x])
        expected = np.where(x.data >= CFG.v_th, 1.0, 0.0)
        np.testing.assert_array_equal(train[0].data, expected)

    def test_constant_subthreshold_drive(self):
        xs = [Tensor([0.3]) for _ in range(4)]
        train, state = run_twu_sequence(CFG, xs)
        assert all(s.item() == 0.0 for s in train)
        # u follows 0.3, 0.375, 0.39375, 0.3984375
        np.testing.assert_allclose(state.u.item(), 0.3984375)

    def test_constant_drive_crosses_threshold(self):
        xs = [Tensor([0.9]), Tensor([0.9])]
        train, state = run_twu_sequence(CFG, xs)
        assert train[0].item() == 0.0 and train[1].item() == 1.0
        np.testing.assert_allclose(state.u.item(), 1.125)

    def test_empty_sequence(self):
        with pytest.raises(ValueError):
            run_twu_sequence(CFG, [])


class TestAmp2Forward:
    def test_hand_evaluated_with_memory(self):
        spikes, st = amp2_forward(
            CFG, Tensor([0.5]), Tensor([0.4]), mp_random=np.array([0.2])
        )
        np.testing.assert_allclose(st.mp0.item(), 0.36)
        np.testing.assert_allclose(st.mp1.item(), 0.59)
        assert spikes.item() == 1.0
        assert st.mp2.item() == 0.0

    def test_hand_evaluated_without_predecessor(self):
        spikes, st = amp2_forward(CFG, Tensor([0.0]), None, mp_random=np.array([0.2]))
        np.testing.assert_allclose(st.mp0.item(), 0.2)
        np.testing.assert_allclose(st.mp1.item(), 0.05)
        assert spikes.item() == 0.0
        np.testing.assert_allclose(st.mp2.item(), 0.05)

    def test_alpha_zero_ignores_memory(self):
        cfg = NeuronConfig(alpha=0.0)
        rng = np.random.default_rng(2)
        x = Tensor(rng.standard_normal(16))
        mp_rand = rng.uniform(0, cfg.c, 16)
        _, with_prev = amp2_forward(cfg, x, Tensor(np.full(16, 9.9)), mp_random=mp_rand)
        np.testing.assert_array_equal(with_prev.mp0.data, mp_rand)

    def test_alpha_one_is_pure_memory(self):
        cfg = NeuronConfig(alpha=1.0)
        rng = np.random.default_rng(3)
        prev = rng.uniform(0, 1, 16)
        _, st = amp2_forward(cfg, Tensor(np.zeros(16)), Tensor(prev), rng=rng)
        np.testing.assert_array_equal(st.mp0.data, prev)

    def test_reset_identity_and_binary_spikes(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            x = Tensor(rng.standard_normal(128))
            spikes, st = amp2_forward(CFG, x, Tensor(rng.standard_normal(128)), rng=rng)
            assert set(np.unique(spikes.data)) <= {0.0, 1.0}
            np.testing.assert_array_equal(st.mp2.data, st.mp1.data * (1 - spikes.data))

    def test_plain_mode_threshold(self):
        cfg = NeuronConfig(spike_threshold_mode=ThresholdMode.PLAIN)
        spikes, _ = amp2_forward(cfg, Tensor([-0.2, 0.0, 0.2]), None, mp_random=np.zeros(3))
        # mp1 = x here; plain mode fires at mp1 / v_th >= 0
        np.testing.assert_array_equal(spikes.data, [0.0, 1.0, 1.0])

    def test_minus_c_vs_plain_disagree_between_0_and_c(self):
        x = Tensor([0.3])  # mp1 = 0.3, between 0 and c
        s_minus, _ = amp2_forward(CFG, x, None, mp_random=np.zeros(1))
        cfg_plain = NeuronConfig(spike_threshold_mode=ThresholdMode.PLAIN)
        s_plain, _ = amp2_forward(cfg_plain, x, None, mp_random=np.zeros(1))
        assert s_minus.item() == 0.0 and s_plain.item() == 1.0

    def test_seeded_runs_are_bit_identical(self):
        x = Tensor(np.linspace(-1, 1, 32))
        out1 = amp2_forward(CFG, x, None, rng=np.random.default_rng(99))[1].mp1.data
        out2 = amp2_forward(CFG, x, None, rng=np.random.default_rng(99))[1].mp1.data
        np.testing.assert_array_equal(out1, out2)

    def test_mismatch_falls_back_to_random_init(self):
        rng = np.random.default_rng(5)
        x = Tensor(np.zeros(4))
        mp_rand = rng.uniform(0, CFG.c, 4)
        _, st = amp2_forward(CFG, x, Tensor(np.ones(7)), mp_random=mp_rand)
        np.testing.assert_array_equal(st.mp0.data, mp_rand)

    def test_mismatch_broadcast_mean(self):
        cfg = NeuronConfig(handoff_mismatch=HandoffMismatch.BROADCAST_MEAN)
        x = Tensor(np.zeros(4))
        _, st = amp2_forward(cfg, x, Tensor([1.0, 3.0]), mp_random=np.zeros(4))
        np.testing.assert_allclose(st.mp0.data, cfg.alpha * 2.0)

    def test_mismatch_error_mode(self):
        cfg = NeuronConfig(handoff_mismatch=HandoffMismatch.ERROR)
        with pytest.raises(ShapeMismatchError):
            amp2_forward(cfg, Tensor(np.zeros(4)), Tensor(np.zeros(5)), mp_random=np.zeros(4))


class TestBackwardFactor:
    def test_at_surrogate_center(self):
        factor = amp2_backward_factor(CFG, Tensor([0.5]))
        expected = 5.0 / (2.0 * np.tanh(2.5)) * 0.25
        np.testing.assert_allclose(factor.item(), expected, rtol=1e-12)
        assert abs(factor.item() - 0.6335) < 1e-4

    def test_vanishes_far_from_center(self):
        assert amp2_backward_factor(CFG, Tensor([5.0])).item() < 1e-6

    def test_zero_beta_blocks_gradient(self):
        cfg = NeuronConfig(beta=0.0)
        np.testing.assert_array_equal(
            amp2_backward_factor(cfg, Tensor(np.linspace(-1, 1, 9))).data, np.zeros(9)
        )

    def test_tape_composes_same_factor(self):
        # grad(mp0) through the tape == grad(spike) * analytic local factor
        mp1_value = 0.47
        x_in = (mp1_value - CFG.beta * 0.3)  # choose x so mp1 lands on mp1_value
        mp_prev = Tensor([0.3])
        cfg = NeuronConfig(alpha=1.0)
        with GradTape() as tape:
            spikes, st = amp2_forward(cfg, Tensor([x_in]), mp_prev, mp_random=np.zeros(1))
            loss = T.sum_all(spikes)
        backward(tape, loss)
        factor = amp2_backward_factor(cfg, st.mp1).item()
        np.testing.assert_allclose(st.mp0.grad, [factor], rtol=1e-12)


class TestSpikingGradientPath:
    def test_surrogate_substituted_stack(self):
        # three chained spiking layers, smooth emissions, vs finite differences
        rng = np.random.default_rng(6)
        x0 = rng.standard_normal(6)

        def f(x: Tensor) -> Tensor:
            prev = None
            h = x
            for _ in range(3):
                spikes, st = amp2_forward(
                    CFG, h, prev, mp_random=np.full(6, 0.2), soft=True
                )
                prev = st.mp1
                h = spikes
            return T.sum_all(T.mul(h, h))

        assert check_gradients(f, Tensor(x0), eps=1e-5) < 1e-4
