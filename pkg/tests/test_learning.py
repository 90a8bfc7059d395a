import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import Polynomial

from mcsfqf.checks import descend_fractions, huber_quantile_minimizer
from mcsfqf.learning import (adam, adam_step, fraction_jacobian, fraction_weight_grad, huber_kernel,
                             huber_quantile_loss, huber_quantile_loss_grad, paper_delta, rmsprop,
                             rmsprop_step, stbp_backward, td_errors, wasserstein_grad_tau)
from mcsfqf.learning.stbp import paper_dendrite_grads
from mcsfqf.learning.verify import (GradCheckConfig, central_difference, relative_error,
                                    small_network_config, verify_gradients, wasserstein_loss)
from mcsfqf.network import fractions_from_logits, full_forward, init_params

small = st.floats(-10, 10, allow_nan=False)
# zero, or large enough that delta^2 / 2 does not underflow
nonunderflow = st.one_of(st.just(0.0), small.filter(lambda x: abs(x) > 1e-100))


class TestHuber:
    def test_examples(self):
        assert huber_quantile_loss([0.5], [[2.0]], 1.0) == pytest.approx(0.75)
        assert huber_quantile_loss([0.5], [[-0.5]], 1.0) == pytest.approx(0.0625)
        assert huber_quantile_loss([0.3, 0.7], np.zeros((2, 2))) == 0.0

    def test_rejects_bad_epsilon(self):
        with pytest.raises(ValueError):
            huber_quantile_loss([0.5], [[1.0]], 0.0)

    @given(st.lists(nonunderflow, min_size=4, max_size=4), st.floats(0.05, 3))
    def test_nonnegative_and_zero_iff_zero(self, d, eps):
        deltas = np.array(d).reshape(2, 2)
        loss = huber_quantile_loss([0.25, 0.75], deltas, eps)
        assert loss >= 0
        assert (loss == 0) == bool(np.all(deltas == 0))

    @given(st.floats(0.1, 3))
    def test_kernel_c1_at_epsilon(self, eps):
        h = 1e-7
        for s in (1, -1):
            x = s * eps
            assert abs(huber_kernel(x - h, eps) - huber_kernel(x + h, eps)) < 1e-6 * max(1, eps)
            slope_in = (huber_kernel(x, eps) - huber_kernel(x - s * h, eps)) / (s * h)
            slope_out = (huber_kernel(x + s * h, eps) - huber_kernel(x, eps)) / (s * h)
            assert abs(slope_in - slope_out) < 1e-5

    @given(st.integers(0, 10_000))
    def test_grad_matches_fd(self, seed):
        rng = np.random.default_rng(seed)
        tau_hat = np.sort(rng.random((2, 3)), axis=1)
        targets = rng.normal(size=(2, 4))
        pred = rng.normal(size=(2, 3))

        def f():
            return huber_quantile_loss(tau_hat, targets[:, :, None] - pred[:, None, :], 0.7)

        ana = huber_quantile_loss_grad(tau_hat, targets[:, :, None] - pred[:, None, :], 0.7)
        assert relative_error(ana, central_difference(f, pred, 1e-6)) < 1e-5

    def test_td_self_consistency_antisymmetric(self):
        q = np.array([0.1, 0.5, 1.3])
        deltas = td_errors(0.0, q, q, gamma=1.0)
        np.testing.assert_array_equal(deltas, -deltas.T)
        np.testing.assert_array_equal(np.diag(deltas), 0)

    def test_minimizer_is_quantile_for_small_epsilon(self):
        assert huber_quantile_minimizer([0, 2, 4], [0.5, 0.25, 0.25], 0.625, 1e-4) == pytest.approx(2, abs=1e-3)


class TestTd:
    def test_examples(self):
        assert np.all(td_errors(1.0, np.zeros(3), np.zeros(3), 0.99) == 1.0)
        assert td_errors(1.0, np.array([2.0]), np.array([0.5]), 0.99)[0, 0] == pytest.approx(2.48)

    def test_terminal_drops_bootstrap(self):
        d = td_errors(np.array([1.0]), np.array([[5.0]]), np.array([[0.0]]), 0.9, terminal=np.array([True]))
        assert d[0, 0, 0] == 1.0

    def test_rejects_bad_gamma(self):
        with pytest.raises(ValueError):
            td_errors(0, np.zeros(1), np.zeros(1), 1.5)


class TestWasserstein:
    def test_constant_and_linear_zero(self):
        tau = np.linspace(0, 1, 5)
        hat = 0.5 * (tau[1:] + tau[:-1])
        np.testing.assert_allclose(wasserstein_grad_tau(np.full(3, 2.0), np.full(4, 2.0)), 0)
        np.testing.assert_allclose(wasserstein_grad_tau(tau[1:-1], hat), 0, atol=1e-15)

    def test_square_example(self):
        g = wasserstein_grad_tau(np.array([0.25]), np.array([0.0625, 0.5625]))
        assert g[0] == pytest.approx(-0.125)

    @given(st.lists(st.floats(0.01, 0.99), min_size=2, max_size=6, unique=True))
    def test_matches_exact_objective(self, interior):
        F = Polynomial([0.1, -0.4, 0.0, 2.0])
        tau = np.concatenate([[0], np.sort(interior), [1]])
        hat = 0.5 * (tau[1:] + tau[:-1])
        g = wasserstein_grad_tau(F(tau[1:-1]), F(hat))
        num = central_difference(lambda: float(wasserstein_loss(tau, F)), tau, 1e-6)[1:-1]
        np.testing.assert_allclose(g, num, atol=1e-6)

    def test_descent_to_uniform(self):
        tau = descend_fractions(np.random.default_rng(0).uniform(0, 1, 31))
        np.testing.assert_allclose(tau, np.linspace(0, 1, 33), atol=1e-3)


class TestFractionGrad:
    def test_paper_delta_example(self):
        d = paper_delta(np.array([0.5, 0.5]))
        assert d[0, 0] == pytest.approx(0.5) and d[0, 1] == pytest.approx(0.5)

    def test_zero_wl_grad(self):
        p = np.full((1, 3), 1 / 3)
        assert np.all(fraction_weight_grad(np.zeros((1, 2)), p, np.ones((4, 1, 5))) == 0)

    @given(st.lists(st.floats(-3, 3), min_size=2, max_size=6))
    def test_softmax_chain_is_jacobian(self, logits):
        logits = np.array(logits)
        J = fraction_jacobian(fractions_from_logits(logits).p, "softmax-chain")
        h = 1e-6
        for i in range(len(logits)):
            e = np.zeros_like(logits)
            e[i] = h
            fd = (fractions_from_logits(logits + e).tau[1:-1] - fractions_from_logits(logits - e).tau[1:-1]) / (2 * h)
            np.testing.assert_allclose(J[:, i], fd, atol=1e-7)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            fraction_jacobian(np.array([0.5, 0.5]), "other")


class TestOptim:
    def test_zero_grad_unchanged(self):
        for make, step in ((adam, adam_step), (rmsprop, rmsprop_step)):
            p = {"w": np.ones(3, np.float32)}
            opt = make(0.1)
            for _ in range(5):
                step(opt, p, {"w": np.zeros(3, np.float32)})
            np.testing.assert_array_equal(p["w"], 1.0)

    def test_defaults(self):
        assert adam().lr == 1e-4 and rmsprop().lr == 2.5e-9

    def test_adam_first_step_sign(self):
        p = {"w": np.zeros(4)}
        g = np.array([3.0, -0.2, 1e-3, -50.0])
        adam_step(adam(1e-3), p, {"w": g})
        np.testing.assert_allclose(p["w"], -1e-3 * np.sign(g), rtol=1e-4)

    def test_rmsprop_saturates_to_lr(self):
        p = {"w": np.zeros(1)}
        opt = rmsprop(1e-2)
        for _ in range(500):
            before = p["w"].copy()
            rmsprop_step(opt, p, {"w": np.array([2.0])})
        assert before[0] - p["w"][0] == pytest.approx(1e-2, rel=1e-3)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            adam_step(adam(), {"w": np.zeros(3)}, {"w": np.zeros(2)})

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        g = [rng.normal(size=5) for _ in range(10)]
        outs = []
        for _ in range(2):
            p, opt = {"w": np.ones(5)}, adam(0.01)
            for x in g:
                adam_step(opt, p, {"w": x})
            outs.append(p["w"].copy())
        assert outs[0].tobytes() == outs[1].tobytes()


class TestStbp:
    def test_zero_loss_grad(self):
        net = small_network_config(smooth=False)
        params = init_params(net, np.random.default_rng(0))
        obs = np.random.default_rng(1).random((2,) + net.obs_shape)
        _, est, tape = full_forward(obs, params, net)
        grads = stbp_backward(tape, params, np.zeros(est.values.shape))
        assert all(np.all(g == 0) for g in grads.values())

    def test_shape_mismatch(self):
        net = small_network_config(smooth=False)
        params = init_params(net, np.random.default_rng(0))
        _, est, tape = full_forward(np.ones((2,) + net.obs_shape), params, net)
        with pytest.raises(ValueError, match="shape"):
            stbp_backward(tape, params, np.zeros((3, 1, 1)))

    @pytest.mark.parametrize("smooth", [True, False])
    def test_closed_form_dendrite_grads_at_single_step(self, smooth):
        net = small_network_config(smooth=smooth, T=1)
        rng = np.random.default_rng(3)
        params = init_params(net, rng, np.float64)
        obs = rng.random((2,) + net.obs_shape)
        _, est, tape = full_forward(obs, params, net, key=1)
        d = rng.normal(size=est.values.shape)
        exact = stbp_backward(tape, params, d)
        closed = paper_dendrite_grads(tape, params, d)
        for k in ("w_b", "w_a"):
            np.testing.assert_allclose(closed[k], exact[k], rtol=1e-10, atol=1e-14)


class TestVerify:
    def test_zero_weights_zero_grads(self):
        # hard spikes: a silent network has zero analytic and zero finite-difference gradients
        recs = verify_gradients(GradCheckConfig(zero_weights=True, smooth=False))
        assert all(r["max_rel_err"] == 0.0 for r in recs if not r["name"].startswith("w_f"))

    @pytest.mark.parametrize("fusion", ["mcn+population", "li+population", "li+cosine"])
    def test_groups_pass(self, fusion):
        recs = verify_gradients(GradCheckConfig(fusion=fusion))
        failed = [r["name"] for r in recs if not r["passed"]]
        assert not failed
        assert {r["name"] for r in recs} >= {"w_b", "w_a", "w_h", "w_l", "enc0", "w_f[softmax-chain]"}
