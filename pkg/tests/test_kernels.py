"""Tests for the numba/numpy kernel pairs: equivalence, semantics, dispatch."""

import numpy as np
import pytest

from capmeter import kernels

needs_numba = pytest.mark.skipif(not kernels.NUMBA_AVAILABLE,
                                 reason="numba not installed")


def logistic_problem(seed=0, n=40, d=3, m=3):
    rng = np.random.default_rng(seed)
    Xb = np.concatenate([rng.normal(size=(n, d)), np.ones((n, 1))], axis=1)
    y = rng.integers(0, m, size=n).astype(np.int64)
    return Xb, y, m


def mlp_problem(seed=1, n=32, d=4, h=5, m=2, epochs=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = rng.integers(0, m, size=n).astype(np.int64)
    W1 = rng.normal(size=(d, h)) * 0.3
    b1 = rng.normal(size=h) * 0.1
    W2 = rng.normal(size=(h, m)) * 0.3
    b2 = rng.normal(size=m) * 0.1
    perms = np.stack([rng.permutation(n) for _ in range(epochs)]).astype(np.int64)
    return X, y, (W1, b1, W2, b2), perms


class TestEnvSelection:
    def test_flag_values(self, monkeypatch):
        for value, expect in [("0", False), ("false", False), ("off", False),
                              ("no", False), ("1", True), ("on", True),
                              (" 0 ", False)]:
            monkeypatch.setenv("CAPMETER_NUMBA", value)
            assert kernels._env_wants_numba() is expect
        monkeypatch.delenv("CAPMETER_NUMBA")
        assert kernels._env_wants_numba() is True

    def test_dispatch_points_at_a_variant(self):
        assert kernels.sgld_chain_diag_quad in (
            kernels.sgld_chain_diag_quad_numba,
            kernels.sgld_chain_diag_quad_numpy)

    def test_warmup_is_safe(self):
        kernels.warmup_jit()


class TestSgldChain:
    def chain_args(self, steps=200, p=3, kept=50, seed=5):
        rng = np.random.default_rng(seed)
        w = rng.normal(size=p)
        lam = rng.uniform(0.5, 2.0, size=p)
        noise = rng.standard_normal((steps, p))
        out = np.empty((kept, p))
        return w, lam, noise, out

    def test_numpy_variant_two_steps_by_hand(self):
        # p=1: follow the update w <- w - half*(n*lam*w + eps*w) + sqrt*xi
        # with the same float arithmetic order as the kernel.
        noise = np.array([[1.0], [-1.0]])
        out = np.empty((2, 1))
        w = kernels.sgld_chain_diag_quad_numpy(
            np.array([1.0]), np.array([2.0]), 0.5, 3.0, 0.1, 0.2, noise, out)
        w1 = 1.0 - 0.1 * (3.0 * (2.0 * 1.0) + 0.5 * 1.0) + 0.2 * 1.0
        w2 = w1 - 0.1 * (3.0 * (2.0 * w1) + 0.5 * w1) + 0.2 * (-1.0)
        assert out[0, 0] == w1
        assert out[1, 0] == w2
        assert w[0] == w2

    def test_records_only_trailing_states(self):
        w0, lam, noise, _ = self.chain_args(steps=5, p=2, kept=5)
        full = np.empty((5, 2))
        kernels.sgld_chain_diag_quad_numpy(w0.copy(), lam, 1.0, 4.0,
                                           0.01, 0.1, noise, full)
        tail = np.empty((2, 2))
        w = kernels.sgld_chain_diag_quad_numpy(w0.copy(), lam, 1.0, 4.0,
                                               0.01, 0.1, noise, tail)
        assert np.array_equal(tail, full[-2:])
        assert np.array_equal(w, full[-1])

    @needs_numba
    def test_variants_agree_bitwise(self):
        w0, lam, noise, out = self.chain_args()
        out_nb = np.empty_like(out)
        w_np = kernels.sgld_chain_diag_quad_numpy(
            w0.copy(), lam, 1.0, 7.0, 0.005, 0.1, noise, out)
        w_nb = kernels.sgld_chain_diag_quad_numba(
            w0.copy(), lam, 1.0, 7.0, 0.005, 0.1, noise, out_nb)
        assert np.array_equal(out, out_nb)
        assert np.array_equal(w_np, w_nb)

    @needs_numba
    def test_bitwise_parity_with_zero_prior(self):
        w0, lam, noise, out = self.chain_args(steps=64, p=2, kept=64, seed=9)
        out_nb = np.empty_like(out)
        kernels.sgld_chain_diag_quad_numpy(w0.copy(), lam, 0.0, 12.0,
                                           0.002, 0.06, noise, out)
        kernels.sgld_chain_diag_quad_numba(w0.copy(), lam, 0.0, 12.0,
                                           0.002, 0.06, noise, out_nb)
        assert np.array_equal(out, out_nb)


class TestLogisticKernel:
    def test_variants_agree_to_rounding(self):
        Xb, y, m = logistic_problem()
        args = (m, 0.01, 0.5, 40, 0.0)
        W_np, loss_np, it_np, bad_np = kernels.logistic_gd_numpy(Xb, y, *args)
        W_nb, loss_nb, it_nb, bad_nb = kernels.logistic_gd_numba(Xb, y, *args)
        assert (it_np, bad_np) == (it_nb, bad_nb) == (40, -1)
        np.testing.assert_allclose(W_nb, W_np, rtol=1e-7, atol=1e-9)
        assert loss_nb == pytest.approx(loss_np, rel=1e-9)

    def test_deterministic(self):
        Xb, y, m = logistic_problem(seed=2)
        first = kernels.logistic_gd(Xb, y, m, 0.0, 1.0, 30, 0.0)
        second = kernels.logistic_gd(Xb, y, m, 0.0, 1.0, 30, 0.0)
        assert np.array_equal(first[0], second[0])
        assert first[1] == second[1]

    def test_gradient_tolerance_stops_before_updating(self):
        Xb, y, m = logistic_problem(seed=3)
        W, _, it, bad = kernels.logistic_gd_numpy(Xb, y, m, 0.0, 1.0, 50, 1e9)
        assert it == 1
        assert bad == -1
        assert np.all(W == 0.0)

    def test_loss_decreases(self):
        Xb, y, m = logistic_problem(seed=4)
        _, short_loss, _, _ = kernels.logistic_gd_numpy(Xb, y, m, 0.0, 0.5, 5, 0.0)
        _, long_loss, _, _ = kernels.logistic_gd_numpy(Xb, y, m, 0.0, 0.5, 80, 0.0)
        assert long_loss < short_loss


class TestMlpKernel:
    def test_variants_agree_to_rounding(self):
        X, y, params, perms = mlp_problem()
        p_np = tuple(a.copy() for a in params)
        p_nb = tuple(a.copy() for a in params)
        loss_np, bad_np = kernels.mlp_sgd_numpy(X, y, *p_np, perms, 0.05, 0.9, 8)
        loss_nb, bad_nb = kernels.mlp_sgd_numba(X, y, *p_nb, perms, 0.05, 0.9, 8)
        assert bad_np == bad_nb == -1
        assert loss_nb == pytest.approx(loss_np, rel=1e-8)
        for a_np, a_nb in zip(p_np, p_nb):
            np.testing.assert_allclose(a_nb, a_np, rtol=1e-6, atol=1e-9)

    def test_updates_parameters_in_place(self):
        X, y, params, perms = mlp_problem(seed=6)
        originals = tuple(a.copy() for a in params)
        kernels.mlp_sgd(X, y, *params, perms, 0.05, 0.9, 8)
        assert any(not np.array_equal(a, o)
                   for a, o in zip(params, originals))

    def test_training_reduces_loss(self):
        X, y, params, perms = mlp_problem(seed=7, n=64, epochs=2)
        short = tuple(a.copy() for a in params)
        loss_first, _ = kernels.mlp_sgd_numpy(X, y, *short, perms[:1], 0.1, 0.9, 16)
        longer = tuple(a.copy() for a in params)
        kernels.mlp_sgd_numpy(X, y, *longer, perms[:1], 0.1, 0.9, 16)
        loss_second, _ = kernels.mlp_sgd_numpy(X, y, *longer, perms[1:], 0.1, 0.9, 16)
        assert loss_second < loss_first
