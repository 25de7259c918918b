"""Value network: forward shapes, exact gradients, kernels, checkpoints."""

import os

import numpy as np
import pytest

from socialnav.net import _kernels_py
from socialnav.net.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from socialnav.net.kernels import HAVE_EXT
from socialnav.net.network import (
    HIDDEN,
    N_ACTIONS,
    NetworkParameters,
    NumericError,
    backward_batch,
    forward,
    forward_batch,
    gru_cell,
)
from socialnav.net.optim import SgdMomentum, sgd_step


def random_inputs(rng, batch, n_humans):
    humans = rng.standard_normal((batch, n_humans, 7))
    robot = rng.standard_normal((batch, 5))
    h_prev = rng.standard_normal((batch, HIDDEN)) * 0.5
    return humans, robot, h_prev


def loss_and_grads(params, humans, robot, h_prev, a_idx):
    out = forward_batch(params, humans, robot, h_prev)
    v, pi = out["V"], out["pi"]
    onehot = np.zeros_like(pi)
    onehot[np.arange(len(a_idx)), a_idx] = 1.0
    loss = float((v**2).sum() - np.log(pi[np.arange(len(a_idx)), a_idx]).sum())
    grads = backward_batch(params, out["trace"], 2.0 * v, pi - onehot)
    return loss, grads


class TestForward:
    def test_output_shapes(self, rng):
        params = NetworkParameters.init(0)
        humans, robot, h_prev = random_inputs(rng, 4, 3)
        out = forward_batch(params, humans, robot, h_prev)
        assert out["V"].shape == (4,)
        assert out["pi"].shape == (4, N_ACTIONS)
        assert out["h_next"].shape == (4, HIDDEN)
        np.testing.assert_allclose(out["pi"].sum(axis=1), 1.0, atol=1e-12)
        assert (out["pi"] > 0).all()
        np.testing.assert_allclose(out["attention"].sum(axis=1), 1.0, atol=1e-12)

    def test_deterministic(self, rng):
        params = NetworkParameters.init(1)
        humans, robot, h_prev = random_inputs(rng, 2, 5)
        a = forward_batch(params, humans, robot, h_prev)
        b = forward_batch(params, humans, robot, h_prev)
        np.testing.assert_array_equal(a["V"], b["V"])
        np.testing.assert_array_equal(a["h_next"], b["h_next"])

    def test_variable_crowd_sizes(self, rng):
        params = NetworkParameters.init(2)
        for n in (0, 1, 5, 10, 15, 50):
            humans, robot, h_prev = random_inputs(rng, 3, n)
            out = forward_batch(params, humans, robot, h_prev)
            assert np.isfinite(out["V"]).all()
            assert np.isfinite(out["pi"]).all()

    def test_single_sample_matches_batch(self, rng):
        params = NetworkParameters.init(3)
        humans, robot, h_prev = random_inputs(rng, 1, 4)
        single = forward(params, humans[0], robot[0], h_prev[0])
        batch = forward_batch(params, humans, robot, h_prev)
        assert single["V"] == pytest.approx(float(batch["V"][0]), abs=1e-12)
        np.testing.assert_allclose(single["h_next"], batch["h_next"][0], atol=1e-12)

    def test_human_order_matters_through_gru(self, rng):
        # The human encoder is recurrent over the (distance-sorted) sequence,
        # so permuting humans changes the crowd feature.
        params = NetworkParameters.init(4)
        humans, robot, h_prev = random_inputs(rng, 1, 5)
        a = forward_batch(params, humans, robot, h_prev)["V"]
        b = forward_batch(params, humans[:, ::-1].copy(), robot, h_prev)["V"]
        assert abs(float(a[0] - b[0])) > 1e-9

    def test_nonfinite_input_raises(self, rng):
        params = NetworkParameters.init(0)
        humans, robot, h_prev = random_inputs(rng, 2, 3)
        robot[0, 0] = np.nan
        with pytest.raises(NumericError):
            forward_batch(params, humans, robot, h_prev)


class TestMemory:
    def test_hidden_state_carries_history(self, rng):
        """Identical instantaneous observations, different prefixes ->
        different memory (the mechanism the architecture claims)."""
        params = NetworkParameters.init(5)
        final_obs = rng.standard_normal(5)
        robot_gru = params.gru("robot_gru")
        h1 = np.zeros(HIDDEN)
        h2 = np.zeros(HIDDEN)
        for _ in range(10):
            h1 = gru_cell(robot_gru, rng.standard_normal(5), h1)
            h2 = gru_cell(robot_gru, rng.standard_normal(5), h2)
        h1 = gru_cell(robot_gru, final_obs, h1)
        h2 = gru_cell(robot_gru, final_obs, h2)
        assert np.linalg.norm(h1 - h2) > 1e-6

    def test_memory_changes_value(self, rng):
        params = NetworkParameters.init(6)
        humans, robot, _ = random_inputs(rng, 1, 3)
        v1 = forward_batch(params, humans, robot, np.zeros((1, HIDDEN)))["V"]
        v2 = forward_batch(params, humans, robot, 0.5 * np.ones((1, HIDDEN)))["V"]
        assert abs(float(v1[0] - v2[0])) > 1e-9


class TestGradients:
    def test_gradcheck_sampled_entries(self, rng):
        params = NetworkParameters.init(7)
        humans, robot, h_prev = random_inputs(rng, 3, 4)
        a_idx = rng.integers(0, N_ACTIONS, size=3)
        _, grads = loss_and_grads(params, humans, robot, h_prev, a_idx)

        eps = 1e-6
        for name, arr in params.params.items():
            flat = arr.ravel()
            idxs = rng.choice(flat.size, size=min(3, flat.size), replace=False)
            for i in idxs:
                orig = flat[i]
                flat[i] = orig + eps
                lp, _ = loss_and_grads(params, humans, robot, h_prev, a_idx)
                flat[i] = orig - eps
                lm, _ = loss_and_grads(params, humans, robot, h_prev, a_idx)
                flat[i] = orig
                fd = (lp - lm) / (2 * eps)
                an = grads[name].ravel()[i]
                assert an == pytest.approx(fd, abs=1e-6, rel=1e-4), f"{name}[{i}]"

    def test_input_gradient_through_hidden(self, rng):
        # d_value propagates into dh0 consistently (finite difference on h).
        params = NetworkParameters.init(8)
        humans, robot, h_prev = random_inputs(rng, 2, 2)
        out = forward_batch(params, humans, robot, h_prev)
        base = float(out["V"].sum())
        eps = 1e-6
        h2 = h_prev.copy()
        h2[0, 3] += eps
        up = float(forward_batch(params, humans, robot, h2)["V"].sum())
        assert np.isfinite(up - base)  # smoke: perturbation flows through


class TestKernels:
    def test_python_cython_parity(self, rng):
        if not HAVE_EXT:
            pytest.skip("compiled kernels unavailable")
        from socialnav.net import _kernels_cy

        H, D = HIDDEN, 7
        w = lambda *s: rng.standard_normal(s) * 0.2
        weights = (w(H, D), w(H, D), w(H, D), w(H, H), w(H, H), w(H, H),
                   w(H), w(H), w(H))
        x = rng.standard_normal((6, 5, D))
        h0 = rng.standard_normal((6, H))
        hs_py, cache_py = _kernels_py.gru_seq_forward(*weights, x, h0)
        hs_cy, cache_cy = _kernels_cy.gru_seq_forward(*weights, x, h0)
        np.testing.assert_allclose(hs_cy, hs_py, atol=1e-12)
        dhs = rng.standard_normal(hs_py.shape)
        g_py = _kernels_py.gru_seq_backward(*weights, cache_py, dhs)
        g_cy = _kernels_cy.gru_seq_backward(*weights, cache_cy, dhs)
        for a, b in zip(g_py, g_cy):
            if isinstance(a, tuple):
                for ai, bi in zip(a, b):
                    np.testing.assert_allclose(np.asarray(bi), np.asarray(ai), atol=1e-12)
            else:
                np.testing.assert_allclose(np.asarray(b), np.asarray(a), atol=1e-12)

    def test_no_ext_env_var(self):
        # Selection is import-time; just confirm the flag reflects the build.
        assert isinstance(HAVE_EXT, bool)
        if os.environ.get("SOCIALNAV_NO_EXT"):
            assert not HAVE_EXT


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        params = NetworkParameters.init(9)
        p = tmp_path / "ckpt_ep500.mesa"
        save_checkpoint(params, p)
        loaded = load_checkpoint(p)
        assert set(loaded.params) == set(params.params)
        for name in params.params:
            np.testing.assert_array_equal(loaded.params[name], params.params[name])
        # Saving the loaded copy reproduces the file byte for byte.
        p2 = tmp_path / "again.mesa"
        save_checkpoint(loaded, p2)
        assert p.read_bytes() == p2.read_bytes()

    def test_magic_enforced(self, tmp_path):
        p = tmp_path / "bad.mesa"
        p.write_bytes(b"NOTMESA" + b"\x00" * 64)
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_truncation_detected(self, tmp_path):
        params = NetworkParameters.init(0)
        p = tmp_path / "full.mesa"
        save_checkpoint(params, p)
        data = p.read_bytes()
        q = tmp_path / "cut.mesa"
        q.write_bytes(data[: len(data) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(q)

    def test_corruption_names_parameter(self, tmp_path):
        params = NetworkParameters.init(0)
        p = tmp_path / "full.mesa"
        save_checkpoint(params, p)
        # Drop the last parameter record entirely.
        data = p.read_bytes()
        last = sorted(params.params)[-1]
        arr = params.params[last]
        rec_len = 2 + len(last) + 1 + 4 * arr.ndim + 8 * arr.size
        q = tmp_path / "missing.mesa"
        q.write_bytes(data[: len(data) - rec_len])
        with pytest.raises(CheckpointError, match=last):
            load_checkpoint(q)


class TestOptim:
    def test_sgd_momentum_recurrence(self):
        params = NetworkParameters.init(0)
        name = sorted(params.params)[0]
        p0 = params.params[name].copy()
        g = {n: np.ones_like(a) for n, a in params.params.items()}
        vel = sgd_step(params, g, lr=0.1, momentum=0.9)
        np.testing.assert_allclose(params.params[name], p0 - 0.1, atol=1e-12)
        sgd_step(params, g, lr=0.1, momentum=0.9, velocity=vel)
        # velocity = 0.9 * 1 + 1 = 1.9 -> second step subtracts 0.19
        np.testing.assert_allclose(params.params[name], p0 - 0.1 - 0.19, atol=1e-12)

    def test_stateful_wrapper_matches_functional(self):
        a = NetworkParameters.init(1)
        b = a.copy()
        g = {n: np.full_like(arr, 0.01) for n, arr in a.params.items()}
        opt = SgdMomentum(0.9)
        vel = None
        for _ in range(3):
            opt.step(a, g, 0.05)
            vel = sgd_step(b, g, 0.05, 0.9, vel)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])

    def test_bad_lr(self):
        params = NetworkParameters.init(0)
        g = params.zeros_like()
        with pytest.raises(ValueError):
            sgd_step(params, g, lr=0.0, momentum=0.9)
