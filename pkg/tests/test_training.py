"""Imitation + TD training machinery: targets, schedules, buffer, loops."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socialnav.env import CrowdEnv
from socialnav.net.network import HIDDEN, NetworkParameters
from socialnav.net.optim import SgdMomentum
from socialnav.sim import ScenarioSpec
from socialnav.training import (
    ReplayBuffer,
    TrainConfig,
    Transition,
    epsilon_schedule,
    imitation_fit,
    load_train_state,
    mc_value_targets,
    rl_train,
    run_demonstrations,
    save_train_state,
)


def tiny_config(**kw):
    kw.setdefault("demo_episodes", 3)
    kw.setdefault("imitation_epochs", 2)
    kw.setdefault("rl_episodes", 6)
    kw.setdefault("warmup_episodes", 1)
    kw.setdefault("batch_size", 16)
    kw.setdefault("checkpoint_every", 1000)
    return TrainConfig(**kw)


def make_transition(rng, n=3, **kw):
    kw.setdefault("humans", rng.standard_normal((n, 7)))
    kw.setdefault("robot", rng.standard_normal(5))
    kw.setdefault("hidden", np.zeros(HIDDEN))
    kw.setdefault("value_target", float(rng.normal()))
    kw.setdefault("action_index", int(rng.integers(81)))
    kw.setdefault("terminal", False)
    return Transition(**kw)


class TestMcTargets:
    def test_backward_recurrence_oracle(self):
        rewards = [1.0, -2.0, 0.5, 10.0]
        g = 0.9 ** 0.25
        y = mc_value_targets(rewards, g)
        # Independent direct summation.
        expected = [sum(r * g**(k) for k, r in enumerate(rewards[t:]))
                    for t in range(4)]
        np.testing.assert_allclose(y, expected, atol=1e-12)

    def test_terminal_only(self):
        np.testing.assert_allclose(mc_value_targets([10.0], 0.5), [10.0])
        assert mc_value_targets([], 0.5).size == 0

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=20),
           st.floats(0.1, 1.0))
    @settings(max_examples=50, deadline=None)
    def test_linearity(self, rewards, g):
        y1 = mc_value_targets(rewards, g)
        y2 = mc_value_targets([2.0 * r for r in rewards], g)
        np.testing.assert_allclose(y2, 2.0 * y1, atol=1e-9)


class TestEpsilonSchedule:
    def test_endpoints_and_midpoint(self):
        cfg = TrainConfig()
        assert epsilon_schedule(0, cfg) == pytest.approx(0.5)
        assert epsilon_schedule(2000, cfg) == pytest.approx(0.3)
        assert epsilon_schedule(4000, cfg) == pytest.approx(0.1)
        assert epsilon_schedule(9999, cfg) == pytest.approx(0.1)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            epsilon_schedule(-1, TrainConfig())


class TestReplayBuffer:
    def test_fifo_eviction(self, rng):
        buf = ReplayBuffer(3)
        ts = [make_transition(rng, value_target=float(i)) for i in range(5)]
        for t in ts:
            buf.push(t)
        assert len(buf) == 3
        assert [t.value_target for t in buf] == [2.0, 3.0, 4.0]

    def test_sample_with_replacement(self, rng):
        buf = ReplayBuffer(10)
        for i in range(4):
            buf.push(make_transition(rng))
        batch = buf.sample(np.random.default_rng(0), 8)
        assert len(batch) == 8

    def test_save_load_round_trip(self, tmp_path, rng):
        buf = ReplayBuffer(10)
        for _ in range(5):
            buf.push(make_transition(rng))
        p = tmp_path / "buf.pkl"
        buf.save(p, meta={"config_digest": "abc"})
        loaded = ReplayBuffer.load(p)
        assert len(loaded) == 5
        for a, b in zip(buf, loaded):
            np.testing.assert_array_equal(a.humans, b.humans)
            assert a.value_target == b.value_target

    def test_bad_capacity(self):
        with pytest.raises(ValueError):
            ReplayBuffer(0)


class TestDemonstrations:
    def test_buffer_contents_and_mc_targets(self):
        cfg = tiny_config()
        spec = ScenarioSpec(kind="empty", seed=0)
        env = CrowdEnv()
        params = NetworkParameters.init(0)
        log = []
        buf = run_demonstrations(cfg, spec, env, params, episode_log=log)
        assert len(log) == 3
        assert all(e["outcome"] == "goal" for e in log)  # empty world: ORCA reaches it
        # 8 m at 1 m/s and goal at < 0.3 m -> 31 steps each.
        assert all(e["steps"] == 31 for e in log)
        ts = list(buf)
        assert all(t.next_robot is None for t in ts)  # demos have no TD tensors
        # The last transition of each episode is terminal with target = final reward.
        g = cfg.discount_step(0.25)
        terminals = [t for t in ts if t.terminal]
        assert len(terminals) == 3
        for t in terminals:
            assert t.value_target > 9.0  # goal reward dominates

    def test_demo_determinism(self):
        cfg = tiny_config()
        spec = ScenarioSpec(kind="circle_crossing", n_humans=2, seed=5)
        env = CrowdEnv()
        params = NetworkParameters.init(0)
        b1 = run_demonstrations(cfg, spec, env, params)
        b2 = run_demonstrations(cfg, spec, env, params)
        assert len(b1) == len(b2)
        for a, b in zip(b1, b2):
            np.testing.assert_array_equal(a.humans, b.humans)
            assert a.value_target == b.value_target
            np.testing.assert_array_equal(a.hidden, b.hidden)


class TestImitation:
    def test_loss_decreases(self):
        cfg = tiny_config(imitation_epochs=15, imitation_lr=0.01, batch_size=100)
        spec = ScenarioSpec(kind="empty", seed=0)
        env = CrowdEnv()
        params = NetworkParameters.init(0)
        buf = run_demonstrations(cfg, spec, env, params)
        losses = imitation_fit(params, buf, cfg)
        assert len(losses) == 15
        assert losses[-1] < losses[0]

    def test_empty_buffer_rejected(self):
        with pytest.raises(ValueError):
            imitation_fit(NetworkParameters.init(0), ReplayBuffer(5), tiny_config())


class TestRlTrain:
    def test_log_shape_and_determinism(self):
        spec = ScenarioSpec(kind="empty", seed=0)
        env = CrowdEnv()

        def run():
            cfg = tiny_config()
            params = NetworkParameters.init(1)
            log = rl_train(params, cfg, spec, env)
            return log, params

        log1, p1 = run()
        log2, p2 = run()
        assert log1 == log2
        for name in p1.params:
            np.testing.assert_array_equal(p1.params[name], p2.params[name])
        assert [e["episode"] for e in log1] == list(range(6))
        assert all(0.1 <= e["epsilon"] <= 0.5 for e in log1)
        assert all(e["loss"] is not None for e in log1[1:])  # after warmup

    def test_resume_reproduces_tail(self, tmp_path):
        spec = ScenarioSpec(kind="empty", seed=0)
        env = CrowdEnv()
        cfg = tiny_config(rl_episodes=8, checkpoint_every=4)
        params = NetworkParameters.init(2)
        full_log = rl_train(params, cfg, spec, env, out_dir=tmp_path)

        from socialnav.net.checkpoint import load_checkpoint

        p2 = load_checkpoint(tmp_path / "ckpt_ep4.mesa")
        buf, opt, start = load_train_state(tmp_path / "ckpt_ep4.state.pkl")
        assert start == 4
        tail_log = rl_train(p2, cfg, spec, env, buffer=buf, opt=opt, start_episode=start)
        assert tail_log == full_log[4:]
        for name in params.params:
            np.testing.assert_array_equal(p2.params[name], params.params[name])

    def test_mixed_demo_and_td_transitions(self):
        # Demo transitions (no next-state tensors) and TD transitions coexist
        # in one buffer and one sampled batch without error.
        spec = ScenarioSpec(kind="empty", seed=0)
        env = CrowdEnv()
        cfg = tiny_config(rl_episodes=3, warmup_episodes=0)
        params = NetworkParameters.init(3)
        buf = run_demonstrations(cfg, spec, env, params)
        n_demo = len(buf)
        log = rl_train(params, cfg, spec, env, buffer=buf)
        assert len(log) == 3
        assert len(buf) > n_demo


def test_train_state_round_trip(tmp_path, rng):
    buf = ReplayBuffer(10)
    buf.push(make_transition(rng))
    opt = SgdMomentum(0.8)
    opt.velocity = {"w": np.arange(3.0)}
    save_train_state(tmp_path / "s.pkl", buf, opt, 17)
    b2, o2, ep = load_train_state(tmp_path / "s.pkl")
    assert ep == 17 and len(b2) == 1 and o2.momentum == 0.8
    np.testing.assert_array_equal(o2.velocity["w"], [0.0, 1.0, 2.0])


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(gamma=0.0)
    with pytest.raises(ValueError):
        TrainConfig(eps_start=0.1, eps_end=0.5)
    assert TrainConfig().discount_step(0.25) == pytest.approx(0.9 ** 0.25)
