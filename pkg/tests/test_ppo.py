import numpy as np
import pytest

from adventurer.envs import PointGoal, SparseChain
from adventurer.ppo import (
    PolicyNet, PPOConfig, PPOLearner, RolloutBatch, Trajectory, ValueHeads, augmented_advantage,
    build_batch, clipped_surrogate, compute_gae, ppo_loss, ppo_update,
)
from adventurer.tensor import no_grad


def learner_for(env, **cfg):
    return PPOLearner(env.spec, PPOConfig(**cfg), np.random.default_rng(0), np.random.default_rng(1),
                      np.random.default_rng(2))


class TestGAE:
    def test_zero_rewards_zero_values(self):
        np.testing.assert_array_equal(compute_gae(np.zeros(5), np.zeros(5), [False] * 5, 0.99, 0.95), 0)

    def test_single_step(self):
        assert compute_gae([1.0], [0.0], [True], 1.0, 1.0).tolist() == [1.0]

    def test_two_step_hand_unrolled(self):
        adv = compute_gae([0.0, 1.0], [0.5, 0.5], [False, True], 0.9, 0.8)
        # delta_1 = 1 - 0.5 = 0.5; delta_0 = 0.9*0.5 - 0.5 = -0.05; A_0 = -0.05 + 0.72*0.5
        np.testing.assert_allclose(adv, [0.31, 0.5], rtol=0, atol=1e-15)

    def test_bootstrap_for_cutoff(self):
        adv = compute_gae([0.0], [0.0], [False], 0.9, 0.95, last_value=2.0)
        assert adv[0] == pytest.approx(1.8)
        assert compute_gae([0.0], [0.0], [True], 0.9, 0.95, last_value=2.0)[0] == 0.0

    def test_lambda_one_is_discounted_return(self):
        r = np.array([1.0, 0.0, 2.0, 1.0])
        v = np.array([0.3, -0.2, 0.7, 0.1])
        adv = compute_gae(r, v, [False, False, False, True], 0.9, 1.0)
        ret = [sum(r[k] * 0.9 ** (k - t) for k in range(t, 4)) for t in range(4)]
        np.testing.assert_allclose(adv + v, ret, atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            compute_gae([0.0, 1.0], [0.0], [False, True], 0.9, 0.9)


class TestAugmented:
    def test_beta_zero(self):
        a = np.array([0.1, -2.0])
        np.testing.assert_array_equal(augmented_advantage(a, [5.0, 5.0], 0.0), a)

    def test_hand_value(self):
        assert augmented_advantage([0.5], [1.0], 0.3)[0] == pytest.approx(0.8, abs=1e-15)

    def test_zero_intrinsic(self):
        a = np.array([0.1, -2.0])
        np.testing.assert_array_equal(augmented_advantage(a, np.zeros(2), 0.3), a)

    def test_constant_intrinsic_shift(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=10)
        out = augmented_advantage(a, np.full(10, 2.0), 0.3)
        np.testing.assert_allclose(out - a, 0.6, atol=1e-15)

        def norm(x):
            return (x - x.mean()) / x.std()

        np.testing.assert_allclose(norm(out), norm(a), atol=1e-12)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            augmented_advantage([1.0], [1.0, 2.0], 0.3)


class TestSurrogate:
    def test_hand_values(self):
        assert clipped_surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)
        assert clipped_surrogate(0.5, -1.0, 0.2) == pytest.approx(-0.8)

    def test_identity_ratio(self):
        adv = np.random.default_rng(0).normal(size=8)
        assert clipped_surrogate(np.ones(8), adv, 0.2).mean() == pytest.approx(adv.mean(), abs=1e-15)

    def test_clip_bound_property(self):
        rng = np.random.default_rng(7)
        r = rng.uniform(0, 3, 10_000)
        a = rng.normal(size=10_000) * 3
        eps = rng.uniform(0.01, 0.99, 10_000)
        term = clipped_surrogate(r, a, eps)
        assert np.all(np.abs(term) <= np.maximum(r, 1 + eps) * np.abs(a) + 1e-9)
        pos = a > 0
        assert np.all(term[pos] <= (1 + eps[pos]) * a[pos] + 1e-9)


def test_config_validation():
    for bad in ({"clip": 0.0}, {"clip": 1.0}, {"gamma_e": 0.0}, {"gamma_i": 1.1}, {"lam": -0.1},
                {"beta": -1.0}, {"epochs": 0}):
        with pytest.raises(ValueError):
            PPOConfig(**bad)


class TestPolicy:
    def test_categorical_probs_sum_to_one(self):
        pol = PolicyNet(SparseChain(5).spec, np.random.default_rng(0))
        obs = np.random.default_rng(1).random((20, 5))
        np.testing.assert_allclose(pol.probs(obs).sum(axis=1), 1.0, atol=1e-9)

    @pytest.mark.parametrize("env", [SparseChain(5), PointGoal()], ids=["discrete", "continuous"])
    def test_sampled_logp_matches_log_prob(self, env):
        pol = PolicyNet(env.spec, np.random.default_rng(0))
        obs = np.random.default_rng(1).random((16, env.spec.obs_dim))
        actions, logp = pol.act(obs, np.random.default_rng(2))
        assert np.all(np.isfinite(logp))
        with no_grad():
            again = pol.log_prob(obs, actions).data
        np.testing.assert_allclose(again, logp, atol=1e-12)

    def test_sampling_follows_probs(self):
        pol = PolicyNet(SparseChain(3).spec, np.random.default_rng(0))
        pol.body.layers[-1].bias.data[:] = [0.0, np.log(3.0)]
        obs = np.zeros((20_000, 3))
        p = pol.probs(obs[:1])[0]
        actions, _ = pol.act(obs, np.random.default_rng(4))
        assert abs(actions.mean() - p[1]) < 0.01

    def test_value_heads_separate(self):
        heads = ValueHeads(4, np.random.default_rng(0), np.random.default_rng(1))
        assert heads.extrinsic.layers[0].weight is not heads.intrinsic.layers[0].weight
        names = heads.params.names()
        assert any(n.startswith("v_e.") for n in names) and any(n.startswith("v_i.") for n in names)
        v_e, v_i = heads.predict(np.ones((3, 4)))
        assert np.all(np.isfinite(v_e)) and not np.allclose(v_e, v_i)


def _traj(env, rng, learner, beta_bonus=0.0):
    tr = Trajectory()
    obs = env.reset(int(rng.integers(1 << 30)))
    while True:
        a, lp = learner.policy.act(obs, rng)
        v_e, v_i = learner.heads.predict(obs)
        step = env.step(int(a[0]) if learner.policy.discrete else a[0])
        tr.obs.append(obs)
        tr.actions.append(a[0])
        tr.logp.append(lp[0])
        tr.rewards_e.append(step.reward)
        tr.bonus.append(beta_bonus)
        tr.values_e.append(v_e[0])
        tr.values_i.append(v_i[0])
        tr.dones.append(step.done and not step.truncated)
        obs = step.observation
        if step.done:
            tr.last_obs = obs
            tr.terminal = step.done and not step.truncated
            break
    tr.rewards_i = np.asarray(tr.bonus)
    return tr


class TestUpdate:
    def test_ratio_identity_first_minibatch(self):
        env = SparseChain(6)
        learner = learner_for(env)
        rng = np.random.default_rng(0)
        batch = build_batch([_traj(env, rng, learner) for _ in range(3)], learner.heads, learner.cfg)
        with no_grad():
            logp = learner.policy.log_prob(batch.obs, batch.actions).data
        assert np.max(np.abs(np.exp(logp - batch.logp) - 1.0)) <= 1e-12
        adv = np.random.default_rng(1).normal(size=len(batch))
        _, stats = ppo_loss(learner, batch.obs, batch.actions, batch.logp, adv, batch.ret_e, batch.ret_i)
        assert stats["clip_frac"] == 0.0

    def test_update_changes_params_and_reports(self):
        env = SparseChain(6)
        learner = learner_for(env, minibatch=8, epochs=2)
        rng = np.random.default_rng(0)
        batch = build_batch([_traj(env, rng, learner) for _ in range(3)], learner.heads, learner.cfg)
        before = learner.policy.params.checksum(), learner.heads.params.checksum()
        stats = ppo_update(learner, batch, np.random.default_rng(3))
        assert stats["minibatches"] == 2 * -(-len(batch) // 8)
        assert before[0] != learner.policy.params.checksum()
        assert before[1] != learner.heads.params.checksum()
        for key in ("policy_loss", "value_loss", "entropy", "clip_frac"):
            assert np.isfinite(stats[key])

    def test_empty_batch(self):
        env = SparseChain(4)
        learner = learner_for(env)
        empty = RolloutBatch(*(np.zeros((0, 4)) if k == 0 else np.zeros(0) for k in range(7)))
        with pytest.raises(ValueError):
            ppo_update(learner, empty, np.random.default_rng(0))
        with pytest.raises(ValueError):
            build_batch([], learner.heads, learner.cfg)

    def test_intrinsic_stream_ignores_episode_end(self):
        env = SparseChain(4, horizon=3)
        learner = learner_for(env)
        tr = Trajectory(obs=[np.eye(4)[0]] * 2, actions=[1, 1], logp=[0.0, 0.0], rewards_e=[0.0, 1.0],
                        bonus=[0.0, 0.0], values_e=[0.0, 0.0], values_i=[0.0, 0.0],
                        dones=[False, True], last_obs=np.eye(4)[3], terminal=True)
        tr.rewards_i = np.zeros(2)
        batch = build_batch([tr], learner.heads, learner.cfg)
        _, boot_i = learner.heads.predict(tr.last_obs)
        assert batch.adv_e[-1] == 1.0
        assert batch.adv_i[-1] == pytest.approx(learner.cfg.gamma_i * boot_i[0], abs=1e-15)

    def test_value_heads_regress_to_their_returns(self):
        env = SparseChain(4)
        learner = learner_for(env, lr=3e-3, minibatch=64)
        obs = np.eye(4)[np.random.default_rng(0).integers(0, 4, 64)]
        batch = RolloutBatch(obs=obs, actions=np.zeros(64, dtype=int),
                             logp=learner.policy.act(obs, np.random.default_rng(0), True)[1],
                             adv_e=np.zeros(64), adv_i=np.zeros(64),
                             ret_e=np.full(64, 1.0), ret_i=np.full(64, -1.0))
        for _ in range(100):
            ppo_update(learner, batch, np.random.default_rng(1))
        v_e, v_i = learner.heads.predict(obs)
        assert np.abs(v_e - 1.0).max() < 0.1 and np.abs(v_i + 1.0).max() < 0.1

    def test_determinism(self):
        def run():
            env = SparseChain(6)
            learner = learner_for(env, minibatch=16)
            rng = np.random.default_rng(0)
            batch = build_batch([_traj(env, rng, learner) for _ in range(2)], learner.heads, learner.cfg)
            ppo_update(learner, batch, np.random.default_rng(5))
            return learner.policy.params.checksum() + learner.heads.params.checksum()

        assert run() == run()
