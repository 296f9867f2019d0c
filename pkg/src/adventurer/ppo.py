"""PPO with separate extrinsic/intrinsic value heads."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .envs import EnvSpec
from .tensor import MLP, AdamState, ParamSet, Tensor, adam_step, no_grad

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class PPOConfig:
    clip: float = 0.2
    gamma_e: float = 0.99
    gamma_i: float = 0.95
    lam: float = 0.95
    epochs: int = 4
    minibatch: int = 256
    beta: float = 0.3
    entropy: float = 0.01
    lr: float = 3e-4
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    hidden: int = 64

    def __post_init__(self):
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        for name in ("gamma_e", "gamma_i"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        if not 0 <= self.lam <= 1:
            raise ValueError("lambda must lie in [0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.epochs < 1 or self.minibatch < 1:
            raise ValueError("epochs and minibatch must be >= 1")


class PolicyNet:
    """Categorical head for discrete specs, diagonal Gaussian for continuous ones."""

    def __init__(self, spec: EnvSpec, rng: np.random.Generator, hidden: int = 64):
        self.spec = spec
        self.discrete = spec.action_kind == "discrete"
        n_out = spec.n_actions if self.discrete else spec.action_dim
        self.body = MLP([spec.obs_dim, hidden, hidden, n_out], rng, out_gain=0.01)
        self.params = ParamSet()
        self.params.update(self.body.params, "pi.")
        if not self.discrete:
            self.log_std = self.params.add("pi.log_std", Tensor(np.full(n_out, -0.5)))

    def log_prob(self, obs, actions) -> Tensor:
        out = self.body(obs)
        if self.discrete:
            onehot = np.zeros(out.shape)
            onehot[np.arange(out.shape[0]), np.asarray(actions, dtype=np.int64)] = 1.0
            return (out.log_softmax() * onehot).sum(axis=1)
        z = (Tensor(np.asarray(actions, dtype=np.float64)) - out) * (-self.log_std).exp()
        per_dim = z.square() * -0.5 - self.log_std - 0.5 * _LOG_2PI
        return per_dim.sum(axis=1)

    def entropy(self, obs) -> Tensor:
        if self.discrete:
            logp = self.body(obs).log_softmax()
            return -(logp.exp() * logp).sum(axis=1)
        ent = (self.log_std + 0.5 * (_LOG_2PI + 1.0)).sum()
        return ent * Tensor(np.ones(np.shape(obs)[0]))

    def probs(self, obs) -> np.ndarray:
        with no_grad():
            logp = self.body(obs).log_softmax().data
        return np.exp(logp)

    def act(self, obs: np.ndarray, rng: np.random.Generator, deterministic: bool = False):
        """Sample actions for a batch of observations; returns (actions, log-probs)."""
        obs = np.atleast_2d(obs)
        with no_grad():
            out = self.body(obs).data
            if self.discrete:
                shifted = out - out.max(axis=1, keepdims=True)
                logp_all = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
                if deterministic:
                    actions = logp_all.argmax(axis=1)
                else:
                    cdf = np.cumsum(np.exp(logp_all), axis=1)
                    u = rng.random(obs.shape[0])[:, None]
                    actions = np.minimum((u > cdf).sum(axis=1), out.shape[1] - 1)
                logp = logp_all[np.arange(obs.shape[0]), actions]
                return actions, logp
            log_std = self.log_std.data
            if deterministic:
                actions = out.copy()
            else:
                actions = out + np.exp(log_std) * rng.standard_normal(out.shape)
            z = (actions - out) * np.exp(-log_std)
            logp = (-0.5 * z * z - log_std - 0.5 * _LOG_2PI).sum(axis=1)
            return actions, logp


class ValueHeads:
    def __init__(self, obs_dim: int, rng_e: np.random.Generator, rng_i: np.random.Generator,
                 hidden: int = 64):
        self.extrinsic = MLP([obs_dim, hidden, hidden, 1], rng_e)
        self.intrinsic = MLP([obs_dim, hidden, hidden, 1], rng_i)
        self.params = ParamSet()
        self.params.update(self.extrinsic.params, "v_e.")
        self.params.update(self.intrinsic.params, "v_i.")

    def __call__(self, obs) -> tuple[Tensor, Tensor]:
        return self.extrinsic(obs).reshape(-1), self.intrinsic(obs).reshape(-1)

    def predict(self, obs) -> tuple[np.ndarray, np.ndarray]:
        with no_grad():
            v_e, v_i = self(np.atleast_2d(obs))
        return v_e.data.copy(), v_i.data.copy()


# -- advantage estimation -----------------------------------------------------

def compute_gae(rewards, values, dones, gamma: float, lam: float, last_value: float = 0.0):
    """GAE(lambda) advantages.

    ``values[t]`` is V(s_t); ``last_value`` bootstraps past the final step and
    is ignored when that step is terminal. Returns-to-go are ``adv + values``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    if not rewards.shape == values.shape == dones.shape or rewards.ndim != 1:
        raise ValueError(f"length mismatch: rewards {rewards.shape}, values {values.shape}, "
                         f"dones {dones.shape}")
    return kernels.gae(rewards, values, dones, float(last_value), float(gamma), float(lam))


def augmented_advantage(adv_e, adv_i, beta: float):
    adv_e = np.asarray(adv_e, dtype=np.float64)
    adv_i = np.asarray(adv_i, dtype=np.float64)
    if adv_e.shape != adv_i.shape:
        raise ValueError(f"length mismatch: {adv_e.shape} vs {adv_i.shape}")
    return adv_e + beta * adv_i


def clipped_surrogate(ratio, adv, eps: float):
    """Per-sample min(r*A, clip(r, 1-eps, 1+eps)*A)."""
    ratio = np.asarray(ratio, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)


@dataclass
class Trajectory:
    """One episode as collected; per-step arrays filled by the rollout loop."""

    obs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    logp: list = field(default_factory=list)
    rewards_e: list = field(default_factory=list)
    bonus: list = field(default_factory=list)  # raw novelty of s_{t+1}
    values_e: list = field(default_factory=list)
    values_i: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    last_obs: np.ndarray | None = None
    terminal: bool = False
    episode: int = 0
    epoch: int = 0
    rewards_i: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.rewards_e)

    @property
    def extrinsic_return(self) -> float:
        return float(np.sum(self.rewards_e))


@dataclass
class RolloutBatch:
    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    adv_e: np.ndarray
    adv_i: np.ndarray
    ret_e: np.ndarray
    ret_i: np.ndarray

    def __len__(self) -> int:
        return self.obs.shape[0]


def build_batch(trajectories: list[Trajectory], heads: ValueHeads, cfg: PPOConfig) -> RolloutBatch:
    """Dual GAE per episode.

    The extrinsic stream stops at terminal states; the intrinsic stream
    ignores episode ends and bootstraps from V_i of the final next state.
    """
    if not trajectories:
        raise ValueError("empty batch")
    parts = {k: [] for k in ("obs", "actions", "logp", "adv_e", "adv_i", "ret_e", "ret_i")}
    for tr in trajectories:
        if tr.rewards_i is None:
            raise ValueError("intrinsic rewards missing; normalize bonuses first")
        boot_e, boot_i = heads.predict(tr.last_obs)
        v_e = np.asarray(tr.values_e)
        v_i = np.asarray(tr.values_i)
        dones = np.asarray(tr.dones, dtype=bool)
        adv_e = compute_gae(tr.rewards_e, v_e, dones, cfg.gamma_e, cfg.lam,
                            0.0 if tr.terminal else boot_e[0])
        adv_i = compute_gae(tr.rewards_i, v_i, np.zeros_like(dones), cfg.gamma_i, cfg.lam, boot_i[0])
        parts["obs"].append(np.asarray(tr.obs))
        parts["actions"].append(np.asarray(tr.actions))
        parts["logp"].append(np.asarray(tr.logp))
        parts["adv_e"].append(adv_e)
        parts["adv_i"].append(adv_i)
        parts["ret_e"].append(adv_e + v_e)
        parts["ret_i"].append(adv_i + v_i)
    return RolloutBatch(**{k: np.concatenate(v) for k, v in parts.items()})


class PPOLearner:
    """Owns the policy, the two value heads and their optimizer states."""

    def __init__(self, spec: EnvSpec, cfg: PPOConfig, rng_policy, rng_value_e, rng_value_i):
        self.cfg = cfg
        self.policy = PolicyNet(spec, rng_policy, cfg.hidden)
        self.heads = ValueHeads(spec.obs_dim, rng_value_e, rng_value_i, cfg.hidden)
        self.opt_policy = AdamState(self.policy.params, lr=cfg.lr)
        self.opt_value = AdamState(self.heads.params, lr=cfg.lr)

    def update(self, batch: RolloutBatch, rng: np.random.Generator) -> dict:
        return ppo_update(self, batch, rng)


def _clip_grad_norm(params: ParamSet, max_norm: float) -> float:
    total = math.sqrt(sum(float((p.grad * p.grad).sum()) for p in params))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            p.grad *= scale
    return total


def ppo_loss(learner: PPOLearner, obs, actions, logp_old, adv, ret_e, ret_i):
    """Scalar PPO loss plus diagnostics for one minibatch."""
    cfg = learner.cfg
    logp = learner.policy.log_prob(obs, actions)
    ratio = (logp - Tensor(logp_old)).exp()
    adv_t = Tensor(adv)
    surrogate = (ratio * adv_t).minimum(ratio.clip(1.0 - cfg.clip, 1.0 + cfg.clip) * adv_t)
    entropy = learner.policy.entropy(obs).mean()
    policy_loss = -surrogate.mean() - cfg.entropy * entropy
    v_e, v_i = learner.heads(obs)
    value_loss = (v_e - Tensor(ret_e)).square().mean() * 0.5 + (v_i - Tensor(ret_i)).square().mean() * 0.5
    total = policy_loss + cfg.value_coef * value_loss
    return total, {
        "policy_loss": policy_loss.item(),
        "value_loss": value_loss.item(),
        "entropy": entropy.item(),
        "clip_frac": float(np.mean(np.abs(ratio.data - 1.0) > cfg.clip)),
        "approx_kl": float(np.mean(logp_old - logp.data)),
    }


def ppo_update(learner: PPOLearner, batch: RolloutBatch, rng: np.random.Generator) -> dict:
    """Clipped-surrogate update over ``cfg.epochs`` shuffled passes.

    Advantages are combined as A_e + beta*A_i, then normalized per batch.
    """
    cfg = learner.cfg
    n = len(batch)
    if n == 0:
        raise ValueError("empty batch")
    adv = augmented_advantage(batch.adv_e, batch.adv_i, cfg.beta)
    std = adv.std()
    adv = (adv - adv.mean()) / (std + 1e-8) if n > 1 else adv - adv.mean()
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            learner.policy.params.zero_grads()
            learner.heads.params.zero_grads()
            loss, stats = ppo_loss(learner, batch.obs[idx], batch.actions[idx], batch.logp[idx],
                                   adv[idx], batch.ret_e[idx], batch.ret_i[idx])
            if not math.isfinite(loss.item()):
                raise FloatingPointError("non-finite PPO loss")
            loss.backward()
            _clip_grad_norm(learner.policy.params, cfg.max_grad_norm)
            # per head, so the intrinsic stream never rescales the extrinsic one
            _clip_grad_norm(learner.heads.extrinsic.params, cfg.max_grad_norm)
            _clip_grad_norm(learner.heads.intrinsic.params, cfg.max_grad_norm)
            adam_step(learner.policy.params, learner.opt_policy)
            adam_step(learner.heads.params, learner.opt_value)
            history.append(stats)
    out = {k: float(np.mean([h[k] for h in history])) for k in history[0]}
    out["policy_losses"] = [h["policy_loss"] for h in history]
    out["minibatches"] = len(history)
    return out
