"""The Adventurer training loop, with or without episodic-memory starts.

Episodes within an epoch run in lockstep: the policy is frozen for the whole
epoch, so stepping the N episodes side by side is the same process as running
them one after another, and it lets every network call work on a batch.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..baselines import make_estimator
from ..bigan import StateBuffer
from ..envs import make_env
from ..ppo import PPOConfig, PPOLearner, Trajectory, build_batch, ppo_update
from ..rewards import EpisodicMemory, RunningStats, normalization_params, normalize_bonus
from ..seeding import derive, derive_int
from ..tensor import save_params
from .config import make_config

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, epoch: int, cause: BaseException):
        super().__init__(f"epoch {epoch}: {type(cause).__name__}: {cause}")
        self.epoch = epoch
        self.cause = cause


def env_from_config(cfg: dict):
    name = cfg["env.name"]
    horizon = cfg["training.horizon"] or None
    if name == "sparse_chain":
        return make_env(name, length=cfg["env.length"], horizon=horizon)
    if name == "grid_maze":
        return make_env(name, layout_seed=cfg["env.layout_seed"], horizon=horizon)
    return make_env(name, goal_radius=cfg["env.goal_radius"], step_size=cfg["env.step_size"],
                    horizon=horizon, dense=cfg["env.dense"])


def ppo_config(cfg: dict) -> PPOConfig:
    return PPOConfig(clip=cfg["ppo.clip"], gamma_e=cfg["ppo.gamma_e"], gamma_i=cfg["ppo.gamma_i"],
                     lam=cfg["ppo.lambda"], epochs=cfg["ppo.epochs"], minibatch=cfg["ppo.minibatch"],
                     beta=cfg["ppo.beta"], entropy=cfg["ppo.entropy"], lr=cfg["ppo.lr"],
                     hidden=cfg["ppo.hidden"])


@dataclass
class Counters:
    novelty_calls: int = 0
    stats_updates: int = 0
    ppo_updates: int = 0
    novelty_updates: int = 0

    def reset(self):
        self.novelty_calls = self.stats_updates = self.ppo_updates = self.novelty_updates = 0


@dataclass
class TrainResult:
    records: list[dict]
    out_dir: Path | None
    learner: PPOLearner
    estimator: object
    memory: EpisodicMemory
    counters_log: list[dict] = field(default_factory=list)

    @property
    def final(self) -> dict:
        return self.records[-1]


class Trainer:
    def __init__(self, cfg: dict):
        self.cfg = cfg
        seed = cfg["training.seed"]
        self.seed = seed
        self.envs = [env_from_config(cfg) for _ in range(cfg["training.episodes"])]
        spec = self.envs[0].spec
        self.spec = spec
        self.horizon = spec.horizon
        self.learner = PPOLearner(spec, ppo_config(cfg), derive(seed, "init", "policy"),
                                  derive(seed, "init", "value_e"), derive(seed, "init", "value_i"))
        method = cfg["novelty.method"]
        self.method = method
        latent = cfg["bigan.latent_dim"] or (32 if cfg["env.name"] == "grid_maze" else 8)
        output = "linear" if cfg["env.name"] == "point_goal" else "sigmoid"
        self.estimator = make_estimator(method, spec.obs_dim, derive(seed, "init", "novelty"),
                                        derive(seed, "novelty", "train"), alpha=cfg["bigan.alpha"],
                                        latent_dim=latent, batch=cfg["novelty.batch"], output=output,
                                        hidden=cfg["novelty.hidden"], lr=cfg["novelty.lr"])
        self.buffer = StateBuffer(spec.obs_dim, cfg["bigan.buffer_capacity"])
        self.bonus_stats = RunningStats()
        self.reward_stats = RunningStats()
        self.memory = EpisodicMemory(cfg["memory.k"])
        self.rng_policy = derive(seed, "policy", "sample")
        self.rng_ppo = derive(seed, "ppo", "minibatch")
        self.rng_memory = derive(seed, "memory", "sample")
        self.counters = Counters()
        self.env_steps = 0

    # -- rollouts -------------------------------------------------------------
    def _score(self, states: np.ndarray) -> np.ndarray:
        self.counters.novelty_calls += states.shape[0]
        return self.estimator.score(states)

    def collect(self, epoch: int) -> tuple[list[Trajectory], list[bool]]:
        cfg = self.cfg
        use_memory = cfg["memory.enabled"]
        n = len(self.envs)
        trajs = [Trajectory(episode=i, epoch=epoch) for i in range(n)]
        fresh = []
        obs = np.zeros((n, self.spec.obs_dim))
        for i, env in enumerate(self.envs):
            snap = self.memory.sample_start(self.rng_memory, enabled=use_memory)
            if snap is not None:
                obs[i] = env.restore(snap, rewind_clock=True)
                fresh.append(False)
            else:
                obs[i] = env.reset(derive_int(self.seed, "env", epoch, i))
                fresh.append(True)
        self.buffer.add(obs)
        active = np.ones(n, dtype=bool)
        low = np.asarray(self.spec.action_low) if self.spec.action_kind == "continuous" else None
        high = np.asarray(self.spec.action_high) if low is not None else None
        while active.any():
            idx = np.flatnonzero(active)
            cur = obs[idx]
            actions, logp = self.learner.policy.act(cur, self.rng_policy)
            v_e, v_i = self.learner.heads.predict(cur)
            nxt = np.zeros_like(cur)
            transitions = []
            for j, i in enumerate(idx):
                a = actions[j]
                env_action = np.clip(a, low, high) if low is not None else int(a)
                tr = self.envs[i].step(env_action, capture=use_memory)
                transitions.append(tr)
                nxt[j] = tr.observation
            bonus = self._score(nxt)
            self.env_steps += len(idx)
            for j, i in enumerate(idx):
                tr, traj = transitions[j], trajs[i]
                traj.obs.append(cur[j])
                traj.actions.append(actions[j])
                traj.logp.append(logp[j])
                traj.rewards_e.append(tr.reward)
                traj.bonus.append(float(bonus[j]))
                traj.values_e.append(v_e[j])
                traj.values_i.append(v_i[j])
                terminal = tr.done and not tr.truncated
                traj.dones.append(terminal)
                if use_memory and not terminal:
                    self.memory.offer(self.envs[i].snapshot(include_clock=False), bonus[j])
                obs[i] = tr.observation
                if tr.done:
                    traj.last_obs = tr.observation
                    traj.terminal = terminal
                    active[i] = False
            self.buffer.add(nxt)
        return trajs, fresh

    # -- one epoch ------------------------------------------------------------
    def run_epoch(self, epoch: int) -> dict:
        cfg = self.cfg
        self.counters.reset()
        trajs, fresh = self.collect(epoch)
        rewards = np.concatenate([np.asarray(t.rewards_e) for t in trajs])
        bonuses = np.concatenate([np.asarray(t.bonus) for t in trajs])
        if self.method != "none":
            self.reward_stats.update(rewards)
            self.bonus_stats.update(bonuses)
        self.counters.stats_updates += 1
        for t in trajs:
            if self.method == "none":
                t.rewards_i = np.zeros(len(t))
            else:
                t.rewards_i = normalize_bonus(np.asarray(t.bonus), self.bonus_stats, self.reward_stats,
                                              cfg["normalize.variant"])
        batch = build_batch(trajs, self.learner.heads, self.learner.cfg)
        stats = ppo_update(self.learner, batch, self.rng_ppo)
        self.counters.ppo_updates += 1
        novelty_losses = self.estimator.fit(self.buffer, cfg["bigan.steps_per_epoch"])
        self.counters.novelty_updates += 1
        if cfg["memory.enabled"]:
            occupancy = len(self.memory)
            self.memory.rollover()
        else:
            occupancy = 0
        mu_b, sigma_b, mu_re = normalization_params(self.bonus_stats, self.reward_stats)
        success = np.array([t.terminal and t.extrinsic_return > 0 for t in trajs])
        fresh = np.array(fresh)
        returns = np.array([t.extrinsic_return for t in trajs])
        return {
            "epoch": epoch,
            "episodes": len(trajs),
            "env_steps": self.env_steps,
            "mean_extrinsic_return": float(returns.mean()),
            "success_rate": float(success.mean()),
            "fresh_success_rate": float(success[fresh].mean()) if fresh.any() else None,
            "mean_bonus": float(bonuses.mean()),
            "max_bonus": float(bonuses.max()),
            "mu_bonus": mu_b,
            "sigma_bonus": sigma_b,
            "mu_extrinsic": mu_re,
            "memory_occupancy": occupancy,
            "policy_loss": stats["policy_loss"],
            "value_loss": stats["value_loss"],
            "entropy": stats["entropy"],
            "clip_frac": stats["clip_frac"],
            "novelty_loss": float(np.mean(novelty_losses)) if novelty_losses else None,
            "policy_losses": stats["policy_losses"],
            "novelty_calls": self.counters.novelty_calls,
            "stats_updates": self.counters.stats_updates,
            "ppo_updates": self.counters.ppo_updates,
            "novelty_updates": self.counters.novelty_updates,
        }

    def save_checkpoints(self, out: Path) -> None:
        save_params(self.learner.policy.params, out / "policy.advk")
        save_params(self.learner.heads.params, out / "values.advk")
        if len(self.estimator.params):
            save_params(self.estimator.params, out / "novelty.advk")


def train(cfg: dict | None = None, out_dir=None, on_epoch=None) -> TrainResult:
    """Run a full training job; one metrics line per epoch.

    ``metrics.jsonl`` is a pure function of the config. Wall-clock timings go
    to ``timing.jsonl`` next to it.
    """
    cfg = make_config(cfg) if cfg is None or not _is_full(cfg) else cfg
    out = Path(out_dir) if out_dir is not None else None
    trainer = Trainer(cfg)
    records = []
    metrics_f = timing_f = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        metrics_f = open(out / "metrics.jsonl", "w")
        timing_f = open(out / "timing.jsonl", "w")
    try:
        for epoch in range(cfg["training.epochs"]):
            t0 = time.perf_counter()
            try:
                rec = trainer.run_epoch(epoch)
            except Exception as exc:
                if out is not None:
                    (out / "error.json").write_text(json.dumps(
                        {"epoch": epoch, "error": f"{type(exc).__name__}: {exc}"}) + "\n")
                raise TrainingError(epoch, exc) from exc
            records.append(rec)
            if metrics_f is not None:
                metrics_f.write(json.dumps(rec) + "\n")
                metrics_f.flush()
                timing_f.write(json.dumps({"epoch": epoch,
                                           "wall_clock": time.perf_counter() - t0}) + "\n")
            if on_epoch is not None:
                on_epoch(rec)
        if out is not None and cfg["training.checkpoint"]:
            trainer.save_checkpoints(out)
    finally:
        if metrics_f is not None:
            metrics_f.close()
            timing_f.close()
    return TrainResult(records, out, trainer.learner, trainer.estimator, trainer.memory)


def _is_full(cfg: dict) -> bool:
    from .config import DEFAULTS

    return set(cfg) == set(DEFAULTS)
