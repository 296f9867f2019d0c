"""Intrinsic-reward normalization and the double-buffered episodic memory."""
from __future__ import annotations

import math

import numpy as np

from .envs import StateSnapshot

SIGMA_FLOOR = 1e-8
VARIANTS = ("paper", "shifted")


class RunningStats:
    """Welford accumulator; ``std`` is the population standard deviation."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, x: float) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def update(self, values) -> None:
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.size == 0:
            return
        batch = RunningStats()
        batch.count = int(values.size)
        batch.mean = float(values.mean())
        batch.m2 = float(((values - batch.mean) ** 2).sum())
        self.merge(batch)

    def merge(self, other: "RunningStats") -> None:
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return
        n = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / n
        self.m2 += other.m2 + delta * delta * self.count * other.count / n
        self.count = n

    @property
    def var(self) -> float:
        return self.m2 / self.count if self.count else 0.0

    @property
    def std(self) -> float:
        return math.sqrt(max(self.var, 0.0))

    def copy(self) -> "RunningStats":
        out = RunningStats()
        out.count, out.mean, out.m2 = self.count, self.mean, self.m2
        return out

    def as_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean, "std": self.std}


def normalization_params(bonus_stats: RunningStats, reward_stats: RunningStats):
    """(mu_B, sigma_B, mu_re) with the warm-up fallback before two samples exist."""
    if bonus_stats.count < 2:
        return 0.0, 1.0, 0.0
    mu_re = reward_stats.mean if reward_stats.count else 0.0
    return bonus_stats.mean, max(bonus_stats.std, SIGMA_FLOOR), mu_re


def normalize_bonus(bonus, bonus_stats: RunningStats, reward_stats: RunningStats,
                    variant: str = "paper"):
    """Map raw novelty scores to intrinsic rewards.

    ``paper``:   (B - mu_B + mu_re) / sigma_B
    ``shifted``: (B - mu_B) / sigma_B + mu_re

    Stats are read, never updated. Works elementwise on arrays.
    """
    mu_b, sigma_b, mu_re = normalization_params(bonus_stats, reward_stats)
    b = np.asarray(bonus, dtype=np.float64)
    if variant == "paper":
        out = (b - mu_b + mu_re) / sigma_b
    elif variant == "shifted":
        out = (b - mu_b) / sigma_b + mu_re
    else:
        raise ValueError(f"unknown normalization variant {variant!r}")
    return float(out) if out.ndim == 0 else out


class EpisodicMemory:
    """Top-K store of the most novel snapshots seen this epoch.

    Offers go to the write buffer; ``sample_start`` reads the buffer frozen at
    the last rollover. Entries are keyed by snapshot bytes. Among equal scores
    the snapshot first offered earlier in the epoch wins.
    """

    def __init__(self, capacity: int = 64):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self.epoch = 0
        self._write: dict[StateSnapshot, float] = {}
        self._first_seen: dict[StateSnapshot, int] = {}
        self._read: tuple[tuple[StateSnapshot, float], ...] = ()

    def __len__(self) -> int:
        return len(self._write)

    def _key(self, snap):
        return self._write[snap], -self._first_seen[snap]

    def offer(self, snapshot: StateSnapshot, score: float) -> bool:
        if self.capacity == 0:
            return False
        score = float(score)
        first = self._first_seen.setdefault(snapshot, len(self._first_seen))
        if snapshot in self._write:
            if score > self._write[snapshot]:
                self._write[snapshot] = score
                return True
            return False
        if len(self._write) < self.capacity:
            self._write[snapshot] = score
            return True
        worst = min(self._write, key=self._key)
        if (score, -first) > self._key(worst):
            del self._write[worst]
            self._write[snapshot] = score
            return True
        return False

    def entries(self) -> list[tuple[StateSnapshot, float]]:
        """Write buffer, best first."""
        return [(s, self._write[s]) for s in sorted(self._write, key=self._key, reverse=True)]

    @property
    def read_buffer(self) -> tuple[tuple[StateSnapshot, float], ...]:
        return self._read

    def rollover(self) -> None:
        self._read = tuple(self.entries())
        self._write = {}
        self._first_seen = {}
        self.epoch += 1

    def sample_start(self, rng: np.random.Generator, enabled: bool = True) -> StateSnapshot | None:
        if not enabled or self.epoch < 1 or not self._read:
            return None
        return self._read[int(rng.integers(len(self._read)))][0]


def epoch_rollover(mem: EpisodicMemory) -> None:
    mem.rollover()


def memory_offer(mem: EpisodicMemory, snapshot: StateSnapshot, score: float) -> bool:
    return mem.offer(snapshot, score)


def sample_start(mem: EpisodicMemory, rng: np.random.Generator, enabled: bool = True):
    return mem.sample_start(rng, enabled)
