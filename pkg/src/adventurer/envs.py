"""Sparse-reward toy environments with exact, restorable simulator state."""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EnvSpec", "StateSnapshot", "Transition", "SnapshotError", "EpisodeDone",
    "SparseChain", "GridMaze", "PointGoal", "make_env", "ENV_NAMES",
]


class SnapshotError(ValueError):
    pass


class EpisodeDone(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    action_kind: str  # "discrete" | "continuous"
    horizon: int
    n_actions: int = 0
    action_dim: int = 0
    action_low: tuple = ()
    action_high: tuple = ()

    def __post_init__(self):
        if self.obs_dim < 1 or self.horizon < 1:
            raise ValueError("obs_dim and horizon must be positive")
        if self.action_kind == "discrete":
            if self.n_actions < 1:
                raise ValueError("discrete spec needs n_actions >= 1")
        elif self.action_kind == "continuous":
            if len(self.action_low) != self.action_dim or len(self.action_high) != self.action_dim:
                raise ValueError("bounds must match action_dim")
            if any(lo >= hi for lo, hi in zip(self.action_low, self.action_high)):
                raise ValueError("continuous bounds need low < high")
        else:
            raise ValueError(f"unknown action kind {self.action_kind!r}")


@dataclass(frozen=True)
class StateSnapshot:
    tag: str
    data: bytes


@dataclass
class Transition:
    observation: np.ndarray
    reward: float
    done: bool
    truncated: bool = False
    snapshot: StateSnapshot | None = field(default=None, repr=False)


class _Env:
    name = ""
    spec: EnvSpec

    def __init__(self):
        self.t = 0
        self.done = False
        self.terminal = False  # done for a reason other than the horizon

    # subclasses implement _pack/_unpack over their own state
    def _pack(self) -> bytes:
        raise NotImplementedError

    def _unpack(self, payload: bytes) -> None:
        raise NotImplementedError

    def _obs(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def tag(self) -> str:
        raise NotImplementedError

    def snapshot(self, include_clock: bool = True) -> StateSnapshot:
        """Capture the simulator state.

        Without the clock, two visits to the same state at different steps
        produce identical snapshots. Only a terminal state is stored as
        finished; running out of horizon is a property of the clock.
        """
        t = self.t if include_clock else 0
        payload = struct.pack("<I?", t, self.terminal) + self._pack()
        return StateSnapshot(self.tag, payload + struct.pack("<I", zlib.crc32(payload)))

    def restore(self, snapshot: StateSnapshot, rewind_clock: bool = False) -> np.ndarray:
        """Return to a captured state.

        ``rewind_clock`` restarts the horizon budget from the restored state;
        the simulator state itself is still restored exactly.
        """
        if not isinstance(snapshot, StateSnapshot) or snapshot.tag != self.tag:
            raise SnapshotError(f"snapshot from {getattr(snapshot, 'tag', None)!r} "
                                f"cannot restore {self.tag!r}")
        data = snapshot.data
        if len(data) < 9:
            raise SnapshotError("truncated snapshot")
        payload, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
        if zlib.crc32(payload) != crc:
            raise SnapshotError("corrupted snapshot")
        try:
            t, terminal = struct.unpack_from("<I?", payload)
            self._unpack(payload[5:])
        except struct.error as exc:
            raise SnapshotError(f"corrupted snapshot: {exc}") from exc
        self.t = 0 if rewind_clock else t
        self.terminal = terminal
        self.done = terminal or self.t >= self.spec.horizon
        return self._obs()

    def _check_live(self):
        if self.done:
            raise EpisodeDone("step() called after the episode ended; reset first")

    def _finish(self, reward: float, terminal: bool, capture: bool) -> Transition:
        self.t += 1
        truncated = (not terminal) and self.t >= self.spec.horizon
        self.terminal = terminal
        self.done = terminal or truncated
        snap = self.snapshot() if capture else None
        return Transition(self._obs(), float(reward), self.done, truncated, snap)

    def _check_discrete(self, action) -> int:
        a = int(action)
        if a != action or not 0 <= a < self.spec.n_actions:
            raise ValueError(f"action {action!r} outside 0..{self.spec.n_actions - 1}")
        return a


class SparseChain(_Env):
    """Cells 0..N-1; "right" advances, "left" drops back to cell 0.

    Reward 1 on entering the last cell, which ends the episode.
    """

    name = "sparse_chain"
    LEFT, RIGHT = 0, 1

    def __init__(self, length: int = 10, horizon: int | None = None):
        super().__init__()
        if length < 2:
            raise ValueError("chain length must be >= 2")
        self.length = length
        self.spec = EnvSpec(obs_dim=length, action_kind="discrete", n_actions=2,
                            horizon=horizon if horizon is not None else 2 * length)
        self.pos = 0

    @property
    def tag(self) -> str:
        return f"{self.name}:N={self.length}:H={self.spec.horizon}"

    def _obs(self):
        obs = np.zeros(self.length)
        obs[self.pos] = 1.0
        return obs

    def _pack(self):
        return struct.pack("<I", self.pos)

    def _unpack(self, payload):
        (pos,) = struct.unpack("<I", payload)
        if pos >= self.length:
            raise SnapshotError("position outside chain")
        self.pos = pos

    def reset(self, seed: int | None = None) -> np.ndarray:
        self.pos, self.t, self.done, self.terminal = 0, 0, False, False
        return self._obs()

    def step(self, action, capture: bool = False) -> Transition:
        self._check_live()
        a = self._check_discrete(action)
        self.pos = self.pos + 1 if a == self.RIGHT else 0
        at_goal = self.pos == self.length - 1
        return self._finish(1.0 if at_goal else 0.0, at_goal, capture)


class GridMaze(_Env):
    """Two rooms on a 12x12 grid joined by a single door.

    The observation is the flattened grid with walls and the agent's cell set
    to 1. Episodes start at a random cell of the left room; reward 1 on
    reaching the goal cell in the right room.
    """

    name = "grid_maze"
    SIZE = 12
    WALL_COL = 6
    MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))  # up, down, left, right

    def __init__(self, layout_seed: int = 0, horizon: int = 100):
        super().__init__()
        self.layout_seed = layout_seed
        n = self.SIZE
        rng = np.random.default_rng(layout_seed)
        walls = np.zeros((n, n), dtype=bool)
        walls[0, :] = walls[-1, :] = walls[:, 0] = walls[:, -1] = True
        walls[:, self.WALL_COL] = True
        self.door = (int(rng.integers(1, n - 1)), self.WALL_COL)
        walls[self.door] = False
        self.walls = walls
        self.goal = (int(rng.integers(1, n - 1)), n - 2)
        self.room1 = [(r, c) for r in range(1, n - 1) for c in range(1, self.WALL_COL)]
        self.spec = EnvSpec(obs_dim=n * n, action_kind="discrete", n_actions=4, horizon=horizon)
        self._base = walls.astype(np.float64).reshape(-1)
        self.pos = self.room1[0]

    @property
    def tag(self) -> str:
        return f"{self.name}:layout={self.layout_seed}:H={self.spec.horizon}"

    def room_of(self, cell) -> int:
        return 1 if cell[1] < self.WALL_COL else 2

    def _obs(self):
        obs = self._base.copy()
        obs[self.pos[0] * self.SIZE + self.pos[1]] = 1.0
        return obs

    def _pack(self):
        return struct.pack("<II", *self.pos)

    def _unpack(self, payload):
        r, c = struct.unpack("<II", payload)
        if r >= self.SIZE or c >= self.SIZE or self.walls[r, c]:
            raise SnapshotError("position is not a free cell")
        self.pos = (r, c)

    def reset(self, seed: int | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.pos = self.room1[int(rng.integers(len(self.room1)))]
        self.t, self.done, self.terminal = 0, False, False
        return self._obs()

    def step(self, action, capture: bool = False) -> Transition:
        self._check_live()
        dr, dc = self.MOVES[self._check_discrete(action)]
        nxt = (self.pos[0] + dr, self.pos[1] + dc)
        if not self.walls[nxt]:
            self.pos = nxt
        at_goal = self.pos == self.goal
        return self._finish(1.0 if at_goal else 0.0, at_goal, capture)


class PointGoal(_Env):
    """Point mass in [-1, 1]^2 moving by ``step_size * action`` per step.

    Observation is (x, y, goal_x, goal_y). Sparse mode pays 1 when the point
    gets within ``goal_radius`` of the goal; dense mode pays minus the distance
    every step. Reaching the goal ends the episode in both modes.
    """

    name = "point_goal"
    BOUND = 1.0

    def __init__(self, goal_radius: float = 0.1, step_size: float = 0.1, horizon: int = 50,
                 dense: bool = False):
        super().__init__()
        if goal_radius <= 0 or step_size <= 0:
            raise ValueError("goal_radius and step_size must be positive")
        self.goal_radius = goal_radius
        self.step_size = step_size
        self.dense = dense
        self.spec = EnvSpec(obs_dim=4, action_kind="continuous", action_dim=2,
                            action_low=(-1.0, -1.0), action_high=(1.0, 1.0), horizon=horizon)
        self.pos = np.zeros(2)
        self.goal = np.zeros(2)

    @property
    def tag(self) -> str:
        return (f"{self.name}:r={self.goal_radius!r}:step={self.step_size!r}"
                f":H={self.spec.horizon}:dense={int(self.dense)}")

    def _obs(self):
        return np.concatenate([self.pos, self.goal])

    def _pack(self):
        return struct.pack("<4d", *self.pos, *self.goal)

    def _unpack(self, payload):
        vals = struct.unpack("<4d", payload)
        self.pos = np.array(vals[:2])
        self.goal = np.array(vals[2:])

    def distance(self) -> float:
        return float(np.linalg.norm(self.pos - self.goal))

    def reset(self, seed: int | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        b = self.BOUND
        self.goal = rng.uniform(-b, b, size=2)
        while True:
            self.pos = rng.uniform(-b, b, size=2)
            if self.distance() > self.goal_radius:
                break
        self.t, self.done, self.terminal = 0, False, False
        return self._obs()

    def step(self, action, capture: bool = False) -> Transition:
        self._check_live()
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (2,):
            raise ValueError(f"expected a 2-vector action, got shape {a.shape}")
        if not np.isfinite(a).all() or np.any(np.abs(a) > self.BOUND):
            raise ValueError(f"action {a} outside [-1, 1]^2")
        self.pos = np.clip(self.pos + self.step_size * a, -self.BOUND, self.BOUND)
        dist = self.distance()
        reached = dist <= self.goal_radius
        if self.dense:
            reward = -dist
        else:
            reward = 1.0 if reached else 0.0
        return self._finish(reward, reached, capture)


ENV_NAMES = ("sparse_chain", "grid_maze", "point_goal")


def make_env(name: str, **params):
    if name == "sparse_chain":
        return SparseChain(length=params.get("length", 10), horizon=params.get("horizon"))
    if name == "grid_maze":
        return GridMaze(layout_seed=params.get("layout_seed", 0), horizon=params.get("horizon") or 100)
    if name == "point_goal":
        return PointGoal(goal_radius=params.get("goal_radius", 0.1),
                         step_size=params.get("step_size", 0.1),
                         horizon=params.get("horizon") or 50,
                         dense=params.get("dense", False))
    raise ValueError(f"unknown environment {name!r}; expected one of {ENV_NAMES}")
