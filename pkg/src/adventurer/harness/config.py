"""Run configuration: flat ``dotted.key = value`` files with ``#`` comments."""
from __future__ import annotations

import copy
from pathlib import Path


class ConfigError(ValueError):
    pass


# key: (default, description)
DEFAULTS: dict[str, tuple[object, str]] = {
    "env.name": ("sparse_chain", "sparse_chain | grid_maze | point_goal"),
    "env.length": (20, "SparseChain length N"),
    "env.layout_seed": (0, "GridMaze door/goal placement seed"),
    "env.goal_radius": (0.1, "PointGoal success radius"),
    "env.step_size": (0.1, "PointGoal displacement per unit action"),
    "env.dense": (False, "PointGoal dense reward (minus distance)"),
    "ppo.clip": (0.2, "surrogate clip epsilon"),
    "ppo.gamma_e": (0.99, "extrinsic discount"),
    "ppo.gamma_i": (0.95, "intrinsic discount"),
    "ppo.lambda": (0.95, "GAE lambda"),
    "ppo.beta": (0.3, "intrinsic advantage weight"),
    "ppo.epochs": (4, "passes over each batch"),
    "ppo.minibatch": (256, "minibatch size"),
    "ppo.entropy": (0.01, "entropy bonus coefficient"),
    "ppo.lr": (3e-4, "Adam learning rate for policy and value heads"),
    "ppo.hidden": (64, "hidden width of policy/value MLPs"),
    "novelty.method": ("bigan", "bigan | rnd | vae | lg_only | ld_only | none"),
    "novelty.lr": (2e-4, "Adam learning rate for the novelty estimator"),
    "novelty.hidden": (128, "hidden width of estimator MLPs"),
    "novelty.batch": (64, "estimator minibatch size"),
    "bigan.alpha": (0.9, "novelty mix: alpha*L_G + (1-alpha)*L_D"),
    "bigan.latent_dim": (0, "latent size; 0 picks 32 for grid_maze, 8 otherwise"),
    "bigan.buffer_capacity": (50_000, "FIFO capacity of visited states"),
    "bigan.steps_per_epoch": (50, "estimator gradient steps per epoch"),
    "memory.enabled": (False, "start episodes from the previous epoch's most novel states"),
    "memory.k": (64, "episodic memory capacity"),
    "normalize.variant": ("paper", "paper: (B-muB+muRe)/sigB | shifted: (B-muB)/sigB+muRe"),
    "training.epochs": (50, "epochs L"),
    "training.episodes": (8, "episodes per epoch N"),
    "training.horizon": (0, "max steps per episode H; 0 uses the env default"),
    "training.seed": (0, "root seed"),
    "training.checkpoint": (True, "write final parameters to the output dir"),
    "output.dir": ("runs/default", "output directory"),
}

_POSITIVE = ("training.epochs", "training.episodes", "env.length", "bigan.buffer_capacity",
             "bigan.steps_per_epoch", "ppo.epochs", "ppo.minibatch", "novelty.batch")


def _parse_value(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"expected a number, got {raw!r}") from None
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        raw = raw[1:-1]
    return raw


def default_config() -> dict:
    return {k: copy.copy(v[0]) for k, v in DEFAULTS.items()}


def make_config(overrides: dict | None = None) -> dict:
    cfg = default_config()
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        default = DEFAULTS[key][0]
        cfg[key] = _parse_value(value, default) if isinstance(value, str) else value
    validate(cfg)
    return cfg


def parse_config(text: str) -> dict:
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        try:
            overrides[key] = _parse_value(value, DEFAULTS[key][0])
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
    return make_config(overrides)


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def dump_config(cfg: dict) -> str:
    lines = []
    for key in DEFAULTS:
        lines.append(f"# {DEFAULTS[key][1]}")
        value = cfg[key]
        lines.append(f"{key} = {str(value).lower() if isinstance(value, bool) else value}")
    return "\n".join(lines) + "\n"


def validate(cfg: dict) -> None:
    for key in _POSITIVE:
        if cfg[key] < 1:
            raise ConfigError(f"{key} must be >= 1")
    if cfg["training.horizon"] < 0 or cfg["memory.k"] < 0 or cfg["bigan.latent_dim"] < 0:
        raise ConfigError("horizon, memory.k and latent_dim must be >= 0")
    if cfg["env.name"] not in ("sparse_chain", "grid_maze", "point_goal"):
        raise ConfigError(f"unknown env.name {cfg['env.name']!r}")
    if cfg["novelty.method"] not in ("bigan", "rnd", "vae", "lg_only", "ld_only", "none"):
        raise ConfigError(f"unknown novelty.method {cfg['novelty.method']!r}")
    if cfg["normalize.variant"] not in ("paper", "shifted"):
        raise ConfigError(f"unknown normalize.variant {cfg['normalize.variant']!r}")
    if not 0.0 <= cfg["bigan.alpha"] <= 1.0:
        raise ConfigError("bigan.alpha must lie in [0, 1]")
    if not 0.0 < cfg["ppo.clip"] < 1.0:
        raise ConfigError("ppo.clip must lie in (0, 1)")
    for key in ("ppo.gamma_e", "ppo.gamma_i"):
        if not 0.0 < cfg[key] <= 1.0:
            raise ConfigError(f"{key} must lie in (0, 1]")
    if not 0.0 <= cfg["ppo.lambda"] <= 1.0:
        raise ConfigError("ppo.lambda must lie in [0, 1]")
    if cfg["ppo.beta"] < 0:
        raise ConfigError("ppo.beta must be >= 0")
