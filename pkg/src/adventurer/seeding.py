"""Root-seed splitting.

Every stochastic draw in a run comes from a generator derived as
``derive(root, *keys)``: the keys (strings or ints) are mapped to a numpy
``SeedSequence`` spawn key, so streams are independent of one another and of
the order in which they are requested. Keys used by the harness:

    ("env", epoch, episode)      environment reset seeds
    ("init", "policy"|"value_e"|"value_i"|"novelty")
    ("policy", "sample")         action sampling
    ("ppo", "minibatch")         minibatch permutations
    ("novelty", "train")         latent z, buffer sampling, VAE noise
    ("memory", "sample")         episodic start-state draws
"""
from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("seed keys must be non-negative")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8")) | (1 << 32)


def derive(root: int, *keys) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(root), spawn_key=tuple(_key_to_int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(seq))


def derive_int(root: int, *keys) -> int:
    seq = np.random.SeedSequence(entropy=int(root), spawn_key=tuple(_key_to_int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint32)[0])
