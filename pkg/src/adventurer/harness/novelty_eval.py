"""Offline novelty-estimator experiments on synthetic corpora.

Two-room corpus: each room is a fixed random 144-bit template; samples flip
each bit independently with probability ``flip``. Setting 1 trains on D1a and
scores D1a, D1b, D2b; Setting 2 trains on D1a + D2a and scores all four.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..baselines import make_estimator
from ..bigan import StateBuffer
from ..seeding import derive

log = logging.getLogger(__name__)

N_BINS = 20
SMOOTHING = 1e-6


# -- corpora ------------------------------------------------------------------

def bit_templates(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    return (rng.random((n, dim)) < 0.5).astype(np.float64)


def noisy_copies(template: np.ndarray, n: int, flip: float, rng: np.random.Generator) -> np.ndarray:
    flips = rng.random((n, template.shape[0])) < flip
    return np.where(flips, 1.0 - template, template)


@dataclass
class Corpus:
    parts: dict[str, np.ndarray]
    seed: int
    meta: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> np.ndarray:
        return self.parts[key]


def two_room_corpus(seed: int, per_part: int = 512, dim: int = 144, flip: float = 0.05) -> Corpus:
    """D1a/D1b from room 1 and D2a/D2b from room 2, all of size ``per_part``."""
    rng = derive(seed, "corpus", "two_room")
    templates = bit_templates(2, dim, rng)
    parts = {}
    for room, tmpl in zip("12", templates):
        parts[f"D{room}a"] = noisy_copies(tmpl, per_part, flip, rng)
        parts[f"D{room}b"] = noisy_copies(tmpl, per_part, flip, rng)
    return Corpus(parts, seed, {"per_part": per_part, "dim": dim, "flip": flip})


def class_corpus(seed: int, n_train: int = 512, n_test: int = 512, dim: int = 144,
                 flip: float = 0.05) -> Corpus:
    """Two synthetic classes with train/test splits (class0_train, class1_test, ...)."""
    rng = derive(seed, "corpus", "classes")
    templates = bit_templates(2, dim, rng)
    parts = {}
    for k, tmpl in enumerate(templates):
        parts[f"class{k}_train"] = noisy_copies(tmpl, n_train, flip, rng)
        parts[f"class{k}_test"] = noisy_copies(tmpl, n_test, flip, rng)
    return Corpus(parts, seed, {"n_train": n_train, "n_test": n_test, "dim": dim, "flip": flip})


# -- KL between score distributions --------------------------------------------

def minmax(scores: np.ndarray) -> tuple[np.ndarray, bool]:
    lo, hi = float(scores.min()), float(scores.max())
    if not hi > lo:
        return np.zeros_like(scores), True
    return (scores - lo) / (hi - lo), False


def histogram_kl(p_scores, q_scores, bins: int = N_BINS, smoothing: float = SMOOTHING) -> float:
    """KL(P || Q) between histograms of scores already scaled to [0, 1]."""
    p = kernels.histogram(np.asarray(p_scores, dtype=np.float64), bins)
    q = kernels.histogram(np.asarray(q_scores, dtype=np.float64), bins)
    if p.sum() == 0 or q.sum() == 0:
        raise ValueError("empty score set")
    return float(kernels.smoothed_kl(p, q, smoothing))


def settings_objectives(scores: dict[str, np.ndarray], bins: int = N_BINS,
                        smoothing: float = SMOOTHING) -> dict:
    """KL objectives from raw scores keyed by partition name.

    Needs D1a, D1b, D2b for Setting 1 and additionally D2a for Setting 2 (a
    setting whose partitions are missing is skipped).
    """
    out: dict = {}
    s1 = ("D1a", "D1b", "D2b")
    if all(k in scores for k in s1):
        norm, degenerate = _pooled(scores, s1)
        if degenerate:
            out["kl_setting1"] = 0.0
        else:
            out["kl_setting1"] = (histogram_kl(norm["D1b"], norm["D1a"], bins, smoothing)
                                  - histogram_kl(norm["D2b"], norm["D1a"], bins, smoothing))
        out["degenerate1"] = degenerate
    s2 = ("D1a", "D1b", "D2a", "D2b")
    if all(k in scores for k in s2):
        norm, degenerate = _pooled(scores, s2)
        if degenerate:
            out["kl_setting2"] = 0.0
        else:
            out["kl_setting2"] = (histogram_kl(norm["D1b"], norm["D1a"], bins, smoothing)
                                  + histogram_kl(norm["D2b"], norm["D2a"], bins, smoothing))
        out["degenerate2"] = degenerate
    return out


def _pooled(scores, keys):
    pooled = np.concatenate([scores[k] for k in keys])
    norm, degenerate = minmax(pooled)
    if degenerate:
        log.warning("all novelty scores identical; KL reported as 0")
    out, start = {}, 0
    for k in keys:
        n = scores[k].shape[0]
        out[k] = norm[start:start + n]
        start += n
    return out, degenerate


# -- experiments ----------------------------------------------------------------

@dataclass
class EstimatorSpec:
    method: str = "bigan"
    steps: int = 2000
    alpha: float = 0.9
    latent_dim: int = 32
    batch: int = 64
    hidden: int = 128
    lr: float = 2e-4


def train_estimator(spec: EstimatorSpec, data: np.ndarray, seed: int, tag: str = ""):
    est = make_estimator(spec.method, data.shape[1], derive(seed, "init", "novelty", tag),
                         derive(seed, "novelty", "train", tag), alpha=spec.alpha,
                         latent_dim=spec.latent_dim, batch=spec.batch, hidden=spec.hidden,
                         lr=spec.lr)
    buf = StateBuffer(data.shape[1], capacity=max(len(data), 1))
    buf.add(data)
    est.fit(buf, spec.steps)
    return est


def _score_variants(est, spec: EstimatorSpec, states, alphas):
    """Scores per requested alpha (BiGAN) or the estimator's only score."""
    if hasattr(est, "terms") and alphas:
        l_g, l_d = est.terms(states)
        return {a: a * l_g + (1.0 - a) * l_d for a in alphas}
    return {None: est.score(states)}


def eval_novelty_settings(corpus: Corpus, spec: EstimatorSpec, seed: int,
                          alphas: tuple = ()) -> dict:
    """Run Settings 1 and 2 for one estimator.

    For BiGAN, ``alphas`` rescore the same trained nets at several mixing
    weights; results are keyed by alpha in ``by_alpha``.
    """
    if len(corpus["D1a"]) != len(corpus["D2a"]):
        raise ValueError("D1a and D2a must have equal size")
    keys1 = ("D1a", "D1b", "D2b")
    keys2 = ("D1a", "D1b", "D2a", "D2b")
    est1 = train_estimator(spec, corpus["D1a"], seed, "setting1")
    est2 = train_estimator(spec, np.concatenate([corpus["D1a"], corpus["D2a"]]), seed, "setting2")
    alphas = tuple(alphas) or ((spec.alpha,) if hasattr(est1, "terms") else ())
    s1 = {k: _score_variants(est1, spec, corpus[k], alphas) for k in keys1}
    s2 = {k: _score_variants(est2, spec, corpus[k], alphas) for k in keys2}
    by_alpha = {}
    for a in s1["D1a"]:
        r1 = settings_objectives({k: s1[k][a] for k in keys1})
        r2 = settings_objectives({k: s2[k][a] for k in keys2})
        by_alpha[a] = {
            "kl_setting1": r1["kl_setting1"], "kl_setting2": r2["kl_setting2"],
            "degenerate": r1["degenerate1"] or r2["degenerate2"],
            "scores_setting1": {k: s1[k][a] for k in keys1},
            "scores_setting2": {k: s2[k][a] for k in keys2},
        }
    primary = by_alpha[spec.alpha] if spec.alpha in by_alpha else next(iter(by_alpha.values()))
    return {"kl_setting1": primary["kl_setting1"], "kl_setting2": primary["kl_setting2"],
            "by_alpha": by_alpha, "method": spec.method}


def spearman(x, y) -> float:
    rx = _ranks(np.asarray(x, dtype=np.float64))
    ry = _ranks(np.asarray(y, dtype=np.float64))
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    return float((rx * ry).sum() / denom) if denom > 0 else 0.0


def _ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    ranks = np.empty_like(v)
    ranks[order] = np.arange(len(v), dtype=np.float64)
    for val in np.unique(v):
        tie = v == val
        ranks[tie] = ranks[tie].mean()
    return ranks


def count_vs_score(corpus: Corpus, spec: EstimatorSpec, seed: int,
                   fractions=(0.0, 0.25, 0.5, 1.0)) -> dict:
    """Mean novelty of held-out class-1 states vs. the share of class 1 seen in training."""
    fractions = tuple(float(f) for f in fractions)
    if list(fractions) != sorted(fractions) or fractions[0] != 0.0 or fractions[-1] != 1.0:
        raise ValueError("fractions must be sorted ascending and include 0 and 1")
    base = corpus["class0_train"]
    extra = corpus["class1_train"]
    test = corpus["class1_test"]
    means, self_scores = [], []
    for p in fractions:
        k = int(round(p * len(extra)))
        data = np.concatenate([base, extra[:k]]) if k else base
        est = train_estimator(spec, data, seed, f"fraction{p}")
        means.append(float(est.score(test).mean()))
        if p == 0.0:
            self_scores.append(float(est.score(corpus["class0_test"]).mean()))
    return {"fractions": list(fractions), "mean_score": means,
            "class0_self_score": self_scores[0],
            "spearman": spearman(fractions, means)}
