"""Grid searches over the novelty mix alpha and the intrinsic weight beta."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import make_config
from .novelty_eval import EstimatorSpec, eval_novelty_settings, two_room_corpus
from .train import train

log = logging.getLogger(__name__)

ALPHA_GRID = (0.5, 0.7, 0.9, 1.0)
BETA_GRID = (0.2, 0.3, 0.5)

# small budgets per env so the whole beta grid stays desk-sized
TOY_SUITE = {
    "sparse_chain": {"env.name": "sparse_chain", "env.length": 20, "training.horizon": 40,
                     "training.epochs": 60},
    "grid_maze": {"env.name": "grid_maze", "training.epochs": 40},
}


@dataclass
class GridResult:
    param: str
    best: float
    rows: list[dict] = field(default_factory=list)
    columns: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\r\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow(row)
        return buf.getvalue()

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv(), newline="")
        return path


def alpha_search(values=ALPHA_GRID, seeds=(0, 1, 2), spec: EstimatorSpec | None = None,
                 per_part: int = 512) -> GridResult:
    """Pick alpha minimizing the Setting-1 and Setting-2 objectives.

    One BiGAN is trained per setting and seed; each alpha rescores those same
    nets. The two objectives are ranked separately and the winner has the
    lowest summed rank (ties go to the smaller setting-1 mean).
    """
    values = tuple(float(v) for v in values)
    if not values:
        raise ValueError("empty value grid")
    spec = spec or EstimatorSpec()
    per_alpha = {a: {"s1": [], "s2": []} for a in values}
    rows = []
    for seed in seeds:
        res = eval_novelty_settings(two_room_corpus(seed, per_part), spec, seed, alphas=values)
        for a in values:
            r = res["by_alpha"][a]
            per_alpha[a]["s1"].append(r["kl_setting1"])
            per_alpha[a]["s2"].append(r["kl_setting2"])
            rows.append({"alpha": a, "seed": seed, "kl_setting1": r["kl_setting1"],
                         "kl_setting2": r["kl_setting2"]})
    s1 = np.array([np.mean(per_alpha[a]["s1"]) for a in values])
    s2 = np.array([np.mean(per_alpha[a]["s2"]) for a in values])
    rank = np.argsort(np.argsort(s1, kind="stable"), kind="stable") + \
        np.argsort(np.argsort(s2, kind="stable"), kind="stable")
    best_idx = min(range(len(values)), key=lambda i: (rank[i], s1[i]))
    for i, a in enumerate(values):
        rows.append({"alpha": a, "seed": "mean", "kl_setting1": s1[i], "kl_setting2": s2[i]})
    return GridResult("alpha", values[best_idx], rows, ["alpha", "seed", "kl_setting1", "kl_setting2"])


def beta_search(values=BETA_GRID, seeds=(0, 1, 2), base: dict | None = None,
                suite: dict | None = None, on_run=None) -> GridResult:
    """Pick beta maximizing mean extrinsic return over seeds and the toy suite.

    Each env's returns are averaged over all training epochs, then over
    seeds; the suite score is the mean across envs.
    """
    values = tuple(float(v) for v in values)
    if not values:
        raise ValueError("empty value grid")
    suite = TOY_SUITE if suite is None else suite
    rows = []
    scores = []
    for beta in values:
        per_env = []
        for env_name, overrides in suite.items():
            returns = []
            for seed in seeds:
                cfg = make_config({**(base or {}), **overrides, "ppo.beta": beta,
                                   "training.seed": seed})
                result = train(cfg)
                ret = float(np.mean([r["mean_extrinsic_return"] for r in result.records]))
                succ = float(np.mean([r["success_rate"] for r in result.records]))
                returns.append(ret)
                rows.append({"beta": beta, "env": env_name, "seed": seed, "mean_return": ret,
                             "success_rate": succ})
                if on_run is not None:
                    on_run(rows[-1])
            per_env.append(float(np.mean(returns)))
        scores.append(float(np.mean(per_env)))
        rows.append({"beta": beta, "env": "suite", "seed": "mean", "mean_return": scores[-1],
                     "success_rate": ""})
    best = values[int(np.argmax(scores))]
    return GridResult("beta", best, rows, ["beta", "env", "seed", "mean_return", "success_rate"])


def grid_search(param: str, values=None, **kwargs) -> GridResult:
    if param == "alpha":
        return alpha_search(ALPHA_GRID if values is None else values, **kwargs)
    if param == "beta":
        return beta_search(BETA_GRID if values is None else values, **kwargs)
    raise ValueError(f"unknown grid parameter {param!r}; expected alpha or beta")
