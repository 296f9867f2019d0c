"""Command-line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness.config import ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _cmd_train(args) -> int:
    from .harness.train import train

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["training.seed"] = args.seed
    out = Path(args.out or cfg["output.dir"])
    result = train(cfg, out)
    final = result.final
    print(json.dumps({"out": str(out), "epochs": len(result.records),
                      "success_rate": final["success_rate"],
                      "mean_extrinsic_return": final["mean_extrinsic_return"]}))
    return EXIT_OK


def _cmd_eval_novelty(args) -> int:
    from .baselines import METHODS
    from .harness.novelty_eval import EstimatorSpec, eval_novelty_settings, two_room_corpus

    cfg = load_config(args.config)
    if args.method not in METHODS or args.method == "none":
        raise ConfigError(f"--method must be one of {[m for m in METHODS if m != 'none']}")
    spec = EstimatorSpec(method=args.method, steps=args.steps, alpha=cfg["bigan.alpha"],
                         latent_dim=cfg["bigan.latent_dim"] or 32, batch=cfg["novelty.batch"],
                         hidden=cfg["novelty.hidden"], lr=cfg["novelty.lr"])
    seed = cfg["training.seed"] if args.seed is None else args.seed
    res = eval_novelty_settings(two_room_corpus(seed, args.per_part), spec, seed)
    print(json.dumps({"method": args.method, "seed": seed, "kl_setting1": res["kl_setting1"],
                      "kl_setting2": res["kl_setting2"]}))
    return EXIT_OK


def _cmd_grid_search(args) -> int:
    from .harness.experiments import grid_search

    cfg = load_config(args.config)
    seeds = tuple(range(args.seeds))
    if args.param == "alpha":
        res = grid_search("alpha", seeds=seeds)
    else:
        base = {k: v for k, v in cfg.items() if k.startswith(("ppo.", "novelty.", "bigan.", "memory.",
                                                               "normalize.", "training.episodes"))}
        res = grid_search("beta", seeds=seeds, base=base)
    out = Path(args.out or cfg["output.dir"])
    path = res.write_csv(out / f"grid_{args.param}.csv")
    print(json.dumps({"param": args.param, "best": res.best, "table": str(path)}))
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .harness.plots import emit_plots

    summary = emit_plots(args.in_dir, args.out_dir)
    print(json.dumps(summary))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="adventurer", description="Novelty-driven exploration experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="run one training job")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval-novelty", help="two-room KL objectives for one estimator")
    e.add_argument("--config", required=True)
    e.add_argument("--method", required=True)
    e.add_argument("--seed", type=int)
    e.add_argument("--steps", type=int, default=2000)
    e.add_argument("--per-part", type=int, default=512)
    e.set_defaults(func=_cmd_eval_novelty)

    g = sub.add_parser("grid-search", help="alpha or beta grid, table written as CSV")
    g.add_argument("--param", required=True, choices=("alpha", "beta"))
    g.add_argument("--config", required=True)
    g.add_argument("--seeds", type=int, default=3)
    g.add_argument("--out")
    g.set_defaults(func=_cmd_grid_search)

    pl = sub.add_parser("plot", help="SVG charts and CSV tables from metrics files")
    pl.add_argument("--in", dest="in_dir", required=True)
    pl.add_argument("--out", dest="out_dir", required=True)
    pl.set_defaults(func=_cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
