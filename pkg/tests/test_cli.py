import json
import subprocess
import sys

import pytest

from adventurer.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

TINY = """\
env.name = sparse_chain
env.length = 5
training.epochs = 2
training.episodes = 2
bigan.steps_per_epoch = 2
novelty.hidden = 16
"""


@pytest.fixture
def conf(tmp_path):
    path = tmp_path / "tiny.conf"
    path.write_text(TINY + f"output.dir = {tmp_path / 'run'}\n")
    return path


def test_train_writes_outputs(conf, tmp_path, capsys):
    assert main(["train", "--config", str(conf), "--seed", "4", "--out", str(tmp_path / "o")]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["epochs"] == 2
    assert len((tmp_path / "o" / "metrics.jsonl").read_text().splitlines()) == 2


def test_train_uses_config_output_dir(conf, tmp_path):
    assert main(["train", "--config", str(conf)]) == EXIT_OK
    assert (tmp_path / "run" / "metrics.jsonl").exists()


def test_seed_flag_overrides_config(conf, tmp_path):
    main(["train", "--config", str(conf), "--seed", "1", "--out", str(tmp_path / "a")])
    main(["train", "--config", str(conf), "--seed", "2", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "metrics.jsonl").read_bytes() != (tmp_path / "b" / "metrics.jsonl").read_bytes()


def test_config_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.conf"
    bad.write_text("env.length = -3\n")
    assert main(["train", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["train", "--config", str(tmp_path / "missing.conf")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_usage_errors_exit_1(conf):
    with pytest.raises(SystemExit) as info:
        main(["grid-search", "--param", "gamma", "--config", str(conf)])
    assert info.value.code == EXIT_CONFIG
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == EXIT_CONFIG


def test_unknown_method_is_config_error(conf):
    assert main(["eval-novelty", "--config", str(conf), "--method", "count"]) == EXIT_CONFIG


def test_runtime_failure_exit_2(tmp_path):
    assert main(["plot", "--in", str(tmp_path / "none"), "--out", str(tmp_path / "p")]) == EXIT_RUNTIME


def test_eval_novelty(conf, capsys):
    code = main(["eval-novelty", "--config", str(conf), "--method", "rnd", "--steps", "5",
                 "--per-part", "16"])
    assert code == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert set(out) >= {"kl_setting1", "kl_setting2"}


def test_grid_search_alpha_csv(conf, tmp_path, monkeypatch, capsys):
    from adventurer.harness import experiments

    real = experiments.alpha_search
    monkeypatch.setattr(experiments, "alpha_search",
                        lambda values, seeds: real(values, seeds=seeds[:1],
                                                   spec=experiments.EstimatorSpec(steps=2, hidden=8),
                                                   per_part=16))
    assert main(["grid-search", "--param", "alpha", "--config", str(conf), "--seeds", "1",
                 "--out", str(tmp_path / "g")]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["best"] in (0.5, 0.7, 0.9, 1.0)
    assert (tmp_path / "g" / "grid_alpha.csv").read_text().startswith("alpha,seed,kl_setting1,kl_setting2")


def test_plot_roundtrip(conf, tmp_path):
    main(["train", "--config", str(conf), "--out", str(tmp_path / "r" / "s0")])
    main(["train", "--config", str(conf), "--seed", "9", "--out", str(tmp_path / "r" / "s1")])
    assert main(["plot", "--in", str(tmp_path / "r"), "--out", str(tmp_path / "plots")]) == EXIT_OK
    assert (tmp_path / "plots" / "success_rate.svg").exists()


def test_console_script_entry(conf, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "adventurer.cli", "train", "--config", str(conf),
                           "--out", str(tmp_path / "x")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
