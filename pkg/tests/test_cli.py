"""Subcommands, presets, config parsing, run directories, and exit codes."""

import json
import os

import pytest

from anytime_rl.cli import (
    EXIT_CONFIG,
    PRESETS,
    ConfigError,
    config_snapshot_text,
    main,
    parse_config_text,
    resolve_config,
)
from anytime_rl.advantage import AdvantageMode
from anytime_rl.core import PriorKind


BASE_ARGS = [
    "--set", "iterations=2",
    "--set", "batch_questions=2",
    "--set", "group_size=2",
    "--set", "summary_samples=2",
    "--set", "budgets=2,4,6,8",
    "--set", "needle_n=4",
    "--set", "eval_cadence=1",
    "--set", "eval_traces=2",
    "--set", "seed=3",
]


def _train(tmp_path, *extra, preset=None):
    argv = ["train", "--run-dir", str(tmp_path)] + BASE_ARGS + list(extra)
    if preset:
        argv += ["--preset", preset]
    return main(argv)


class TestConfigParsing:
    def test_parse_key_values(self):
        values = parse_config_text("a = 1\n# comment\nb = two  # trailing\n")
        assert values == {"a": "1", "b": "two"}

    def test_rejects_malformed_line(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_text("whatever\n")

    def test_resolve_types(self):
        config, env_values = resolve_config(
            {"iterations": "5", "lambda": "0.25", "budgets": "2,4", "thinking_prior": "linear",
             "leave_one_out": "true", "env": "needle", "needle_n": "4"}
        )
        assert config.iterations == 5
        assert config.lam == 0.25
        assert config.budgets == (2, 4)
        assert config.thinking_prior is PriorKind.LINEAR
        assert config.leave_one_out is True
        assert env_values["needle_n"] == "4"

    def test_unknown_key_named_in_error(self):
        with pytest.raises(ConfigError, match="bogus_key"):
            resolve_config({"bogus_key": "1"})

    def test_bad_value_named_in_error(self):
        with pytest.raises(ConfigError, match="iterations"):
            resolve_config({"iterations": "three"})

    def test_snapshot_round_trips(self):
        config, env_values = resolve_config({"iterations": "7", "lambda": "0.125"})
        text = config_snapshot_text(config, env_values)
        config2, _ = resolve_config(parse_config_text(text))
        assert config2 == config


class TestPresets:
    def test_expected_preset_names(self):
        assert set(PRESETS) == {
            "anytime-uniform", "anytime-linear", "anytime-base", "grpo-baseline",
            "ablation-dense-rewards", "ablation-decoupled", "ablation-brpo",
            "ablation-length-penalty-v1", "ablation-length-penalty-v2",
        }

    def test_anytime_uniform_mapping(self):
        config, _ = resolve_config(PRESETS["anytime-uniform"])
        assert config.thinking_prior is PriorKind.UNIFORM
        assert config.advantage_mode is AdvantageMode.BRPO
        assert config.summary_prior is PriorKind.UNIFORM

    def test_grpo_baseline_mapping(self):
        config, _ = resolve_config(PRESETS["grpo-baseline"])
        assert config.thinking_prior is PriorKind.BASE
        assert config.advantage_mode is AdvantageMode.GRPO
        assert config.summary_prior is PriorKind.BASE

    def test_ablation_dense_rewards_mapping(self):
        config, _ = resolve_config(PRESETS["ablation-dense-rewards"])
        assert config.thinking_prior is PriorKind.LINEAR
        assert config.advantage_mode is AdvantageMode.V2_ONLY

    def test_length_penalty_presets(self):
        config, _ = resolve_config(PRESETS["ablation-length-penalty-v1"])
        assert config.length_penalty == "v1"


class TestTrain:
    def test_creates_run_dir_with_artifacts(self, tmp_path, capsys):
        assert _train(tmp_path, preset="anytime-uniform") == 0
        run_dir = tmp_path / "anytime-uniform"
        assert (run_dir / "config.txt").exists()
        assert (run_dir / "metrics.csv").exists()
        assert (run_dir / "checkpoints" / "iter_000000").is_dir()
        header = (run_dir / "metrics.csv").read_text().splitlines()[0]
        assert header == "iteration,anytime_accuracy,final_accuracy,mean_thinking_length,wall_time_s"

    def test_never_overwrites_existing_run(self, tmp_path):
        assert _train(tmp_path, preset="anytime-uniform") == 0
        assert _train(tmp_path, preset="anytime-uniform") == 0
        assert (tmp_path / "anytime-uniform").is_dir()
        assert (tmp_path / "anytime-uniform-1").is_dir()

    def test_invalid_config_exits_2(self, tmp_path, capsys):
        code = main(["train", "--run-dir", str(tmp_path), "--set", "bogus=1"])
        assert code == EXIT_CONFIG
        assert "bogus" in capsys.readouterr().err

    def test_run_root_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ANYTIME_RL_RUN_ROOT", str(tmp_path / "root"))
        assert main(["train"] + BASE_ARGS + ["--set", "run_name=envrun"]) == 0
        assert (tmp_path / "root" / "envrun").is_dir()

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "config.txt"
        cfg.write_text(
            "iterations = 1\nbatch_questions = 2\ngroup_size = 2\nsummary_samples = 2\n"
            "budgets = 2,4,6,8\nneedle_n = 4\neval_cadence = 1\neval_traces = 2\nrun_name = filerun\n"
        )
        assert main(["train", "--run-dir", str(tmp_path), "--config", str(cfg)]) == 0
        assert (tmp_path / "filerun" / "metrics.csv").exists()
        # the original file is preserved next to the resolved snapshot
        assert (tmp_path / "filerun" / "config.orig.txt").read_text() == cfg.read_text()

    def test_divergence_exits_3_with_dump(self, tmp_path, capsys):
        # an infinite step size turns zero-gradient coordinates into NaN
        code = main(
            ["train", "--run-dir", str(tmp_path), "--set", "run_name=boom",
             "--set", "thinking_step=1e309"] + BASE_ARGS
        )
        assert code == 3
        assert (tmp_path / "boom" / "diverged.json").exists()
        assert "diverged" in capsys.readouterr().err


class TestEvalAndDiagnose:
    @pytest.fixture
    def run_dir(self, tmp_path):
        assert _train(tmp_path, preset="anytime-uniform") == 0
        return tmp_path / "anytime-uniform"

    def test_eval_writes_curves(self, run_dir, capsys):
        ckpt = run_dir / "checkpoints" / "iter_000002"
        out = run_dir / "curves.csv"
        code = main(["eval", "--checkpoint", str(ckpt), "--budgets", "0,2,4,6,8",
                     "--samples", "4", "--traces", "2", "--seed", "1", "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "budget,accuracy" and len(lines) == 6

    def test_eval_deterministic(self, run_dir):
        ckpt = run_dir / "checkpoints" / "iter_000002"
        outs = []
        for name in ("a.csv", "b.csv"):
            out = run_dir / name
            main(["eval", "--checkpoint", str(ckpt), "--budgets", "0,4,8",
                  "--samples", "4", "--traces", "2", "--seed", "9", "--out", str(out)])
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_eval_missing_checkpoint_exits_2(self, tmp_path):
        assert main(["eval", "--checkpoint", str(tmp_path / "nope"), "--budgets", "2,4"]) == EXIT_CONFIG

    def test_oracle_summary_curve_nondecreasing(self, run_dir):
        ckpt = run_dir / "checkpoints" / "iter_000002"
        out = run_dir / "oracle_curves.csv"
        main(["eval", "--checkpoint", str(ckpt), "--budgets", "0,2,4,6,8", "--samples", "4",
              "--traces", "2", "--seed", "2", "--oracle-summary", "--out", str(out)])
        accs = [float(line.split(",")[1]) for line in out.read_text().splitlines()[1:]]
        assert accs == sorted(accs)

    def test_diagnose_zero_groups_headers_only(self, run_dir):
        ckpt = run_dir / "checkpoints" / "iter_000002"
        out_dir = run_dir / "diag0"
        code = main(["diagnose", "--checkpoint", str(ckpt), "--groups", "0", "--out-dir", str(out_dir)])
        assert code == 0
        assert (out_dir / "correlation.csv").read_bytes() == b"segment,corr_v1,corr_v2\r\n"
        assert (out_dir / "variance.csv").read_bytes() == b"segment,mode,ratio\r\n"
        assert (out_dir / "credit.csv").read_bytes() == b"segment,R,V1,V2,V,A\r\n"

    def test_diagnose_deterministic(self, run_dir):
        ckpt = run_dir / "checkpoints" / "iter_000002"
        blobs = []
        for name in ("d1", "d2"):
            out_dir = run_dir / name
            main(["diagnose", "--checkpoint", str(ckpt), "--groups", "8", "--seed", "4",
                  "--out-dir", str(out_dir)])
            blobs.append(tuple((out_dir / f).read_bytes() for f in ("correlation.csv", "variance.csv", "credit.csv")))
        assert blobs[0] == blobs[1]


class TestVerifyAndReplay:
    def test_verify_quick_passes(self, tmp_path, capsys):
        verdict = tmp_path / "verify.json"
        code = main(["verify", "--scope", "quick", "--json", str(verdict)])
        out = capsys.readouterr().out
        assert code == 0
        assert "[PASS]" in out and "[FAIL]" not in out
        results = json.loads(verdict.read_text())["results"]
        assert all(r["ok"] for r in results)

    def test_replay_reproduces_metrics(self, tmp_path):
        assert _train(tmp_path, "--set", "log_rollouts=true", preset="anytime-uniform") == 0
        run_dir = tmp_path / "anytime-uniform"
        original = (run_dir / "metrics.csv").read_bytes()
        replayed = run_dir / "replayed.csv"
        assert main(["replay", "--run-dir", str(run_dir), "--out", str(replayed)]) == 0
        assert replayed.read_bytes() == original

    def test_replay_without_log_exits_2(self, tmp_path):
        assert _train(tmp_path, preset="anytime-uniform") == 0
        assert main(["replay", "--run-dir", str(tmp_path / "anytime-uniform")]) == EXIT_CONFIG
