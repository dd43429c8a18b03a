"""Command-line entry point: train / eval / diagnose / verify / replay.

Configuration is a flat key = value text file ('#' comments); presets name
the standard experiment configurations and can be combined with a config
file plus --set overrides (preset < file < --set). Run directories are
created under --run-dir, $ANYTIME_RL_RUN_ROOT, or ./runs, and are never
overwritten (an existing name gets a numeric suffix).

Exit codes: 0 success, 2 invalid configuration or input (with a field-level
message), 3 training reached a non-finite state (diagnostic dump written),
4 enumeration cap exceeded during verification.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .advantage import AdvantageMode
from .core import PriorKind, make_prior
from .diagnostics import (
    accuracy_curve,
    baseline_correlations,
    credit_profile,
    normalized_variance,
    write_correlation_csv,
    write_credit_csv,
    write_curves_csv,
    write_variance_csv,
)
from .envs import NeedleSearchEnv, ScriptedEnv, env_from_config, load_scripted_env
from .oracle import (
    EnumerationCapExceeded,
    baseline_term_expectation,
    bound_check,
    exact_gradients,
    finite_difference_gradients,
    oracle_budget_monotonicity,
)
from .policy import PolicyParams
from .rollout import (
    OracleSummary,
    ParametricSummary,
    RolloutConfig,
    child_rng,
    collect_group,
    parse_rollout_record,
)
from .trainer import (
    METRICS_COLUMNS,
    OptimizerKind,
    SurrogateMode,
    TrainerConfig,
    TrainingDiverged,
    asdict_config,
    format_metrics_row,
    load_checkpoint,
    run_training,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_ENUM_CAP = 4

PRESETS: dict[str, dict[str, str]] = {
    # main configurations
    "anytime-uniform": {"thinking_prior": "uniform", "advantage_mode": "brpo", "summary_prior": "uniform"},
    "anytime-linear": {"thinking_prior": "linear", "advantage_mode": "brpo", "summary_prior": "uniform"},
    "anytime-base": {"thinking_prior": "base", "advantage_mode": "brpo", "summary_prior": "uniform"},
    "grpo-baseline": {"thinking_prior": "base", "advantage_mode": "grpo", "summary_prior": "base"},
    # ablations: dense rewards only (group baseline, summary as in the GRPO pipeline)
    "ablation-dense-rewards": {"thinking_prior": "linear", "advantage_mode": "v2only", "summary_prior": "base"},
    # ablations: decoupled summary only (thinking stays GRPO)
    "ablation-decoupled": {"thinking_prior": "base", "advantage_mode": "grpo", "summary_prior": "uniform"},
    # ablations: variance reduction only (BRPO with all prior mass on b_m)
    "ablation-brpo": {"thinking_prior": "base", "advantage_mode": "brpo", "summary_prior": "base"},
    # ablations: reward-shaping baselines
    "ablation-length-penalty-v1": {
        "thinking_prior": "base",
        "advantage_mode": "grpo",
        "summary_prior": "base",
        "length_penalty": "v1",
    },
    "ablation-length-penalty-v2": {
        "thinking_prior": "base",
        "advantage_mode": "grpo",
        "summary_prior": "base",
        "length_penalty": "v2",
    },
}

# configuration keys outside TrainerConfig
ENV_KEYS = {"env": "needle", "needle_n": "16", "scripted_path": "", "run_name": ""}


class ConfigError(ValueError):
    pass


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _convert(key: str, value: str, target_type):
    try:
        if target_type is bool:
            return _BOOL[value.lower()]
        if target_type is int:
            return int(value)
        if target_type is float:
            return float(value)
        if target_type is PriorKind:
            return PriorKind(value.lower())
        if target_type is AdvantageMode:
            return AdvantageMode(value.lower())
        if target_type is OptimizerKind:
            return OptimizerKind(value.lower())
        if target_type is SurrogateMode:
            return SurrogateMode(value.lower())
        if key == "budgets":
            return tuple(int(tok) for tok in value.replace(",", " ").split())
        return value
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"config field {key!r}: cannot parse {value!r}") from exc


def resolve_config(values: dict[str, str]) -> tuple[TrainerConfig, dict[str, str]]:
    """Split raw key/values into a TrainerConfig and environment keys."""
    trainer_fields = {f.name: f.type for f in fields(TrainerConfig)}
    type_by_field = {
        "budgets": tuple,
        "thinking_prior": PriorKind,
        "summary_prior": PriorKind,
        "advantage_mode": AdvantageMode,
        "optimizer": OptimizerKind,
        "surrogate": SurrogateMode,
        "summary_surrogate": SurrogateMode,
    }
    env_values = dict(ENV_KEYS)
    kwargs = {}
    for key, value in values.items():
        name = "lam" if key == "lambda" else key
        if name in env_values:
            env_values[name] = value
            continue
        if name not in trainer_fields:
            raise ConfigError(f"unknown config key {key!r}")
        ftype = type_by_field.get(name)
        if ftype is None:
            default = getattr(TrainerConfig, name, None)
            ftype = type(default) if default is not None else str
        kwargs[name] = _convert(name, value, ftype)
    try:
        config = TrainerConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return config, env_values


def build_env(env_values: dict[str, str], config: TrainerConfig):
    kind = env_values.get("env", "needle")
    if kind == "needle":
        return NeedleSearchEnv(n=int(env_values.get("needle_n", "16")), max_len=config.budgets[-1])
    if kind == "scripted":
        path = env_values.get("scripted_path", "")
        if not path:
            raise ConfigError("config field 'scripted_path': required when env = scripted")
        env = load_scripted_env(path)
        if env.max_len != config.budgets[-1]:
            raise ConfigError(
                f"config field 'budgets': largest budget {config.budgets[-1]} must equal "
                f"the scripted max_len {env.max_len}"
            )
        return env
    raise ConfigError(f"config field 'env': unknown environment {kind!r}")


def config_snapshot_text(config: TrainerConfig, env_values: dict[str, str]) -> str:
    lines = [f"{key} = {value}" for key, value in sorted(env_values.items()) if value != ""]
    for key, value in sorted(asdict_config(config).items()):
        if key == "budgets":
            value = ",".join(str(b) for b in value)
        elif key == "lam":
            key = "lambda"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _fresh_run_dir(root: Path, name: str) -> Path:
    candidate = root / name
    suffix = 0
    while candidate.exists():
        suffix += 1
        candidate = root / f"{name}-{suffix}"
    candidate.mkdir(parents=True)
    return candidate


def _load_cli_config(args) -> tuple[TrainerConfig, dict[str, str]]:
    values: dict[str, str] = {}
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        values.update(PRESETS[args.preset])
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text(), str(path)))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    return resolve_config(values)


def cmd_train(args) -> int:
    config, env_values = _load_cli_config(args)
    env = build_env(env_values, config)
    root = Path(args.run_dir or os.environ.get("ANYTIME_RL_RUN_ROOT", "runs"))
    name = env_values.get("run_name") or args.preset or "run"
    run_dir = _fresh_run_dir(root, name)
    (run_dir / "config.txt").write_text(config_snapshot_text(config, env_values))
    if args.config:
        (run_dir / "config.orig.txt").write_text(Path(args.config).read_text())
    try:
        run_training(env, config, run_dir)
    except TrainingDiverged as exc:
        (run_dir / "diverged.json").write_text(json.dumps(exc.dump, indent=2, default=str) + "\n")
        print(f"training diverged: {exc} (dump in {run_dir / 'diverged.json'})", file=sys.stderr)
        return EXIT_DIVERGED
    print(run_dir)
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        print(f"checkpoint not found: {ckpt}", file=sys.stderr)
        return EXIT_CONFIG
    think, summ, meta = load_checkpoint(ckpt)
    env = env_from_config(meta["env"])
    budgets = [int(tok) for tok in args.budgets.replace(",", " ").split()]
    summary = OracleSummary() if args.oracle_summary else ParametricSummary(summ)
    rows, auc, final = accuracy_curve(
        env, think, summary, budgets, args.samples, args.traces, args.seed
    )
    out = Path(args.out or (ckpt / "curves.csv"))
    write_curves_csv(out, rows)
    summary_path = out.with_name(out.stem + "_summary.json")
    summary_path.write_text(
        json.dumps({"auc": auc, "final_accuracy": final, "budgets": budgets}, indent=2) + "\n"
    )
    print(f"{out} (auc {auc:.6f}, final {final:.6f})")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        print(f"checkpoint not found: {ckpt}", file=sys.stderr)
        return EXIT_CONFIG
    think, summ, meta = load_checkpoint(ckpt)
    env = env_from_config(meta["env"])
    spec = make_prior(PriorKind.UNIFORM, meta["budgets"])
    rollout_cfg = RolloutConfig(seed=args.seed)
    groups = []
    qrng = child_rng(args.seed, 0)
    for i in range(args.groups):
        qid, instance = env.sample_question(qrng)
        groups.append(
            collect_group(
                env, qid, instance, think, ParametricSummary(summ), spec, rollout_cfg, key_prefix=(1, i)
            )
        )
    out_dir = Path(args.out_dir or ckpt)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_correlation_csv(out_dir / "correlation.csv", baseline_correlations(groups, spec, args.lam))
    write_variance_csv(out_dir / "variance.csv", normalized_variance(groups, spec, args.lam))
    credit_rows = []
    if groups:
        credit_rows = credit_profile(groups[0].rewards[0], spec, args.lam, groups[0], 0)
    write_credit_csv(out_dir / "credit.csv", credit_rows)
    print(out_dir)
    return EXIT_OK


def _verify_checks(scope: str):
    """Yield (name, ok, detail) for the exact oracle suite."""
    from .core import BudgetSpec

    tables = [(1, 0), (0, 1), (1, 1)]
    env = ScriptedEnv(tables=tables, n_symbols=2, max_len=6)
    spec = BudgetSpec(budgets=(2, 4, 6), probabilities=(0.25, 0.25, 0.5))
    rng = np.random.default_rng(20240901)

    # finite differences vs exact score-function gradients
    worst = 0.0
    points = 20 if scope == "full" else 5
    for _ in range(points):
        think = PolicyParams(0.5 * rng.standard_normal((env.think_feature_dim, env.n_thinking_actions)))
        summ = PolicyParams(0.5 * rng.standard_normal((env.summary_feature_dim, env.n_answers)))
        g_think, g_sum = exact_gradients(env, think, ParametricSummary(summ), spec)
        fd_think, fd_sum = finite_difference_gradients(env, think, ParametricSummary(summ), spec)
        rel_t = np.linalg.norm(g_think - fd_think) / max(np.linalg.norm(fd_think), 1e-12)
        rel_s = np.linalg.norm(g_sum - fd_sum) / max(np.linalg.norm(fd_sum), 1e-12)
        worst = max(worst, rel_t, rel_s)
    yield ("finite-difference gradient match", worst <= 1e-4, f"max relative L2 error {worst:.3e}")

    # baseline term is exactly zero for prefix-measurable baselines
    think = PolicyParams(0.5 * rng.standard_normal((env.think_feature_dim, env.n_thinking_actions)))
    summ = PolicyParams(0.5 * rng.standard_normal((env.summary_feature_dim, env.n_answers)))
    worst = 0.0
    for mode in (AdvantageMode.BRPO, AdvantageMode.V2_ONLY, AdvantageMode.GRPO):
        term = baseline_term_expectation(env, think, spec, ParametricSummary(summ), mode)
        worst = max(worst, float(np.abs(term).max()))
    yield ("baseline term zero (BRPO/V2Only/GRPO)", worst <= 1e-12, f"max |coord| {worst:.3e}")

    # objective bounds under the oracle-summary witness
    needle = NeedleSearchEnv(n=4, max_len=8)
    ok = True
    detail = ""
    for prior in (PriorKind.UNIFORM, PriorKind.LINEAR, PriorKind.BASE):
        pspec = make_prior(prior, (2, 4, 6, 8))
        for _ in range(10 if scope == "full" else 3):
            params = PolicyParams(rng.standard_normal((needle.think_feature_dim, needle.n_thinking_actions)))
            report = bound_check(needle, params, pspec)
            if not report.holds:
                ok = False
                detail = f"violated for prior {prior.value}: {report}"
    yield ("objective bounds (J_anytime <= J <= J_anytime/P_m)", ok, detail or "all draws hold")

    # exact optimal-summary monotonicity across budgets
    params = PolicyParams(rng.standard_normal((needle.think_feature_dim, needle.n_thinking_actions)))
    curves = oracle_budget_monotonicity(needle, params, make_prior(PriorKind.UNIFORM, (2, 4, 6, 8)))
    mono = bool(np.all(np.diff(curves, axis=1) >= -1e-12))
    yield ("oracle-summary budget monotonicity", mono, f"min increment {float(np.diff(curves, axis=1).min()):.3e}")


def cmd_verify(args) -> int:
    results = []
    try:
        for name, ok, detail in _verify_checks(args.scope):
            results.append({"check": name, "ok": bool(ok), "detail": detail})
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    except EnumerationCapExceeded as exc:
        print(f"enumeration cap exceeded: {exc}", file=sys.stderr)
        return EXIT_ENUM_CAP
    if args.json:
        Path(args.json).write_text(json.dumps({"results": results}, indent=2) + "\n")
    return EXIT_OK if all(r["ok"] for r in results) else 1


def cmd_replay(args) -> int:
    run_dir = Path(args.run_dir)
    rollouts = run_dir / "rollouts.jsonl"
    if not rollouts.exists():
        print(f"no rollouts.jsonl in {run_dir} (train with log_rollouts = true)", file=sys.stderr)
        return EXIT_CONFIG
    by_iteration: dict[int, list[dict]] = {}
    order: list[int] = []
    with open(rollouts) as fh:
        for line in fh:
            rec = parse_rollout_record(line)
            if rec.get("phase") != "eval":
                continue
            iteration = int(rec["seed_path"][1])
            if iteration not in by_iteration:
                by_iteration[iteration] = []
                order.append(iteration)
            by_iteration[iteration].append(rec)
    out = Path(args.out or (run_dir / "metrics.csv"))
    with open(out, "w") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for iteration in order:
            records = by_iteration[iteration]
            acc = np.zeros(len(records[0]["reward_estimates"]))
            lengths = []
            for rec in records:
                acc += np.asarray(rec["reward_estimates"], dtype=float)
                lengths.append(len(rec["token_ids"]))
            acc /= len(records)
            row = {
                "iteration": iteration,
                "anytime_accuracy": float(np.mean(acc)),
                "final_accuracy": float(acc[-1]),
                "mean_thinking_length": float(np.mean(lengths)),
                "wall_time_s": 0.0,
            }
            fh.write(format_metrics_row(row) + "\n")
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anytime-rl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training experiment")
    p_train.add_argument("--config", help="flat key = value config file")
    p_train.add_argument("--preset", help=f"named configuration: {', '.join(sorted(PRESETS))}")
    p_train.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p_train.add_argument("--run-dir", help="root directory for run outputs")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="accuracy curve for a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--budgets", required=True, help="comma-separated budget grid")
    p_eval.add_argument("--samples", type=int, default=16, help="summary samples per view (M)")
    p_eval.add_argument("--traces", type=int, default=8, help="traces per question")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--oracle-summary", action="store_true", help="evaluate with the oracle summary")
    p_eval.add_argument("--out", help="output CSV path (default: checkpoint dir)")
    p_eval.set_defaults(func=cmd_eval)

    p_diag = sub.add_parser("diagnose", help="correlation/variance/credit tables for a checkpoint")
    p_diag.add_argument("--checkpoint", required=True)
    p_diag.add_argument("--groups", type=int, default=128)
    p_diag.add_argument("--seed", type=int, default=0)
    p_diag.add_argument("--lam", type=float, default=0.5)
    p_diag.add_argument("--out-dir", help="output directory (default: checkpoint dir)")
    p_diag.set_defaults(func=cmd_diagnose)

    p_verify = sub.add_parser("verify", help="run the exact oracle verification suite")
    p_verify.add_argument("--scope", choices=["quick", "full"], default="quick")
    p_verify.add_argument("--json", default="verify.json", help="machine-readable verdict file path")
    p_verify.set_defaults(func=cmd_verify)

    p_replay = sub.add_parser("replay", help="re-render metrics.csv from rollouts.jsonl")
    p_replay.add_argument("--run-dir", required=True)
    p_replay.add_argument("--out", help="output CSV (default: overwrite run metrics.csv)")
    p_replay.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except EnumerationCapExceeded as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ENUM_CAP


if __name__ == "__main__":
    sys.exit(main())
