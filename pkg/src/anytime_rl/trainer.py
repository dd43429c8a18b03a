"""Decoupled training of thinking and summary policies.

Per iteration: sample a question batch, collect rollout groups, update the
thinking policy from per-token advantages (its own prior), update the summary
policy on sampled answer groups at every supported budget (uniform prior by
default), then periodically evaluate and checkpoint.

Loss normalization is per trace, never per token (no length bias), and no
advantage is divided by a group standard deviation. There is no KL term.

Estimator notes
    * Thinking gradient: mean over traces of sum over policy tokens of
      grad log pi(z_t) * (R(j_t) - V). With leave-one-out V2 the estimator is
      exactly unbiased for grad J_anytime; with include-self V2 the bias
      decays as O(1/G).
    * Summary gradient: answers in a size-S group are centered by the group
      mean (no std division) and the group sum is scaled by 1/(S-1); the
      include-self centering shrinks expectations by (S-1)/S, and the 1/(S-1)
      normalization restores exact unbiasedness for the P'-weighted gradient.
"""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .advantage import AdvantageMode, BrpoConfig, group_segment_values, grpo_advantages
from .core import BudgetRewards, BudgetSpec, PriorKind, RolloutGroup, TokenOrigin, make_prior
from .diagnostics import evaluate_policy
from .envs import budget_cut_states, env_to_config, reward_vector
from .policy import (
    PolicyParams,
    StateDistributionTable,
    load_params,
    save_params,
    softmax,
    zero_params,
)
from .rollout import (
    STREAM_QUESTIONS,
    STREAM_SUMMARY_TRAIN,
    ParametricSummary,
    RolloutConfig,
    child_rng,
    collect_group,
    rollout_record,
    write_rollout_records,
)

PHASE_TRAIN = 0
PHASE_EVAL = 1


class OptimizerKind(enum.Enum):
    SGD = "sgd"
    ADAPTIVE_MOMENT = "adam"


class SurrogateMode(enum.Enum):
    PLAIN_PG = "plainpg"
    CLIPPED_RATIO = "clippedratio"


class TrainingDiverged(RuntimeError):
    """Raised when parameters or gradients go non-finite; carries a dump."""

    def __init__(self, message: str, dump: dict):
        super().__init__(message)
        self.dump = dump


@dataclass(frozen=True)
class TrainerConfig:
    iterations: int = 300
    batch_questions: int = 32
    group_size: int = 8  # G
    summary_samples: int = 4  # K
    summary_group_size: int = 4  # S
    eval_summary_samples: int = 16  # M
    eval_traces: int = 8
    budgets: tuple[int, ...] = (8, 16, 24, 32)
    thinking_prior: PriorKind = PriorKind.UNIFORM
    summary_prior: PriorKind = PriorKind.UNIFORM
    advantage_mode: AdvantageMode = AdvantageMode.BRPO
    lam: float = 0.5
    leave_one_out: bool = False
    thinking_step: float = 15.0
    summary_step: float = 15.0
    optimizer: OptimizerKind = OptimizerKind.SGD
    surrogate: SurrogateMode = SurrogateMode.PLAIN_PG
    clip_low: float = 0.2
    clip_high: float = 0.28
    inner_epochs: int = 1
    summary_surrogate: SurrogateMode = SurrogateMode.PLAIN_PG
    summary_inner_epochs: int = 1
    eval_cadence: int = 10
    seed: int = 0
    length_penalty: str = "none"  # none | v1 | v2
    length_penalty_coeff: float = 0.2
    log_rollouts: bool = False
    wall_clock: bool = False

    def __post_init__(self):
        if self.summary_group_size < 2:
            raise ValueError("summary_group_size must be >= 2 (group-centered rewards)")
        if self.inner_epochs < 1 or self.summary_inner_epochs < 1:
            raise ValueError("inner epochs must be >= 1")
        if self.surrogate is SurrogateMode.CLIPPED_RATIO or self.summary_surrogate is SurrogateMode.CLIPPED_RATIO:
            if self.clip_low <= 0 or self.clip_high <= 0:
                raise ValueError("clip range must be positive for the clipped surrogate")
        if self.length_penalty not in ("none", "v1", "v2"):
            raise ValueError(f"unknown length_penalty {self.length_penalty!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")

    def brpo(self) -> BrpoConfig:
        return BrpoConfig(lam=self.lam, leave_one_out=self.leave_one_out, mode=self.advantage_mode)


@dataclass(frozen=True)
class GradientEstimate:
    vector: np.ndarray
    sample_count: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("gradient estimate contains non-finite entries")


@dataclass
class TokenRecords:
    """Flat per-token (or per-answer) records for surrogate gradients.

    ctx indexes rows of a context table: for the thinking policy that table
    is the identity over one-hot states, for the summary policy a matrix of
    distinct feature vectors.
    """

    ctx: np.ndarray
    action: np.ndarray
    advantage: np.ndarray
    weight: np.ndarray
    old_logp: np.ndarray
    n_traces: int
    features: np.ndarray | None = None  # (n_ctx, dim) or None for one-hot states


def length_penalty_reward(reward: int, trace_length: int, max_budget: int, variant: str, coefficient: float = 0.2) -> float:
    """Reward shaping for the length-penalty ablations (correct answers only).

    v1: correct -> 1 - c * |z| / b_m, wrong -> 0.
    v2: same linear form clamped at zero (keeps rewards nonnegative for any c).
    """
    if reward not in (0, 1):
        raise ValueError("length penalty applies to binary rewards")
    if reward == 0:
        return 0.0
    shaped = 1.0 - coefficient * trace_length / max_budget
    if variant == "v1":
        return shaped
    if variant == "v2":
        return max(0.0, shaped)
    raise ValueError(f"unknown length penalty variant {variant!r}")


def collect_thinking_records(
    env,
    groups: list[RolloutGroup],
    spec: BudgetSpec,
    config: BrpoConfig,
    thinking_params: PolicyParams,
    shaped_finals: list[np.ndarray] | None = None,
) -> TokenRecords:
    """Per-policy-token (state, action, advantage, old log-prob) records.

    shaped_finals, when given (length-penalty ablation), replaces the GRPO
    final rewards: every token of trace i gets shaped_i minus the group mean.
    """
    table = StateDistributionTable(thinking_params)
    budgets = np.asarray(spec.budgets)
    ctx, action, adv = [], [], []
    n_traces = 0
    for gidx, group in enumerate(groups):
        instance = env.instance_for(group.question_id)
        if shaped_finals is not None:
            flat_advs = grpo_advantages(list(shaped_finals[gidx]))
        else:
            segment_values = group_segment_values(group, spec, config)
        for idx, trace in enumerate(group.traces):
            n_traces += 1
            state = env.initial_think_state(instance)
            for pos, tok in enumerate(trace.tokens, start=1):
                if tok.origin is TokenOrigin.POLICY:
                    if shaped_finals is None:
                        j_t = int(np.searchsorted(budgets, pos, side="left")) + 1
                        a_t = segment_values[idx][j_t - 1][2]
                    else:
                        a_t = flat_advs[idx]
                    ctx.append(env.think_state_index(state))
                    action.append(tok.id)
                    adv.append(a_t)
                state = env.advance_think_state(instance, state, tok)
    ctx_arr = np.asarray(ctx, dtype=int)
    action_arr = np.asarray(action, dtype=int)
    return TokenRecords(
        ctx=ctx_arr,
        action=action_arr,
        advantage=np.asarray(adv, dtype=float),
        weight=np.ones(len(ctx)),
        old_logp=table.logp[ctx_arr, action_arr] if len(ctx) else np.zeros(0),
        n_traces=n_traces,
    )


def collect_summary_records(
    env,
    groups: list[RolloutGroup],
    spec: BudgetSpec,
    summary_params: PolicyParams,
    s: int,
    rng: np.random.Generator,
    summary_prior: tuple[float, ...],
) -> TokenRecords:
    """Size-S answer groups per (trace, supported budget), group-mean centered.

    Record weight is P'_j / (S - 1); see the module docstring for why the
    1/(S-1) scaling makes the include-self centering exactly unbiased.
    """
    if s < 2:
        raise ValueError("summary group size must be >= 2")
    feat_index: dict = {}
    feats: list[np.ndarray] = []
    cums: list[np.ndarray] = []
    logps: list[np.ndarray] = []
    active = [j for j in range(1, spec.m + 1) if summary_prior[j - 1] > 0.0]
    reward_vectors: dict[int, np.ndarray] = {}
    ctx, action, adv, weight, old_logp = [], [], [], [], []
    n_traces = 0
    for group in groups:
        instance = env.instance_for(group.question_id)
        r_vec = reward_vectors.get(group.question_id)
        if r_vec is None:
            r_vec = reward_vector(env, instance)
            reward_vectors[group.question_id] = r_vec
        for trace in group.traces:
            n_traces += 1
            cut_states = budget_cut_states(env, instance, trace.tokens, spec.budgets)
            for j in active:
                state, last, truncated = cut_states[j - 1]
                key = env.summary_state_of(state, last, truncated)
                fidx = feat_index.get(key)
                if fidx is None:
                    fidx = len(feats)
                    feat_index[key] = fidx
                    f = env.summary_features_from_state(key)
                    probs = softmax(f @ summary_params.weights)
                    feats.append(f)
                    cums.append(np.cumsum(probs))
                    logps.append(np.log(probs))
                cum = cums[fidx]
                answers = np.minimum(np.searchsorted(cum, rng.random(s), side="right"), cum.shape[0] - 1)
                rewards = r_vec[answers]
                centered = rewards - rewards.mean()
                ctx.extend([fidx] * s)
                action.extend(answers.tolist())
                adv.extend(centered.tolist())
                weight.extend([summary_prior[j - 1] / (s - 1)] * s)
                old_logp.extend(logps[fidx][answers].tolist())
    return TokenRecords(
        ctx=np.asarray(ctx, dtype=int),
        action=np.asarray(action, dtype=int),
        advantage=np.asarray(adv, dtype=float),
        weight=np.asarray(weight, dtype=float),
        old_logp=np.asarray(old_logp, dtype=float),
        n_traces=n_traces,
        features=np.asarray(feats) if feats else np.zeros((0, env.summary_feature_dim)),
    )


def surrogate_gradient(
    records: TokenRecords,
    params: PolicyParams,
    mode: SurrogateMode = SurrogateMode.PLAIN_PG,
    clip_low: float = 0.2,
    clip_high: float = 0.28,
) -> GradientEstimate:
    """Gradient of the chosen surrogate from token records, per-trace normalized.

    PlainPG: sum_t w_t A_t grad log pi(a_t). ClippedRatio: the PPO-clip
    gradient; a token contributes rho_t A_t grad log pi(a_t) unless clipped
    out (A >= 0 and rho > 1 + clip_high, or A < 0 and rho < 1 - clip_low).
    """
    if records.features is None:
        n_ctx = params.feature_dim
        probs = softmax(params.weights)
    else:
        n_ctx = records.features.shape[0]
        probs = softmax(records.features @ params.weights) if n_ctx else np.zeros((0, params.n_actions))
    coeff = records.weight * records.advantage
    if mode is SurrogateMode.CLIPPED_RATIO and len(records.ctx):
        new_logp = np.log(probs[records.ctx, records.action])
        ratio = np.exp(new_logp - records.old_logp)
        clipped_out = ((records.advantage >= 0) & (ratio > 1.0 + clip_high)) | (
            (records.advantage < 0) & (ratio < 1.0 - clip_low)
        )
        coeff = np.where(clipped_out, 0.0, coeff * ratio)
    grad_ctx = np.zeros((n_ctx, params.n_actions))
    if len(records.ctx):
        np.add.at(grad_ctx, (records.ctx, records.action), coeff)
        per_ctx = np.bincount(records.ctx, weights=coeff, minlength=n_ctx)
        grad_ctx -= per_ctx[:, None] * probs
    if records.features is None:
        grad = grad_ctx
    else:
        grad = records.features.T @ grad_ctx if n_ctx else np.zeros(params.weights.shape)
    return GradientEstimate(vector=grad / max(records.n_traces, 1), sample_count=records.n_traces)


def thinking_gradient(
    env,
    groups: list[RolloutGroup],
    spec: BudgetSpec,
    config: BrpoConfig,
    thinking_params: PolicyParams,
) -> GradientEstimate:
    """Plain policy-gradient estimate for the thinking policy (Monte Carlo)."""
    records = collect_thinking_records(env, groups, spec, config, thinking_params)
    return surrogate_gradient(records, thinking_params)


def summary_gradient(
    env,
    groups: list[RolloutGroup],
    spec: BudgetSpec,
    summary_params: PolicyParams,
    s: int,
    rng: np.random.Generator,
    summary_prior: tuple[float, ...] | None = None,
) -> GradientEstimate:
    """Decoupled summary-policy gradient (uniform budget weights by default)."""
    if summary_prior is None:
        summary_prior = (1.0 / spec.m,) * spec.m
    records = collect_summary_records(env, groups, spec, summary_params, s, rng, summary_prior)
    return surrogate_gradient(records, summary_params)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def apply_update(
    params: PolicyParams,
    gradient: GradientEstimate,
    state: AdamState | None,
    step: float,
    kind: OptimizerKind = OptimizerKind.SGD,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[PolicyParams, AdamState | None]:
    """Ascent step. SGD: W + step * g. Adam: first/second-moment ascent with
    bias correction, W + step * m_hat / (sqrt(v_hat) + eps)."""
    g = gradient.vector
    if g.shape != params.weights.shape:
        raise ValueError(f"gradient shape {g.shape} != params shape {params.weights.shape}")
    if not np.all(np.isfinite(g)):
        raise TrainingDiverged("non-finite gradient", {"gradient_max": float(np.nanmax(g))})
    # overflow/NaN from absurd steps is detected by the params validation, not
    # reported as a numpy warning mid-arithmetic
    with np.errstate(invalid="ignore", over="ignore"):
        if kind is OptimizerKind.SGD:
            return PolicyParams(params.weights + step * g), state
        if state is None:
            state = AdamState(m=np.zeros_like(params.weights), v=np.zeros_like(params.weights))
        state.t += 1
        state.m = beta1 * state.m + (1 - beta1) * g
        state.v = beta2 * state.v + (1 - beta2) * g * g
        m_hat = state.m / (1 - beta1 ** state.t)
        v_hat = state.v / (1 - beta2 ** state.t)
        return PolicyParams(params.weights + step * m_hat / (np.sqrt(v_hat) + eps)), state


@dataclass
class TrainingResult:
    thinking_params: PolicyParams
    summary_params: PolicyParams
    metrics: list[dict] = field(default_factory=list)
    run_dir: Path | None = None


METRICS_COLUMNS = ["iteration", "anytime_accuracy", "final_accuracy", "mean_thinking_length", "wall_time_s"]


def format_metrics_row(row: dict) -> str:
    return "{iteration},{anytime_accuracy:.6f},{final_accuracy:.6f},{mean_thinking_length:.6f},{wall_time_s:.3f}".format(
        **row
    )


def _save_checkpoint(run_dir: Path, iteration: int, env, config: TrainerConfig, think, summ) -> Path:
    ckpt = run_dir / "checkpoints" / f"iter_{iteration:06d}"
    ckpt.mkdir(parents=True, exist_ok=True)
    save_params(think, str(ckpt / "thinking.bin"))
    save_params(summ, str(ckpt / "summary.bin"))
    meta = {
        "iteration": iteration,
        "env": env_to_config(env),
        "budgets": list(config.budgets),
        "seed": config.seed,
    }
    (ckpt / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return ckpt


def load_checkpoint(path) -> tuple[PolicyParams, PolicyParams, dict]:
    """(thinking params, summary params, metadata) from a checkpoint directory."""
    ckpt = Path(path)
    meta = json.loads((ckpt / "meta.json").read_text())
    return load_params(str(ckpt / "thinking.bin")), load_params(str(ckpt / "summary.bin")), meta


def run_training(env, config: TrainerConfig, run_dir: str | Path | None = None) -> TrainingResult:
    """Full training loop; writes metrics.csv, checkpoints/, and (optionally)
    rollouts.jsonl under run_dir when given."""
    if env.max_len != config.budgets[-1]:
        raise ValueError(
            f"env length cap {env.max_len} must equal the largest budget {config.budgets[-1]}"
        )
    spec = make_prior(config.thinking_prior, config.budgets)
    summary_prior = make_prior(config.summary_prior, config.budgets).probabilities
    bcfg = config.brpo()
    rollout_cfg = RolloutConfig(
        group_size=config.group_size,
        summary_samples=config.summary_samples,
        eval_summary_samples=config.eval_summary_samples,
        max_len=env.max_len,
        seed=config.seed,
    )
    think = zero_params(env.think_feature_dim, env.n_thinking_actions)
    summ = zero_params(env.summary_feature_dim, env.n_answers)
    think_state: AdamState | None = None
    summ_state: AdamState | None = None

    run_path = Path(run_dir) if run_dir is not None else None
    metrics_fh = rollouts_fh = None
    if run_path is not None:
        run_path.mkdir(parents=True, exist_ok=True)
        metrics_fh = open(run_path / "metrics.csv", "w")
        metrics_fh.write(",".join(METRICS_COLUMNS) + "\n")
        if config.log_rollouts:
            rollouts_fh = open(run_path / "rollouts.jsonl", "w")

    result = TrainingResult(thinking_params=think, summary_params=summ, run_dir=run_path)
    start = time.monotonic()

    def evaluate_and_log(iteration: int) -> None:
        ev = evaluate_policy(
            env,
            think,
            ParametricSummary(summ),
            config.budgets,
            config.eval_summary_samples,
            config.eval_traces,
            config.seed,
            key_prefix=(PHASE_EVAL, iteration),
        )
        row = {
            "iteration": iteration,
            "anytime_accuracy": ev.anytime_accuracy,
            "final_accuracy": ev.final_accuracy,
            "mean_thinking_length": ev.mean_thinking_length,
            "wall_time_s": (time.monotonic() - start) if config.wall_clock else 0.0,
        }
        result.metrics.append(row)
        if metrics_fh is not None:
            metrics_fh.write(format_metrics_row(row) + "\n")
            metrics_fh.flush()
        if rollouts_fh is not None:
            records = []
            for t_idx, (trace, est) in enumerate(ev.records):
                rw = BudgetRewards(
                    estimates=tuple(float(x) for x in est), samples_per_budget=config.eval_summary_samples
                )
                records.append(
                    rollout_record(trace, rw, (PHASE_EVAL, iteration, trace.question_id, t_idx), phase="eval")
                )
            write_rollout_records(rollouts_fh, records)
            rollouts_fh.flush()

    try:
        if run_path is not None:
            _save_checkpoint(run_path, 0, env, config, think, summ)
        evaluate_and_log(0)

        for it in range(1, config.iterations + 1):
            qrng = child_rng(config.seed, PHASE_TRAIN, it, STREAM_QUESTIONS)
            batch = [env.sample_question(qrng) for _ in range(config.batch_questions)]
            think_table = StateDistributionTable(think)
            summary_model = ParametricSummary(summ)  # sampler cache shared across the batch
            groups = []
            for slot, (qid, instance) in enumerate(batch):
                groups.append(
                    collect_group(
                        env,
                        qid,
                        instance,
                        think,
                        summary_model,
                        spec,
                        rollout_cfg,
                        key_prefix=(PHASE_TRAIN, it, slot),
                        think_table=think_table,
                    )
                )
            if rollouts_fh is not None:
                records = []
                for slot, group in enumerate(groups):
                    for g, (trace, rw) in enumerate(zip(group.traces, group.rewards)):
                        records.append(
                            rollout_record(trace, rw, (PHASE_TRAIN, it, slot, group.question_id, g), phase="train")
                        )
                write_rollout_records(rollouts_fh, records)

            shaped = None
            if config.length_penalty != "none":
                # the penalty is linear on correct answers and 0 on wrong ones,
                # so the shaped K-sample mean is the raw mean times the factor
                shaped = []
                for group in groups:
                    factors = [
                        length_penalty_reward(
                            1, len(trace), env.max_len, config.length_penalty, config.length_penalty_coeff
                        )
                        for trace in group.traces
                    ]
                    shaped.append(
                        np.array([f * rw.estimates[-1] for f, rw in zip(factors, group.rewards)])
                    )

            records = collect_thinking_records(env, groups, spec, bcfg, think, shaped_finals=shaped)
            epochs = config.inner_epochs if config.surrogate is SurrogateMode.CLIPPED_RATIO else 1
            for _ in range(epochs):
                grad = surrogate_gradient(records, think, config.surrogate, config.clip_low, config.clip_high)
                think, think_state = apply_update(
                    think, grad, think_state, config.thinking_step, config.optimizer
                )

            sum_rng = child_rng(config.seed, PHASE_TRAIN, it, STREAM_SUMMARY_TRAIN)
            sum_records = collect_summary_records(
                env, groups, spec, summ, config.summary_group_size, sum_rng, summary_prior
            )
            sum_epochs = (
                config.summary_inner_epochs
                if config.summary_surrogate is SurrogateMode.CLIPPED_RATIO
                else 1
            )
            for _ in range(sum_epochs):
                grad = surrogate_gradient(
                    sum_records, summ, config.summary_surrogate, config.clip_low, config.clip_high
                )
                summ, summ_state = apply_update(summ, grad, summ_state, config.summary_step, config.optimizer)

            result.thinking_params = think
            result.summary_params = summ
            if it % config.eval_cadence == 0 or it == config.iterations:
                evaluate_and_log(it)
                if run_path is not None:
                    _save_checkpoint(run_path, it, env, config, think, summ)
    except ValueError as exc:
        if "non-finite" in str(exc):
            raise TrainingDiverged(str(exc), {"config": asdict_config(config)}) from exc
        raise
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
        if rollouts_fh is not None:
            rollouts_fh.close()

    result.thinking_params = think
    result.summary_params = summ
    return result


def asdict_config(config: TrainerConfig) -> dict:
    raw = asdict(config)
    for key, value in raw.items():
        if isinstance(value, enum.Enum):
            raw[key] = value.value
    return raw
