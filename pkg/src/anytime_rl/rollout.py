"""Trace generation, nested-budget summary sampling, and dense-reward estimation.

Seed-splitting: every piece of sampling work owns a generator derived from
the run seed and an integer key path, e.g. ``child_rng(seed, it, qid, g, STREAM_TRACE)``,
so any trace or reward estimate is replayable in isolation regardless of
execution order.

Reward estimation evaluates all m truncated views of one stored trace in a
single pass, reusing K shared uniform draws across budgets (the nested views
share their prefix, so the evaluations share their randomness). Under the
oracle summary this makes per-trace budget rewards exactly nondecreasing in
the budget index, not just in expectation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import (
    BudgetRewards,
    BudgetSpec,
    RolloutGroup,
    ThinkingTrace,
    Token,
    TokenOrigin,
    TruncatedView,
)
from .envs import budget_cut_states, reward_vector
from .policy import PolicyParams, StateDistributionTable, softmax

# stream ids inside the seed tree
STREAM_TRACE = 0
STREAM_REWARD = 1
STREAM_SUMMARY_TRAIN = 2
STREAM_EVAL = 3
STREAM_QUESTIONS = 4


def child_rng(root_seed: int, *key: int) -> np.random.Generator:
    """Generator for one node of the seed tree (documented key paths above)."""
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class RolloutConfig:
    group_size: int = 8  # G
    summary_samples: int = 4  # K
    eval_summary_samples: int = 16  # M
    max_len: int | None = None  # validated against the env when set
    seed: int = 0

    def __post_init__(self):
        if self.group_size < 1 or self.summary_samples < 1 or self.eval_summary_samples < 1:
            raise ValueError("group_size, summary_samples, eval_summary_samples must be >= 1")


class ParametricSummary:
    """Summary policy backed by linear-softmax parameters.

    Samplers are cached per summary state for the lifetime of the wrapper
    (parameters are treated as immutable snapshots), so evaluating the many
    nested views of a rollout batch reuses a handful of distributions.
    """

    def __init__(self, params: PolicyParams):
        self.params = params
        self._samplers: dict = {}

    def state_key(self, env, instance, state, last_token_id: int, truncated: bool):
        return env.summary_state_of(state, last_token_id, truncated)

    def view_key(self, env, instance, view: TruncatedView):
        return env.summary_state(instance, view)

    def distribution(self, env, instance, view: TruncatedView) -> np.ndarray:
        feats = env.summary_features(instance, view)
        return softmax(feats @ self.params.weights)

    def sampler_for_key(self, env, instance, key):
        """Vectorized inverse-CDF sampler us -> answers for one summary state."""
        sampler = self._samplers.get(key)
        if sampler is None:
            feats = env.summary_features_from_state(key)
            cum = np.cumsum(softmax(feats @ self.params.weights))
            top = cum.shape[0] - 1

            def sampler(us):
                return np.minimum(np.searchsorted(cum, np.atleast_1d(us), side="right"), top)

            self._samplers[key] = sampler
        return sampler

    def sampler(self, env, instance, view: TruncatedView):
        return self.sampler_for_key(env, instance, self.view_key(env, instance, view))


class OracleSummary:
    """Optimal-summary witness: the verified answer when the view contains
    one, a uniform feasible answer otherwise (environment-defined)."""

    def __init__(self):
        self._samplers: dict = {}

    def state_key(self, env, instance, state, last_token_id: int, truncated: bool):
        return env.oracle_state_of(state)

    def view_key(self, env, instance, view: TruncatedView):
        if hasattr(env, "feasible_interval"):
            return env.feasible_interval(instance, view)
        return env.summary_state(instance, view)

    def distribution(self, env, instance, view: TruncatedView) -> np.ndarray:
        return env.oracle_answer_distribution(instance, view)

    def sampler_for_key(self, env, instance, key):
        cache_key = (instance, key)
        sampler = self._samplers.get(cache_key)
        if sampler is None:
            sampler = env.oracle_sampler_for(instance, key)
            self._samplers[cache_key] = sampler
        return sampler

    def sampler(self, env, instance, view: TruncatedView):
        return self.sampler_for_key(env, instance, self.view_key(env, instance, view))


def as_summary_model(summary) -> ParametricSummary | OracleSummary:
    if isinstance(summary, PolicyParams):
        return ParametricSummary(summary)
    return summary


def oracle_summary(env, instance, view: TruncatedView, rng: np.random.Generator) -> int:
    """Draw one answer from the oracle summary policy."""
    return env.oracle_sample_answer(instance, view, float(rng.random()))


def sample_trace(
    env,
    instance,
    question_id: int,
    thinking_params: PolicyParams,
    rng: np.random.Generator,
    think_table: StateDistributionTable | None = None,
) -> ThinkingTrace:
    """Roll out one thinking trace.

    Policy actions and environment feedback alternate; generation ends at the
    stop token (natural) or at the length cap. A probe whose feedback token
    would exceed the cap keeps the probe and drops the feedback.
    """
    max_len = env.max_len
    if think_table is None:
        think_table = StateDistributionTable(thinking_params)
    tokens: list[Token] = []
    state = env.initial_think_state(instance)
    natural = False
    while len(tokens) < max_len:
        idx = env.think_state_index(state)
        action = think_table.sample(idx, float(rng.random()))
        tok = Token(id=action, origin=TokenOrigin.POLICY)
        tokens.append(tok)
        if action == env.stop_token:
            natural = True
            break
        state = env.advance_think_state(instance, state, tok)
        if len(tokens) >= max_len:
            break
        feedback = env.env_response(instance, action)
        if feedback is not None:
            fb = Token(id=feedback, origin=TokenOrigin.ENV)
            tokens.append(fb)
            state = env.advance_think_state(instance, state, fb)
    return ThinkingTrace(question_id=question_id, tokens=tuple(tokens), terminated_naturally=natural)


def estimate_rewards_at_budgets(
    env,
    instance,
    trace: ThinkingTrace,
    budget_counts,
    summary,
    k: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """K-sample reward estimates at arbitrary token-budget cuts of one trace.

    The K uniforms are drawn once and shared across budgets, so each budget's
    estimate depends only on the tokens inside that budget, and nested views
    are evaluated with common randomness (exactly monotone for the oracle
    summary). Used with the training support and with evaluation grids.
    """
    if k < 1:
        raise ValueError("need at least one summary sample per budget")
    model = as_summary_model(summary)
    us = rng.random(k)
    r_vec = reward_vector(env, instance)
    estimates = np.zeros(len(budget_counts))
    cut_states = budget_cut_states(env, instance, trace.tokens, budget_counts)
    for jx, (state, last, truncated) in enumerate(cut_states):
        key = model.state_key(env, instance, state, last, truncated)
        sampler = model.sampler_for_key(env, instance, key)
        estimates[jx] = float(r_vec[sampler(us)].mean())
    return estimates


def estimate_budget_rewards(
    env,
    instance,
    trace: ThinkingTrace,
    spec: BudgetSpec,
    summary,
    k: int,
    rng: np.random.Generator,
) -> BudgetRewards:
    """Reward estimates r_hat_j over the budget support of the spec."""
    values = estimate_rewards_at_budgets(env, instance, trace, spec.budgets, summary, k, rng)
    return BudgetRewards(estimates=tuple(float(v) for v in values), samples_per_budget=k)


def collect_group(
    env,
    question_id: int,
    instance,
    thinking_params: PolicyParams,
    summary,
    spec: BudgetSpec,
    config: RolloutConfig,
    key_prefix: tuple[int, ...] = (),
    think_table: StateDistributionTable | None = None,
) -> RolloutGroup:
    """G independent traces with their budget rewards, deterministically seeded
    by (run seed, *key_prefix, question id, group index, stream)."""
    if config.max_len is not None and config.max_len != env.max_len:
        raise ValueError(f"config max_len {config.max_len} != env max_len {env.max_len}")
    if think_table is None:
        think_table = StateDistributionTable(thinking_params)
    model = as_summary_model(summary)
    traces = []
    rewards = []
    for g in range(config.group_size):
        trace_rng = child_rng(config.seed, *key_prefix, question_id, g, STREAM_TRACE)
        trace = sample_trace(env, instance, question_id, thinking_params, trace_rng, think_table)
        reward_rng = child_rng(config.seed, *key_prefix, question_id, g, STREAM_REWARD)
        rw = estimate_budget_rewards(env, instance, trace, spec, model, config.summary_samples, reward_rng)
        traces.append(trace)
        rewards.append(rw)
    return RolloutGroup(question_id=question_id, traces=tuple(traces), rewards=tuple(rewards))


def rollout_record(
    trace: ThinkingTrace,
    rewards: BudgetRewards,
    seed_path: tuple[int, ...],
    phase: str = "train",
) -> dict:
    """JSON-serializable log record: one object per trace per line."""
    return {
        "phase": phase,
        "question_id": trace.question_id,
        "seed_path": list(seed_path),
        "token_ids": [tok.id for tok in trace.tokens],
        "token_origins": [int(tok.origin) for tok in trace.tokens],
        "terminated_naturally": trace.terminated_naturally,
        "reward_estimates": list(rewards.estimates),
        "samples_per_budget": rewards.samples_per_budget,
    }


def write_rollout_records(fh, records: list[dict]) -> None:
    for rec in records:
        fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def parse_rollout_record(line: str) -> dict:
    return json.loads(line)
