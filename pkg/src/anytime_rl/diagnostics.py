"""Analysis artifacts: baseline correlations, variance ratios, accuracy curves,
and per-segment credit profiles, with fixed CSV contracts.

CSV contracts (consumed by the plotting frontend):

* curves.csv       columns: budget, accuracy
* correlation.csv  columns: segment, corr_v1, corr_v2   (empty cell = undefined)
* variance.csv     columns: segment, mode, ratio
* credit.csv       columns: segment, R, V1, V2, V, A

Tokens are binned by their budget segment j_t (the m budget intervals); a
segment's statistics pool one (V, R) pair per policy token across all groups.
Rows whose statistic is undefined (zero variance) are reported as absent or
as empty cells, never as zeros.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .advantage import combined_baseline, compute_return, v1_baseline, v2_baseline
from .core import BudgetRewards, BudgetSpec, RolloutGroup, TokenOrigin, nearest_budget_index
from .policy import PolicyParams, StateDistributionTable
from .rollout import (
    STREAM_REWARD,
    STREAM_TRACE,
    as_summary_model,
    child_rng,
    estimate_rewards_at_budgets,
    sample_trace,
)


def _token_bins(spec: BudgetSpec, n_position_bins: int):
    """Map a 1-based token position to its pooling bin.

    Default bins are the m budget segments; n_position_bins > 0 switches to
    that many equal-width position bins over [1, b_m] (a finer x-axis for
    the correlation/variance tables; returns/baselines stay functions of
    the token's budget segment either way).
    """
    if n_position_bins <= 0:
        return spec.m, lambda pos: nearest_budget_index(pos, spec)
    width = spec.max_budget / n_position_bins
    return n_position_bins, lambda pos: min(int((pos - 1) / width) + 1, n_position_bins)


def _binned_samples(
    groups: list[RolloutGroup],
    spec: BudgetSpec,
    lam: float,
    leave_one_out: bool = False,
    n_position_bins: int = 0,
):
    """Per bin: pooled per-token arrays of (R, V1, V2, final reward, group-mean final)."""
    n_bins, bin_of = _token_bins(spec, n_position_bins)
    per_bin = [{"r": [], "v1": [], "v2": [], "v": [], "final": [], "final_mean": []} for _ in range(n_bins)]
    for group in groups:
        finals = [rw.estimates[-1] for rw in group.rewards]
        final_mean = sum(finals) / len(finals)
        for idx, (trace, rewards) in enumerate(zip(group.traces, group.rewards)):
            by_segment = {}
            for pos, tok in enumerate(trace.tokens, start=1):
                if tok.origin is not TokenOrigin.POLICY:
                    continue
                j = nearest_budget_index(pos, spec)
                values = by_segment.get(j)
                if values is None:
                    ret = compute_return(rewards, spec, j)
                    v1 = v1_baseline(rewards, spec, j, lam)
                    v2 = v2_baseline(group, spec, j, leave_one_out, idx)
                    values = (ret, v1, v2, combined_baseline(v1, v2, j, spec.m))
                    by_segment[j] = values
                bucket = per_bin[bin_of(pos) - 1]
                bucket["r"].append(values[0])
                bucket["v1"].append(values[1])
                bucket["v2"].append(values[2])
                bucket["v"].append(values[3])
                bucket["final"].append(finals[idx])
                bucket["final_mean"].append(final_mean)
    return per_bin


def _pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    if len(x) < 2:
        return None
    sx, sy = np.std(x), np.std(y)
    if sx == 0.0 or sy == 0.0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def baseline_correlations(
    groups: list[RolloutGroup],
    spec: BudgetSpec,
    lam: float = 0.5,
    n_position_bins: int = 0,
    per_question: bool = False,
) -> list[tuple[int, float | None, float | None]]:
    """Rows (segment, corr(V1, R), corr(V2, R)); an entry is None when its
    correlation is undefined (constant V or constant R in that segment), and
    a segment with no tokens is absent.

    Correlations pool across questions by default; per_question computes
    them within each question's groups instead (small samples, off by
    default) and returns (question_id, segment, corr_v1, corr_v2) rows.
    """
    if per_question:
        by_question: dict[int, list[RolloutGroup]] = {}
        for group in groups:
            by_question.setdefault(group.question_id, []).append(group)
        rows = []
        for qid in sorted(by_question):
            for seg, c1, c2 in baseline_correlations(by_question[qid], spec, lam, n_position_bins):
                rows.append((qid, seg, c1, c2))
        return rows
    rows = []
    for j, seg in enumerate(_binned_samples(groups, spec, lam, n_position_bins=n_position_bins), start=1):
        if not seg["r"]:
            continue
        r = np.asarray(seg["r"])
        rows.append((j, _pearson(np.asarray(seg["v1"]), r), _pearson(np.asarray(seg["v2"]), r)))
    return rows


def normalized_variance(
    groups: list[RolloutGroup],
    spec: BudgetSpec,
    lam: float = 0.5,
    leave_one_out: bool = False,
    modes: tuple[str, ...] = ("brpo", "grpo"),
    n_position_bins: int = 0,
) -> list[tuple[int, str, float]]:
    """Rows (segment, mode, Var(R - V) / Var(R)).

    BRPO uses R(j_t) with the interpolated baseline; GRPO uses the final
    reward with the group-mean baseline (both self-normalized). Segments with
    zero Var(R) are absent.
    """
    rows = []
    for j, seg in enumerate(_binned_samples(groups, spec, lam, leave_one_out, n_position_bins), start=1):
        if not seg["r"]:
            continue
        for mode in modes:
            if mode == "brpo":
                r = np.asarray(seg["r"])
                v = np.asarray(seg["v"])
            elif mode == "v2only":
                r = np.asarray(seg["r"])
                v = np.asarray(seg["v2"])
            elif mode == "grpo":
                r = np.asarray(seg["final"])
                v = np.asarray(seg["final_mean"])
            else:
                raise ValueError(f"unknown advantage mode {mode!r}")
            var_r = float(np.var(r))
            if var_r == 0.0:
                continue
            rows.append((j, mode, float(np.var(r - v)) / var_r))
    return rows


@dataclass(frozen=True)
class EvalResult:
    budgets: tuple[int, ...]
    accuracies: tuple[float, ...]
    mean_thinking_length: float
    natural_fraction: float
    records: tuple  # (trace, per-budget estimate array) pairs

    @property
    def anytime_accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def final_accuracy(self) -> float:
        return self.accuracies[-1]


def evaluate_policy(
    env,
    thinking_params: PolicyParams,
    summary,
    budgets,
    m_samples: int,
    n_traces: int,
    seed: int,
    key_prefix: tuple[int, ...] = (),
) -> EvalResult:
    """Mean accuracy at each budget over all questions, n_traces traces per
    question, and m_samples summary draws per view. Deterministic in
    (seed, key_prefix)."""
    model = as_summary_model(summary)
    table = StateDistributionTable(thinking_params)
    budgets = [int(b) for b in budgets]
    acc = np.zeros(len(budgets))
    total = 0
    lengths = []
    natural = 0
    records = []
    for qid, instance in env.questions():
        for t in range(n_traces):
            trace_rng = child_rng(seed, *key_prefix, qid, t, STREAM_TRACE)
            trace = sample_trace(env, instance, qid, thinking_params, trace_rng, table)
            reward_rng = child_rng(seed, *key_prefix, qid, t, STREAM_REWARD)
            est = estimate_rewards_at_budgets(env, instance, trace, budgets, model, m_samples, reward_rng)
            acc += est
            total += 1
            lengths.append(len(trace))
            natural += int(trace.terminated_naturally)
            records.append((trace, est))
    acc /= max(total, 1)
    return EvalResult(
        budgets=tuple(budgets),
        accuracies=tuple(float(a) for a in acc),
        mean_thinking_length=float(np.mean(lengths)) if lengths else 0.0,
        natural_fraction=natural / max(total, 1),
        records=tuple(records),
    )


def accuracy_curve(
    env,
    thinking_params: PolicyParams,
    summary,
    eval_budgets,
    m_samples: int,
    n_traces: int,
    seed: int,
    prior: tuple[float, ...] | None = None,
) -> tuple[list[tuple[int, float]], float, float]:
    """(rows of (budget, accuracy), AUC under the prior, final accuracy).

    The AUC is the prior-weighted mean of the curve at its support points;
    uniform prior by default, so AUC = arithmetic mean of the curve.
    """
    budgets = [int(b) for b in eval_budgets]
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValueError("evaluation budgets must be strictly increasing")
    result = evaluate_policy(env, thinking_params, summary, budgets, m_samples, n_traces, seed)
    accs = np.asarray(result.accuracies)
    if prior is None:
        weights = np.full(len(budgets), 1.0 / len(budgets))
    else:
        weights = np.asarray(prior, dtype=float)
        if weights.shape != accs.shape:
            raise ValueError("prior length must match the budget grid")
    auc = float(weights @ accs)
    rows = list(zip(budgets, (float(a) for a in accs)))
    return rows, auc, result.final_accuracy


def credit_profile(
    rewards: BudgetRewards,
    spec: BudgetSpec,
    lam: float = 0.5,
    group: RolloutGroup | None = None,
    self_index: int | None = None,
) -> list[tuple[int, float, float, float, float, float]]:
    """Rows (segment, R, V1, V2, V, A) for one trace's reward profile.

    Without a group, V2 degenerates to the trace's own return (a group of
    one), which still renders the credit-assignment shape of the returns.
    """
    rows = []
    for j in range(1, spec.m + 1):
        r = compute_return(rewards, spec, j)
        v1 = v1_baseline(rewards, spec, j, lam)
        if group is None:
            v2 = r
        else:
            v2 = v2_baseline(group, spec, j, self_index=self_index)
        v = combined_baseline(v1, v2, j, spec.m)
        rows.append((j, r, v1, v2, v, r - v))
    return rows


# -- CSV writers (the frontend contract) -------------------------------------


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return f"{value:.10g}"


def write_curves_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["budget", "accuracy"])
        for budget, acc in rows:
            writer.writerow([budget, _fmt(acc)])


def write_correlation_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment", "corr_v1", "corr_v2"])
        for segment, c1, c2 in rows:
            writer.writerow([segment, _fmt(c1), _fmt(c2)])


def write_variance_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment", "mode", "ratio"])
        for segment, mode, ratio in rows:
            writer.writerow([segment, mode, _fmt(ratio)])


def write_credit_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment", "R", "V1", "V2", "V", "A"])
        for segment, r, v1, v2, v, a in rows:
            writer.writerow([segment, _fmt(r), _fmt(v1), _fmt(v2), _fmt(v), _fmt(a)])
