"""Returns, history/group baselines, their interpolation, and advantage profiles.

For a token at position t with budget segment j_t:

* return      R = sum_{j >= j_t} P_j r_hat_j                  (prior-weighted tail)
* history     V1 = discounted mean of r_hat at budgets < j_t, scaled by the
               remaining prior mass; 0 at j_t = 1 (empty history)
* group       V2 = group mean of R at j_t (optionally leave-one-out)
* combined    V = ((j_t - 1)/m) V1 + ((m - j_t + 1)/m) V2

GRPO mode reproduces the group-mean outcome baseline: every token of a trace
gets the final reward minus the group mean of final rewards, with no
standard-deviation normalization (the Dr. GRPO correction).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .core import (
    AdvantageProfile,
    AdvantageRecord,
    BudgetRewards,
    BudgetSpec,
    RolloutGroup,
    ThinkingTrace,
    TokenOrigin,
    nearest_budget_index,
)


class AdvantageMode(enum.Enum):
    BRPO = "brpo"
    GRPO = "grpo"
    V2_ONLY = "v2only"


@dataclass(frozen=True)
class BrpoConfig:
    lam: float = 0.5  # discount over previous-budget rewards in V1
    leave_one_out: bool = False  # exclude self from V2 (exact unbiasedness)
    mode: AdvantageMode = AdvantageMode.BRPO

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")


def compute_return(rewards: BudgetRewards, spec: BudgetSpec, j: int) -> float:
    """R(x, z, j) = sum_{j' >= j} P_{j'} r_hat_{j'}."""
    if not 1 <= j <= spec.m:
        raise IndexError(f"budget index {j} outside 1..{spec.m}")
    return float(
        sum(p * r for p, r in zip(spec.probabilities[j - 1 :], rewards.estimates[j - 1 :]))
    )


def v1_baseline(rewards: BudgetRewards, spec: BudgetSpec, j: int, lam: float) -> float:
    """History baseline: lam-discounted mean of rewards at budgets before j,
    scaled by the prior mass at or after j. Zero at j = 1 (empty history);
    lam = 0 is the point-mass-on-most-recent limit."""
    if not 1 <= j <= spec.m:
        raise IndexError(f"budget index {j} outside 1..{spec.m}")
    if j == 1:
        return 0.0
    tail = spec.tail_mass(j)
    if lam == 0.0:
        return rewards.estimates[j - 2] * tail
    # common factor lam^1 divided out so the most recent budget has weight
    # exactly 1 (no underflow for tiny lam)
    weights = [lam ** (j - 1 - jp) for jp in range(1, j)]
    total = sum(weights)
    mean = sum(w * r for w, r in zip(weights, rewards.estimates[: j - 1])) / total
    return mean * tail


def v2_baseline(
    group: RolloutGroup,
    spec: BudgetSpec,
    j: int,
    leave_one_out: bool = False,
    self_index: int | None = None,
) -> float:
    """Group baseline: mean return after j across the rollout group."""
    if group.size < 2:
        if leave_one_out:
            raise ValueError("leave-one-out V2 needs a group of at least 2")
        if group.size < 1:
            raise ValueError("empty group")
    returns = [compute_return(rw, spec, j) for rw in group.rewards]
    if leave_one_out:
        if self_index is None:
            raise ValueError("leave-one-out V2 needs the member index to exclude")
        returns = [r for i, r in enumerate(returns) if i != self_index]
    return float(sum(returns) / len(returns))


def combined_baseline(v1: float, v2: float, j: int, m: int) -> float:
    """Interpolation with weights ((j-1)/m, (m-j+1)/m); weights sum to 1."""
    if not 1 <= j <= m:
        raise IndexError(f"budget index {j} outside 1..{m}")
    return ((j - 1) / m) * v1 + ((m - j + 1) / m) * v2


def grpo_advantages(final_rewards: list[float]) -> list[float]:
    """Outcome reward minus the group mean, no std normalization."""
    mean = sum(final_rewards) / len(final_rewards)
    return [r - mean for r in final_rewards]


def group_segment_values(
    group: RolloutGroup, spec: BudgetSpec, config: BrpoConfig
) -> list[list[tuple[float, float, float]]]:
    """Per member, per segment: (return, baseline, advantage).

    Shared group statistics (returns matrix, group means) are computed once;
    equivalent to calling the single-value baseline ops per member.
    """
    m = spec.m
    g = group.size
    if config.mode is AdvantageMode.GRPO:
        finals = [rw.estimates[-1] for rw in group.rewards]
        baseline = sum(finals) / g
        return [[(ret, baseline, ret - baseline)] * m for ret in finals]

    returns = [[compute_return(rw, spec, j) for j in range(1, m + 1)] for rw in group.rewards]
    column_sums = [sum(returns[i][jx] for i in range(g)) for jx in range(m)]
    out = []
    for i in range(g):
        rows = []
        for jx in range(m):
            j = jx + 1
            ret = returns[i][jx]
            if config.leave_one_out:
                if g < 2:
                    raise ValueError("leave-one-out V2 needs a group of at least 2")
                v2 = sum(returns[o][jx] for o in range(g) if o != i) / (g - 1)
            else:
                v2 = column_sums[jx] / g
            if config.mode is AdvantageMode.V2_ONLY:
                baseline = v2
            else:
                v1 = v1_baseline(group.rewards[i], spec, j, config.lam)
                baseline = combined_baseline(v1, v2, j, m)
            rows.append((ret, baseline, ret - baseline))
        out.append(rows)
    return out


def advantage_profile(
    trace: ThinkingTrace,
    group: RolloutGroup,
    spec: BudgetSpec,
    config: BrpoConfig,
    self_index: int,
    segment_values: list[tuple[float, float, float]] | None = None,
) -> AdvantageProfile:
    """Per-policy-token records of (position, j_t, R, V, A) for one group member.

    Environment-origin tokens occupy budget positions but receive no record
    (they carry no policy-gradient credit). segment_values, when given, must
    be the member's row of group_segment_values (avoids recomputing group
    statistics per member).
    """
    if group.traces[self_index] is not trace and group.traces[self_index] != trace:
        raise ValueError("trace must be the group member at self_index")
    if segment_values is None:
        segment_values = group_segment_values(group, spec, config)[self_index]

    records = []
    for pos, token in enumerate(trace.tokens, start=1):
        if token.origin is not TokenOrigin.POLICY:
            continue
        j_t = nearest_budget_index(pos, spec)
        ret, baseline, adv = segment_values[j_t - 1]
        records.append(
            AdvantageRecord(position=pos, budget_index=j_t, ret=ret, baseline=baseline, advantage=adv)
        )
    return AdvantageProfile(records=tuple(records))
