"""Shared domain types: tokens, traces, truncated views, budget supports, rewards.

Budget indices are 1-based throughout (j in 1..m), matching the usual
mathematical convention for budget supports; b_0 is defined as 0 so that the
segment of a token at position t is the smallest j with b_{j-1} < t <= b_j.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PROB_ATOL = 1e-12


class TokenOrigin(enum.IntEnum):
    POLICY = 0
    ENV = 1


@dataclass(frozen=True)
class Token:
    """One vocabulary symbol with its provenance (policy action vs env feedback)."""

    id: int
    origin: TokenOrigin

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"token id must be nonnegative, got {self.id}")


@dataclass(frozen=True)
class ThinkingTrace:
    """A complete thinking rollout for one question.

    ``terminated_naturally`` is True when the policy emitted the stop token;
    False when generation was cut at the maximum budget.
    """

    question_id: int
    tokens: tuple[Token, ...]
    terminated_naturally: bool

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class TruncatedView:
    """A budget-limited prefix of a trace.

    ``truncated`` marks views whose budget cut the parent trace short; summary
    feature extraction exposes it as a distinguished marker bit (the stored
    trace itself is never modified). ``budget_index`` is the 1-based index
    into the budget support, or None for ad-hoc cuts outside any support
    (used by evaluation on arbitrary budget grids).
    """

    prefix: tuple[Token, ...]
    truncated: bool
    budget_index: int | None


@dataclass(frozen=True)
class BudgetSpec:
    """Increasing budget support b_1 < ... < b_m with prior probabilities P_j."""

    budgets: tuple[int, ...]
    probabilities: tuple[float, ...]

    def __post_init__(self):
        if len(self.budgets) == 0:
            raise ValueError("budget support must be nonempty")
        if len(self.budgets) != len(self.probabilities):
            raise ValueError("budgets and probabilities must have equal length")
        if any(b <= 0 for b in self.budgets):
            raise ValueError(f"budgets must be positive, got {self.budgets}")
        if any(b2 <= b1 for b1, b2 in zip(self.budgets, self.budgets[1:])):
            raise ValueError(f"budgets must be strictly increasing, got {self.budgets}")
        if any(p < 0 for p in self.probabilities):
            raise ValueError(f"probabilities must be nonnegative, got {self.probabilities}")
        if abs(sum(self.probabilities) - 1.0) > PROB_ATOL:
            raise ValueError(f"probabilities must sum to 1, got sum {sum(self.probabilities)!r}")

    @property
    def m(self) -> int:
        return len(self.budgets)

    @property
    def max_budget(self) -> int:
        return self.budgets[-1]

    def tail_mass(self, j: int) -> float:
        """Sum of P_{j'} for j' >= j (1-based j)."""
        _check_index(j, self.m)
        return float(sum(self.probabilities[j - 1 :]))


class PriorKind(enum.Enum):
    BASE = "base"  # all mass on the final budget
    UNIFORM = "uniform"
    LINEAR = "linear"  # mass proportional to budget length


@dataclass(frozen=True)
class BudgetRewards:
    """Per-budget summary reward estimates for one trace.

    Each estimate averages ``samples_per_budget`` binary verifier outcomes,
    so it is a multiple of 1/K in [0, 1].
    """

    estimates: tuple[float, ...]
    samples_per_budget: int

    def __post_init__(self):
        if self.samples_per_budget < 1:
            raise ValueError("samples_per_budget must be >= 1")
        k = self.samples_per_budget
        for r in self.estimates:
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"reward estimate outside [0, 1]: {r}")
            if abs(r * k - round(r * k)) > 1e-9:
                raise ValueError(f"estimate {r} is not a multiple of 1/{k}")

    @property
    def m(self) -> int:
        return len(self.estimates)


@dataclass(frozen=True)
class RolloutGroup:
    """G traces for one question together with their per-budget rewards."""

    question_id: int
    traces: tuple[ThinkingTrace, ...]
    rewards: tuple[BudgetRewards, ...]

    def __post_init__(self):
        if len(self.traces) != len(self.rewards):
            raise ValueError("traces and rewards must pair up one-to-one")
        for tr in self.traces:
            if tr.question_id != self.question_id:
                raise ValueError("all traces in a group must share the question")

    @property
    def size(self) -> int:
        return len(self.traces)


@dataclass(frozen=True)
class AdvantageRecord:
    """Return/baseline/advantage for one policy-origin token."""

    position: int  # 1-based position in the trace
    budget_index: int  # j_t
    ret: float  # R(x, z, j_t)
    baseline: float  # V(x, z_{<t})
    advantage: float  # ret - baseline

    def __post_init__(self):
        if self.advantage != self.ret - self.baseline:
            raise ValueError("advantage must equal return minus baseline exactly")


@dataclass(frozen=True)
class AdvantageProfile:
    """Per-token advantage records for the policy-origin tokens of one trace."""

    records: tuple[AdvantageRecord, ...] = field(default_factory=tuple)


def _check_index(j: int, m: int) -> None:
    if not 1 <= j <= m:
        raise IndexError(f"budget index {j} outside 1..{m}")


def nearest_budget_index(t: int, spec: BudgetSpec) -> int:
    """Smallest j with b_j >= t, i.e. the budget segment of token position t.

    Raises RangeError-style ValueError when t falls outside [1, b_m].
    """
    if not 1 <= t <= spec.max_budget:
        raise ValueError(f"position {t} outside [1, {spec.max_budget}]")
    # budgets are sorted; bisect for the first budget >= t
    lo = int(np.searchsorted(np.asarray(spec.budgets), t, side="left"))
    return lo + 1


def make_prior(kind: PriorKind | str, budgets: Sequence[int]) -> BudgetSpec:
    """Build a BudgetSpec with one of the preset prior distributions."""
    kind = PriorKind(kind)
    budgets = tuple(int(b) for b in budgets)
    m = len(budgets)
    if m == 0:
        raise ValueError("budget support must be nonempty")
    if kind is PriorKind.BASE:
        probs = (0.0,) * (m - 1) + (1.0,)
    elif kind is PriorKind.UNIFORM:
        probs = (1.0 / m,) * m
    else:
        total = sum(budgets)
        probs = tuple(b / total for b in budgets)
    return BudgetSpec(budgets=budgets, probabilities=probs)


def prefix_view(trace: ThinkingTrace, budget: int, budget_index: int | None = None) -> TruncatedView:
    """Cut a trace at an arbitrary token budget (>= 0)."""
    if budget < 0:
        raise ValueError(f"budget must be nonnegative, got {budget}")
    cut = min(budget, len(trace))
    return TruncatedView(
        prefix=trace.tokens[:cut],
        truncated=budget < len(trace),
        budget_index=budget_index,
    )


def truncate(trace: ThinkingTrace, spec: BudgetSpec, budget_index: int) -> TruncatedView:
    """View of the trace at budget b_j of the support (1-based j)."""
    _check_index(budget_index, spec.m)
    return prefix_view(trace, spec.budgets[budget_index - 1], budget_index=budget_index)


def is_close_distribution(probs: Sequence[float], atol: float = PROB_ATOL) -> bool:
    """True when probs is a distribution: nonnegative, sums to 1 within atol."""
    arr = np.asarray(probs, dtype=float)
    return bool(np.all(arr >= -atol) and math.isclose(float(arr.sum()), 1.0, abs_tol=atol))
