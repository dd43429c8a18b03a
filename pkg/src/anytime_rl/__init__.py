"""Anytime reasoning RL lab.

A desk-scale laboratory for budget-sampled anytime objectives: thinking
traces are truncated at a support of token budgets, summaries of each prefix
earn verifiable dense rewards, and the thinking policy trains against
budget-relative baselines. Exact enumeration oracles on tiny environments
back every estimator with a ground-truth check.
"""

from .advantage import (
    AdvantageMode,
    BrpoConfig,
    advantage_profile,
    combined_baseline,
    compute_return,
    v1_baseline,
    v2_baseline,
)
from .core import (
    AdvantageProfile,
    AdvantageRecord,
    BudgetRewards,
    BudgetSpec,
    PriorKind,
    RolloutGroup,
    ThinkingTrace,
    Token,
    TokenOrigin,
    TruncatedView,
    make_prior,
    nearest_budget_index,
    prefix_view,
    truncate,
)
from .envs import NeedleSearchEnv, ScriptedEnv, load_scripted_env, save_scripted_env
from .policy import (
    PolicyParams,
    action_distribution,
    load_params,
    log_prob,
    log_prob_grad,
    sample_action,
    save_params,
    zero_params,
)
from .rollout import (
    OracleSummary,
    ParametricSummary,
    RolloutConfig,
    child_rng,
    collect_group,
    estimate_budget_rewards,
    oracle_summary,
    sample_trace,
)
from .trainer import TrainerConfig, apply_update, run_training, summary_gradient, thinking_gradient

__version__ = "0.1.0"
