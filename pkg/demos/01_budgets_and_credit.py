#!/usr/bin/env python3
# Budget supports, truncated views, and dense-reward credit assignment.
#
# A thinking trace is scored not once at the end, but at every budget of an
# increasing support {b_1..b_m}. A token's return is the prior-weighted sum
# of the rewards at budgets from its own segment onward, so tokens before
# the first correct answer inherit credit for it, and tokens after it see
# only what is still left to gain.

from anytime_rl import BudgetRewards, ThinkingTrace, Token, TokenOrigin, make_prior, truncate
from anytime_rl.advantage import compute_return, v1_baseline
from anytime_rl.diagnostics import credit_profile

budgets = (8, 16, 24, 32)

print("== priors over the budget support ==")
for kind in ("base", "uniform", "linear"):
    spec = make_prior(kind, budgets)
    print(f"  {kind:8s} P = {spec.probabilities}")

# --- truncation ---------------------------------------------------------

spec = make_prior("uniform", budgets)
tokens = tuple(Token(id=i % 3, origin=TokenOrigin.POLICY) for i in range(20))
trace = ThinkingTrace(question_id=0, tokens=tokens, terminated_naturally=False)

print("\n== truncated views of a 20-token trace ==")
for j in range(1, 5):
    view = truncate(trace, spec, j)
    print(f"  budget b_{j} = {budgets[j-1]:2d}: prefix {len(view.prefix):2d} tokens, marker = {view.truncated}")

# --- the credit-assignment profile --------------------------------------
# Rewards (0, 0, 1, 1): the answer becomes extractable between b_2 and b_3.
# Every segment before the first success carries the full remaining value
# (0.5); the last segment only carries what is still ahead of it (0.25).

rewards = BudgetRewards(estimates=(0.0, 0.0, 1.0, 1.0), samples_per_budget=4)
print("\n== per-segment returns for dense rewards (0, 0, 1, 1), uniform prior ==")
for segment, ret, v1, v2, v, a in credit_profile(rewards, spec):
    print(f"  segment {segment}: R = {ret:.2f}  V1 = {v1:.3f}")

# sanity: the same numbers by direct evaluation of the return definition
direct = [compute_return(rewards, spec, j) for j in range(1, 5)]
assert direct == [0.5, 0.5, 0.5, 0.25]
print("  (matches the direct tail sums:", direct, ")")

# --- the history baseline -------------------------------------------------

print("\n== V1 history baseline (lam = 0.5) ==")
for j in range(1, 5):
    print(f"  segment {j}: V1 = {v1_baseline(rewards, spec, j, lam=0.5):.4f}")
print("V1 is 0 in segment 1 (no history) and tracks earlier rewards after that.")
