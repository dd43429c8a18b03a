#!/usr/bin/env python3
# The NeedleSearch environment: probes, feedback, and verifiable dense rewards.
#
# The environment hides an integer target in [0, N). Each probe earns one
# feedback token (LO / HI / HIT), so verifying a candidate answer is one
# token while finding it takes search: a small generation-verification gap.
# The oracle summary returns the verified answer as soon as HIT is in view,
# which makes per-trace budget rewards exactly nondecreasing.

import numpy as np

from anytime_rl import NeedleSearchEnv, OracleSummary, child_rng, estimate_budget_rewards, make_prior, sample_trace, zero_params

env = NeedleSearchEnv(n=16, max_len=32)
spec = make_prior("uniform", (8, 16, 24, 32))
qid, instance = env.sample_question(child_rng(7, 0))
print(f"question: find target {instance.target} in [0, {env.n})")

# roll a trace with the uniform (untrained) policy
think = zero_params(env.think_feature_dim, env.n_thinking_actions)
trace = sample_trace(env, instance, qid, think, child_rng(7, 1))

names = {env.lo_token: "LO", env.hi_token: "HI", env.hit_token: "HIT", env.stop_token: "stop"}
rendered = " ".join(names.get(t.id, str(t.id)) for t in trace.tokens)
print(f"trace ({len(trace)} tokens, natural stop = {trace.terminated_naturally}):")
print(" ", rendered)

# dense rewards: the same stored trace is scored at every budget of the
# support; K summary draws share their uniforms across the nested views
rewards = estimate_budget_rewards(env, instance, trace, spec, OracleSummary(), 16, child_rng(7, 2))
print("\nper-budget oracle-summary rewards:", rewards.estimates)
assert list(rewards.estimates) == sorted(rewards.estimates), "never decreases"

# the interval state the thinking policy sees
state = env.initial_think_state(instance)
print("\nfeasible interval after each token:")
for tok in trace.tokens[:10]:
    state = env.advance_think_state(instance, state, tok)
    lo, hi, hit, _, _ = state
    label = names.get(tok.id, f"probe {tok.id}")
    print(f"  {label:9s} -> [{lo}, {hi}] hit={hit}")

print("\nthe target never leaves the interval, and HIT is absorbing:")
print("that is the environment-level ground for reward monotonicity.")
