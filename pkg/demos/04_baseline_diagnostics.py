#!/usr/bin/env python3
# Baseline diagnostics on a mid-training policy: how well V1 (history) and
# V2 (group mean) track the return in each budget segment, and how much
# variance the interpolated baseline removes compared to the outcome-only
# group baseline. Writes the correlation/variance/credit CSVs consumed by
# the plotting frontend.
#
# Takes a couple of minutes: trains a policy to the interesting regime first.

from pathlib import Path

from anytime_rl import NeedleSearchEnv, ParametricSummary, RolloutConfig, child_rng, collect_group, make_prior
from anytime_rl.diagnostics import (
    baseline_correlations,
    credit_profile,
    normalized_variance,
    write_correlation_csv,
    write_credit_csv,
    write_variance_csv,
)
from anytime_rl.trainer import TrainerConfig, run_training

out_dir = Path("runs/diagnostics-demo")
out_dir.mkdir(parents=True, exist_ok=True)

env = NeedleSearchEnv(n=32, max_len=32)
spec = make_prior("uniform", (8, 16, 24, 32))
print("training a mid-range policy on NeedleSearch N=32 (takes ~1 minute)...")
cfg = TrainerConfig(iterations=700, eval_cadence=700, seed=0)
res = run_training(env, cfg)
print(f"  anytime accuracy {res.metrics[-1]['anytime_accuracy']:.2f}, "
      f"final {res.metrics[-1]['final_accuracy']:.2f}")

print("collecting 512 rollout groups...")
groups = []
qrng = child_rng(1000, 0)
rollout_cfg = RolloutConfig(seed=1000)
summary = ParametricSummary(res.summary_params)
for i in range(512):
    qid, inst = env.sample_question(qrng)
    groups.append(collect_group(env, qid, inst, res.thinking_params, summary, spec, rollout_cfg, key_prefix=(1, i)))

corr = baseline_correlations(groups, spec, lam=0.5)
print("\nsegment  corr(V1,R)  corr(V2,R)")
for segment, c1, c2 in corr:
    c1s = "   --  " if c1 is None else f"{c1:7.3f}"
    c2s = "   --  " if c2 is None else f"{c2:7.3f}"
    print(f"   {segment}     {c1s}     {c2s}")
print("V1 gets better with depth (more history); V2 gets worse (prefixes diverge).")

var = normalized_variance(groups, spec, lam=0.5)
print("\nsegment  mode   Var(R-V)/Var(R)")
for segment, mode, ratio in var:
    print(f"   {segment}     {mode:5s}  {ratio:.3f}")

write_correlation_csv(out_dir / "correlation.csv", corr)
write_variance_csv(out_dir / "variance.csv", var)
write_credit_csv(out_dir / "credit.csv", credit_profile(groups[0].rewards[0], spec, group=groups[0], self_index=0))
print(f"\nwrote correlation.csv, variance.csv, credit.csv under {out_dir}/")
print("render them with the plotting frontend, e.g.:")
print(f"  node frontend/dist/main.js --kind correlation {out_dir}")
