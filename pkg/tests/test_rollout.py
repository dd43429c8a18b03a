"""Trace generation, dense-reward estimation, seeding, and the oracle summary."""

import io

import numpy as np
import pytest

from anytime_rl.core import BudgetSpec, ThinkingTrace, Token, TokenOrigin, make_prior, prefix_view
from anytime_rl.envs import NeedleSearchEnv, ScriptedEnv, make_env_token, make_policy_token
from anytime_rl.oracle import get_enumeration
from anytime_rl.policy import PolicyParams, StateDistributionTable, zero_params
from anytime_rl.rollout import (
    OracleSummary,
    ParametricSummary,
    RolloutConfig,
    child_rng,
    collect_group,
    estimate_budget_rewards,
    oracle_summary,
    parse_rollout_record,
    rollout_record,
    sample_trace,
    write_rollout_records,
)

SPEC = BudgetSpec(budgets=(8, 16, 24, 32), probabilities=(0.25,) * 4)


def _stop_policy(env) -> PolicyParams:
    w = np.zeros((env.think_feature_dim, env.n_thinking_actions))
    w[:, env.stop_token] = 50.0
    return PolicyParams(w)


def _never_stop_policy(env) -> PolicyParams:
    w = np.zeros((env.think_feature_dim, env.n_thinking_actions))
    w[:, env.stop_token] = -50.0
    return PolicyParams(w)


class TestSampleTrace:
    def test_always_stop(self):
        env = NeedleSearchEnv(n=4, max_len=8)
        trace = sample_trace(env, env.instance_for(2), 2, _stop_policy(env), child_rng(0, 1))
        assert len(trace) == 1 and trace.terminated_naturally
        assert trace.tokens[0].id == env.stop_token

    def test_never_stop_hits_cap(self):
        env = NeedleSearchEnv(n=4, max_len=8)
        trace = sample_trace(env, env.instance_for(2), 2, _never_stop_policy(env), child_rng(0, 1))
        assert len(trace) == env.max_len and not trace.terminated_naturally

    def test_feedback_alternates_with_probes(self):
        env = NeedleSearchEnv(n=4, max_len=9)
        trace = sample_trace(env, env.instance_for(2), 2, _never_stop_policy(env), child_rng(0, 2))
        origins = [tok.origin for tok in trace.tokens]
        assert origins[: 2 * (len(origins) // 2)] == [TokenOrigin.POLICY, TokenOrigin.ENV] * (len(origins) // 2)
        # odd cap: the last probe's feedback is cut at the budget
        assert len(trace) == 9 and origins[-1] is TokenOrigin.POLICY

    def test_trace_probability_matches_enumeration(self):
        env = ScriptedEnv(tables=[(1, 0)], n_symbols=2, max_len=4)
        rng = np.random.default_rng(5)
        params = PolicyParams(0.7 * rng.standard_normal((env.think_feature_dim, env.n_thinking_actions)))
        space = get_enumeration(env, (2, 4))[0]
        probs = space.path_probs(params)
        np.testing.assert_allclose(probs.sum(), 1.0, atol=1e-12)

        # the mass of one specific path equals the product of per-step policy
        # probabilities (hand-assembled from the distribution table)
        table = StateDistributionTable(params)
        inst = env.instance_for(0)
        target = (make_policy_token(0), make_policy_token(1), make_policy_token(env.stop_token))
        state = env.initial_think_state(inst)
        hand = 1.0
        for tok in target:
            hand *= table.distribution(env.think_state_index(state))[tok.id]
            state = env.advance_think_state(inst, state, tok)
        path_ids = [
            pid
            for pid in range(space.n_paths)
            if space.path_len[pid] == 3
            and tuple(space.step_action[space.step_path == pid]) == (0, 1, env.stop_token)
        ]
        assert len(path_ids) == 1
        np.testing.assert_allclose(probs[path_ids[0]], hand, rtol=1e-12)

        # sampled frequency agrees with the enumerated mass (4.5-sigma band)
        n = 20_000
        rng = np.random.default_rng(11)
        count = sum(
            1
            for _ in range(n)
            if tuple(t.id for t in sample_trace(env, inst, 0, params, rng).tokens) == (0, 1, env.stop_token)
        )
        p = probs[path_ids[0]]
        assert abs(count / n - p) <= 4.5 * np.sqrt(p * (1 - p) / n)


class TestEstimateBudgetRewards:
    def _hit_at_10_trace(self, env):
        inst = env.instance_for(5)
        probes = [0, 9, 2, 8, 5]  # HIT arrives at position 10
        tokens = []
        for p in probes:
            tokens.append(make_policy_token(p))
            tokens.append(make_env_token(env.env_response(inst, p)))
        return inst, ThinkingTrace(question_id=5, tokens=tuple(tokens), terminated_naturally=False)

    def test_oracle_rewards_nondecreasing_and_one_after_hit(self):
        env = NeedleSearchEnv(n=16, max_len=32)
        inst, trace = self._hit_at_10_trace(env)
        rw = estimate_budget_rewards(env, inst, trace, SPEC, OracleSummary(), 8, child_rng(0, 3))
        assert list(rw.estimates) == sorted(rw.estimates)
        assert rw.estimates[1:] == (1.0, 1.0, 1.0)

    def test_fixed_wrong_summary_scores_zero(self):
        env = NeedleSearchEnv(n=16, max_len=32)
        inst, trace = self._hit_at_10_trace(env)
        w = np.zeros((env.summary_feature_dim, env.n_answers))
        w[:, 3] = 50.0  # always answer 3; target is 5
        rw = estimate_budget_rewards(env, inst, trace, SPEC, ParametricSummary(PolicyParams(w)), 8, child_rng(0, 4))
        assert rw.estimates == (0.0,) * 4

    def test_uniform_summary_converges_to_one_over_n(self):
        env = NeedleSearchEnv(n=8, max_len=32)
        inst = env.instance_for(6)
        tokens = (make_policy_token(1), make_env_token(env.lo_token))  # no hit anywhere
        trace = ThinkingTrace(question_id=6, tokens=tokens, terminated_naturally=False)
        spec = BudgetSpec(budgets=(16, 32), probabilities=(0.5, 0.5))
        rw = estimate_budget_rewards(
            env, inst, trace, spec, ParametricSummary(zero_params(env.summary_feature_dim, 8)), 10_000, child_rng(0, 5)
        )
        # binomial sd ~ 0.0033 at K = 1e4; 0.015 is a > 4.5 sigma band
        np.testing.assert_allclose(rw.estimates, 0.125, atol=0.015)

    def test_estimates_are_multiples_of_one_over_k(self):
        env = NeedleSearchEnv(n=16, max_len=32)
        inst, trace = self._hit_at_10_trace(env)
        for k in (1, 3, 7):
            rw = estimate_budget_rewards(env, inst, trace, SPEC, OracleSummary(), k, child_rng(0, 6))
            for est in rw.estimates:
                assert abs(est * k - round(est * k)) < 1e-12

    def test_estimate_depends_only_on_tokens_within_budget(self):
        env = NeedleSearchEnv(n=16, max_len=32)
        inst, trace = self._hit_at_10_trace(env)
        # mutate tokens after b_2 = 16: append junk probes up to the cap
        extra = []
        for p in (1, 2, 3, 4, 6, 7):
            extra.append(make_policy_token(p))
            extra.append(make_env_token(env.env_response(inst, p)))
        mutated = ThinkingTrace(
            question_id=5, tokens=trace.tokens + tuple(extra), terminated_naturally=False
        )
        r1 = estimate_budget_rewards(env, inst, trace, SPEC, OracleSummary(), 16, child_rng(9, 9))
        r2 = estimate_budget_rewards(env, inst, mutated, SPEC, OracleSummary(), 16, child_rng(9, 9))
        assert r1.estimates[:2] == r2.estimates[:2]


class TestOracleSummaryOp:
    def test_returns_hit_probe(self):
        env = NeedleSearchEnv(n=8, max_len=16)
        inst = env.instance_for(5)
        tokens = (make_policy_token(5), make_env_token(env.hit_token))
        trace = ThinkingTrace(question_id=5, tokens=tokens, terminated_naturally=False)
        view = prefix_view(trace, 2)
        assert all(oracle_summary(env, inst, view, child_rng(0, i)) == 5 for i in range(20))

    def test_degenerate_space(self):
        env = NeedleSearchEnv(n=1, max_len=4)
        view = prefix_view(ThinkingTrace(question_id=0, tokens=(), terminated_naturally=False), 0)
        assert oracle_summary(env, env.instance_for(0), view, child_rng(0, 0)) == 0

    def test_expected_reward_is_one_over_feasible_width(self):
        env = NeedleSearchEnv(n=8, max_len=16)
        inst = env.instance_for(6)
        tokens = (make_policy_token(3), make_env_token(env.lo_token))  # feasible {4..7}, w = 4
        trace = ThinkingTrace(question_id=6, tokens=tokens, terminated_naturally=False)
        view = prefix_view(trace, 2)
        dist = env.oracle_answer_distribution(inst, view)
        r_vec = np.array([env.verify(inst, a) for a in range(8)])
        np.testing.assert_allclose(dist @ r_vec, 0.25)
        # the sampler's marginal matches the distribution
        rng = child_rng(1, 2)
        draws = np.array([oracle_summary(env, inst, view, rng) for _ in range(20_000)])
        freqs = np.bincount(draws, minlength=8) / len(draws)
        np.testing.assert_allclose(freqs, dist, atol=0.02)


class TestCollectGroup:
    def test_point_mass_policies_give_identical_traces(self):
        env = NeedleSearchEnv(n=4, max_len=8)
        cfg = RolloutConfig(group_size=2, summary_samples=2, seed=0)
        group = collect_group(
            env, 1, env.instance_for(1), _stop_policy(env), OracleSummary(), make_prior("uniform", (4, 8)), cfg
        )
        assert group.traces[0] == group.traces[1]

    def test_shapes(self):
        env = NeedleSearchEnv(n=4, max_len=8)
        cfg = RolloutConfig(group_size=5, summary_samples=3, seed=1)
        group = collect_group(
            env, 2, env.instance_for(2), zero_params(env.think_feature_dim, 5), OracleSummary(),
            make_prior("uniform", (4, 8)), cfg,
        )
        assert group.size == 5
        assert all(rw.m == 2 for rw in group.rewards)

    def test_bit_for_bit_reproducibility(self):
        env = NeedleSearchEnv(n=8, max_len=16)
        cfg = RolloutConfig(group_size=4, summary_samples=4, seed=7)
        params = zero_params(env.think_feature_dim, env.n_thinking_actions)
        spec = make_prior("uniform", (4, 8, 12, 16))

        def run():
            return collect_group(
                env, 3, env.instance_for(3), params, OracleSummary(), spec, cfg, key_prefix=(0, 0)
            )

        g1, g2 = run(), run()
        assert g1 == g2

    def test_rejects_mismatched_cap(self):
        env = NeedleSearchEnv(n=4, max_len=8)
        cfg = RolloutConfig(group_size=2, max_len=99, seed=0)
        with pytest.raises(ValueError, match="max_len"):
            collect_group(
                env, 0, env.instance_for(0), _stop_policy(env), OracleSummary(), make_prior("uniform", (4, 8)), cfg
            )


class TestRolloutLog:
    def test_record_round_trip(self):
        env = NeedleSearchEnv(n=4, max_len=8)
        trace = sample_trace(env, env.instance_for(1), 1, _never_stop_policy(env), child_rng(0, 0))
        rw = estimate_budget_rewards(env, env.instance_for(1), trace, make_prior("uniform", (4, 8)), OracleSummary(), 4, child_rng(0, 1))
        rec = rollout_record(trace, rw, (0, 1, 2), phase="train")
        buf = io.StringIO()
        write_rollout_records(buf, [rec])
        parsed = parse_rollout_record(buf.getvalue())
        assert parsed["question_id"] == 1
        assert parsed["token_ids"] == [t.id for t in trace.tokens]
        assert parsed["reward_estimates"] == list(rw.estimates)
