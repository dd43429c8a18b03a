"""Exact enumeration of objectives, gradients, bounds, and baseline identities.

Environments with a finite action alphabet, deterministic feedback, and a
short length cap have an enumerable trace tree. This module walks that tree
once per question (caching the structure), then evaluates objectives and
score-function gradients as exact vectorized sums over all paths:

* J          = E_x E_z [ r(x, z) ]                      (full-trace reward)
* J_anytime  = E_x E_z [ sum_j P_j r(x, z_<=b_j) ]      (budget-weighted)

Questions are weighted uniformly over the environment's question set. All
expectations over summaries are closed-form sums over the answer space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .advantage import AdvantageMode
from .core import BudgetSpec, Token, TokenOrigin
from .policy import PolicyParams, softmax
from .rollout import OracleSummary, ParametricSummary, as_summary_model

DEFAULT_PATH_CAP = 1_000_000


class EnumerationCapExceeded(RuntimeError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"trace enumeration exceeded the cap: >{count} paths (cap {cap})")
        self.count = count
        self.cap = cap


@dataclass(frozen=True)
class BoundReport:
    """Verdict for J_anytime <= J <= J_anytime / P_m under the oracle summary."""

    j_anytime: float
    j_standard: float
    p_m: float
    left_holds: bool
    right_holds: bool | None  # None when P_m = 0 (bound not applicable)

    @property
    def holds(self) -> bool:
        return self.left_holds and (self.right_holds is None or self.right_holds)


class QuestionSpace:
    """Enumerated trace tree of one question, with per-budget view tables."""

    def __init__(self, env, question_id: int, instance, budgets: tuple[int, ...], cap: int):
        self.env = env
        self.question_id = question_id
        self.instance = instance
        self.budgets = np.asarray(budgets, dtype=int)
        self.m = len(budgets)
        if env.max_len > budgets[-1]:
            raise ValueError(
                f"env length cap {env.max_len} exceeds the largest budget {budgets[-1]}"
            )

        steps: list[tuple[int, int, int]] = []  # (state_idx, action, position) per policy token
        step_path: list[int] = []
        paths: list[tuple[tuple[Token, ...], bool]] = []
        stack: list[tuple[int, int, int]] = []
        stop = env.stop_token

        def finalize(tokens: list[Token], natural: bool) -> None:
            if len(paths) >= cap:
                raise EnumerationCapExceeded(len(paths), cap)
            pid = len(paths)
            paths.append((tuple(tokens), natural))
            for rec in stack:
                steps.append(rec)
                step_path.append(pid)

        def recurse(tokens: list[Token], state) -> None:
            if len(tokens) >= env.max_len:
                finalize(tokens, natural=False)
                return
            sidx = env.think_state_index(state)
            for action in range(env.n_thinking_actions):
                stack.append((sidx, action, len(tokens) + 1))
                tok = Token(id=action, origin=TokenOrigin.POLICY)
                if action == stop:
                    finalize(tokens + [tok], natural=True)
                else:
                    nxt = tokens + [tok]
                    nstate = env.advance_think_state(instance, state, tok)
                    if len(nxt) < env.max_len:
                        feedback = env.env_response(instance, action)
                        if feedback is not None:
                            fbt = Token(id=feedback, origin=TokenOrigin.ENV)
                            nxt.append(fbt)
                            nstate = env.advance_think_state(instance, nstate, fbt)
                    recurse(nxt, nstate)
                stack.pop()

        recurse([], env.initial_think_state(instance))

        self.n_paths = len(paths)
        self.path_natural = np.array([nat for _, nat in paths], dtype=bool)
        self.path_len = np.array([len(toks) for toks, _ in paths], dtype=int)
        self.step_state = np.array([s for s, _, _ in steps], dtype=int)
        self.step_action = np.array([a for _, a, _ in steps], dtype=int)
        self.step_pos = np.array([p for _, _, p in steps], dtype=int)
        self.step_path = np.array(step_path, dtype=int)
        # 1-based budget segment of each policy token
        self.step_jt = np.searchsorted(self.budgets, self.step_pos, side="left") + 1

        # deduplicated truncated views; key = exact prefix content + marker
        view_index: dict = {}
        view_list: list[tuple[tuple[Token, ...], bool]] = []
        ids = np.zeros((self.n_paths, self.m), dtype=int)
        for pid, (tokens, _) in enumerate(paths):
            for jx, b in enumerate(budgets):
                cut = min(int(b), len(tokens))
                truncated = int(b) < len(tokens)
                key = (tokens[:cut], truncated)
                vid = view_index.get(key)
                if vid is None:
                    vid = len(view_list)
                    view_index[key] = vid
                    view_list.append(key)
                ids[pid, jx] = vid
        self.view_ids = ids

        from .core import TruncatedView

        views = [TruncatedView(prefix=pfx, truncated=tr, budget_index=None) for pfx, tr in view_list]
        self.view_feats = np.array([env.summary_features(instance, v) for v in views])
        self.r_vec = np.array([env.verify(instance, a) for a in range(env.n_answers)], dtype=float)
        self.view_oracle_reward = np.array(
            [float(env.oracle_answer_distribution(instance, v) @ self.r_vec) for v in views]
        )
        self.n_states = env.think_feature_dim
        self.n_actions = env.n_thinking_actions

    # -- evaluation ---------------------------------------------------------

    def path_probs(self, thinking_params: PolicyParams) -> np.ndarray:
        logp_table = np.log(softmax(thinking_params.weights))
        step_logp = logp_table[self.step_state, self.step_action]
        path_logp = np.bincount(self.step_path, weights=step_logp, minlength=self.n_paths)
        return np.exp(path_logp)

    def view_rewards(self, summary) -> np.ndarray:
        """Exact expected reward of the summary model on every view."""
        model = as_summary_model(summary)
        if isinstance(model, OracleSummary):
            return self.view_oracle_reward
        probs = softmax(self.view_feats @ model.params.weights)
        return probs @ self.r_vec

    def objectives(self, thinking_params, summary, probabilities) -> tuple[float, float]:
        p = self.path_probs(thinking_params)
        rv = self.view_rewards(summary)[self.view_ids]  # (n_paths, m)
        pr = np.asarray(probabilities)
        j_std = float(p @ rv[:, -1])
        j_any = float(p @ (rv @ pr))
        return j_std, j_any

    def grad_thinking(self, thinking_params, summary, probabilities) -> np.ndarray:
        """Exact d/dtheta of J_anytime via the score-function identity."""
        p = self.path_probs(thinking_params)
        rv = self.view_rewards(summary)[self.view_ids]
        rho = rv @ np.asarray(probabilities)  # anytime reward per path
        w = (p * rho)[self.step_path]
        return self._scatter_score(thinking_params, w)

    def grad_summary(self, thinking_params, summary, summary_probs) -> np.ndarray:
        """Exact d/dphi of the budget-weighted summary objective (weights P')."""
        model = as_summary_model(summary)
        if not isinstance(model, ParametricSummary):
            raise TypeError("summary gradient needs a parametric summary policy")
        p = self.path_probs(thinking_params)
        weights = np.outer(p, np.asarray(summary_probs)).reshape(-1)
        omega = np.bincount(self.view_ids.reshape(-1), weights=weights, minlength=self.view_feats.shape[0])
        probs = softmax(self.view_feats @ model.params.weights)  # (n_views, n_answers)
        r_phi = probs @ self.r_vec
        coeff = probs * (self.r_vec[None, :] - r_phi[:, None]) * omega[:, None]
        return self.view_feats.T @ coeff

    def baseline_term(
        self,
        thinking_params,
        summary,
        probabilities,
        mode: AdvantageMode,
        lam: float,
        fixed_v2: np.ndarray,
        fixed_grpo: float,
    ) -> np.ndarray:
        """Exact E_z[ sum_t grad log pi(z_t) * V(z_<t) ] with other-member
        statistics held fixed; zero for any prefix-measurable V."""
        p = self.path_probs(thinking_params)
        rv = self.view_rewards(summary)[self.view_ids]  # exact r at each budget
        pr = np.asarray(probabilities)
        m = self.m
        v_by_jt = np.zeros((self.n_paths, m))
        if mode is AdvantageMode.GRPO:
            v_by_jt[:] = fixed_grpo
        else:
            for jt in range(1, m + 1):
                tail = float(pr[jt - 1 :].sum())
                if jt == 1:
                    v1 = np.zeros(self.n_paths)
                elif lam == 0.0:
                    v1 = rv[:, jt - 2] * tail
                else:
                    # lam^1 factored out, matching advantage.v1_baseline
                    w = np.array([lam ** (jt - 1 - jp) for jp in range(1, jt)])
                    v1 = (rv[:, : jt - 1] @ w) / w.sum() * tail
                if mode is AdvantageMode.V2_ONLY:
                    v = np.full(self.n_paths, fixed_v2[jt - 1])
                else:
                    v = ((jt - 1) / m) * v1 + ((m - jt + 1) / m) * fixed_v2[jt - 1]
                v_by_jt[:, jt - 1] = v
        w_step = p[self.step_path] * v_by_jt[self.step_path, self.step_jt - 1]
        return self._scatter_score(thinking_params, w_step)

    def _scatter_score(self, thinking_params: PolicyParams, step_weights: np.ndarray) -> np.ndarray:
        """sum over steps of w * d/dW log pi(action | state), vectorized."""
        grad = np.zeros((self.n_states, self.n_actions))
        np.add.at(grad, (self.step_state, self.step_action), step_weights)
        per_state = np.bincount(self.step_state, weights=step_weights, minlength=self.n_states)
        probs_table = softmax(thinking_params.weights)
        grad -= per_state[:, None] * probs_table
        return grad

    def budget_reward_curve(self, thinking_params, summary) -> np.ndarray:
        """E_z[ r(x, z_<=b_j) ] for each budget j (exact)."""
        p = self.path_probs(thinking_params)
        rv = self.view_rewards(summary)[self.view_ids]
        return p @ rv


_enum_cache: dict = {}


def get_enumeration(env, budgets: tuple[int, ...], cap: int = DEFAULT_PATH_CAP) -> list[QuestionSpace]:
    key = (id(env), tuple(budgets), cap)
    hit = _enum_cache.get(key)
    if hit is not None and hit[0] is env:
        return hit[1]
    spaces = [QuestionSpace(env, qid, inst, tuple(budgets), cap) for qid, inst in env.questions()]
    _enum_cache[key] = (env, spaces)
    return spaces


def exact_budget_reward(env, instance, trace, spec: BudgetSpec, j: int, summary) -> float:
    """E_y[ r(x, y) ] for the summary conditioned on the budget-j view (exact)."""
    from .core import truncate

    view = truncate(trace, spec, j)
    model = as_summary_model(summary)
    probs = model.distribution(env, instance, view)
    r_vec = np.array([env.verify(instance, a) for a in range(env.n_answers)], dtype=float)
    return float(probs @ r_vec)


def exact_objectives(
    env, thinking_params: PolicyParams, summary, spec: BudgetSpec, cap: int = DEFAULT_PATH_CAP
) -> tuple[float, float]:
    """(J, J_anytime) averaged uniformly over the question set."""
    spaces = get_enumeration(env, spec.budgets, cap)
    totals = np.zeros(2)
    for space in spaces:
        totals += space.objectives(thinking_params, summary, spec.probabilities)
    j_std, j_any = totals / len(spaces)
    return float(j_std), float(j_any)


def exact_gradients(
    env,
    thinking_params: PolicyParams,
    summary,
    spec: BudgetSpec,
    summary_prior: tuple[float, ...] | None = None,
    cap: int = DEFAULT_PATH_CAP,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Exact (grad_theta J_anytime, grad_phi of the P'-weighted summary objective).

    summary_prior defaults to the spec's own prior; the summary gradient is
    None for the (parameter-free) oracle summary.
    """
    spaces = get_enumeration(env, spec.budgets, cap)
    sp = spec.probabilities if summary_prior is None else tuple(summary_prior)
    model = as_summary_model(summary)
    g_think = np.zeros((env.think_feature_dim, env.n_thinking_actions))
    g_sum = None if isinstance(model, OracleSummary) else np.zeros((env.summary_feature_dim, env.n_answers))
    for space in spaces:
        g_think += space.grad_thinking(thinking_params, model, spec.probabilities)
        if g_sum is not None:
            g_sum += space.grad_summary(thinking_params, model, sp)
    g_think /= len(spaces)
    if g_sum is not None:
        g_sum /= len(spaces)
    return g_think, g_sum


def baseline_term_expectation(
    env,
    thinking_params: PolicyParams,
    spec: BudgetSpec,
    summary,
    mode: AdvantageMode,
    lam: float = 0.5,
    fixed_v2: np.ndarray | None = None,
    fixed_grpo: float = 0.37,
    cap: int = DEFAULT_PATH_CAP,
) -> np.ndarray:
    """Enumerated E_z[ sum_t grad log pi(z_t) V(z_<t) ], question-averaged.

    fixed_v2 stands in for the group statistics (constants w.r.t. the
    enumerated trace); defaults to a nonconstant profile so the test is not
    vacuously zero.
    """
    if fixed_v2 is None:
        fixed_v2 = np.linspace(0.2, 0.8, spec.m)
    spaces = get_enumeration(env, spec.budgets, cap)
    total = np.zeros((env.think_feature_dim, env.n_thinking_actions))
    for space in spaces:
        total += space.baseline_term(
            thinking_params, summary, spec.probabilities, mode, lam, fixed_v2, fixed_grpo
        )
    return total / len(spaces)


def bound_check(
    env, thinking_params: PolicyParams, spec: BudgetSpec, cap: int = DEFAULT_PATH_CAP, slack: float = 1e-12
) -> BoundReport:
    """Evaluate J_anytime <= J <= J_anytime / P_m with the oracle summary."""
    j_std, j_any = exact_objectives(env, thinking_params, OracleSummary(), spec, cap)
    p_m = spec.probabilities[-1]
    left = j_any <= j_std + slack
    right = None if p_m == 0.0 else (j_std <= j_any / p_m + slack)
    return BoundReport(j_anytime=j_any, j_standard=j_std, p_m=p_m, left_holds=left, right_holds=right)


def oracle_budget_monotonicity(
    env, thinking_params: PolicyParams, spec: BudgetSpec, cap: int = DEFAULT_PATH_CAP
) -> np.ndarray:
    """Per question: exact E_z[ r_oracle(x, z_<=b_j) ] for each budget j.

    Rows are nondecreasing in j: the optimal summary can only improve with a
    longer prefix.
    """
    spaces = get_enumeration(env, spec.budgets, cap)
    return np.array([space.budget_reward_curve(thinking_params, OracleSummary()) for space in spaces])


def finite_difference_gradients(
    env,
    thinking_params: PolicyParams,
    summary,
    spec: BudgetSpec,
    step: float = 1e-4,
    cap: int = DEFAULT_PATH_CAP,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Central finite differences of J_anytime in every parameter coordinate.

    Independent oracle for exact_gradients; the summary part is computed only
    for a parametric summary (with the spec's own prior weights).
    """
    model = as_summary_model(summary)

    def j_anytime(think: PolicyParams, summ) -> float:
        return exact_objectives(env, think, summ, spec, cap)[1]

    w = thinking_params.weights
    fd_think = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        delta = np.zeros_like(w)
        delta[idx] = step
        up = j_anytime(PolicyParams(w + delta), model)
        down = j_anytime(PolicyParams(w - delta), model)
        fd_think[idx] = (up - down) / (2 * step)

    fd_sum = None
    if isinstance(model, ParametricSummary):
        sw = model.params.weights
        fd_sum = np.zeros_like(sw)
        for idx in np.ndindex(sw.shape):
            delta = np.zeros_like(sw)
            delta[idx] = step
            up = j_anytime(thinking_params, ParametricSummary(PolicyParams(sw + delta)))
            down = j_anytime(thinking_params, ParametricSummary(PolicyParams(sw - delta)))
            fd_sum[idx] = (up - down) / (2 * step)
    return fd_think, fd_sum
